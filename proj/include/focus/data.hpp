#pragma once

// Core data types shared by every stage of the pipeline: the dimension schema,
// the offline transition store, causal parent masks and p-value matrices,
// together with their JSON / JSON-lines encodings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "focus/common.hpp"

namespace focus {

using Json = nlohmann::ordered_json;

enum class SourceTag { Random, Medium, MediumReplay, Mixed, Synthetic };

inline std::string to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::Random: return "Random";
    case SourceTag::Medium: return "Medium";
    case SourceTag::MediumReplay: return "MediumReplay";
    case SourceTag::Mixed: return "Mixed";
    case SourceTag::Synthetic: return "Synthetic";
  }
  return "Synthetic";
}

inline SourceTag source_tag_from_string(const std::string& s) {
  for (auto tag : {SourceTag::Random, SourceTag::Medium, SourceTag::MediumReplay, SourceTag::Mixed,
                   SourceTag::Synthetic}) {
    if (to_string(tag) == s) return tag;
  }
  throw InvalidArgument("unknown source_tag '" + s + "'");
}

/// Names of the state, action and reward dimensions. Every (n_s + n_a)-wide
/// vector in the library lists states first, then actions.
struct DimensionSchema {
  std::vector<std::string> state_names;
  std::vector<std::string> action_names;
  std::string reward_name = "r";

  std::size_t n_states() const { return state_names.size(); }
  std::size_t n_actions() const { return action_names.size(); }
  std::size_t n_inputs() const { return state_names.size() + action_names.size(); }
  /// Next-state dimensions plus the reward.
  std::size_t n_targets() const { return state_names.size() + 1; }

  const std::string& input_name(std::size_t i) const {
    return i < n_states() ? state_names.at(i) : action_names.at(i - n_states());
  }
  const std::string& target_name(std::size_t j) const {
    return j < n_states() ? state_names.at(j) : reward_name;
  }

  void validate() const {
    if (state_names.empty()) throw InvalidArgument("schema needs at least one state dimension");
    if (action_names.empty()) throw InvalidArgument("schema needs at least one action dimension");
    std::set<std::string> seen;
    auto check = [&](const std::string& n) {
      if (n.empty()) throw InvalidArgument("schema contains an empty dimension name");
      if (!seen.insert(n).second) throw InvalidArgument("duplicate dimension name '" + n + "'");
    };
    for (const auto& n : state_names) check(n);
    for (const auto& n : action_names) check(n);
    check(reward_name);
  }

  friend bool operator==(const DimensionSchema&, const DimensionSchema&) = default;
};

inline Json schema_to_json(const DimensionSchema& s) {
  Json j;
  j["state_names"] = s.state_names;
  j["action_names"] = s.action_names;
  j["reward_name"] = s.reward_name;
  return j;
}

inline DimensionSchema schema_from_json(const Json& j) {
  DimensionSchema s;
  s.state_names = j.at("state_names").get<std::vector<std::string>>();
  s.action_names = j.at("action_names").get<std::vector<std::string>>();
  s.reward_name = j.at("reward_name").get<std::string>();
  s.validate();
  return s;
}

/// Immutable columnar store of (s_t, a_t, s_{t+1}, r_t) transitions.
class TransitionDataset {
 public:
  TransitionDataset(DimensionSchema schema, Eigen::MatrixXd s, Eigen::MatrixXd a,
                    Eigen::MatrixXd s_next, Eigen::VectorXd r, SourceTag tag)
      : schema_(std::move(schema)),
        s_(std::move(s)),
        a_(std::move(a)),
        s_next_(std::move(s_next)),
        r_(std::move(r)),
        tag_(tag) {
    validate();
  }

  const DimensionSchema& schema() const { return schema_; }
  const Eigen::MatrixXd& states() const { return s_; }
  const Eigen::MatrixXd& actions() const { return a_; }
  const Eigen::MatrixXd& next_states() const { return s_next_; }
  const Eigen::VectorXd& rewards() const { return r_; }
  SourceTag source_tag() const { return tag_; }
  std::size_t size() const { return static_cast<std::size_t>(s_.rows()); }

  /// Column i of the (s_t, a_t) input block.
  Eigen::VectorXd input_column(std::size_t i) const {
    const auto ns = schema_.n_states();
    return i < ns ? Eigen::VectorXd(s_.col(Eigen::Index(i))) : Eigen::VectorXd(a_.col(Eigen::Index(i - ns)));
  }

  /// Column j of the (s_{t+1}, r_t) target block.
  Eigen::VectorXd target_column(std::size_t j) const {
    return j < schema_.n_states() ? Eigen::VectorXd(s_next_.col(Eigen::Index(j))) : r_;
  }

  /// N x (n_s + n_a) matrix [s_t | a_t].
  Eigen::MatrixXd inputs() const {
    Eigen::MatrixXd x(s_.rows(), s_.cols() + a_.cols());
    x << s_, a_;
    return x;
  }

  /// N x (n_s + 1) matrix [s_{t+1} | r_t].
  Eigen::MatrixXd targets() const {
    Eigen::MatrixXd y(s_next_.rows(), s_next_.cols() + 1);
    y << s_next_, r_;
    return y;
  }

  TransitionDataset select_rows(const std::vector<std::size_t>& rows, SourceTag tag) const {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd s(n, s_.cols()), a(n, a_.cols()), sn(n, s_next_.cols());
    Eigen::VectorXd r(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto src = static_cast<Eigen::Index>(rows[std::size_t(k)]);
      s.row(k) = s_.row(src);
      a.row(k) = a_.row(src);
      sn.row(k) = s_next_.row(src);
      r(k) = r_(src);
    }
    return TransitionDataset(schema_, std::move(s), std::move(a), std::move(sn), std::move(r), tag);
  }

  friend bool operator==(const TransitionDataset& x, const TransitionDataset& y) {
    return x.schema_ == y.schema_ && x.tag_ == y.tag_ && x.s_ == y.s_ && x.a_ == y.a_ &&
           x.s_next_ == y.s_next_ && x.r_ == y.r_;
  }

 private:
  void validate() const {
    schema_.validate();
    const auto n = s_.rows();
    if (n < 1) throw InvalidArgument("dataset must contain at least one transition");
    if (a_.rows() != n || s_next_.rows() != n || r_.size() != n)
      throw InvalidArgument("dataset fields disagree on row count");
    if (std::size_t(s_.cols()) != schema_.n_states() || std::size_t(s_next_.cols()) != schema_.n_states())
      throw InvalidArgument("state matrices do not match schema n_s=" + std::to_string(schema_.n_states()));
    if (std::size_t(a_.cols()) != schema_.n_actions())
      throw InvalidArgument("action matrix does not match schema n_a=" + std::to_string(schema_.n_actions()));
    auto check = [&](const auto& m, const char* field) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
          if (!std::isfinite(m(i, c)))
            throw InvalidArgument(std::string("non-finite value in ") + field + " at row " + std::to_string(i) +
                                  ", column " + std::to_string(c));
    };
    check(s_, "s");
    check(a_, "a");
    check(s_next_, "s_next");
    check(r_, "r");
  }

  DimensionSchema schema_;
  Eigen::MatrixXd s_, a_, s_next_;
  Eigen::VectorXd r_;
  SourceTag tag_;
};

/// Structured failure while reading a dataset file. `line` is 1-based.
class DatasetParseError : public Error {
 public:
  DatasetParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline Json row_to_json(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline void read_row(const Json& rec, const char* field, std::size_t expected, std::size_t line,
                     std::size_t row, Eigen::MatrixXd& dst) {
  if (!rec.contains(field)) throw DatasetParseError(line, std::string("missing field '") + field + "'");
  const auto& arr = rec.at(field);
  if (!arr.is_array()) throw DatasetParseError(line, std::string("field '") + field + "' is not an array");
  if (arr.size() != expected)
    throw DatasetParseError(line, std::string("schema mismatch: '") + field + "' has " + std::to_string(arr.size()) +
                                      " entries but header declares " + std::to_string(expected));
  for (std::size_t c = 0; c < expected; ++c) {
    const auto& v = arr[c];
    if (!v.is_number() || !std::isfinite(v.get<double>()))
      throw DatasetParseError(line, std::string("non-finite or non-numeric value at row ") + std::to_string(row) +
                                        ", column " + field + "[" + std::to_string(c) + "]");
    dst(Eigen::Index(row), Eigen::Index(c)) = v.get<double>();
  }
}

}  // namespace detail

/// Writes the JSON-lines format: a header record followed by one record per
/// transition. Doubles are printed with round-trip precision.
inline void write_dataset(const TransitionDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  Json header;
  header["schema"] = schema_to_json(ds.schema());
  header["source_tag"] = to_string(ds.source_tag());
  header["n"] = ds.size();
  out << header.dump() << '\n';
  for (Eigen::Index i = 0; i < Eigen::Index(ds.size()); ++i) {
    Json rec;
    rec["s"] = detail::row_to_json(ds.states().row(i));
    rec["a"] = detail::row_to_json(ds.actions().row(i));
    rec["s_next"] = detail::row_to_json(ds.next_states().row(i));
    rec["r"] = ds.rewards()(i);
    out << rec.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline TransitionDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string text;
  std::size_t line_no = 0;

  auto parse_line = [&](const std::string& line) {
    try {
      return Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DatasetParseError(line_no, std::string("malformed record: ") + e.what());
    }
  };

  if (!std::getline(in, text)) throw DatasetParseError(1, "missing header record");
  ++line_no;
  const Json header = parse_line(text);
  DimensionSchema schema;
  SourceTag tag;
  std::size_t n = 0;
  try {
    schema = schema_from_json(header.at("schema"));
    tag = source_tag_from_string(header.at("source_tag").get<std::string>());
    n = header.at("n").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw DatasetParseError(line_no, std::string("malformed header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DatasetParseError(line_no, std::string("invalid header: ") + e.what());
  }
  if (n < 1) throw DatasetParseError(line_no, "header declares n=0; datasets need at least one transition");

  const auto ns = Eigen::Index(schema.n_states()), na = Eigen::Index(schema.n_actions());
  Eigen::MatrixXd s(Eigen::Index(n), ns), a(Eigen::Index(n), na), sn(Eigen::Index(n), ns), r(Eigen::Index(n), 1);
  std::size_t row = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    if (row >= n) throw DatasetParseError(line_no, "more records than header n=" + std::to_string(n));
    const Json rec = parse_line(text);
    if (!rec.is_object()) throw DatasetParseError(line_no, "record is not a JSON object");
    detail::read_row(rec, "s", schema.n_states(), line_no, row, s);
    detail::read_row(rec, "a", schema.n_actions(), line_no, row, a);
    detail::read_row(rec, "s_next", schema.n_states(), line_no, row, sn);
    if (!rec.contains("r")) throw DatasetParseError(line_no, "missing field 'r'");
    const auto& rv = rec.at("r");
    if (!rv.is_number() || !std::isfinite(rv.get<double>()))
      throw DatasetParseError(line_no, "non-finite or non-numeric value at row " + std::to_string(row) + ", column r");
    r(Eigen::Index(row), 0) = rv.get<double>();
    ++row;
  }
  if (row != n)
    throw DatasetParseError(line_no, "header declares n=" + std::to_string(n) + " but file has " +
                                         std::to_string(row) + " records");
  return TransitionDataset(std::move(schema), std::move(s), std::move(a), std::move(sn), r.col(0), tag);
}

/// All of `base` plus round(fraction * |extra|) rows of `extra`, sampled
/// uniformly without replacement. Selected extra rows keep their original order.
inline TransitionDataset mix_datasets(const TransitionDataset& base, const TransitionDataset& extra,
                                      double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("mix fraction must lie in [0,1]");
  if (!(base.schema() == extra.schema())) throw InvalidArgument("cannot mix datasets with different schemas");
  const std::size_t take = static_cast<std::size_t>(std::llround(fraction * double(extra.size())));
  std::vector<std::size_t> idx(extra.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x6d6978));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());

  const auto nb = Eigen::Index(base.size()), nt = nb + Eigen::Index(take);
  Eigen::MatrixXd s(nt, base.states().cols()), a(nt, base.actions().cols()), sn(nt, base.next_states().cols());
  Eigen::VectorXd r(nt);
  s.topRows(nb) = base.states();
  a.topRows(nb) = base.actions();
  sn.topRows(nb) = base.next_states();
  r.head(nb) = base.rewards();
  for (std::size_t k = 0; k < take; ++k) {
    const auto dst = nb + Eigen::Index(k), src = Eigen::Index(idx[k]);
    s.row(dst) = extra.states().row(src);
    a.row(dst) = extra.actions().row(src);
    sn.row(dst) = extra.next_states().row(src);
    r(dst) = extra.rewards()(src);
  }
  return TransitionDataset(base.schema(), std::move(s), std::move(a), std::move(sn), std::move(r), SourceTag::Mixed);
}

/// Binary parent mask over (s_t, a_t) rows and (s_{t+1}, r_t) columns.
/// mask(i, j) == 1 means input i is a causal parent of target j.
class CausalGraph {
 public:
  using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

  CausalGraph(DimensionSchema schema, Mask mask) : schema_(std::move(schema)), mask_(std::move(mask)) {
    schema_.validate();
    if (std::size_t(mask_.rows()) != schema_.n_inputs() || std::size_t(mask_.cols()) != schema_.n_targets())
      throw InvalidArgument("mask shape " + std::to_string(mask_.rows()) + "x" + std::to_string(mask_.cols()) +
                            " does not match schema (" + std::to_string(schema_.n_inputs()) + "x" +
                            std::to_string(schema_.n_targets()) + ")");
    for (Eigen::Index i = 0; i < mask_.size(); ++i)
      if (mask_.data()[i] > 1) throw InvalidArgument("mask entries must be 0 or 1");
  }

  /// Every input is a parent of every target: the plain world-model.
  static CausalGraph full(const DimensionSchema& schema) {
    return CausalGraph(schema, Mask::Ones(Eigen::Index(schema.n_inputs()), Eigen::Index(schema.n_targets())));
  }
  static CausalGraph empty(const DimensionSchema& schema) {
    return CausalGraph(schema, Mask::Zero(Eigen::Index(schema.n_inputs()), Eigen::Index(schema.n_targets())));
  }

  const DimensionSchema& schema() const { return schema_; }
  const Mask& mask() const { return mask_; }
  bool edge(std::size_t i, std::size_t j) const { return mask_(Eigen::Index(i), Eigen::Index(j)) != 0; }
  void set_edge(std::size_t i, std::size_t j, bool on) { mask_(Eigen::Index(i), Eigen::Index(j)) = on ? 1 : 0; }
  std::size_t edge_count() const { return std::size_t((mask_.cast<int>().array()).sum()); }

  std::vector<std::size_t> parents(std::size_t j) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < schema_.n_inputs(); ++i)
      if (edge(i, j)) out.push_back(i);
    return out;
  }

  friend bool operator==(const CausalGraph& x, const CausalGraph& y) {
    return x.schema_ == y.schema_ && x.mask_ == y.mask_;
  }

 private:
  DimensionSchema schema_;
  Mask mask_;
};

/// KCI p-values with the same indexing as CausalGraph::mask.
class PValueMatrix {
 public:
  PValueMatrix(DimensionSchema schema, Eigen::MatrixXd p) : schema_(std::move(schema)), p_(std::move(p)) {
    schema_.validate();
    if (std::size_t(p_.rows()) != schema_.n_inputs() || std::size_t(p_.cols()) != schema_.n_targets())
      throw InvalidArgument("p-value matrix shape does not match schema");
    for (Eigen::Index i = 0; i < p_.size(); ++i) {
      const double v = p_.data()[i];
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("p-values must lie in [0,1]");
    }
  }

  const DimensionSchema& schema() const { return schema_; }
  const Eigen::MatrixXd& values() const { return p_; }
  double operator()(std::size_t i, std::size_t j) const { return p_(Eigen::Index(i), Eigen::Index(j)); }

 private:
  DimensionSchema schema_;
  Eigen::MatrixXd p_;
};

namespace detail {
template <typename M>
Json matrix_to_json(const M& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matrix_from_json(const Json& j) {
  const auto rows = Eigen::Index(j.size());
  const auto cols = rows > 0 ? Eigen::Index(j.at(0).size()) : 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (Eigen::Index(j.at(std::size_t(i)).size()) != cols) throw InvalidArgument("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j.at(std::size_t(i)).at(std::size_t(c)).get<Scalar>();
  }
  return m;
}
}  // namespace detail

inline Json graph_to_json(const CausalGraph& g) {
  Json j;
  j["schema"] = schema_to_json(g.schema());
  j["mask"] = detail::matrix_to_json(g.mask().cast<int>());
  return j;
}

inline CausalGraph graph_from_json(const Json& j) {
  auto m = detail::matrix_from_json<int>(j.at("mask"));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (m.data()[i] != 0 && m.data()[i] != 1) throw InvalidArgument("mask entries must be 0 or 1");
  return CausalGraph(schema_from_json(j.at("schema")), m.cast<std::uint8_t>());
}

inline Json pvalues_to_json(const PValueMatrix& p) {
  Json j;
  j["schema"] = schema_to_json(p.schema());
  j["p"] = detail::matrix_to_json(p.values());
  return j;
}

inline PValueMatrix pvalues_from_json(const Json& j) {
  return PValueMatrix(schema_from_json(j.at("schema")), detail::matrix_from_json<double>(j.at("p")));
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace focus
