#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tripletlab/core.hpp"

namespace tripletlab {

/// Input vectors with identity labels. Labels are dense ids in [0, C); the
/// original label strings are kept in `label_names`.
struct LabeledDataset {
  Matrix inputs;
  LabelVector labels;
  std::vector<std::string> label_names;
  std::vector<std::vector<int>> identity_index;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  int num_identities() const { return static_cast<int>(identity_index.size()); }

  /// Number of identities that have at least `min_samples` samples.
  int identities_with_at_least(int min_samples) const {
    int n = 0;
    for (const auto& members : identity_index) n += static_cast<int>(members.size()) >= min_samples;
    return n;
  }

  void rebuild_index() {
    int c = 0;
    for (int l : labels) c = std::max(c, l + 1);
    c = std::max(c, static_cast<int>(label_names.size()));
    identity_index.assign(static_cast<std::size_t>(c), {});
    for (int i = 0; i < size(); ++i) identity_index[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  void validate() const {
    if (inputs.rows() != static_cast<Eigen::Index>(labels.size())) {
      throw Error("dataset: " + std::to_string(inputs.rows()) + " input rows but " +
                  std::to_string(labels.size()) + " labels");
    }
    for (int l : labels) {
      if (l < 0 || l >= num_identities()) throw Error("dataset: label id out of range");
    }
    std::size_t total = 0;
    for (std::size_t c = 0; c < identity_index.size(); ++c) {
      for (int pos : identity_index[c]) {
        if (pos < 0 || pos >= size() || labels[static_cast<std::size_t>(pos)] != static_cast<int>(c)) {
          throw Error("dataset: identity index inconsistent with labels");
        }
      }
      total += identity_index[c].size();
    }
    if (total != labels.size()) throw Error("dataset: identity index does not cover every sample");
    require_finite(inputs, "dataset");
  }

  /// Builds a dataset from string labels, interning them in first-appearance order.
  static LabeledDataset from_rows(Matrix inputs, const std::vector<std::string>& names) {
    LabeledDataset ds;
    ds.inputs = std::move(inputs);
    std::unordered_map<std::string, int> ids;
    for (const auto& name : names) {
      auto [it, inserted] = ids.try_emplace(name, static_cast<int>(ds.label_names.size()));
      if (inserted) ds.label_names.push_back(name);
      ds.labels.push_back(it->second);
    }
    ds.rebuild_index();
    ds.validate();
    return ds;
  }

  /// Subset of samples, labels re-densified in first-appearance order.
  LabeledDataset subset(const std::vector<int>& sample_ids) const {
    std::vector<std::string> names;
    names.reserve(sample_ids.size());
    for (int s : sample_ids) names.push_back(label_names[static_cast<std::size_t>(labels[static_cast<std::size_t>(s)])]);
    return from_rows(gather_rows(inputs, sample_ids), names);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(where + ": cannot parse number '" + s + "'");
  }
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Reads `label,x_0,...,x_{n-1}` with a mandatory header row.
inline LabeledDataset read_dataset_csv(std::istream& in, const std::string& source = "dataset") {
  std::string line;
  if (!std::getline(in, line)) throw Error(source + ": empty file, header row required");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "label") {
    throw Error(source + ":1: header must start with 'label' followed by feature columns");
  }
  const std::size_t n = header.size() - 1;
  std::vector<std::string> names;
  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (cells.size() != n + 1) {
      throw Error(where + ": expected " + std::to_string(n + 1) + " columns, got " +
                  std::to_string(cells.size()));
    }
    names.push_back(cells[0]);
    for (std::size_t c = 1; c <= n; ++c) values.push_back(detail::parse_double(cells[c], where));
  }
  Matrix inputs(static_cast<Eigen::Index>(names.size()), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i)
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) inputs(i, j) = values[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
  return LabeledDataset::from_rows(std::move(inputs), names);
}

inline LabeledDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  return read_dataset_csv(in, path);
}

inline void write_dataset_csv(std::ostream& out, const LabeledDataset& ds) {
  out << "label";
  for (int j = 0; j < ds.dim(); ++j) out << ",x_" << j;
  out << '\n';
  for (int i = 0; i < ds.size(); ++i) {
    out << ds.label_names[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
    for (int j = 0; j < ds.dim(); ++j) out << ',' << detail::format_double(ds.inputs(i, j));
    out << '\n';
  }
}

inline void save_dataset_csv(const std::string& path, const LabeledDataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset file: " + path);
  write_dataset_csv(out, ds);
}

}  // namespace tripletlab
