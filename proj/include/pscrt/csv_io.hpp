// Copyright 2026 The pscrt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// CSV ingestion of trial data. One row per individual with columns
// cluster_id, a, d, y, x_1..x_dX, v_1..v_dV (names configurable).

#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pscrt/data_model.hpp"

namespace pscrt {

struct CsvSchema {
  std::string cluster_id = "cluster_id";
  std::string a = "a";
  std::string d = "d";
  std::string y = "y";
  // Empty lists mean "every column named x_<k>" / "v_<k>", ordered by k.
  std::vector<std::string> x_columns;
  std::vector<std::string> v_columns;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_real(const std::string& s, const std::string& column, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  PSCRT_REQUIRE(res.ec == std::errc() && res.ptr == end && std::isfinite(v), ErrorCode::InvalidData,
                "column '" + column + "' line " + std::to_string(line) + ": '" + s +
                    "' is not a finite number");
  return v;
}

inline int parse_binary(const std::string& s, const std::string& column, const char* tag,
                        std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  PSCRT_REQUIRE(res.ec == std::errc() && res.ptr == end && (v == 0.0 || v == 1.0),
                ErrorCode::NonBinary,
                std::string(tag) + ": column '" + column + "' line " + std::to_string(line) +
                    " has value '" + s + "'");
  return static_cast<int>(v);
}

inline std::vector<std::string> numbered_columns(const std::vector<std::string>& header,
                                                 const std::string& prefix) {
  std::map<int, std::string> found;
  for (const auto& h : header) {
    if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) continue;
    int k = 0;
    const auto* b = h.data() + prefix.size();
    const auto* e = h.data() + h.size();
    const auto res = std::from_chars(b, e, k);
    if (res.ec == std::errc() && res.ptr == e && k >= 1) found.emplace(k, h);
  }
  std::vector<std::string> out;
  for (auto& [k, name] : found) out.push_back(name);
  return out;
}

}  // namespace detail

inline TrialDataset read_csv(std::istream& in, double pi, const CsvSchema& schema = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = detail::split_csv_line(line);
    break;
  }
  PSCRT_REQUIRE(!header.empty(), ErrorCode::EmptyFile, "no header row");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(header[i], i);
  auto require = [&](const std::string& name) {
    const auto it = col.find(name);
    PSCRT_REQUIRE(it != col.end(), ErrorCode::MissingColumn, "column '" + name + "' not found");
    return it->second;
  };
  const std::size_t c_id = require(schema.cluster_id);
  const std::size_t c_a = require(schema.a);
  const std::size_t c_d = require(schema.d);
  const std::size_t c_y = require(schema.y);
  const auto x_names = schema.x_columns.empty() ? detail::numbered_columns(header, "x_") : schema.x_columns;
  const auto v_names = schema.v_columns.empty() ? detail::numbered_columns(header, "v_") : schema.v_columns;
  std::vector<std::size_t> c_x, c_v;
  for (const auto& n : x_names) c_x.push_back(require(n));
  for (const auto& n : v_names) c_v.push_back(require(n));

  struct Pending {
    std::string id;
    int a = 0;
    std::vector<double> v;
    std::vector<std::vector<double>> x;
    std::vector<int> d;
    std::vector<double> y;
  };
  std::vector<Pending> pending;
  std::unordered_map<std::string, std::size_t> index;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    PSCRT_REQUIRE(fields.size() == header.size(), ErrorCode::InvalidData,
                  "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    const std::string& id = fields[c_id];
    PSCRT_REQUIRE(!id.empty(), ErrorCode::InvalidData,
                  "line " + std::to_string(line_no) + " has an empty cluster id");
    const int a = detail::parse_binary(fields[c_a], schema.a, "a", line_no);
    const int d = detail::parse_binary(fields[c_d], schema.d, "d", line_no);
    const double y = detail::parse_real(fields[c_y], schema.y, line_no);
    std::vector<double> x, v;
    for (std::size_t k = 0; k < c_x.size(); ++k)
      x.push_back(detail::parse_real(fields[c_x[k]], x_names[k], line_no));
    for (std::size_t k = 0; k < c_v.size(); ++k)
      v.push_back(detail::parse_real(fields[c_v[k]], v_names[k], line_no));

    auto [it, inserted] = index.emplace(id, pending.size());
    if (inserted) {
      pending.push_back({id, a, v, {}, {}, {}});
    } else {
      const Pending& p = pending[it->second];
      PSCRT_REQUIRE(p.a == a, ErrorCode::InconsistentClusterConstant,
                    "assignment differs within cluster '" + id + "' (line " + std::to_string(line_no) + ")");
      PSCRT_REQUIRE(p.v == v, ErrorCode::InconsistentClusterConstant,
                    "cluster-level covariates differ within cluster '" + id + "' (line " +
                        std::to_string(line_no) + ")");
    }
    Pending& p = pending[it->second];
    p.x.push_back(std::move(x));
    p.d.push_back(d);
    p.y.push_back(y);
  }
  PSCRT_REQUIRE(!pending.empty(), ErrorCode::EmptyFile, "no data rows");

  std::vector<Cluster> clusters;
  clusters.reserve(pending.size());
  for (auto& p : pending) {
    Cluster c;
    c.id = p.id;
    c.a = p.a;
    c.v = Eigen::Map<const Eigen::VectorXd>(p.v.data(), static_cast<Eigen::Index>(p.v.size()));
    const auto n = static_cast<Eigen::Index>(p.d.size());
    c.x.resize(n, static_cast<Eigen::Index>(c_x.size()));
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < c.x.cols(); ++k) c.x(j, k) = p.x[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    c.d = std::move(p.d);
    c.y = Eigen::Map<const Eigen::VectorXd>(p.y.data(), n);
    clusters.push_back(std::move(c));
  }
  return TrialDataset(std::move(clusters), pi);
}

inline TrialDataset load_csv(const std::string& path, double pi, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  PSCRT_REQUIRE(in.good(), ErrorCode::Io, "cannot open '" + path + "'");
  return read_csv(in, pi, schema);
}

// Shortest decimal form that reads back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& out, const TrialDataset& ds) {
  out << "cluster_id,a,d,y";
  for (Eigen::Index k = 0; k < ds.dim_x(); ++k) out << ",x_" << (k + 1);
  for (Eigen::Index k = 0; k < ds.dim_v(); ++k) out << ",v_" << (k + 1);
  out << '\n';
  for (const auto& c : ds.clusters()) {
    const bool quote = c.id.find_first_of(",\"") != std::string::npos;
    std::string id = c.id;
    if (quote) {
      std::string esc;
      for (char ch : id) esc += (ch == '"') ? std::string("\"\"") : std::string(1, ch);
      id = '"' + esc + '"';
    }
    for (int j = 0; j < c.size(); ++j) {
      out << id << ',' << c.a << ',' << c.d[static_cast<std::size_t>(j)] << ',' << format_real(c.y[j]);
      for (Eigen::Index k = 0; k < c.x.cols(); ++k) out << ',' << format_real(c.x(j, k));
      for (Eigen::Index k = 0; k < c.v.size(); ++k) out << ',' << format_real(c.v[k]);
      out << '\n';
    }
  }
}

}  // namespace pscrt
