#pragma once

// Problem file serialization. Problems are stored as a single JSON document;
// matrices are either nested row-major arrays of numbers or a string holding
// the path of a headerless CSV file (resolved relative to the problem file).
// Infinite penalty weights are encoded as the string "inf" so that documents
// survive a round trip (JSON itself has no infinity literal).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slqr/common.hpp"
#include "slqr/model.hpp"

namespace slqr {

/// How the penalty was spelled in a problem file, so writes mirror reads.
enum class LambdaSpec { none, scalar, matrix };

/// A problem instance as stored on disk.
struct ProblemFile {
  Plant plant;
  CostSpec cost;
  std::optional<Matrix> initial_gain;           ///< optional warm-start K0
  LambdaSpec lambda_spec = LambdaSpec::none;    ///< provenance of cost.Lambda
  double scalar_lambda = 0.0;                   ///< valid when lambda_spec == scalar
};

namespace detail {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Headerless comma-separated matrix. All rows must have equal length.
inline Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("CSV file '" + path + "': cannot parse cell '" + cell +
                         "' in row " + std::to_string(rows.size() + 1));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("CSV file '" + path + "': ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("CSV file '" + path + "' is empty");
  Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j)
      M(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return M;
}

inline void write_csv_matrix(const Matrix& M, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << format_double(M(i, j));
    }
    out << '\n';
  }
}

inline double json_entry_to_double(const nlohmann::json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ParseError("field '" + field + "': unrecognized entry \"" + s + "\"");
  }
  throw ParseError("field '" + field + "': matrix entries must be numbers or \"inf\"");
}

inline Matrix json_to_matrix(const nlohmann::json& v, const std::string& field,
                             const std::filesystem::path& base_dir) {
  if (v.is_string())
    return read_csv_matrix((base_dir / v.get<std::string>()).string());
  if (!v.is_array() || v.empty() || !v.front().is_array())
    throw ParseError("field '" + field +
                     "': expected a nested array of rows or a CSV path string");
  const size_t cols = v.front().size();
  if (cols == 0) throw ParseError("field '" + field + "': empty rows");
  Matrix M(static_cast<Index>(v.size()), static_cast<Index>(cols));
  for (size_t i = 0; i < v.size(); ++i) {
    const auto& row = v[i];
    if (!row.is_array() || row.size() != cols)
      throw ParseError("field '" + field + "': ragged rows");
    for (size_t j = 0; j < cols; ++j)
      M(static_cast<Index>(i), static_cast<Index>(j)) =
          json_entry_to_double(row[j], field);
  }
  return M;
}

inline nlohmann::json matrix_to_json(const Matrix& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < M.cols(); ++j) {
      const double x = M(i, j);
      if (std::isfinite(x))
        row.push_back(x);
      else
        row.push_back(x > 0 ? "inf" : "-inf");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

/// Parses a problem file. Throws ParseError on malformed documents (naming
/// the offending field) and ValidationError when the parsed matrices fail
/// structural validation.
inline ProblemFile read_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open problem file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("problem file '" + path + "' is not valid JSON: " + e.what());
  }
  const std::filesystem::path base_dir = std::filesystem::path(path).parent_path();

  auto require = [&](const nlohmann::json& obj, const char* key,
                     const char* where) -> const nlohmann::json& {
    if (!obj.contains(key))
      throw ParseError(std::string("missing field '") + where + "'");
    return obj.at(key);
  };

  ProblemFile p;
  const auto& plant = require(doc, "plant", "plant");
  p.plant.A = detail::json_to_matrix(require(plant, "A", "plant.A"), "plant.A", base_dir);
  p.plant.B = detail::json_to_matrix(require(plant, "B", "plant.B"), "plant.B", base_dir);
  p.plant.W = detail::json_to_matrix(require(plant, "W", "plant.W"), "plant.W", base_dir);
  const auto& cost = require(doc, "cost", "cost");
  p.cost.Q = detail::json_to_matrix(require(cost, "Q", "cost.Q"), "cost.Q", base_dir);
  p.cost.R = detail::json_to_matrix(require(cost, "R", "cost.R"), "cost.R", base_dir);

  const Index n = p.plant.A.rows();
  const Index m = p.plant.B.cols();
  const bool has_scalar = cost.contains("lambda");
  const bool has_matrix = cost.contains("Lambda");
  if (has_scalar && has_matrix)
    throw ParseError("cost has both 'lambda' and 'Lambda'; give exactly one");
  if (has_scalar) {
    if (!cost.at("lambda").is_number())
      throw ParseError("field 'cost.lambda': expected a number");
    p.scalar_lambda = cost.at("lambda").get<double>();
    if (p.scalar_lambda < 0.0)
      throw ValidationError("cost.lambda must be >= 0");
    p.lambda_spec = LambdaSpec::scalar;
    p.cost.Lambda = p.scalar_lambda * Matrix::Ones(m, n);
  } else if (has_matrix) {
    p.lambda_spec = LambdaSpec::matrix;
    p.cost.Lambda = detail::json_to_matrix(cost.at("Lambda"), "cost.Lambda", base_dir);
  } else {
    p.lambda_spec = LambdaSpec::none;
    p.cost.Lambda = Matrix::Zero(m, n);
  }

  if (doc.contains("k0"))
    p.initial_gain = detail::json_to_matrix(doc.at("k0"), "k0", base_dir);

  const auto findings = validate(p.plant, p.cost);
  if (!findings.empty()) {
    std::string msg = "problem file '" + path + "' failed validation:";
    for (const auto& f : findings) msg += "\n  - " + f;
    throw ValidationError(msg);
  }
  if (p.initial_gain && (p.initial_gain->rows() != m || p.initial_gain->cols() != n))
    throw ValidationError("k0 is not m x n");
  return p;
}

/// Writes a problem file with matrices inlined as nested arrays. Numeric
/// values round-trip exactly; +inf penalty weights are written as "inf".
inline void write_problem(const ProblemFile& p, const std::string& path) {
  nlohmann::json doc;
  doc["plant"]["A"] = detail::matrix_to_json(p.plant.A);
  doc["plant"]["B"] = detail::matrix_to_json(p.plant.B);
  doc["plant"]["W"] = detail::matrix_to_json(p.plant.W);
  doc["cost"]["Q"] = detail::matrix_to_json(p.cost.Q);
  doc["cost"]["R"] = detail::matrix_to_json(p.cost.R);
  switch (p.lambda_spec) {
    case LambdaSpec::scalar: doc["cost"]["lambda"] = p.scalar_lambda; break;
    case LambdaSpec::matrix: doc["cost"]["Lambda"] = detail::matrix_to_json(p.cost.Lambda); break;
    case LambdaSpec::none: break;
  }
  if (p.initial_gain) doc["k0"] = detail::matrix_to_json(*p.initial_gain);
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
}

}  // namespace slqr
