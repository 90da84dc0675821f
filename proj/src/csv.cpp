#include "oodgate/csv.hpp"

#include <sstream>
#include <string>

#include "oodgate/error.hpp"

namespace oodgate {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : f.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

FeatureSet read_features_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) header = split_fields(line);
  }
  if (header.empty()) throw Error(ErrorCode::InvalidInput, "CSV has no header row");
  const bool has_labels = header.back() == "label";
  const std::size_t L = header.size() - (has_labels ? 1 : 0);
  if (L == 0) throw Error(ErrorCode::InvalidInput, "CSV header declares no feature columns");
  for (std::size_t l = 0; l < L; ++l) {
    if (header[l] != "l" + std::to_string(l)) {
      throw Error(ErrorCode::InvalidInput, "CSV header column " + std::to_string(l) + " should be l" + std::to_string(l));
    }
  }

  std::vector<double> values;
  std::vector<ClassIndex> labels;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::InvalidDimension, "CSV line " + std::to_string(line_no) + " has " +
                                                   std::to_string(fields.size()) + " fields, expected " +
                                                   std::to_string(header.size()));
    }
    for (std::size_t l = 0; l < L; ++l) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(fields[l], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != fields[l].size()) {
        throw Error(ErrorCode::InvalidInput, "CSV line " + std::to_string(line_no) + ": bad number '" + fields[l] + "'");
      }
      values.push_back(x);
    }
    if (has_labels) {
      const auto& f = fields.back();
      if (f.empty() || f.find_first_not_of("0123456789") != std::string::npos) {
        throw Error(ErrorCode::InvalidInput, "CSV line " + std::to_string(line_no) + ": bad label '" + f + "'");
      }
      labels.push_back(static_cast<ClassIndex>(std::stoul(f)));
    }
    ++n;
  }
  FeatureSet fs;
  fs.rows = Matrix(n, L, std::move(values));
  if (has_labels) fs.labels = std::move(labels);
  return fs;
}

}  // namespace oodgate
