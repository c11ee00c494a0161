#include "mftg/json_io.hpp"

#include <cstdio>
#include <fstream>

#include "mftg/errors.hpp"

namespace mftg {

bool json_is_matrix(const Json& j) {
  if (!j.is_array() || j.empty()) return false;
  if (!j[0].is_array() || j[0].empty()) return false;
  return j[0][0].is_number();
}

Mat matrix_from_json(const Json& j, const std::string& key) {
  if (!json_is_matrix(j))
    throw ConfigError(key, "expected a matrix as nested arrays of numbers");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols)
      throw ConfigError(key, "ragged matrix rows");
    for (int c = 0; c < cols; ++c) {
      if (!j[r][c].is_number())
        throw ConfigError(key, "matrix entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Json matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json matrix_seq_to_json(const std::vector<Mat>& seq) {
  Json out = Json::array();
  for (const auto& m : seq) out.push_back(matrix_to_json(m));
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError(path.string(), "cannot open file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string(), std::string("parse error: ") + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out)
    throw ConfigError(path.string(), "cannot open file for writing");
  out << j.dump(2) << '\n';
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path);
  if (!out)
    throw ConfigError(path.string(), "cannot open file for writing");
  out << text;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace mftg
