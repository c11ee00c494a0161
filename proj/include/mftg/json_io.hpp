#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mftg/types.hpp"

namespace mftg {

using Json = nlohmann::json;

// A matrix is encoded as row-major nested arrays: [[a,b],[c,d]].
// A sequence of matrices is an array of such blocks.
bool json_is_matrix(const Json& j);
Mat matrix_from_json(const Json& j, const std::string& key);
Json matrix_to_json(const Mat& m);
Json matrix_seq_to_json(const std::vector<Mat>& seq);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

// 17 significant digits; round-trips doubles exactly.
std::string format_double(double v);

}  // namespace mftg
