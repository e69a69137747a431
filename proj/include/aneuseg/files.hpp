#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "aneuseg/trainer.hpp"

namespace aneuseg {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::string read_text(const std::filesystem::path& path);
/// Writes via a temporary file and rename, so readers never see partial output.
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

nlohmann::json split_to_json(const FoldSplit& split);
FoldSplit split_from_json(const nlohmann::json& doc);

/// File name without .nii / .nii.gz.
std::string case_stem(const std::filesystem::path& path);

}  // namespace aneuseg
