#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aneuseg/volume.hpp"

namespace aneuseg {

enum class Axis { X = 0, Y = 1, Z = 2 };

Axis parse_axis(const std::string& s);

/// 8-bit grayscale image, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Slice of `vol` perpendicular to `axis`, min-max scaled to 0..255, with the
/// in-slice boundary of `mask` (foreground pixels having a background
/// 4-neighbour, out of slice counting as background) painted at 255.
/// Slice axes: Z -> (x, y), Y -> (x, z), X -> (y, z).
GrayImage render_overlay(const Volume3& vol, const LabelMask& mask, Axis axis, std::int64_t index);

/// Binary PGM (P5, maxval 255).
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace aneuseg
