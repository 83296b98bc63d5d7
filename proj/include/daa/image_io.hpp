#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace daa {

// 8-bit grayscale PNG, deterministic byte output for identical input.
std::vector<std::uint8_t> encode_png_gray(std::span<const std::uint8_t> pixels, int width, int height);

// Maps [lo,hi] linearly onto 0..255 (values clamped).
std::vector<std::uint8_t> to_gray8(std::span<const float> values, float lo, float hi);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Strict inverse of base64_encode. Throws InvalidArgument on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

} // namespace daa
