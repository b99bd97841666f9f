#pragma once

#include <string_view>

#include "ctk/image.hpp"

// Embedded 8x12 bitmap font, uppercase A-Z and digits 0-9, 2 px strokes.
namespace ctk::font {

inline constexpr int kCellWidth = 8;
inline constexpr int kCellHeight = 12;
inline constexpr std::string_view kCharset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

bool has_glyph(char c);

/// Glyph bitmap; unknown characters throw ParamError naming the character.
BinaryImage glyph(char c);

}  // namespace ctk::font
