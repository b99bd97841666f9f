#include "ctk/font.hpp"

#include <array>

namespace ctk::font {

namespace {

struct GlyphRows {
    char ch;
    std::array<const char*, kCellHeight> rows;
};

// clang-format off
constexpr GlyphRows kGlyphs[] = {
    {'A', {
        "..####..",
        ".##..##.",
        "##....##",
        "##....##",
        "##....##",
        "########",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
    }},
    {'B', {
        "#######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "#######.",
        "#######.",
        "##....##",
        "##....##",
        "##....##",
        "########",
        "#######.",
    }},
    {'C', {
        ".######.",
        "########",
        "##....##",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "##....##",
        "########",
        ".######.",
    }},
    {'D', {
        "######..",
        "#######.",
        "##...###",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##...###",
        "#######.",
        "######..",
    }},
    {'E', {
        "########",
        "########",
        "##......",
        "##......",
        "##......",
        "######..",
        "######..",
        "##......",
        "##......",
        "##......",
        "########",
        "########",
    }},
    {'F', {
        "########",
        "########",
        "##......",
        "##......",
        "##......",
        "######..",
        "######..",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
    }},
    {'G', {
        ".######.",
        "########",
        "##....##",
        "##......",
        "##......",
        "##..####",
        "##..####",
        "##....##",
        "##....##",
        "##....##",
        "########",
        ".######.",
    }},
    {'H', {
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "########",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
    }},
    {'I', {
        "########",
        "########",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "########",
        "########",
    }},
    {'J', {
        "..######",
        "..######",
        ".....##.",
        ".....##.",
        ".....##.",
        ".....##.",
        ".....##.",
        ".....##.",
        "##...##.",
        "##...##.",
        "#######.",
        ".#####..",
    }},
    {'K', {
        "##....##",
        "##...##.",
        "##..##..",
        "##.##...",
        "####....",
        "###.....",
        "####....",
        "##.##...",
        "##..##..",
        "##...##.",
        "##....##",
        "##....##",
    }},
    {'L', {
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
        "########",
        "########",
    }},
    {'M', {
        "##....##",
        "###..###",
        "########",
        "##.##.##",
        "##.##.##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
    }},
    {'N', {
        "##....##",
        "###...##",
        "####..##",
        "##.##.##",
        "##.##.##",
        "##..####",
        "##...###",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
    }},
    {'O', {
        ".######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "########",
        ".######.",
    }},
    {'P', {
        "#######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "########",
        "#######.",
        "##......",
        "##......",
        "##......",
        "##......",
        "##......",
    }},
    {'Q', {
        ".######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##.##.##",
        "##..####",
        "#######.",
        ".######.",
        ".....###",
        "......##",
    }},
    {'R', {
        "#######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "########",
        "#######.",
        "##.##...",
        "##..##..",
        "##...##.",
        "##....##",
        "##....##",
    }},
    {'S', {
        ".######.",
        "########",
        "##....##",
        "##......",
        "#######.",
        ".#######",
        "......##",
        "......##",
        "##....##",
        "##....##",
        "########",
        ".######.",
    }},
    {'T', {
        "########",
        "########",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
    }},
    {'U', {
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "########",
        ".######.",
    }},
    {'V', {
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        ".##..##.",
        ".##..##.",
        ".##..##.",
        "..####..",
        "..####..",
        "...##...",
    }},
    {'W', {
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##....##",
        "##.##.##",
        "##.##.##",
        "##.##.##",
        "########",
        "###..###",
        "##....##",
        "##....##",
    }},
    {'X', {
        "##....##",
        "##....##",
        ".##..##.",
        ".##..##.",
        "..####..",
        "...##...",
        "...##...",
        "..####..",
        ".##..##.",
        ".##..##.",
        "##....##",
        "##....##",
    }},
    {'Y', {
        "##....##",
        "##....##",
        ".##..##.",
        ".##..##.",
        "..####..",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
    }},
    {'Z', {
        "########",
        "########",
        "......##",
        ".....##.",
        "....##..",
        "...##...",
        "..##....",
        ".##.....",
        "##......",
        "##......",
        "########",
        "########",
    }},
    {'0', {
        "..####..",
        ".##..##.",
        "##....##",
        "##...###",
        "##..####",
        "##.##.##",
        "####..##",
        "###...##",
        "##....##",
        "##....##",
        ".##..##.",
        "..####..",
    }},
    {'1', {
        "...##...",
        "..###...",
        ".####...",
        "##.##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "...##...",
        "########",
        "########",
    }},
    {'2', {
        ".######.",
        "########",
        "##....##",
        "......##",
        "......##",
        ".....##.",
        "....##..",
        "...##...",
        "..##....",
        ".##.....",
        "########",
        "########",
    }},
    {'3', {
        ".######.",
        "########",
        "##....##",
        "......##",
        "......##",
        "..#####.",
        "..#####.",
        "......##",
        "......##",
        "##....##",
        "########",
        ".######.",
    }},
    {'4', {
        "....###.",
        "...####.",
        "..##.##.",
        ".##..##.",
        "##...##.",
        "##...##.",
        "########",
        "########",
        ".....##.",
        ".....##.",
        ".....##.",
        ".....##.",
    }},
    {'5', {
        "########",
        "########",
        "##......",
        "##......",
        "#######.",
        "########",
        "......##",
        "......##",
        "......##",
        "##....##",
        "########",
        ".######.",
    }},
    {'6', {
        ".######.",
        "########",
        "##....##",
        "##......",
        "##......",
        "#######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "########",
        ".######.",
    }},
    {'7', {
        "########",
        "########",
        "......##",
        ".....##.",
        ".....##.",
        "....##..",
        "....##..",
        "...##...",
        "...##...",
        "..##....",
        "..##....",
        "..##....",
    }},
    {'8', {
        ".######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        ".######.",
        ".######.",
        "##....##",
        "##....##",
        "##....##",
        "########",
        ".######.",
    }},
    {'9', {
        ".######.",
        "########",
        "##....##",
        "##....##",
        "##....##",
        "########",
        ".#######",
        "......##",
        "......##",
        "##....##",
        "########",
        ".######.",
    }},
};
// clang-format on

const GlyphRows* find(char c) {
    for (const auto& g : kGlyphs)
        if (g.ch == c) return &g;
    return nullptr;
}

}  // namespace

bool has_glyph(char c) { return find(c) != nullptr; }

BinaryImage glyph(char c) {
    const GlyphRows* g = find(c);
    if (!g) throw ParamError(std::string("no glyph for character '") + c + "'");
    BinaryImage out(kCellWidth, kCellHeight);
    for (int y = 0; y < kCellHeight; ++y)
        for (int x = 0; x < kCellWidth; ++x) out.set(x, y, g->rows[y][x] == '#');
    return out;
}

}  // namespace ctk::font
