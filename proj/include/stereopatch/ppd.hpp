#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stereopatch/core.hpp"

namespace stereopatch {

enum class PatchShape { Rectangle, Circle };
enum class Hollowness { None, LowDensity, HighDensity };
enum class Brightness { Normal, Low, High };
enum class TextureType { Solid, Gradient, Chessboard, Stripe, Wave, Concentric, Zebra, Leopard, Random };
enum class Frequency { Low, High };
// Table-order compass directions: E W N S NE SE SW NW
enum class Orientation { E, W, N, S, NE, SE, SW, NW };
enum class BlurLevel { None, Slight, Heavy };

// One point of the pattern space: one option per primitive. Fields that do
// not apply to the chosen texture are forced to index 0 by canonicalize(), so
// equivalent configurations compare equal.
struct PatternConfig {
    PatchShape shape = PatchShape::Rectangle;
    Hollowness hollowness = Hollowness::None;
    bool block_repetition = false;
    Brightness brightness = Brightness::Normal;
    int color = 0;  // palette index, 0..8
    TextureType texture = TextureType::Solid;
    Frequency frequency = Frequency::Low;
    Orientation orientation = Orientation::E;
    BlurLevel blur = BlurLevel::None;

    bool operator==(const PatternConfig&) const = default;
};

// Which fields matter for a given texture.
bool frequency_applicable(TextureType t);
bool orientation_applicable(TextureType t);
// Textures unchanged by a 180-degree rotation; opposite orientations collapse.
bool orientation_halfturn_symmetric(TextureType t);

Orientation opposite_orientation(Orientation o);

// Force inapplicable fields (and redundant orientations) to their canonical
// sentinel. render() treats equivalent configs identically.
PatternConfig canonicalize(const PatternConfig& c);

struct Patch {
    Image pixels;                 // RGB
    std::vector<uint8_t> visibility_mask;  // false inside cutouts / outside silhouette
    int width = 0;
    int height = 0;
    int block_size = 0;

    bool mask_at(int row, int col) const {
        return visibility_mask[static_cast<size_t>(row) * width + col] != 0;
    }
};

struct PatternSpace {
    std::vector<std::vector<std::string>> options;  // per primitive, in table order
    long long raw_count = 0;                        // before canonicalization
    long long canonical_count = 0;
};

struct RenderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Hollow cutout / repetition block edge in pixels: 15 (high density) or 30 (low).
int lattice_size(const PatternConfig& c);

// Deterministic rasterization; the seed only drives the leopard and random
// stochastic textures.
Patch render(const PatternConfig& config, int width, int height, uint64_t seed);

PatternSpace enumerate_space();

// Stable single-line text form; inapplicable fields print as "-".
std::string config_to_text(const PatternConfig& c);

struct ConfigParseError : std::runtime_error {
    ConfigParseError(const std::string& msg, size_t pos)
        : std::runtime_error(msg + " (at position " + std::to_string(pos) + ")"), position(pos) {}
    size_t position;
};

PatternConfig config_from_text(const std::string& text);

}  // namespace stereopatch
