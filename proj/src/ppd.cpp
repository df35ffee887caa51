#include "stereopatch/ppd.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace stereopatch {

namespace {

struct Rgb {
    double r, g, b;
};

// Two-color palettes, table order. Solid textures use only the first color.
constexpr Rgb kPalettes[9][2] = {
    {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}},        // black & white
    {{0.85, 0.10, 0.10}, {0.10, 0.60, 0.20}},  // red & green
    {{0.10, 0.20, 0.85}, {1.00, 0.85, 0.10}},  // blue & yellow
    {{1.0, 1.0, 1.0}, {0.10, 0.60, 0.20}},     // white & green
    {{1.00, 0.85, 0.10}, {0.0, 0.0, 0.0}},     // yellow & black
    {{0.10, 0.60, 0.20}, {0.55, 0.15, 0.65}},  // green & purple
    {{0.70, 0.95, 0.70}, {0.60, 0.90, 0.80}},  // light green & mint green
    {{0.50, 0.75, 0.95}, {0.80, 0.97, 1.00}},  // sky blue & light cyan
    {{1.00, 0.60, 0.10}, {0.98, 0.50, 0.45}},  // orange & warm coral
};

// texture period in pixels
int period_px(Frequency f) { return f == Frequency::High ? 8 : 24; }

// splitmix64, used for the seeded textures
uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double unit_hash(uint64_t seed, uint64_t a, uint64_t b) {
    return static_cast<double>(mix64(seed ^ mix64(a * 0x100000001b3ULL + b)) >> 11) /
           9007199254740992.0;  // 2^53
}

// smooth value noise in [0,1] at integer lattice scale `cell`
double value_noise(uint64_t seed, double y, double x, double cell) {
    const double fy = y / cell, fx = x / cell;
    const auto iy = static_cast<int64_t>(std::floor(fy));
    const auto ix = static_cast<int64_t>(std::floor(fx));
    const double ty = fy - iy, tx = fx - ix;
    const double sy = ty * ty * (3 - 2 * ty), sx = tx * tx * (3 - 2 * tx);
    const double v00 = unit_hash(seed, iy, ix);
    const double v01 = unit_hash(seed, iy, ix + 1);
    const double v10 = unit_hash(seed, iy + 1, ix);
    const double v11 = unit_hash(seed, iy + 1, ix + 1);
    const double top = v00 * (1 - sx) + v01 * sx;
    const double bot = v10 * (1 - sx) + v11 * sx;
    return top * (1 - sy) + bot * sy;
}

// unit direction for each orientation option (image coordinates: +x right, +y down)
void orientation_axis(Orientation o, double& ax, double& ay) {
    const double s = std::sqrt(0.5);
    switch (o) {
        case Orientation::E: ax = 1; ay = 0; break;
        case Orientation::W: ax = -1; ay = 0; break;
        case Orientation::N: ax = 0; ay = -1; break;
        case Orientation::S: ax = 0; ay = 1; break;
        case Orientation::NE: ax = s; ay = -s; break;
        case Orientation::SE: ax = s; ay = s; break;
        case Orientation::SW: ax = -s; ay = s; break;
        case Orientation::NW: ax = -s; ay = -s; break;
    }
}

// Blend parameter in [0,1] between the palette colors at block-local (y,x).
// bw/bh give the span of the texture tile (block or whole patch).
double texture_value(const PatternConfig& c, uint64_t seed, double y, double x, int bw, int bh) {
    const int period = period_px(c.frequency);
    double ax, ay;
    orientation_axis(c.orientation, ax, ay);
    switch (c.texture) {
        case TextureType::Solid:
            return 0.0;
        case TextureType::Gradient: {
            // full span along the orientation axis
            const double proj = ax * x + ay * y;
            const double lo = std::min(0.0, std::min(ax * (bw - 1), std::min(ay * (bh - 1), ax * (bw - 1) + ay * (bh - 1))));
            const double hi = std::max(0.0, std::max(ax * (bw - 1), std::max(ay * (bh - 1), ax * (bw - 1) + ay * (bh - 1))));
            return hi > lo ? (proj - lo) / (hi - lo) : 0.0;
        }
        case TextureType::Chessboard: {
            const int cell = std::max(1, period / 2);
            const auto cy = static_cast<int64_t>(std::floor(y / cell));
            const auto cx = static_cast<int64_t>(std::floor(x / cell));
            return ((cy + cx) & 1) ? 1.0 : 0.0;
        }
        case TextureType::Stripe: {
            const double s = ax * x + ay * y;
            const double phase = s / period - std::floor(s / period);
            return phase < 0.5 ? 0.0 : 1.0;
        }
        case TextureType::Wave: {
            const double s = ax * x + ay * y;
            return 0.5 + 0.5 * std::sin(2.0 * M_PI * s / period);
        }
        case TextureType::Concentric: {
            const double cy = (bh - 1) / 2.0, cx = (bw - 1) / 2.0;
            const double rad = std::hypot(y - cy, x - cx);
            const double phase = rad / period - std::floor(rad / period);
            return phase < 0.5 ? 0.0 : 1.0;
        }
        case TextureType::Zebra: {
            // deterministic irregular stripes: vertical bands with a wobble and
            // width modulation
            const double wobble = 0.35 * period * std::sin(2.0 * M_PI * y / (3.0 * period)) +
                                  0.15 * period * std::sin(2.0 * M_PI * y / (1.3 * period) + 1.0);
            const double s = x + wobble;
            const double duty = 0.45 + 0.15 * std::sin(2.0 * M_PI * s / (5.0 * period));
            const double phase = s / period - std::floor(s / period);
            return phase < duty ? 0.0 : 1.0;
        }
        case TextureType::Leopard: {
            // thresholded seeded blue-noise-ish blobs, elongated along the axis
            const double u = ax * x + ay * y;
            const double v = -ay * x + ax * y;
            const double n = value_noise(seed ^ 0x5eedULL, v / 1.6, u / 0.9, period);
            return n > 0.62 ? 1.0 : 0.0;
        }
        case TextureType::Random: {
            const auto iy = static_cast<int64_t>(std::llround(y));
            const auto ix = static_cast<int64_t>(std::llround(x));
            return unit_hash(seed ^ 0xabcdULL, iy, ix) < 0.5 ? 0.0 : 1.0;
        }
    }
    return 0.0;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    const double delta = mx - mn;
    s = mx > 0.0 ? delta / mx : 0.0;
    if (delta <= 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
        h = 60.0 * ((b - r) / delta + 2.0);
    } else {
        h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1) { r1 = c; g1 = x; }
    else if (hp < 2) { r1 = x; g1 = c; }
    else if (hp < 3) { g1 = c; b1 = x; }
    else if (hp < 4) { g1 = x; b1 = c; }
    else if (hp < 5) { r1 = x; b1 = c; }
    else { r1 = c; b1 = x; }
    const double m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

void gaussian_blur_inplace(Image& img, int kernel) {
    const int radius = kernel / 2;
    const double sigma = 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8;
    std::vector<double> k(kernel);
    double sum = 0.0;
    for (int i = 0; i < kernel; ++i) {
        const double d = i - radius;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    Image tmp = img;
    const int h = img.height, w = img.width, ch = img.channels;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int cc = 0; cc < ch; ++cc) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    s += k[i + radius] * img.at(r, std::clamp(c + i, 0, w - 1), cc);
                tmp.at(r, c, cc) = s;
            }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int cc = 0; cc < ch; ++cc) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    s += k[i + radius] * tmp.at(std::clamp(r + i, 0, h - 1), c, cc);
                img.at(r, c, cc) = s;
            }
}

}  // namespace

bool frequency_applicable(TextureType t) {
    return t != TextureType::Solid && t != TextureType::Gradient && t != TextureType::Random;
}

bool orientation_applicable(TextureType t) {
    return t == TextureType::Gradient || t == TextureType::Stripe || t == TextureType::Wave ||
           t == TextureType::Leopard;
}

bool orientation_halfturn_symmetric(TextureType t) {
    return t == TextureType::Stripe || t == TextureType::Wave;
}

Orientation opposite_orientation(Orientation o) {
    switch (o) {
        case Orientation::E: return Orientation::W;
        case Orientation::W: return Orientation::E;
        case Orientation::N: return Orientation::S;
        case Orientation::S: return Orientation::N;
        case Orientation::NE: return Orientation::SW;
        case Orientation::SW: return Orientation::NE;
        case Orientation::SE: return Orientation::NW;
        case Orientation::NW: return Orientation::SE;
    }
    return o;
}

PatternConfig canonicalize(const PatternConfig& c) {
    PatternConfig out = c;
    if (!frequency_applicable(c.texture)) out.frequency = Frequency::Low;
    if (!orientation_applicable(c.texture)) {
        out.orientation = Orientation::E;
    } else if (orientation_halfturn_symmetric(c.texture)) {
        const auto opp = opposite_orientation(c.orientation);
        if (static_cast<int>(opp) < static_cast<int>(c.orientation)) out.orientation = opp;
    }
    return out;
}

int lattice_size(const PatternConfig& c) {
    return c.hollowness == Hollowness::LowDensity ? 30 : 15;
}

Patch render(const PatternConfig& raw, int width, int height, uint64_t seed) {
    const PatternConfig c = canonicalize(raw);
    const int q = lattice_size(c);
    if (c.hollowness != Hollowness::None && (width < 2 * q || height < 2 * q))
        throw RenderError("render: patch smaller than hollow lattice (need >= 2q = " +
                          std::to_string(2 * q) + " px)");
    if (width < 2 || height < 2) throw RenderError("render: patch too small");

    Patch p;
    p.width = width;
    p.height = height;
    p.block_size = q;
    p.pixels = Image(width, height, 3);
    p.visibility_mask.assign(static_cast<size_t>(width) * height, 1);

    const Rgb* pal = kPalettes[c.color];
    const bool tile = c.block_repetition;
    const int bw = tile ? q : width;
    const int bh = tile ? q : height;

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double by = tile ? (y % q) : y;
            const double bx = tile ? (x % q) : x;
            double t = texture_value(c, seed, by, bx, bw, bh);
            t = std::clamp(t, 0.0, 1.0);
            p.pixels.at(y, x, 0) = pal[0].r + t * (pal[1].r - pal[0].r);
            p.pixels.at(y, x, 1) = pal[0].g + t * (pal[1].g - pal[0].g);
            p.pixels.at(y, x, 2) = pal[0].b + t * (pal[1].b - pal[0].b);
        }
    }

    // brightness: scale the HSV V channel
    if (c.brightness != Brightness::Normal) {
        const double gamma = c.brightness == Brightness::High ? 1.2 : 0.8;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double h, s, v;
                rgb_to_hsv(p.pixels.at(y, x, 0), p.pixels.at(y, x, 1), p.pixels.at(y, x, 2), h, s, v);
                v = std::clamp(v * gamma, 0.0, 1.0);
                hsv_to_rgb(h, s, v, p.pixels.at(y, x, 0), p.pixels.at(y, x, 1), p.pixels.at(y, x, 2));
            }
    }

    if (c.blur != BlurLevel::None)
        gaussian_blur_inplace(p.pixels, c.blur == BlurLevel::Slight ? 5 : 11);

    // visibility mask: silhouette then hollow cutouts; never depends on texture
    if (c.shape == PatchShape::Circle) {
        const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
        const double ry = height / 2.0, rx = width / 2.0;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                if (dy * dy + dx * dx > 1.0)
                    p.visibility_mask[static_cast<size_t>(y) * width + x] = 0;
            }
    }
    if (c.hollowness != Hollowness::None) {
        // one q x q cutout per 2q x 2q cell -> 1/4 cutout area
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (((y / q) % 2 == 1) && ((x / q) % 2 == 1))
                    p.visibility_mask[static_cast<size_t>(y) * width + x] = 0;
    }
    return p;
}

namespace {

const std::vector<std::vector<std::string>> kOptionNames = {
    {"rectangle", "circle"},
    {"none", "low", "high"},
    {"no", "yes"},
    {"normal", "low", "high"},
    {"bw", "rg", "bly", "wg", "yb", "gp", "lgmg", "sblc", "owc"},
    {"solid", "gradient", "chessboard", "stripe", "wave", "concentric", "zebra", "leopard", "random"},
    {"low", "high"},
    {"e", "w", "n", "s", "ne", "se", "sw", "nw"},
    {"none", "slight", "heavy"},
};

const char* kFieldNames[9] = {"shape", "hollow", "rep",    "bright", "color",
                              "texture", "freq",  "orient", "blur"};

std::array<int, 9> to_indices(const PatternConfig& c) {
    return {static_cast<int>(c.shape),      static_cast<int>(c.hollowness),
            c.block_repetition ? 1 : 0,     static_cast<int>(c.brightness),
            c.color,                        static_cast<int>(c.texture),
            static_cast<int>(c.frequency),  static_cast<int>(c.orientation),
            static_cast<int>(c.blur)};
}

PatternConfig from_indices(const std::array<int, 9>& ix) {
    PatternConfig c;
    c.shape = static_cast<PatchShape>(ix[0]);
    c.hollowness = static_cast<Hollowness>(ix[1]);
    c.block_repetition = ix[2] == 1;
    c.brightness = static_cast<Brightness>(ix[3]);
    c.color = ix[4];
    c.texture = static_cast<TextureType>(ix[5]);
    c.frequency = static_cast<Frequency>(ix[6]);
    c.orientation = static_cast<Orientation>(ix[7]);
    c.blur = static_cast<BlurLevel>(ix[8]);
    return c;
}

}  // namespace

PatternSpace enumerate_space() {
    PatternSpace sp;
    sp.options = kOptionNames;
    sp.raw_count = 1;
    for (const auto& opts : sp.options) sp.raw_count *= static_cast<long long>(opts.size());
    // count canonical representatives: fixed-index fields times the per-texture
    // (frequency x orientation) multiplicity
    long long base = 2LL * 3 * 2 * 3 * 9 * 3;  // shape,hollow,rep,bright,color,blur
    long long tex_sum = 0;
    for (int t = 0; t < 9; ++t) {
        const auto tt = static_cast<TextureType>(t);
        const long long f = frequency_applicable(tt) ? 2 : 1;
        long long o = 1;
        if (orientation_applicable(tt)) o = orientation_halfturn_symmetric(tt) ? 4 : 8;
        tex_sum += f * o;
    }
    sp.canonical_count = base * tex_sum;
    return sp;
}

std::string config_to_text(const PatternConfig& raw) {
    const PatternConfig c = canonicalize(raw);
    const auto ix = to_indices(c);
    std::ostringstream os;
    for (int f = 0; f < 9; ++f) {
        if (f) os << ',';
        os << kFieldNames[f] << '=';
        const bool na = (f == 6 && !frequency_applicable(c.texture)) ||
                        (f == 7 && !orientation_applicable(c.texture));
        os << (na ? "-" : kOptionNames[f][ix[f]]);
    }
    return os.str();
}

PatternConfig config_from_text(const std::string& text) {
    std::array<int, 9> ix{};
    std::array<bool, 9> seen{};
    size_t pos = 0;
    while (pos < text.size()) {
        const size_t eq = text.find('=', pos);
        if (eq == std::string::npos) throw ConfigParseError("expected '='", pos);
        const std::string key = text.substr(pos, eq - pos);
        size_t end = text.find(',', eq + 1);
        if (end == std::string::npos) end = text.size();
        const std::string val = text.substr(eq + 1, end - eq - 1);
        int field = -1;
        for (int f = 0; f < 9; ++f)
            if (key == kFieldNames[f]) field = f;
        if (field < 0) throw ConfigParseError("unknown field '" + key + "'", pos);
        if (seen[field]) throw ConfigParseError("duplicate field '" + key + "'", pos);
        seen[field] = true;
        if (val == "-") {
            ix[field] = 0;
        } else {
            int opt = -1;
            for (size_t i = 0; i < kOptionNames[field].size(); ++i)
                if (val == kOptionNames[field][i]) opt = static_cast<int>(i);
            if (opt < 0)
                throw ConfigParseError("unknown option '" + val + "' for field '" + key + "'", eq + 1);
            ix[field] = opt;
        }
        pos = end < text.size() ? end + 1 : end;
    }
    for (int f = 0; f < 9; ++f)
        if (!seen[f]) throw ConfigParseError(std::string("missing field '") + kFieldNames[f] + "'", text.size());
    return canonicalize(from_indices(ix));
}

}  // namespace stereopatch
