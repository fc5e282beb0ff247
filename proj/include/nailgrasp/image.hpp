#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace nailgrasp {

// Dense pixel grid, row-major, top-left origin; intensities in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;  // 1 = gray, 3 = RGB
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {
        if (h < 1 || w < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("bad image dimensions");
    }

    double& at(int r, int c, int ch = 0) {
        return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    double at(int r, int c, int ch = 0) const {
        return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
    std::size_t size() const { return pixels.size(); }
};

struct RgbPixel {
    double r, g, b;
};

struct HsvPixel {
    double h;  // [0,1)
    double s;  // [0,1]
    double v;  // [0,1]
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline HsvPixel rgb_to_hsv(const RgbPixel& p) {
    if (!(p.r >= 0 && p.r <= 1 && p.g >= 0 && p.g <= 1 && p.b >= 0 && p.b <= 1))
        throw std::invalid_argument("rgb component outside [0,1]");
    const double mx = std::max({p.r, p.g, p.b});
    const double mn = std::min({p.r, p.g, p.b});
    const double d = mx - mn;
    HsvPixel out{0.0, 0.0, mx};
    if (d <= 0.0) return out;  // achromatic: h=0, s=0
    out.s = d / mx;
    double h;
    if (mx == p.r)
        h = std::fmod((p.g - p.b) / d, 6.0);
    else if (mx == p.g)
        h = (p.b - p.r) / d + 2.0;
    else
        h = (p.r - p.g) / d + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    if (h >= 1.0) h -= 1.0;
    out.h = h;
    return out;
}

inline RgbPixel hsv_to_rgb(const HsvPixel& p) {
    if (!(p.h >= 0 && p.h < 1 && p.s >= 0 && p.s <= 1 && p.v >= 0 && p.v <= 1))
        throw std::invalid_argument("hsv component outside range");
    const double h6 = p.h * 6.0;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double a = p.v * (1.0 - p.s);
    const double b = p.v * (1.0 - p.s * f);
    const double c = p.v * (1.0 - p.s * (1.0 - f));
    switch (sector) {
        case 0: return {p.v, c, a};
        case 1: return {b, p.v, a};
        case 2: return {a, p.v, c};
        case 3: return {a, b, p.v};
        case 4: return {c, a, p.v};
        default: return {p.v, a, b};
    }
}

inline Image to_gray(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.height, img.width, 1);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            out.at(r, c) = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
    return out;
}

namespace detail {

// PNM token scanner: skips whitespace and '#' comments.
inline std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (!std::isspace(ch)) {
            tok.push_back(static_cast<char>(ch));
            break;
        }
    }
    while ((ch = in.get()) != EOF && !std::isspace(ch)) tok.push_back(static_cast<char>(ch));
    if (tok.empty()) throw FormatError("unexpected end of PNM header");
    return tok;
}

inline int pnm_int(std::istream& in) {
    const std::string tok = pnm_token(in);
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c))) throw FormatError("non-numeric PNM header field: " + tok);
    return std::stoi(tok);
}

}  // namespace detail

inline Image read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    const std::string magic = detail::pnm_token(in);
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw FormatError("unsupported PNM magic '" + magic + "' in " + path);
    const int width = detail::pnm_int(in);
    const int height = detail::pnm_int(in);
    const int maxval = detail::pnm_int(in);
    if (width < 1 || height < 1) throw FormatError("bad PNM dimensions in " + path);
    if (maxval != 255) throw FormatError("only maxval 255 supported, got " + std::to_string(maxval));
    // single whitespace byte separates header from payload (already consumed by token scan)
    Image img(height, width, channels);
    std::vector<std::uint8_t> buf(img.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw FormatError("truncated PNM payload in " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
    return img;
}

inline void write_image(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_image: channels must be 1 or 3");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> buf(img.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<std::uint8_t>(std::lround(clamp01(img.pixels[i]) * 255.0));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for " + path);
}

// Window copy with out-of-bounds fill; output is always h×w.
inline Image crop(const Image& img, int top, int left, int h, int w, double fill = 0.0) {
    if (h < 1 || w < 1) throw std::invalid_argument("crop: h and w must be >= 1");
    Image out(h, w, img.channels, fill);
    for (int r = 0; r < h; ++r) {
        const int sr = top + r;
        if (sr < 0 || sr >= img.height) continue;
        for (int c = 0; c < w; ++c) {
            const int sc = left + c;
            if (sc < 0 || sc >= img.width) continue;
            for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
        }
    }
    return out;
}

// Bilinear sample of a gray image; zero outside bounds.
inline double sample_bilinear(const Image& img, double r, double c, int ch = 0) {
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0;
    const double fc = c - c0;
    auto px = [&](int rr, int cc) -> double {
        return img.in_bounds(rr, cc) ? img.at(rr, cc, ch) : 0.0;
    };
    return (1 - fr) * ((1 - fc) * px(r0, c0) + fc * px(r0, c0 + 1)) +
           fr * ((1 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1));
}

}  // namespace nailgrasp
