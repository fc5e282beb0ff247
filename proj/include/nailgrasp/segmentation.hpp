#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "image.hpp"

namespace nailgrasp {

struct SkinBand {
    double h_lo = 0.02, h_hi = 0.12;
    double s_min = 0.15;
    double v_min = 0.2;
};

// Binary mask (1.0 / 0.0) of pixels whose HSV falls inside the skin band.
inline Image threshold_skin(const Image& img, const SkinBand& band = {}) {
    if (img.channels != 3) throw std::invalid_argument("threshold_skin: color image expected");
    if (!(0.0 <= band.h_lo && band.h_lo < band.h_hi && band.h_hi < 1.0))
        throw std::invalid_argument("threshold_skin: invalid hue band");
    if (band.s_min < 0 || band.s_min > 1 || band.v_min < 0 || band.v_min > 1)
        throw std::invalid_argument("threshold_skin: saturation/value bounds must be in [0,1]");
    Image mask(img.height, img.width, 1, 0.0);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const HsvPixel h = rgb_to_hsv({img.at(r, c, 0), img.at(r, c, 1), img.at(r, c, 2)});
            if (h.h >= band.h_lo && h.h <= band.h_hi && h.s >= band.s_min && h.v >= band.v_min)
                mask.at(r, c) = 1.0;
        }
    return mask;
}

struct Blob {
    long area = 0;
    int top = 0, left = 0, bottom = 0, right = 0;  // inclusive bounding box
    double centroid_row = 0.0, centroid_col = 0.0;
    std::vector<std::pair<int, int>> pixels;  // (row, col)
};

// 4-connected components of a binary mask; components smaller than min_area
// are dropped; result sorted by centroid row (top of the frame first).
inline std::vector<Blob> connected_components(const Image& mask, long min_area) {
    if (mask.channels != 1) throw std::invalid_argument("connected_components: gray mask expected");
    if (min_area < 1) throw std::invalid_argument("connected_components: min_area must be >= 1");
    std::vector<char> seen(static_cast<std::size_t>(mask.height) * mask.width, 0);
    auto idx = [&](int r, int c) { return static_cast<std::size_t>(r) * mask.width + c; };
    std::vector<Blob> blobs;
    std::vector<std::pair<int, int>> stack;
    for (int r0 = 0; r0 < mask.height; ++r0)
        for (int c0 = 0; c0 < mask.width; ++c0) {
            if (seen[idx(r0, c0)] || mask.at(r0, c0) <= 0.5) continue;
            Blob b;
            b.top = b.bottom = r0;
            b.left = b.right = c0;
            double sr = 0, sc = 0;
            stack.assign(1, {r0, c0});
            seen[idx(r0, c0)] = 1;
            while (!stack.empty()) {
                const auto [r, c] = stack.back();
                stack.pop_back();
                b.pixels.push_back({r, c});
                ++b.area;
                sr += r;
                sc += c;
                b.top = std::min(b.top, r);
                b.bottom = std::max(b.bottom, r);
                b.left = std::min(b.left, c);
                b.right = std::max(b.right, c);
                const int nr[4] = {r - 1, r + 1, r, r};
                const int nc[4] = {c, c, c - 1, c + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nr[k] < 0 || nr[k] >= mask.height || nc[k] < 0 || nc[k] >= mask.width)
                        continue;
                    if (seen[idx(nr[k], nc[k])] || mask.at(nr[k], nc[k]) <= 0.5) continue;
                    seen[idx(nr[k], nc[k])] = 1;
                    stack.push_back({nr[k], nc[k]});
                }
            }
            if (b.area >= min_area) {
                b.centroid_row = sr / b.area;
                b.centroid_col = sc / b.area;
                blobs.push_back(std::move(b));
            }
        }
    std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
        if (a.centroid_row != b.centroid_row) return a.centroid_row < b.centroid_row;
        return a.centroid_col < b.centroid_col;
    });
    return blobs;
}

enum class CameraSide { FingerSide, ThumbSide };

// Assign finger names to blobs. The finger-side camera sees index, middle and
// ring from top to bottom; the thumb-side camera sees only the thumb.
inline std::vector<std::pair<std::string, Blob>> label_fingers(const std::vector<Blob>& blobs,
                                                               CameraSide side) {
    if (side == CameraSide::FingerSide) {
        if (blobs.size() != 3) throw DetectionCountError(3, static_cast<int>(blobs.size()));
        return {{"index", blobs[0]}, {"middle", blobs[1]}, {"ring", blobs[2]}};
    }
    if (blobs.size() != 1) throw DetectionCountError(1, static_cast<int>(blobs.size()));
    return {{"thumb", blobs[0]}};
}

inline constexpr int kCropRows = 600;
inline constexpr int kCropCols = 300;

// Fixed-size region of interest centered on a blob centroid; out-of-frame
// parts are zero-filled.
inline Image crop_nail(const Image& img, const Blob& blob) {
    const int top = static_cast<int>(std::lround(blob.centroid_row)) - kCropRows / 2;
    const int left = static_cast<int>(std::lround(blob.centroid_col)) - kCropCols / 2;
    return crop(img, top, left, kCropRows, kCropCols, 0.0);
}

}  // namespace nailgrasp
