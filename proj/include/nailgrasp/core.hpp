#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nailgrasp {

// Error taxonomy shared across modules. Precondition violations use
// std::invalid_argument directly; these classes cover conditions named
// by module contracts.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WarpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DetectionCountError : std::runtime_error {
    int expected;
    int found;
    DetectionCountError(int expected_, int found_)
        : std::runtime_error("detection count mismatch: expected " + std::to_string(expected_) +
                             ", found " + std::to_string(found_)),
          expected(expected_),
          found(found_) {}
};

struct FeatureLossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnderdeterminedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoGraspError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UndefinedGapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic stream of uniforms/gaussians. Keyed substreams let every
// sample of a pipeline be reproduced independently of evaluation order.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}
    RandomStream(std::uint64_t seed, std::uint64_t stream)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0xa5a5a5a5a5a5a5a5ULL))) {}

    double uniform() {
        // 53-bit mantissa in [0,1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; implemented here so streams are identical across standard
    // library implementations.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t raw() { return engine_(); }

    // integer in [lo, hi] inclusive
    long integer(long lo, long hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<long>(engine_() % span);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (splitmix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline std::string base64_encode(const std::uint8_t* data, std::size_t len) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back(tbl[v & 63]);
    }
    if (i + 1 == len) {
        const std::uint32_t v = data[i] << 16;
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == len) {
        const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw FormatError("invalid base64 character");
    };
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t buf = 0;
    int bits = 0;
    for (char c : text) {
        const int v = val(c);
        if (v < 0) break;
        buf = (buf << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((buf >> bits) & 0xff));
        }
    }
    return out;
}

// Pack doubles as little-endian float32 and base64 them; the compact image
// payload used by model files.
inline std::string base64_f32(const std::vector<double>& xs) {
    std::vector<std::uint8_t> bytes(xs.size() * 4);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const float f = static_cast<float>(xs[i]);
        std::uint32_t u;
        static_assert(sizeof(float) == 4);
        std::memcpy(&u, &f, 4);
        bytes[4 * i + 0] = static_cast<std::uint8_t>(u & 0xff);
        bytes[4 * i + 1] = static_cast<std::uint8_t>((u >> 8) & 0xff);
        bytes[4 * i + 2] = static_cast<std::uint8_t>((u >> 16) & 0xff);
        bytes[4 * i + 3] = static_cast<std::uint8_t>((u >> 24) & 0xff);
    }
    return base64_encode(bytes.data(), bytes.size());
}

inline std::vector<double> base64_f32_decode(const std::string& text) {
    const auto bytes = base64_decode(text);
    if (bytes.size() % 4 != 0) throw FormatError("float32 payload length not a multiple of 4");
    std::vector<double> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

}  // namespace nailgrasp
