#include <catch2/catch_amalgamated.hpp>

#include <nailgrasp/core.hpp>

#include <cmath>
#include <set>
#include <vector>

using namespace nailgrasp;

TEST_CASE("random streams are reproducible and keyed") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.raw() == b.raw());

    RandomStream s1(42, 1), s1b(42, 1), s2(42, 2);
    bool diverged = false;
    for (int i = 0; i < 20; ++i) {
        const std::uint64_t x = s1.raw();
        REQUIRE(x == s1b.raw());
        if (x != s2.raw()) diverged = true;
    }
    REQUIRE(diverged);
}

TEST_CASE("uniform stays inside its interval") {
    RandomStream r(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double v = r.uniform(-2.0, 3.0);
        REQUIRE(v >= -2.0);
        REQUIRE(v < 3.0);
    }
}

TEST_CASE("gaussian moments are sane") {
    RandomStream r(99);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double g = r.gaussian();
        sum += g;
        sq += g * g;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("integer covers the inclusive range") {
    RandomStream r(5);
    std::set<long> seen;
    for (int i = 0; i < 200; ++i) {
        const long v = r.integer(-1, 2);
        REQUIRE(v >= -1);
        REQUIRE(v <= 2);
        seen.insert(v);
    }
    REQUIRE(seen.size() == 4);
}

TEST_CASE("base64 round-trips byte strings of every residue length") {
    for (std::size_t len = 0; len < 12; ++len) {
        std::vector<std::uint8_t> data(len);
        for (std::size_t i = 0; i < len; ++i) data[i] = static_cast<std::uint8_t>(37 * i + 11);
        const std::string enc = base64_encode(data.data(), data.size());
        REQUIRE(enc.size() % 4 == 0);
        REQUIRE(base64_decode(enc) == data);
    }
    // reference vector
    const std::uint8_t man[] = {'M', 'a', 'n'};
    REQUIRE(base64_encode(man, 3) == "TWFu");
    REQUIRE(base64_encode(man, 2) == "TWE=");
    REQUIRE(base64_encode(man, 1) == "TQ==");
}

TEST_CASE("base64 rejects garbage") {
    REQUIRE_THROWS_AS(base64_decode("ab!c"), FormatError);
}

TEST_CASE("float32 payloads round-trip within single precision") {
    const std::vector<double> xs = {0.0, 1.0, -1.5, 0.123456789, 3.0e8, -2.5e-7};
    const auto back = base64_f32_decode(base64_f32(xs));
    REQUIRE(back.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        REQUIRE(back[i] == Catch::Approx(xs[i]).epsilon(1e-6));
    REQUIRE_THROWS_AS(base64_f32_decode("TWFu"), FormatError);  // 3 bytes
}

TEST_CASE("hash_combine depends on order and both inputs") {
    REQUIRE(hash_combine(1, 2) != hash_combine(2, 1));
    REQUIRE(hash_combine(1, 2) != hash_combine(1, 3));
    REQUIRE(hash_combine(1, 2) == hash_combine(1, 2));
}

TEST_CASE("error taxonomy derives from runtime_error") {
    REQUIRE_THROWS_AS(throw FormatError("x"), std::runtime_error);
    REQUIRE_THROWS_AS(throw WarpError("x"), std::runtime_error);
    REQUIRE_THROWS_AS(throw FeatureLossError("x"), std::runtime_error);
    REQUIRE_THROWS_AS(throw NoGraspError("x"), std::runtime_error);
    REQUIRE_THROWS_AS(throw UndefinedGapError("x"), std::runtime_error);
    REQUIRE_THROWS_AS(throw UnderdeterminedError("x"), std::runtime_error);
    REQUIRE_THROWS_AS(throw DegenerateConfigError("x"), std::runtime_error);
    const DetectionCountError e(3, 5);
    REQUIRE(e.expected == 3);
    REQUIRE(e.found == 5);
    REQUIRE(std::string(e.what()).find("3") != std::string::npos);
}
