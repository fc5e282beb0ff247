// Acceptance suite for the grasp-force pipeline. Each numbered check prints a
// single [PASS]/[FAIL] line; the process exits nonzero if any check fails.
// Checks that carry a wall-clock budget enforce it themselves.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nailgrasp/analysis.hpp"
#include "nailgrasp/eigennail.hpp"
#include "nailgrasp/forces_io.hpp"
#include "nailgrasp/registration.hpp"
#include "nailgrasp/segmentation.hpp"
#include "nailgrasp/servo.hpp"
#include "nailgrasp/synth.hpp"

namespace fs = std::filesystem;
using namespace nailgrasp;

namespace {

int failures = 0;
std::string note;  // optional detail appended to the PASS line

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double s() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void require(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error(what);
}

template <class F>
void criterion(int num, const char* label, F&& body) {
    note.clear();
    const Timer tm;
    try {
        body();
        std::printf("[PASS] criterion %2d  %s%s%s  (%.1f s)\n", num, label,
                    note.empty() ? "" : "  -- ", note.c_str(), tm.s());
    } catch (const std::exception& e) {
        ++failures;
        std::printf("[FAIL] criterion %2d  %s: %s  (%.1f s)\n", num, label, e.what(), tm.s());
    }
    std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared zero-noise fixture: the 63-point calibration grid rendered through
// the forward model, plus the registration and force models trained on it.

struct Fixture {
    NailForwardModel fm = default_nail_model();
    std::vector<ForceVector> forces = make_grid(default_grid());
    std::vector<Image> renders;
    LandmarkShape tpl = default_template();
    Triangulation tri;
    std::vector<Image> warped;
    EigenNailModel en_raw;   // trained on the raw renders
    EigenNailModel en_crop;  // trained on template-frame crops
    AppearanceModel am;

    Fixture() {
        for (std::size_t i = 0; i < forces.size(); ++i)
            renders.push_back(render_nail(fm, forces[i], i));
        tri = build_triangulation(tpl, fm.mean_image.height, fm.mean_image.width);
        for (const Image& img : renders) warped.push_back(piecewise_warp(img, tpl, tri));
        en_raw = train_eigennail(renders, forces);
        en_crop = train_eigennail(warped, forces);

        const std::vector<LandmarkShape> shapes(renders.size(), tpl);
        const ShapeModel sm = fit_shape_model(shapes);
        const TextureModel tm = fit_texture_model(warped, tri);
        const GpaResult gpa = procrustes_align(shapes);
        std::vector<Eigen::VectorXd> sp, tp;
        for (std::size_t i = 0; i < warped.size(); ++i) {
            sp.push_back(shape_params(sm, gpa.aligned[i]));
            tp.push_back(texture_params(tm, texture_vector(warped[i], tri)));
        }
        am = combine_appearance(sm, tm, sp, tp, default_appearance_weight(sm, tm));
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

double mean_landmark_error(const LandmarkShape& a, const LandmarkShape& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.points.size(); ++i) acc += (a.points[i] - b.points[i]).norm();
    return acc / double(a.points.size());
}

// Registration + projection force estimate for one synthetic finger view;
// mirrors the estimation pipeline end to end.
ForceVector estimate_one(const Fixture& fx, const Image& view) {
    Image mask(view.height, view.width, 1, 0.0);
    for (std::size_t p = 0; p < view.pixels.size(); ++p)
        mask.pixels[p] = view.pixels[p] > 0.1 ? 1.0 : 0.0;
    const std::vector<Blob> blobs = connected_components(mask, 500);
    require(blobs.size() == 1, "expected one finger blob, found " + std::to_string(blobs.size()));
    const Eigen::Vector2d tplc = nailgrasp::detail::centroid(fx.tpl);
    LandmarkShape init = fx.tpl;
    for (auto& p : init.points)
        p += Eigen::Vector2d{blobs[0].centroid_col - tplc.x(), blobs[0].centroid_row - tplc.y()};
    const AamResult res = aam_search(fx.am, fx.tri, view, init);
    require(res.converged, "registration did not converge");
    return predict(fx.en_crop, piecewise_warp(view, res.landmarks, fx.tri)).f;
}

// Independent Mann-Whitney oracle: pairwise-count statistics and a
// prev_permutation enumeration of group assignments.
struct MwOracle {
    double u1, u2, u, p;
};

MwOracle brute_mw(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto ustat = [](const std::vector<double>& a, const std::vector<double>& b) {
        double u = 0.0;
        for (double x : a)
            for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
        return u;
    };
    MwOracle o;
    o.u1 = ustat(xs, ys);
    o.u2 = ustat(ys, xs);
    o.u = std::min(o.u1, o.u2);
    std::vector<double> pool = xs;
    pool.insert(pool.end(), ys.begin(), ys.end());
    std::vector<int> mask(pool.size(), 0);
    std::fill(mask.begin(), mask.begin() + xs.size(), 1);
    std::sort(mask.begin(), mask.end(), std::greater<int>());
    long long hits = 0, total = 0;
    do {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < pool.size(); ++i) (mask[i] ? a : b).push_back(pool[i]);
        const double u = std::min(ustat(a, b), ustat(b, a));
        if (u <= o.u + 1e-12) ++hits;
        ++total;
    } while (std::prev_permutation(mask.begin(), mask.end()));
    o.p = double(hits) / double(total);
    return o;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ACCEPTANCE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    require(rc != -1 && WIFEXITED(rc), "could not run: " + cmd);
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(bool(in), "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------

void c1_grid_inversion() {
    const Timer tm;
    const Fixture& fx = fixture();
    double acc = 0.0;
    for (std::size_t i = 0; i < fx.forces.size(); ++i) {
        const ForceVector f = predict(fx.en_raw, fx.renders[i]).f;
        acc += (f.fx - fx.forces[i].fx) * (f.fx - fx.forces[i].fx) +
               (f.fy - fx.forces[i].fy) * (f.fy - fx.forces[i].fy) +
               (f.fz - fx.forces[i].fz) * (f.fz - fx.forces[i].fz);
    }
    const double rms = std::sqrt(acc / (3.0 * fx.forces.size()));
    require(fx.forces.size() == 63, "expected the 63-point grid");
    require(rms <= 1e-6, fmt("round-trip rms %.3g N exceeds 1e-6", rms));
    require(tm.s() <= 30.0, fmt("took %.1f s, budget 30 s", tm.s()));
    note = fmt("rms %.2e N over 63 grid points", rms);
}

void c2_noise_scaling() {
    const Timer tm;
    const std::vector<ForceVector> forces = make_grid(dense_grid());
    require(forces.size() >= 1000, "dense grid too small");

    auto heldout_rms = [&](double sigma) {
        const NailForwardModel fm = default_nail_model(64, 32, sigma);
        std::vector<Image> train_imgs, test_imgs;
        std::vector<ForceVector> train_f, test_f;
        for (std::size_t i = 0; i < forces.size(); ++i) {
            Image img = render_nail(fm, forces[i], i);
            if (i % 5 == 4) {
                test_imgs.push_back(std::move(img));
                test_f.push_back(forces[i]);
            } else {
                train_imgs.push_back(std::move(img));
                train_f.push_back(forces[i]);
            }
        }
        const EigenNailModel en = train_eigennail(train_imgs, train_f);
        double sx = 0, sy = 0, sz = 0;
        for (std::size_t i = 0; i < test_imgs.size(); ++i) {
            const ForceVector f = predict(en, test_imgs[i]).f;
            sx += (f.fx - test_f[i].fx) * (f.fx - test_f[i].fx);
            sy += (f.fy - test_f[i].fy) * (f.fy - test_f[i].fy);
            sz += (f.fz - test_f[i].fz) * (f.fz - test_f[i].fz);
        }
        const double n = double(test_imgs.size());
        return std::array<double, 4>{std::sqrt(sx / n), std::sqrt(sy / n), std::sqrt(sz / n),
                                     std::sqrt((sx + sy + sz) / (3.0 * n))};
    };

    const std::array<double, 4> lo = heldout_rms(0.01);
    const double range[3] = {6.0, 12.0, 18.0};
    const char* axis[3] = {"fx", "fy", "fz"};
    for (int a = 0; a < 3; ++a)
        require(lo[a] <= 0.07 * range[a],
                fmt("%s rms %.4f N exceeds 7%% of its %.0f N range", axis[a], lo[a], range[a]));
    const std::array<double, 4> hi = heldout_rms(0.02);
    const double ratio = hi[3] / lo[3];
    require(ratio >= 1.5 && ratio <= 2.5, fmt("rms ratio %.3f outside [1.5, 2.5]", ratio));
    require(tm.s() <= 300.0, fmt("took %.1f s, budget 300 s", tm.s()));
    note = fmt("rms(0.01) %.3f/%.3f/%.3f N, ratio %.2f", lo[0], lo[1], lo[2], ratio);
}

void c3_hold_equilibrium() {
    const Fixture& fx = fixture();
    const GraspSession sess = simulate_session(Scenario::Constrained, 3);

    const auto lb = sess.label_boundaries();
    const EquilibriumGap raw =
        equilibrium_gap(sess.series, static_cast<int>(lb[2]), static_cast<int>(lb[3]));
    require(raw.normal_pct <= 1e-9 && raw.shear_pct <= 1e-9,
            fmt("oracle gap %.3g%% / %.3g%% exceeds 1e-9%%", raw.normal_pct, raw.shear_pct));

    std::array<std::vector<ForceVector>, 4> est;
    for (long i = 0; i < sess.samples(); ++i)
        for (int f = 0; f < kNumFingers; ++f) {
            const FrameRef ref{f, i / sess.frame_stride, i, i * sess.dt};
            est[f].push_back(estimate_one(fx, render_finger_view(fx.fm, sess, ref)));
        }
    const PhaseBoundaries pb = detect_phases(est, sess.dt);
    const EquilibriumGap g = equilibrium_gap(est, pb.hold_begin, pb.hold_end);
    require(g.normal_pct <= 5.7, fmt("estimated normal gap %.3f%% exceeds 5.7%%", g.normal_pct));
    require(g.shear_pct <= 5.7, fmt("estimated shear gap %.3f%% exceeds 5.7%%", g.shear_pct));
    note = fmt("estimated gap %.4f%% normal, %.4f%% shear", g.normal_pct, g.shear_pct);
}

void c4_registration_recovery() {
    const Fixture& fx = fixture();
    const int H = 112, W = 72;
    const Eigen::Vector2d tplc = nailgrasp::detail::centroid(fx.tpl);
    LandmarkShape truth = fx.tpl;
    for (auto& p : truth.points) p += Eigen::Vector2d{W / 2.0 - tplc.x(), H / 2.0 - tplc.y()};
    const Image target = render_warped(fx.warped[31], fx.tri, truth, H, W);
    const Eigen::Vector2d c{W / 2.0, H / 2.0};

    std::mt19937_64 rng(2024);
    auto uni = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    int good = 0;
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const double th = uni(-10.0 * M_PI / 180.0, 10.0 * M_PI / 180.0);
        const double s = uni(0.9, 1.1);
        const Eigen::Vector2d d{uni(-10.0, 10.0), uni(-10.0, 10.0)};
        Eigen::Matrix2d R;
        R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        LandmarkShape init = truth;
        for (auto& p : init.points) p = c + s * (R * (p - c)) + d;
        const AamResult res = aam_search(fx.am, fx.tri, target, init);
        const double err = mean_landmark_error(res.landmarks, truth);
        worst = std::max(worst, err);
        if (err <= 1.0) ++good;
    }
    require(good >= 48, fmt("only %d/50 perturbations recovered (worst %.2f px)", good, worst));
    note = fmt("%d/50 recovered, worst mean error %.3f px", good, worst);
}

void c5_warp_exactness() {
    const Fixture& fx = fixture();
    const Image src = render_nail(default_nail_model(96, 128), {1.0, -2.0, 7.0});
    const struct {
        double a11, a12, a21, a22, bx, by;
    } affines[3] = {
        {1.2, 0.15, -0.1, 1.3, 30.0, 12.0},
        {1.05 * std::cos(0.2), -1.05 * std::sin(0.2), 1.05 * std::sin(0.2), 1.05 * std::cos(0.2),
         35.0, 20.0},
        {0.95, 0.0, 0.05, 1.1, 40.0, 16.0},
    };
    double worst = 0.0;
    for (const auto& A : affines) {
        auto map = [&](const Eigen::Vector2d& p) {
            return Eigen::Vector2d{A.a11 * p.x() + A.a12 * p.y() + A.bx,
                                   A.a21 * p.x() + A.a22 * p.y() + A.by};
        };
        LandmarkShape moved = fx.tpl;
        for (auto& p : moved.points) p = map(p);
        const Image warped = piecewise_warp(src, moved, fx.tri);
        double acc = 0.0;
        for (std::size_t i = 0; i < fx.tri.hull_pixels(); ++i) {
            const Eigen::Vector2d q{double(fx.tri.pix_c[i]), double(fx.tri.pix_r[i])};
            const Eigen::Vector2d s = map(q);
            acc += std::abs(warped.at(fx.tri.pix_r[i], fx.tri.pix_c[i]) -
                            sample_bilinear(src, s.y(), s.x()));
        }
        worst = std::max(worst, acc / double(fx.tri.hull_pixels()));
    }
    require(worst <= 0.01, fmt("mean abs intensity difference %.4f exceeds 0.01", worst));
    note = fmt("worst mean abs difference %.2e", worst);
}

void c6_segmentation() {
    const NailForwardModel fm = default_nail_model();
    const GraspSession sess = simulate_session(Scenario::Constrained, 11);
    require(sess.samples() / sess.frame_stride >= 200, "session too short for 200 frames");
    double worst_off = 0.0;
    for (long k = 0; k < 200; ++k) {
        const Image frame = render_camera_frame(fm, sess, k, false);
        const std::vector<Blob> blobs = connected_components(threshold_skin(frame), 2000);
        require(blobs.size() == 3,
                fmt("frame %ld: %zu blobs instead of 3", k, blobs.size()));
        const auto labeled = label_fingers(blobs, CameraSide::FingerSide);
        require(labeled[0].first == "index" && labeled[1].first == "middle" &&
                    labeled[2].first == "ring",
                fmt("frame %ld: wrong finger labels", k));
        require(labeled[0].second.centroid_row < labeled[1].second.centroid_row &&
                    labeled[1].second.centroid_row < labeled[2].second.centroid_row,
                fmt("frame %ld: blobs not in row order", k));
        for (const auto& [name, blob] : labeled) {
            const Image cropped = crop_nail(frame, blob);
            require(cropped.height == kCropRows && cropped.width == kCropCols,
                    fmt("frame %ld: crop is %dx%d", k, cropped.height, cropped.width));
            const double rr =
                blob.centroid_row - (std::lround(blob.centroid_row) - kCropRows / 2);
            const double cc =
                blob.centroid_col - (std::lround(blob.centroid_col) - kCropCols / 2);
            const double off = std::max(std::abs(rr - (kCropRows - 1) / 2.0),
                                        std::abs(cc - (kCropCols - 1) / 2.0));
            worst_off = std::max(worst_off, off);
            require(off <= 2.0, fmt("frame %ld (%s): centroid off crop center by %.2f px", k,
                                    name.c_str(), off));
        }
    }
    note = fmt("200 frames, 3 blobs each, worst centroid offset %.2f px", worst_off);
}

void c7_servo_convergence() {
    const Timer tm;
    const ServoScenario sc = make_servo_scenario("static");

    ServoConfig slow;  // default 20 Hz capture, rendered measurement
    slow.duration = 3.0;
    const TrackingResult a = run_tracking(sc, slow);
    require(!a.feature_lost, "feature lost in the rendered run");
    require(std::abs(a.trace.front().error_px - 100.0) <= 0.5,
            fmt("initial error %.3f px, expected 100", a.trace.front().error_px));
    require(a.final_error_px < 1.0,
            fmt("error %.3f px after 3 s, expected < 1", a.final_error_px));

    ServoConfig fast;  // capture every control tick
    fast.capture_dt = fast.control_dt;
    fast.duration = 2.05;
    fast.measurement = "geometric";
    const TrackingResult b = run_tracking(sc, fast);
    require(std::abs(b.trace.front().error_px - 100.0) <= 1e-9, "geometric initial error != 100");
    for (const TraceRow& row : b.trace) {
        if (row.time < 0.5 || row.time > 2.0) continue;
        const double bound = 100.0 * std::exp(-1.8 * row.time);
        require(row.error_px <= bound * (1.0 + 1e-9),
                fmt("t=%.3f s: error %.4f px above the exp(-1.8 t) envelope %.4f", row.time,
                    row.error_px, bound));
    }

    ServoConfig two;
    two.cameras = 2;
    two.duration = 0.5;
    two.measurement = "geometric";
    const TrackingResult c = run_tracking(sc, two);
    require(c.captures.size() % 2 == 0 && !c.captures.empty(), "odd capture count");
    for (std::size_t i = 0; i < c.captures.size(); i += 2) {
        require(c.captures[i].camera == 0 && c.captures[i + 1].camera == 1,
                "capture records out of camera order");
        require(c.captures[i].time == c.captures[i + 1].time,
                fmt("capture pair %zu not simultaneous", i / 2));
    }
    require(tm.s() <= 10.0, fmt("took %.1f s, budget 10 s", tm.s()));
    note = fmt("3 s rendered run ends at %.3f px", a.final_error_px);
}

void c8_control_oracles() {
    std::mt19937_64 rng(77);
    auto uni = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    const double nx[4] = {-0.12, 0.12, -0.12, 0.12};
    const double ny[4] = {-0.08, -0.08, 0.08, 0.08};
    double worst_l = 0.0, worst_v = 0.0;
    for (int t = 0; t < 100; ++t) {
        FeatureSet fs;
        for (int i = 0; i < 4; ++i) {
            fs.xy[i] = {nx[i] + uni(-0.05, 0.05), ny[i] + uni(-0.05, 0.05)};
            fs.depth[i] = uni(0.3, 1.5);
        }
        const Eigen::MatrixXd L = interaction_matrix(fs);
        for (int i = 0; i < 4; ++i) {
            const double x = fs.xy[i].x(), y = fs.xy[i].y(), Z = fs.depth[i];
            const double r0[6] = {-1.0 / Z, 0.0, x / Z, x * y, -(1.0 + x * x), y};
            const double r1[6] = {0.0, -1.0 / Z, y / Z, 1.0 + y * y, -x * y, -x};
            for (int j = 0; j < 6; ++j) {
                worst_l = std::max(worst_l, std::abs(L(2 * i, j) - r0[j]));
                worst_l = std::max(worst_l, std::abs(L(2 * i + 1, j) - r1[j]));
            }
        }
        Eigen::VectorXd e(8);
        for (int i = 0; i < 8; ++i) e(i) = uni(-0.2, 0.2);
        const double lambda = uni(0.5, 4.0);
        const Eigen::VectorXd v = control_law(L, e, lambda);
        const Eigen::VectorXd v0 =
            -lambda * ((L.transpose() * L).inverse() * (L.transpose() * e));
        worst_v = std::max(worst_v, (v - v0).cwiseAbs().maxCoeff());
    }
    require(worst_l <= 1e-8, fmt("interaction matrix off by %.3g", worst_l));
    require(worst_v <= 1e-8, fmt("control law off by %.3g", worst_v));
    note = fmt("100 instances, max |dL| %.1e, max |dv| %.1e", worst_l, worst_v);
}

void c9_mann_whitney() {
    // every split of ranks 1..8 into two groups of four
    std::vector<int> mask(8, 0);
    std::fill(mask.begin(), mask.begin() + 4, 1);
    std::sort(mask.begin(), mask.end(), std::greater<int>());
    int splits = 0;
    do {
        std::vector<double> xs, ys;
        for (int i = 0; i < 8; ++i) (mask[i] ? xs : ys).push_back(double(i + 1));
        const MwResult r = mann_whitney_u(xs, ys, MwMode::Exact);
        const MwOracle o = brute_mw(xs, ys);
        require(r.u == o.u && r.u1 == o.u1 && r.u2 == o.u2,
                fmt("split %d: u mismatch (%.1f vs %.1f)", splits, r.u, o.u));
        require(r.p == o.p, fmt("split %d: p %.17g != oracle %.17g", splits, r.p, o.p));
        ++splits;
    } while (std::prev_permutation(mask.begin(), mask.end()));
    require(splits == 70, fmt("enumerated %d splits, expected 70", splits));

    // invariance under strictly monotone transforms
    std::mt19937_64 rng(99);
    auto uni = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    for (int t = 0; t < 100; ++t) {
        const std::size_t n1 = 3 + t % 4, n2 = 3 + (t / 4) % 4;
        std::vector<double> xs(n1), ys(n2);
        for (double& v : xs) v = std::round(uni(0.0, 5.0) * 4.0) / 4.0;  // induce ties
        for (double& v : ys) v = std::round(uni(0.0, 5.0) * 4.0) / 4.0;
        auto mono = [&](double v) { return t % 2 ? std::exp(v) : v * v * v + 2.0 * v; };
        std::vector<double> txs(n1), tys(n2);
        std::transform(xs.begin(), xs.end(), txs.begin(), mono);
        std::transform(ys.begin(), ys.end(), tys.begin(), mono);
        const MwResult r = mann_whitney_u(xs, ys, MwMode::Exact);
        const MwResult rt = mann_whitney_u(txs, tys, MwMode::Exact);
        require(r.u == rt.u && r.u1 == rt.u1 && r.u2 == rt.u2 && r.p == rt.p,
                fmt("dataset %d: statistics changed under a monotone transform", t));
    }
    note = "70/70 splits bit-exact, 100 transform-invariant datasets";
}

void c10_condition_findings() {
    const Timer tm;
    std::vector<GraspTrial> trials;
    auto add = [&](Scenario sc, std::uint64_t seed) {
        const GraspSession s = simulate_session(sc, seed);
        GraspTrial t;
        t.id = std::string(scenario_name(sc)) + "_" + std::to_string(seed);
        t.scenario = sc;
        t.dt = s.dt;
        t.series = s.series;
        t.labels = s.labels;
        trials.push_back(std::move(t));
    };
    for (std::uint64_t s = 1; s <= 6; ++s) add(Scenario::Constrained, s);
    for (std::uint64_t s = 101; s <= 106; ++s) add(Scenario::Unconstrained, s);
    const Report rep = trial_report(trials);

    std::map<std::string, SignificanceEntry> tests;
    for (const auto& e : rep.tests) tests[e.metric] = e;
    for (const char* m : {"normal_index", "normal_middle", "normal_ring", "shear_index",
                          "shear_middle", "shear_ring"})
        require(tests.at(m).significant,
                fmt("%s not significant (p=%.4f)", m, tests.at(m).p));
    for (const char* m : {"normal_thumb", "shear_thumb"})
        require(!tests.at(m).significant,
                fmt("%s unexpectedly significant (p=%.4f)", m, tests.at(m).p));
    require(rep.unconstrained.mean_balance < rep.constrained.mean_balance,
            fmt("balance %.4f (unconstrained) not below %.4f (constrained)",
                rep.unconstrained.mean_balance, rep.constrained.mean_balance));
    for (int f = 0; f < 4; ++f)
        require(rep.unconstrained.mean_steadiness[f] < rep.constrained.mean_steadiness[f],
                fmt("steadiness of %s not smaller unconstrained (%.4f vs %.4f)", kFingerNames[f],
                    rep.unconstrained.mean_steadiness[f], rep.constrained.mean_steadiness[f]));
    require(tm.s() <= 120.0, fmt("took %.1f s, budget 120 s", tm.s()));
    note = fmt("thumb p = %.3f normal / %.3f shear; balance %.3f vs %.3f",
               tests.at("normal_thumb").p, tests.at("shear_thumb").p,
               rep.constrained.mean_balance, rep.unconstrained.mean_balance);
}

void c11_phase_detection() {
    double worst = 0.0, worst_hold = 10.0;
    for (int k = 0; k < 20; ++k) {
        const Scenario sc = k < 10 ? Scenario::Constrained : Scenario::Unconstrained;
        const GraspSession s = simulate_session(sc, 1 + k % 10);
        const PhaseBoundaries pb = detect_phases(s.series, s.dt);
        const auto lb = s.label_boundaries();
        const long det[4] = {pb.grasp, pb.lift, pb.hold_begin, pb.replace};
        for (int b = 0; b < 4; ++b) {
            const double off = std::abs(det[b] - lb[b]) * s.dt;
            worst = std::max(worst, off);
            require(off <= 0.1, fmt("session %d boundary %d off by %.3f s", k, b, off));
        }
        const double hold = (pb.hold_end - pb.hold_begin) * s.dt;
        if (std::abs(hold - 10.0) > std::abs(worst_hold - 10.0)) worst_hold = hold;
        require(std::abs(hold - 10.0) <= 0.2,
                fmt("session %d hold duration %.2f s outside 10 +/- 0.2", k, hold));
    }
    note = fmt("20 sessions, worst boundary offset %.3f s, hold %.2f s", worst, worst_hold);
}

void c12_determinism() {
    const fs::path root = fs::temp_directory_path() / "ng_accept_det";
    fs::remove_all(root);
    for (const char* run : {"a", "b"}) {
        const std::string d = (root / run).string();
        fs::create_directories(d);
        require(run_cli("calibrate --out " + d + "/calib") == 0, "calibrate failed");
        require(run_cli("train --calib " + d + "/calib --out " + d + "/model") == 0,
                "train failed");
        require(run_cli("simulate-session --out " + d + "/sess --seed 7") == 0,
                "simulate-session failed");
        require(run_cli("estimate --model " + d + "/model --frames " + d + "/sess --out " + d +
                        "/est") == 0,
                "estimate failed");
    }
    auto listing = [&](const fs::path& base) {
        std::vector<fs::path> rel;
        for (const auto& entry : fs::recursive_directory_iterator(base))
            if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), base));
        std::sort(rel.begin(), rel.end());
        return rel;
    };
    const auto la = listing(root / "a"), lb = listing(root / "b");
    require(la == lb, "the two runs produced different file sets");
    long compared = 0;
    for (const fs::path& p : la) {
        if (p.filename() == "manifest.json") continue;
        require(slurp(root / "a" / p) == slurp(root / "b" / p), "output differs: " + p.string());
        ++compared;
    }
    require(compared > 0, "nothing compared");
    fs::remove_all(root);
    note = fmt("%ld files byte-identical across reruns", compared);
}

}  // namespace

int main() {
    criterion(1, "zero-noise grid inversion", c1_grid_inversion);
    criterion(2, "noise-scaled held-out accuracy", c2_noise_scaling);
    criterion(3, "hold-phase force equilibrium", c3_hold_equilibrium);
    criterion(4, "registration recovery under perturbation", c4_registration_recovery);
    criterion(5, "piecewise warp matches affine resampling", c5_warp_exactness);
    criterion(6, "finger segmentation and crops", c6_segmentation);
    criterion(7, "servo convergence", c7_servo_convergence);
    criterion(8, "interaction matrix and control law", c8_control_oracles);
    criterion(9, "rank-test exactness and invariance", c9_mann_whitney);
    criterion(10, "grasp condition findings", c10_condition_findings);
    criterion(11, "phase detection", c11_phase_detection);
    criterion(12, "deterministic pipeline outputs", c12_determinism);
    if (failures) std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
