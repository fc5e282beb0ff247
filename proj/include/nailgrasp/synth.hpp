#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "image.hpp"

namespace nailgrasp {

struct ForceVector {
    double fx = 0.0;  // shear-x (N)
    double fy = 0.0;  // shear-y (N)
    double fz = 0.0;  // normal (N)
};

enum class Phase { PreContact, Grasp, Lift, Hold, Replace };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::PreContact: return "pre_contact";
        case Phase::Grasp: return "grasp";
        case Phase::Lift: return "lift";
        case Phase::Hold: return "hold";
        default: return "replace";
    }
}

inline Phase phase_from_name(const std::string& s) {
    if (s == "pre_contact") return Phase::PreContact;
    if (s == "grasp") return Phase::Grasp;
    if (s == "lift") return Phase::Lift;
    if (s == "hold") return Phase::Hold;
    if (s == "replace") return Phase::Replace;
    throw FormatError("unknown phase label '" + s + "'");
}

constexpr int kNumFingers = 4;
constexpr const char* kFingerNames[kNumFingers] = {"thumb", "index", "middle", "ring"};

inline int finger_index(const std::string& name) {
    for (int i = 0; i < kNumFingers; ++i)
        if (name == kFingerNames[i]) return i;
    throw FormatError("unknown finger '" + name + "'");
}

// ---------------------------------------------------------------------------
// Calibration grid

struct CalibrationGrid {
    std::vector<double> fz_levels;  // within [0, 18]
    std::vector<double> fx_levels;  // within [-3, 3]
    std::vector<double> fy_levels;  // within [-6, 6]
};

namespace detail {
inline void check_levels(const std::vector<double>& lv, double lo, double hi, const char* name) {
    if (lv.empty()) throw std::invalid_argument(std::string(name) + " levels empty");
    for (std::size_t i = 0; i < lv.size(); ++i) {
        if (!(lv[i] >= lo && lv[i] <= hi))
            throw std::invalid_argument(std::string(name) + " level out of range");
        if (i > 0 && !(lv[i] > lv[i - 1]))
            throw std::invalid_argument(std::string(name) + " levels not strictly increasing");
    }
}
inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    return v;
}
}  // namespace detail

inline CalibrationGrid default_grid() {
    return {detail::linspace(0, 18, 7), detail::linspace(-3, 3, 3), detail::linspace(-6, 6, 3)};
}

// Dense sweep: 21*13*25 = 6825 samples.
inline CalibrationGrid dense_grid() {
    return {detail::linspace(0, 18, 21), detail::linspace(-3, 3, 13), detail::linspace(-6, 6, 25)};
}

// Full Cartesian product; fz is the outer (slowest) index, then fx, then fy.
inline std::vector<ForceVector> make_grid(const CalibrationGrid& grid) {
    detail::check_levels(grid.fz_levels, 0.0, 18.0, "fz");
    detail::check_levels(grid.fx_levels, -3.0, 3.0, "fx");
    detail::check_levels(grid.fy_levels, -6.0, 6.0, "fy");
    std::vector<ForceVector> out;
    out.reserve(grid.fz_levels.size() * grid.fx_levels.size() * grid.fy_levels.size());
    for (double fz : grid.fz_levels)
        for (double fx : grid.fx_levels)
            for (double fy : grid.fy_levels) out.push_back({fx, fy, fz});
    return out;
}

// ---------------------------------------------------------------------------
// Forward model: force -> nail image

struct NailForwardModel {
    Image mean_image;                  // gray
    std::array<Image, 3> basis;        // B_x, B_y, B_z; orthogonal, unit Frobenius norm
    Eigen::Vector3d gain;              // intensity per newton, per axis
    double noise_sigma = 0.0;          // intensity std dev
    std::uint64_t seed = 0;
};

namespace detail {
inline Image gauss_lobe(int h, int w, double cr, double cc, double sr, double sc) {
    Image img(h, w, 1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double dr = (r - cr) / sr;
            const double dc = (c - cc) / sc;
            img.at(r, c) = std::exp(-0.5 * (dr * dr + dc * dc));
        }
    return img;
}
inline double dot(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += a.pixels[i] * b.pixels[i];
    return s;
}
inline void axpy(Image& y, double a, const Image& x) {
    for (std::size_t i = 0; i < y.pixels.size(); ++i) y.pixels[i] += a * x.pixels[i];
}
inline void normalize(Image& a) {
    const double n = std::sqrt(dot(a, a));
    if (n > 0)
        for (double& p : a.pixels) p /= n;
}
inline double max_abs(const Image& a) {
    double m = 0.0;
    for (double p : a.pixels) m = std::max(m, std::abs(p));
    return m;
}
}  // namespace detail

// Smooth Gaussian-lobe response patterns: a distal band for normal force, a
// left/right dipole for shear-x, a proximal/distal dipole for shear-y.
// Orthogonalized (z, x, y order) and scaled so each axis contributes at most
// `budget` intensity at its force-range extreme. The mean carries a dark
// edge shadow along the nail-plate ellipse; it is force-independent but gives
// registration a sharp landmark-locked feature.
inline NailForwardModel default_nail_model(int h = 64, int w = 32, double noise_sigma = 0.0,
                                           std::uint64_t seed = 1234,
                                           Eigen::Vector3d budget = {0.11, 0.11, 0.11}) {
    NailForwardModel m;
    m.noise_sigma = noise_sigma;
    m.seed = seed;
    m.mean_image = Image(h, w, 1);
    const Image blob = detail::gauss_lobe(h, w, 0.5 * h, 0.5 * w, 0.45 * h, 0.45 * w);
    const double ea = 13.0 * w / 32.0, eb = 27.0 * h / 64.0;  // nail-plate outline
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double u = (c - 0.5 * w) / ea, v = (r - 0.5 * h) / eb;
            const double rho = std::sqrt(u * u + v * v);
            double shadow = 0.0;
            if (rho > 0) {
                const double grad =
                    std::sqrt(u * u / (ea * ea) + v * v / (eb * eb)) / rho;
                const double d = (rho - 1.0) / std::max(grad, 1e-12);  // px to outline
                shadow = std::exp(-0.5 * (d / 1.8) * (d / 1.8));
            }
            m.mean_image.at(r, c) = 0.5 + 0.1 * blob.at(r, c) - 0.22 * shadow;
        }

    Image bz = detail::gauss_lobe(h, w, 0.30 * h, 0.50 * w, 0.18 * h, 0.30 * w);
    Image bx = detail::gauss_lobe(h, w, 0.55 * h, 0.28 * w, 0.22 * h, 0.16 * w);
    detail::axpy(bx, -1.0, detail::gauss_lobe(h, w, 0.55 * h, 0.72 * w, 0.22 * h, 0.16 * w));
    Image by = detail::gauss_lobe(h, w, 0.25 * h, 0.50 * w, 0.15 * h, 0.25 * w);
    detail::axpy(by, -1.0, detail::gauss_lobe(h, w, 0.75 * h, 0.50 * w, 0.15 * h, 0.25 * w));

    detail::normalize(bz);
    detail::axpy(bx, -detail::dot(bx, bz), bz);
    detail::normalize(bx);
    detail::axpy(by, -detail::dot(by, bz), bz);
    detail::axpy(by, -detail::dot(by, bx), bx);
    detail::normalize(by);

    m.basis = {bx, by, bz};
    const Eigen::Vector3d fmax{3.0, 6.0, 18.0};
    for (int a = 0; a < 3; ++a) m.gain(a) = budget(a) / (fmax(a) * detail::max_abs(m.basis[a]));
    return m;
}

// pixels = clamp01(mean + sum_a gain_a * f_a * B_a + noise); the noise stream
// is keyed by (model seed, sample_index) so any sample is reproducible alone.
inline Image render_nail(const NailForwardModel& m, const ForceVector& f,
                         std::uint64_t sample_index = 0) {
    if (!(std::isfinite(f.fx) && std::isfinite(f.fy) && std::isfinite(f.fz)))
        throw std::invalid_argument("render_nail: non-finite force");
    Image out = m.mean_image;
    const double w[3] = {m.gain(0) * f.fx, m.gain(1) * f.fy, m.gain(2) * f.fz};
    for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < out.pixels.size(); ++i)
            out.pixels[i] += w[a] * m.basis[a].pixels[i];
    if (m.noise_sigma > 0.0) {
        RandomStream rng(m.seed, sample_index);
        for (double& p : out.pixels) p += m.noise_sigma * rng.gaussian();
    }
    for (double& p : out.pixels) p = clamp01(p);
    return out;
}

// ---------------------------------------------------------------------------
// Grasp sessions

enum class Scenario { Constrained, Unconstrained };

inline Scenario scenario_from_name(const std::string& s) {
    if (s == "constrained") return Scenario::Constrained;
    if (s == "unconstrained") return Scenario::Unconstrained;
    throw FormatError("unknown scenario '" + s + "'");
}

inline const char* scenario_name(Scenario s) {
    return s == Scenario::Constrained ? "constrained" : "unconstrained";
}

struct GraspSession {
    double dt = 0.05;
    Scenario scenario = Scenario::Constrained;
    std::uint64_t seed = 0;
    double object_weight = 0.0;  // N
    // series[finger][sample]; finger order matches kFingerNames
    std::array<std::vector<ForceVector>, kNumFingers> series;
    std::vector<Phase> labels;
    long frame_stride = 1;  // samples per 20 Hz capture

    long samples() const { return static_cast<long>(labels.size()); }
    // first sample index of each labeled phase run (grasp, lift, hold, replace)
    std::array<long, 4> label_boundaries() const {
        std::array<long, 4> b{-1, -1, -1, -1};
        for (long i = 0; i < samples(); ++i) {
            const Phase p = labels[i];
            if (p == Phase::Grasp && b[0] < 0) b[0] = i;
            if (p == Phase::Lift && b[1] < 0) b[1] = i;
            if (p == Phase::Hold && b[2] < 0) b[2] = i;
            if (p == Phase::Replace && b[3] < 0) b[3] = i;
        }
        return b;
    }
};

namespace detail {

// Band-limited (AR(1), tau = 0.3 s) zero-mean jitter stream.
inline std::vector<double> ar1_jitter(long n, double dt, double sigma, RandomStream& rng) {
    std::vector<double> x(n);
    const double rho = std::exp(-dt / 0.3);
    const double innov = sigma * std::sqrt(1.0 - rho * rho);
    double v = sigma * rng.gaussian();
    for (long i = 0; i < n; ++i) {
        x[i] = v;
        v = rho * v + innov * rng.gaussian();
    }
    return x;
}

inline void center_over(std::vector<double>& x, long lo, long hi) {
    double s = 0.0;
    for (long i = lo; i < hi; ++i) s += x[i];
    const double mean = s / double(hi - lo);
    for (double& v : x) v -= mean;
}

}  // namespace detail

// Canonical protocol: reach, 3 s grasp at ~4 N total, lift supporting the
// object weight, 10 s hold, replace and release. The constrained scenario
// uses skewed finger shares with larger jitter; unconstrained near-equal
// shares with smaller jitter. The thumb series is the exact per-sample sum of
// the three finger series (equilibrium by construction).
inline GraspSession simulate_session(Scenario scenario, std::uint64_t seed, double dt = 0.05) {
    if (!(dt > 0.0 && dt <= 0.1)) throw std::invalid_argument("dt must be in (0, 0.1]");

    const bool con = scenario == Scenario::Constrained;
    const double base_share[3] = {con ? 0.45 : 1.0 / 3.0, con ? 0.35 : 1.0 / 3.0,
                                  con ? 0.20 : 1.0 / 3.0};
    const double sigma_trial = con ? 0.002 : 0.0015;  // per-trial share offset
    const double sigma_share = con ? 0.020 : 0.010;   // per-sample share jitter
    const double sigma_total = con ? 0.020 : 0.005;   // total-force jitter

    RandomStream rng_trial(seed, 1);
    const double t_pre = 6.0 + rng_trial.uniform(0.0, 2.0);
    const double total_dur = rng_trial.uniform(46.5, 52.5);
    const double W = 1.14 * 9.81 * (1.0 + 0.005 * rng_trial.gaussian());
    double delta[3];
    for (double& d : delta) d = sigma_trial * rng_trial.gaussian();

    const long n = std::lround(total_dur / dt);
    const long i_grasp = std::lround(t_pre / dt);
    const long i_lift = i_grasp + std::lround(3.0 / dt);
    const long i_hold = i_lift + std::lround(2.5 / dt);
    const long i_replace = i_hold + std::lround(10.0 / dt);

    std::vector<double> jit[3];
    for (int k = 0; k < 3; ++k) {
        RandomStream r(seed, 2 + static_cast<std::uint64_t>(k));
        jit[k] = detail::ar1_jitter(n, dt, sigma_share, r);
        detail::center_over(jit[k], i_hold, i_replace);
    }
    RandomStream r_tot(seed, 5);
    std::vector<double> jtot = detail::ar1_jitter(n, dt, sigma_total, r_tot);
    detail::center_over(jtot, i_hold, i_replace);

    const double grasp_total = 4.0;
    const double lift_peak = 1.18 * W;
    const double t_settle = 2.4;  // settle begins this far into the lift phase

    GraspSession out;
    out.dt = dt;
    out.scenario = scenario;
    out.seed = seed;
    out.object_weight = W;
    out.labels.resize(n);
    for (auto& s : out.series) s.resize(n);
    out.frame_stride = std::max<long>(1, std::lround(0.05 / dt));

    for (long i = 0; i < n; ++i) {
        const double t = i * dt;
        double base = 0.0;       // total normal force profile
        double shear_sc = 0.0;   // shear engagement scale
        Phase ph;
        if (i < i_grasp) {
            ph = Phase::PreContact;
        } else if (i < i_lift) {
            ph = Phase::Grasp;
            const double tg = t - i_grasp * dt;
            base = tg < 0.3 ? grasp_total * tg / 0.3 : grasp_total;
        } else if (i < i_hold) {
            ph = Phase::Lift;
            const double tl = t - i_lift * dt;
            if (tl < 0.6)
                base = grasp_total + (lift_peak - grasp_total) * tl / 0.6;
            else
                base = lift_peak;
            if (tl < 0.5) base += 0.1 * W * std::sin(2.0 * M_PI * tl / 0.5);  // inertial transient
            if (tl >= t_settle) {
                const double a = (tl - t_settle) / 0.1;
                base = (1.0 - a) * lift_peak + a * W;
            }
            shear_sc = std::min(tl / 0.6, 1.0);
        } else if (i < i_replace) {
            ph = Phase::Hold;
            base = W;
            shear_sc = 1.0;
        } else {
            ph = Phase::Replace;
            const double tr = t - i_replace * dt;
            const double a = std::max(0.0, 1.0 - tr / 0.05);
            base = W * a;
            shear_sc = a;
        }
        out.labels[i] = ph;

        const double fz_tot = std::max(0.0, base * (1.0 + jtot[i]));
        const double fx_tot = 0.9 * shear_sc * (1.0 + jtot[i]);
        const double fy_tot = 0.5 * W * shear_sc * (1.0 + jtot[i]);

        double raw[3], sum = 0.0;
        for (int k = 0; k < 3; ++k) {
            raw[k] = std::max(0.02, base_share[k] + delta[k] + jit[k][i]);
            sum += raw[k];
        }
        ForceVector thumb{0.0, 0.0, 0.0};
        for (int k = 0; k < 3; ++k) {
            const double s = raw[k] / sum;
            ForceVector f{s * fx_tot, s * fy_tot, s * fz_tot};
            out.series[1 + k][i] = f;
            thumb.fx += f.fx;
            thumb.fy += f.fy;
            thumb.fz += f.fz;
        }
        out.series[0][i] = thumb;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Frame rendering

struct FrameRef {
    int finger;         // index into kFingerNames
    long frame_index;   // capture counter (20 Hz)
    long sample_index;  // force sample the capture coincides with
    double time_s;
};

inline std::vector<FrameRef> session_frames(const GraspSession& s) {
    std::vector<FrameRef> out;
    for (int f = 0; f < kNumFingers; ++f) {
        long k = 0;
        for (long i = 0; i < s.samples(); i += s.frame_stride, ++k)
            out.push_back({f, k, i, i * s.dt});
    }
    return out;
}

constexpr int kViewHeight = 112;
constexpr int kViewWidth = 72;

// Single-finger camera view: dark background, skin silhouette ellipse, nail
// patch embedded at an integer offset that wobbles a few pixels per frame.
inline Image render_finger_view(const NailForwardModel& m, const GraspSession& s,
                                const FrameRef& ref) {
    const Image nail = render_nail(m, s.series[ref.finger][ref.sample_index],
                                   hash_combine(ref.finger + 1, ref.frame_index));
    RandomStream wob(s.seed, hash_combine(0xF1A7, hash_combine(ref.finger, ref.frame_index)));
    const int ncr = kViewHeight / 2 + static_cast<int>(wob.integer(-3, 3));
    const int ncc = kViewWidth / 2 + static_cast<int>(wob.integer(-3, 3));
    const int scr = ncr + static_cast<int>(wob.integer(-3, 3));
    const int scc = ncc + static_cast<int>(wob.integer(-3, 3));

    Image view(kViewHeight, kViewWidth, 1, 0.02);
    const double ar = 46.0, ac = 28.0;  // silhouette semi-axes
    for (int r = 0; r < kViewHeight; ++r)
        for (int c = 0; c < kViewWidth; ++c) {
            const double dr = (r - scr) / ar, dc = (c - scc) / ac;
            if (dr * dr + dc * dc <= 1.0) view.at(r, c) = 0.35;
        }
    const int top = ncr - nail.height / 2, left = ncc - nail.width / 2;
    for (int r = 0; r < nail.height; ++r)
        for (int c = 0; c < nail.width; ++c) view.at(top + r, left + c) = nail.at(r, c);
    return view;
}

// Multi-finger RGB camera frame (skin-toned ellipses stacked vertically) for
// the finger-side camera, or one patch for the thumb-side camera.
inline Image render_camera_frame(const NailForwardModel& m, const GraspSession& s,
                                 long frame_index, bool thumb_side, int height = 1024,
                                 int width = 680) {
    const long sample = std::min<long>(frame_index * s.frame_stride, s.samples() - 1);
    Image frame(height, width, 3);
    const RgbPixel bg{0.12, 0.12, 0.18};
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            frame.at(r, c, 0) = bg.r;
            frame.at(r, c, 1) = bg.g;
            frame.at(r, c, 2) = bg.b;
        }
    const std::vector<int> fingers = thumb_side ? std::vector<int>{0} : std::vector<int>{1, 2, 3};
    const double rows_frac[3] = {0.2, 0.5, 0.8};
    for (std::size_t j = 0; j < fingers.size(); ++j) {
        const int fi = fingers[j];
        RandomStream wob(s.seed, hash_combine(0xCA3E, hash_combine(fi, frame_index)));
        const int cr = static_cast<int>((thumb_side ? 0.5 : rows_frac[j]) * height) +
                       static_cast<int>(wob.integer(-8, 8));
        const int cc = width / 2 + static_cast<int>(wob.integer(-8, 8));
        const Image nail = render_nail(m, s.series[fi][sample], hash_combine(0xCA3E ^ fi, frame_index));
        const double ar = 70.0, ac = 240.0;       // finger patch semi-axes
        const double nr = 27.0, nc = 60.0;        // nail sub-ellipse semi-axes
        const int nail_cc = cc + 90;
        for (int r = std::max(0, cr - (int)ar); r <= std::min(height - 1, cr + (int)ar); ++r)
            for (int c = std::max(0, cc - (int)ac); c <= std::min(width - 1, cc + (int)ac); ++c) {
                const double dr = (r - cr) / ar, dc = (c - cc) / ac;
                if (dr * dr + dc * dc > 1.0) continue;
                double v = 0.78;
                const double ndr = (r - cr) / nr, ndc = (c - nail_cc) / nc;
                if (ndr * ndr + ndc * ndc <= 1.0) {
                    const double sr = (ndr * 0.5 + 0.5) * (nail.height - 1);
                    const double sc = (ndc * 0.5 + 0.5) * (nail.width - 1);
                    v = 0.78 * (0.75 + 0.35 * (sample_bilinear(nail, sr, sc) - 0.5));
                }
                const RgbPixel px = hsv_to_rgb({0.07, 0.5, v});
                frame.at(r, c, 0) = px.r;
                frame.at(r, c, 1) = px.g;
                frame.at(r, c, 2) = px.b;
            }
    }
    return frame;
}

}  // namespace nailgrasp
