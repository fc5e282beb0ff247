#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "core.hpp"
#include "image.hpp"
#include "segmentation.hpp"

namespace nailgrasp {

struct CameraModel {
    double f = 800.0;  // focal length in pixels
    int width = 680, height = 1024;
    double cx() const { return width / 2.0; }
    double cy() const { return height / 2.0; }
};

struct CameraPose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // camera origin in world
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();     // camera axes in world columns
};

struct FeatureSet {
    std::array<Eigen::Vector2d, 4> xy;   // normalized image coordinates
    std::array<double, 4> depth{};       // camera-frame Z of each point
};

// calibration plate: dot centers at the corners of a 12 x 8 cm rectangle
inline std::array<Eigen::Vector3d, 4> plate_dots() {
    return {Eigen::Vector3d{-0.06, -0.04, 0.0}, Eigen::Vector3d{0.06, -0.04, 0.0},
            Eigen::Vector3d{-0.06, 0.04, 0.0}, Eigen::Vector3d{0.06, 0.04, 0.0}};
}
inline constexpr double kDotRadius = 0.006;  // meters

namespace detail {
inline Eigen::Vector3d to_camera(const CameraPose& pose, const Eigen::Vector3d& pw) {
    return pose.R.transpose() * (pw - pose.position);
}
}  // namespace detail

// exact projection of the plate dots; points behind the camera or outside the
// frame count as lost features
inline FeatureSet measure_geometric(const CameraPose& pose,
                                    const std::array<Eigen::Vector3d, 4>& dots,
                                    const CameraModel& cam = {}) {
    struct Proj {
        double u, v, x, y, z;
    };
    std::array<Proj, 4> pr;
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector3d pc = detail::to_camera(pose, dots[i]);
        if (pc.z() <= 0) throw FeatureLossError("feature " + std::to_string(i) + " behind camera");
        const double x = pc.x() / pc.z(), y = pc.y() / pc.z();
        const double u = cam.cx() + cam.f * x, v = cam.cy() + cam.f * y;
        if (u < 0 || u > cam.width - 1 || v < 0 || v > cam.height - 1)
            throw FeatureLossError("feature " + std::to_string(i) + " left the frame");
        pr[i] = {u, v, x, y, pc.z()};
    }
    // order: top pair then bottom pair, each left to right
    std::sort(pr.begin(), pr.end(), [](const Proj& a, const Proj& b) { return a.v < b.v; });
    if (pr[0].u > pr[1].u) std::swap(pr[0], pr[1]);
    if (pr[2].u > pr[3].u) std::swap(pr[2], pr[3]);
    FeatureSet fs;
    for (int i = 0; i < 4; ++i) {
        fs.xy[i] = {pr[i].x, pr[i].y};
        fs.depth[i] = pr[i].z;
    }
    return fs;
}

// Anti-aliased view of the plate: light background, dark dots.
inline Image render_plate_view(const CameraPose& pose, const std::array<Eigen::Vector3d, 4>& dots,
                               const CameraModel& cam = {}) {
    Image img(cam.height, cam.width, 1, 0.9);
    for (const auto& d : dots) {
        const Eigen::Vector3d pc = detail::to_camera(pose, d);
        if (pc.z() <= 0) continue;
        const double u = cam.cx() + cam.f * pc.x() / pc.z();
        const double v = cam.cy() + cam.f * pc.y() / pc.z();
        const double rad = cam.f * kDotRadius / pc.z();
        const int r0 = std::max(0, int(std::floor(v - rad - 2)));
        const int r1 = std::min(cam.height - 1, int(std::ceil(v + rad + 2)));
        const int c0 = std::max(0, int(std::floor(u - rad - 2)));
        const int c1 = std::min(cam.width - 1, int(std::ceil(u + rad + 2)));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const double dist = std::hypot(r - v, c - u);
                const double cov = std::clamp(rad - dist + 0.5, 0.0, 1.0);
                img.at(r, c) = std::min(img.at(r, c), 0.9 - 0.85 * cov);
            }
    }
    return img;
}

// Dot detection: dark threshold, 4 largest components, intensity-weighted
// centroids, ordered top pair then bottom pair, left to right.
inline std::array<Eigen::Vector2d, 4> detect_dots(const Image& img) {
    const Image gray = img.channels == 3 ? to_gray(img) : img;
    Image mask(gray.height, gray.width, 1, 0.0);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i)
        mask.pixels[i] = gray.pixels[i] < 0.5 ? 1.0 : 0.0;
    std::vector<Blob> blobs = connected_components(mask, 5);
    if (blobs.size() < 4)
        throw FeatureLossError("expected 4 dots, found " + std::to_string(blobs.size()));
    std::sort(blobs.begin(), blobs.end(),
              [](const Blob& a, const Blob& b) { return a.area > b.area; });
    blobs.resize(4);
    std::array<Eigen::Vector2d, 4> cent;  // (row, col)
    for (int i = 0; i < 4; ++i) {
        double wsum = 0, rsum = 0, csum = 0;
        for (const auto& [r, c] : blobs[i].pixels) {
            const double w = 1.0 - gray.at(r, c);
            wsum += w;
            rsum += w * r;
            csum += w * c;
        }
        cent[i] = {rsum / wsum, csum / wsum};
    }
    std::sort(cent.begin(), cent.end(),
              [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() < b.x(); });
    if (cent[0].y() > cent[1].y()) std::swap(cent[0], cent[1]);
    if (cent[2].y() > cent[3].y()) std::swap(cent[2], cent[3]);
    return cent;
}

// ---------------------------------------------------------------------------
// Control

// 8x6 image-Jacobian of four point features.
inline Eigen::MatrixXd interaction_matrix(const FeatureSet& fs) {
    Eigen::MatrixXd L(8, 6);
    for (int i = 0; i < 4; ++i) {
        const double x = fs.xy[i].x(), y = fs.xy[i].y(), Z = fs.depth[i];
        if (Z <= 0) throw std::invalid_argument("interaction_matrix: depth must be positive");
        L.row(2 * i) << -1.0 / Z, 0.0, x / Z, x * y, -(1.0 + x * x), y;
        L.row(2 * i + 1) << 0.0, -1.0 / Z, y / Z, 1.0 + y * y, -x * y, -x;
    }
    return L;
}

// v = -lambda * pinv(L) * e, with the pseudo-inverse by SVD. A configuration
// where L drops below full column rank is rejected.
inline Eigen::VectorXd control_law(const Eigen::MatrixXd& L, const Eigen::VectorXd& e,
                                   double lambda) {
    if (lambda <= 0) throw std::invalid_argument("control_law: lambda must be positive");
    if (L.rows() != e.size()) throw std::invalid_argument("control_law: dimension mismatch");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(L, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double tol = 1e-10 * sv(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol) ++rank;
    if (rank < 6) throw DegenerateConfigError("interaction matrix rank " + std::to_string(rank));
    Eigen::VectorXd inv_sv(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) inv_sv(i) = sv(i) > tol ? 1.0 / sv(i) : 0.0;
    return -lambda * (svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose() * e);
}

inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
    const double th = w.norm();
    Eigen::Matrix3d K;
    K << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    if (th < 1e-12) return Eigen::Matrix3d::Identity() + K + 0.5 * K * K;
    const Eigen::Matrix3d Kn = K / th;
    return Eigen::Matrix3d::Identity() + std::sin(th) * Kn + (1.0 - std::cos(th)) * Kn * Kn;
}

// Integrate a camera-frame twist (v, omega) over dt, then re-orthonormalize
// the rotation to suppress drift.
inline CameraPose step_sim(const CameraPose& pose, const Eigen::VectorXd& twist, double dt) {
    if (twist.size() != 6) throw std::invalid_argument("step_sim: twist must have 6 entries");
    if (!(dt > 0)) throw std::invalid_argument("step_sim: dt must be positive");
    CameraPose out = pose;
    out.position += pose.R * twist.head<3>() * dt;
    out.R = pose.R * rodrigues(twist.tail<3>() * dt);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(out.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.R = svd.matrixU() * svd.matrixV().transpose();
    if (out.R.determinant() < 0) {
        Eigen::Matrix3d U = svd.matrixU();
        U.col(2) *= -1.0;
        out.R = U * svd.matrixV().transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Closed-loop simulation

struct ServoConfig {
    double lambda = 2.0;
    double control_dt = 0.001;   // 1 kHz control
    double capture_dt = 0.05;    // 20 Hz camera, zero-order hold in between
    double duration = 3.0;
    int cameras = 1;
    std::string measurement = "rendered";  // or "geometric"

    int capture_every() const {
        if (!(lambda > 0)) throw std::invalid_argument("servo: lambda must be positive");
        if (!(control_dt > 0)) throw std::invalid_argument("servo: control_dt must be positive");
        if (!(duration > 0)) throw std::invalid_argument("servo: duration must be positive");
        if (cameras != 1 && cameras != 2)
            throw std::invalid_argument("servo: one or two cameras supported");
        if (measurement != "rendered" && measurement != "geometric")
            throw std::invalid_argument("servo: unknown measurement mode " + measurement);
        const double ratio = capture_dt / control_dt;
        const long n = std::lround(ratio);
        if (n < 1 || std::abs(ratio - double(n)) > 1e-6)
            throw std::invalid_argument(
                "servo: capture_dt must be a positive integer multiple of control_dt");
        return static_cast<int>(n);
    }
};

struct ServoScenario {
    std::string name;
    CameraPose init_pose, desired_pose;
    std::array<Eigen::Vector3d, 4> dots;  // at t = 0
    bool moving = false;
    Eigen::Vector3d cam2_offset{0.01, 0.0, 0.0};  // second camera, rigid offset in camera frame

    std::array<Eigen::Vector3d, 4> dots_at(double t) const {
        std::array<Eigen::Vector3d, 4> d = dots;
        if (moving) {
            const Eigen::Vector3d off{0.01 * std::sin(2.0 * M_PI * 0.25 * t), 0.0, 0.0};
            for (auto& p : d) p += off;
        }
        return d;
    }
};

inline ServoScenario make_servo_scenario(const std::string& name) {
    ServoScenario sc;
    sc.name = name;
    sc.dots = plate_dots();
    sc.desired_pose.position = {0.0, 0.0, -0.5};
    sc.init_pose = sc.desired_pose;
    if (name == "static") {
        // pure lateral offset producing a feature error norm of 100 px
        sc.init_pose.position.x() -= 0.03125;
    } else if (name == "moving") {
        sc.moving = true;
        sc.init_pose.position.x() -= 0.01;
    } else {
        throw std::invalid_argument("unknown servo scenario " + name);
    }
    return sc;
}

struct TraceRow {
    int tick = 0;
    double time = 0.0;
    CameraPose pose;
    double error_px = 0.0;
    bool captured = false;
};

struct CaptureRecord {
    int camera = 0;  // 0-based
    double time = 0.0;
    std::array<Eigen::Vector2d, 4> xy;  // normalized features
};

struct TrackingResult {
    std::vector<TraceRow> trace;
    std::vector<CaptureRecord> captures;
    std::vector<std::string> events;
    bool feature_lost = false;
    double final_error_px = 0.0;
};

namespace detail {
inline CameraPose second_camera(const CameraPose& main, const Eigen::Vector3d& offset) {
    CameraPose p = main;
    p.position += main.R * offset;
    return p;
}

inline FeatureSet measure(const ServoConfig& cfg, const CameraPose& pose,
                          const std::array<Eigen::Vector3d, 4>& dots, const CameraModel& cam) {
    const FeatureSet truth = measure_geometric(pose, dots, cam);
    if (cfg.measurement == "geometric") return truth;
    const Image view = render_plate_view(pose, dots, cam);
    const auto cent = detect_dots(view);
    FeatureSet fs;
    for (int i = 0; i < 4; ++i) {
        fs.xy[i] = {(cent[i].y() - cam.cx()) / cam.f, (cent[i].x() - cam.cy()) / cam.f};
        fs.depth[i] = truth.depth[i];  // true depths feed the interaction matrix
    }
    return fs;
}
}  // namespace detail

inline TrackingResult run_tracking(const ServoScenario& sc, const ServoConfig& cfg) {
    const CameraModel cam;
    const int every = cfg.capture_every();
    const int ticks = static_cast<int>(std::lround(cfg.duration / cfg.control_dt));

    const FeatureSet desired = measure_geometric(sc.desired_pose, sc.dots, cam);

    TrackingResult out;
    CameraPose pose = sc.init_pose;
    Eigen::VectorXd e_held = Eigen::VectorXd::Zero(8);
    Eigen::MatrixXd L_held;

    for (int tick = 0; tick < ticks; ++tick) {
        const double t = tick * cfg.control_dt;
        const auto dots = sc.dots_at(t);
        const bool capture = tick % every == 0;
        if (capture) {
            try {
                const FeatureSet fs = detail::measure(cfg, pose, dots, cam);
                for (int i = 0; i < 4; ++i) e_held.segment<2>(2 * i) = fs.xy[i] - desired.xy[i];
                L_held = interaction_matrix(fs);
                CaptureRecord rec;
                rec.camera = 0;
                rec.time = t;
                rec.xy = fs.xy;
                out.captures.push_back(rec);
                if (cfg.cameras == 2) {
                    const CameraPose p2 = detail::second_camera(pose, sc.cam2_offset);
                    const FeatureSet fs2 = detail::measure(cfg, p2, dots, cam);
                    CaptureRecord rec2;
                    rec2.camera = 1;
                    rec2.time = t;  // shared capture clock
                    rec2.xy = fs2.xy;
                    out.captures.push_back(rec2);
                }
            } catch (const FeatureLossError& e) {
                out.feature_lost = true;
                out.events.push_back("feature loss at t=" + std::to_string(t) + ": " + e.what());
                break;
            }
        }
        const Eigen::VectorXd v = control_law(L_held, e_held, cfg.lambda);
        TraceRow row;
        row.tick = tick;
        row.time = t;
        row.pose = pose;
        row.error_px = cam.f * e_held.norm();
        row.captured = capture;
        out.trace.push_back(row);
        pose = step_sim(pose, v, cfg.control_dt);
    }
    if (!out.trace.empty()) out.final_error_px = out.trace.back().error_px;
    return out;
}

inline void write_trace(const TrackingResult& res, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "tick,time_s,r00,r01,r02,r10,r11,r12,r20,r21,r22,px,py,pz,error_px,captured\n";
    char buf[512];
    for (const auto& row : res.trace) {
        const Eigen::Matrix3d& R = row.pose.R;
        const Eigen::Vector3d& p = row.pose.position;
        std::snprintf(buf, sizeof buf,
                      "%d,%.6f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                      "%.17g,%.17g,%d\n",
                      row.tick, row.time, R(0, 0), R(0, 1), R(0, 2), R(1, 0), R(1, 1), R(1, 2),
                      R(2, 0), R(2, 1), R(2, 2), p.x(), p.y(), p.z(), row.error_px,
                      row.captured ? 1 : 0);
        out << buf;
    }
}

}  // namespace nailgrasp
