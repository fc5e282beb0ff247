#include <catch2/catch_amalgamated.hpp>

#include <nailgrasp/core.hpp>
#include <nailgrasp/servo.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nailgrasp;
namespace fs = std::filesystem;

TEST_CASE("geometric measurement matches the pinhole model by hand") {
    CameraPose pose;
    pose.position = {0.0, 0.0, -0.5};
    const FeatureSet fs = measure_geometric(pose, plate_dots());
    // dots at (+-0.06, +-0.04, 0), Z = 0.5: normalized coords are +-0.12, +-0.08,
    // ordered top pair then bottom pair, left to right
    REQUIRE(fs.xy[0].x() == Catch::Approx(-0.12));
    REQUIRE(fs.xy[0].y() == Catch::Approx(-0.08));
    REQUIRE(fs.xy[1].x() == Catch::Approx(0.12));
    REQUIRE(fs.xy[1].y() == Catch::Approx(-0.08));
    REQUIRE(fs.xy[2].x() == Catch::Approx(-0.12));
    REQUIRE(fs.xy[2].y() == Catch::Approx(0.08));
    REQUIRE(fs.xy[3].x() == Catch::Approx(0.12));
    REQUIRE(fs.xy[3].y() == Catch::Approx(0.08));
    for (double z : fs.depth) REQUIRE(z == Catch::Approx(0.5));

    // translation along x shifts every x feature by dx/Z
    CameraPose shifted = pose;
    shifted.position.x() -= 0.03125;
    const FeatureSet fs2 = measure_geometric(shifted, plate_dots());
    for (int i = 0; i < 4; ++i) {
        REQUIRE(fs2.xy[i].x() == Catch::Approx(fs.xy[i].x() + 0.0625));
        REQUIRE(fs2.xy[i].y() == Catch::Approx(fs.xy[i].y()));
    }
}

TEST_CASE("features behind the camera or off the frame are lost") {
    CameraPose pose;
    pose.position = {0.0, 0.0, 0.5};  // plate behind the camera
    REQUIRE_THROWS_AS(measure_geometric(pose, plate_dots()), FeatureLossError);
    pose.position = {2.0, 0.0, -0.5};  // extreme lateral offset
    REQUIRE_THROWS_AS(measure_geometric(pose, plate_dots()), FeatureLossError);
}

TEST_CASE("detected dot centroids agree with the exact projection") {
    const CameraModel cam;
    CameraPose pose;
    pose.position = {-0.01, 0.007, -0.45};
    pose.R = rodrigues(Eigen::Vector3d{0.01, -0.02, 0.03});
    const Image view = render_plate_view(pose, plate_dots(), cam);
    const auto cent = detect_dots(view);
    const FeatureSet fs = measure_geometric(pose, plate_dots(), cam);
    for (int i = 0; i < 4; ++i) {
        const double u = cam.cx() + cam.f * fs.xy[i].x();
        const double v = cam.cy() + cam.f * fs.xy[i].y();
        REQUIRE(cent[i].x() == Catch::Approx(v).margin(0.1));  // row
        REQUIRE(cent[i].y() == Catch::Approx(u).margin(0.1));  // col
    }
    REQUIRE_THROWS_AS(detect_dots(Image(64, 64, 1, 0.9)), FeatureLossError);
}

TEST_CASE("the interaction matrix matches the analytic entries") {
    RandomStream r(13);
    for (int rep = 0; rep < 25; ++rep) {
        FeatureSet fs;
        for (int i = 0; i < 4; ++i) {
            fs.xy[i] = {r.uniform(-0.4, 0.4), r.uniform(-0.4, 0.4)};
            fs.depth[i] = r.uniform(0.2, 2.0);
        }
        const Eigen::MatrixXd L = interaction_matrix(fs);
        REQUIRE(L.rows() == 8);
        REQUIRE(L.cols() == 6);
        for (int i = 0; i < 4; ++i) {
            const double x = fs.xy[i].x(), y = fs.xy[i].y(), Z = fs.depth[i];
            const double rx[6] = {-1.0 / Z, 0.0, x / Z, x * y, -(1.0 + x * x), y};
            const double ry[6] = {0.0, -1.0 / Z, y / Z, 1.0 + y * y, -x * y, -x};
            for (int j = 0; j < 6; ++j) {
                REQUIRE(L(2 * i, j) == Catch::Approx(rx[j]).margin(1e-12));
                REQUIRE(L(2 * i + 1, j) == Catch::Approx(ry[j]).margin(1e-12));
            }
        }
    }
    FeatureSet bad;
    bad.xy = {Eigen::Vector2d{0, 0}, {0.1, 0}, {0, 0.1}, {0.1, 0.1}};
    bad.depth = {1.0, 1.0, -1.0, 1.0};
    REQUIRE_THROWS_AS(interaction_matrix(bad), std::invalid_argument);
}

TEST_CASE("the control law matches a normal-equation pseudo-inverse") {
    RandomStream r(19);
    for (int rep = 0; rep < 25; ++rep) {
        FeatureSet fs;
        for (int i = 0; i < 4; ++i) {
            fs.xy[i] = {r.uniform(-0.3, 0.3), r.uniform(-0.3, 0.3)};
            fs.depth[i] = r.uniform(0.3, 1.5);
        }
        const Eigen::MatrixXd L = interaction_matrix(fs);
        Eigen::VectorXd e(8);
        for (int i = 0; i < 8; ++i) e(i) = r.uniform(-0.2, 0.2);
        const double lam = r.uniform(0.5, 4.0);
        const Eigen::VectorXd v = control_law(L, e, lam);
        // full-column-rank least squares solved the long way round
        const Eigen::VectorXd ref = -lam * (L.transpose() * L).inverse() * L.transpose() * e;
        REQUIRE((v - ref).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("degenerate feature configurations are rejected") {
    FeatureSet fs;
    for (int i = 0; i < 4; ++i) {
        fs.xy[i] = {0.1, -0.05};  // all four dots coincide
        fs.depth[i] = 0.5;
    }
    const Eigen::MatrixXd L = interaction_matrix(fs);
    REQUIRE_THROWS_AS(control_law(L, Eigen::VectorXd::Zero(8), 1.0), DegenerateConfigError);
    REQUIRE_THROWS_AS(control_law(L, Eigen::VectorXd::Zero(8), 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(control_law(L, Eigen::VectorXd::Zero(7), 1.0), std::invalid_argument);
}

TEST_CASE("rodrigues reproduces closed-form rotations") {
    // quarter turn about z
    const Eigen::Matrix3d Rz = rodrigues({0.0, 0.0, M_PI / 2.0});
    Eigen::Matrix3d expect;
    expect << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    REQUIRE((Rz - expect).cwiseAbs().maxCoeff() < 1e-12);
    // half turn about x
    const Eigen::Matrix3d Rx = rodrigues({M_PI, 0.0, 0.0});
    expect << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    REQUIRE((Rx - expect).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((rodrigues({0, 0, 0}) - Eigen::Matrix3d::Identity()).norm() == 0.0);
    // always orthonormal
    RandomStream r(31);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Matrix3d R =
            rodrigues({r.uniform(-3, 3), r.uniform(-3, 3), r.uniform(-3, 3)});
        REQUIRE((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE(R.determinant() == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("pose integration applies the twist in the camera frame") {
    CameraPose pose;
    pose.R = rodrigues({0.0, 0.0, M_PI / 2.0});
    Eigen::VectorXd twist = Eigen::VectorXd::Zero(6);
    twist(0) = 1.0;  // camera-frame x
    const CameraPose next = step_sim(pose, twist, 0.1);
    // camera x maps to world y under a quarter z-turn
    REQUIRE(next.position.x() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(next.position.y() == Catch::Approx(0.1).margin(1e-12));
    REQUIRE((next.R - pose.R).cwiseAbs().maxCoeff() < 1e-12);

    // long rotation chains stay orthonormal
    CameraPose p;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(6);
    w(3) = 0.3;
    w(4) = -0.2;
    w(5) = 0.1;
    for (int i = 0; i < 2000; ++i) p = step_sim(p, w, 0.01);
    REQUIRE((p.R.transpose() * p.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE_THROWS_AS(step_sim(p, Eigen::VectorXd::Zero(5), 0.01), std::invalid_argument);
    REQUIRE_THROWS_AS(step_sim(p, w, 0.0), std::invalid_argument);
}

TEST_CASE("servo configuration validation") {
    ServoConfig cfg;
    REQUIRE(cfg.capture_every() == 50);
    cfg.capture_dt = 0.0607;
    REQUIRE_THROWS_AS(cfg.capture_every(), std::invalid_argument);
    cfg.capture_dt = 0.05;
    cfg.cameras = 3;
    REQUIRE_THROWS_AS(cfg.capture_every(), std::invalid_argument);
    cfg.cameras = 2;
    cfg.measurement = "psychic";
    REQUIRE_THROWS_AS(cfg.capture_every(), std::invalid_argument);
    cfg.measurement = "geometric";
    cfg.lambda = -1.0;
    REQUIRE_THROWS_AS(cfg.capture_every(), std::invalid_argument);
    REQUIRE_THROWS_AS(make_servo_scenario("warp"), std::invalid_argument);
}

TEST_CASE("the static scenario converges geometrically") {
    const ServoScenario sc = make_servo_scenario("static");
    ServoConfig cfg;
    cfg.measurement = "geometric";
    const TrackingResult res = run_tracking(sc, cfg);
    REQUIRE(!res.feature_lost);
    REQUIRE(res.trace.size() == 3000);
    // the initial offset was tuned to a 100 px error norm
    REQUIRE(res.trace.front().error_px == Catch::Approx(100.0).margin(1e-6));
    REQUIRE(res.final_error_px < 1.0);
    // error never grows between captures
    for (std::size_t i = 1; i < res.trace.size(); ++i)
        REQUIRE(res.trace[i].error_px <= res.trace[i - 1].error_px + 1e-9);
}

TEST_CASE("both cameras capture on the same clock") {
    const ServoScenario sc = make_servo_scenario("static");
    ServoConfig cfg;
    cfg.measurement = "geometric";
    cfg.cameras = 2;
    cfg.duration = 0.5;
    const TrackingResult res = run_tracking(sc, cfg);
    REQUIRE(res.captures.size() % 2 == 0);
    for (std::size_t i = 0; i < res.captures.size(); i += 2) {
        REQUIRE(res.captures[i].camera == 0);
        REQUIRE(res.captures[i + 1].camera == 1);
        REQUIRE(res.captures[i].time == res.captures[i + 1].time);
    }
}

TEST_CASE("trace files carry one row per tick") {
    const ServoScenario sc = make_servo_scenario("static");
    ServoConfig cfg;
    cfg.measurement = "geometric";
    cfg.duration = 0.1;
    const TrackingResult res = run_tracking(sc, cfg);
    const fs::path p = fs::temp_directory_path() / "ng_trace.csv";
    write_trace(res, p.string());
    std::ifstream in(p);
    std::string line;
    REQUIRE(std::getline(in, line));
    REQUIRE(line ==
            "tick,time_s,r00,r01,r02,r10,r11,r12,r20,r21,r22,px,py,pz,error_px,captured");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 100);
}
