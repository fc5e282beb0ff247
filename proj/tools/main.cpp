// command-line front end for the grasp-force pipeline

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <nailgrasp/analysis.hpp>
#include <nailgrasp/core.hpp>
#include <nailgrasp/eigennail.hpp>
#include <nailgrasp/forces_io.hpp>
#include <nailgrasp/image.hpp>
#include <nailgrasp/registration.hpp>
#include <nailgrasp/segmentation.hpp>
#include <nailgrasp/servo.hpp>
#include <nailgrasp/synth.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nailgrasp;

static std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

static json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("bad config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("config must be a JSON object");
    return j;
}

// config values apply only where the flag was not given on the command line
template <class T>
static void cfg(const json& j, const char* key, const CLI::Option* opt, T& var) {
    if (opt->count() == 0 && j.contains(key)) var = j.at(key).get<T>();
}

static void write_json_file(const json& j, const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw FormatError("cannot open " + p.string() + " for writing");
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOpts {
    std::string out, grid = "default", config;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1234;
    int height = 64, width = 32;
    CLI::Option *o_grid = nullptr, *o_noise = nullptr, *o_seed = nullptr, *o_h = nullptr,
                *o_w = nullptr;
};

static int cmd_calibrate(CalibrateOpts& o) {
    const json j = load_config(o.config);
    cfg(j, "grid", o.o_grid, o.grid);
    cfg(j, "noise-sigma", o.o_noise, o.noise_sigma);
    cfg(j, "seed", o.o_seed, o.seed);
    cfg(j, "height", o.o_h, o.height);
    cfg(j, "width", o.o_w, o.width);

    CalibrationGrid grid;
    if (o.grid == "default")
        grid = default_grid();
    else if (o.grid == "dense")
        grid = dense_grid();
    else
        throw std::invalid_argument("unknown grid '" + o.grid + "' (default|dense)");

    const std::vector<ForceVector> forces = make_grid(grid);
    const NailForwardModel model = default_nail_model(o.height, o.width, o.noise_sigma, o.seed);
    fs::create_directories(o.out);

    std::vector<ForceRow> rows;
    char name[64];
    for (std::size_t i = 0; i < forces.size(); ++i) {
        const Image img = render_nail(model, forces[i], i);
        std::snprintf(name, sizeof name, "calib_%05zu.pgm", i);
        write_image(img, (fs::path(o.out) / name).string());
        rows.push_back({double(i), "nail", forces[i].fx, forces[i].fy, forces[i].fz, "calibration",
                        "oracle"});
    }
    write_forces_csv(rows, (fs::path(o.out) / "forces.csv").string());

    json man;
    man["schema"] = "manifest/1";
    man["command"] = "calibrate";
    man["created_utc"] = iso_now();
    man["parameters"] = {{"grid", o.grid},
                         {"noise_sigma", o.noise_sigma},
                         {"seed", o.seed},
                         {"height", o.height},
                         {"width", o.width}};
    man["samples"] = forces.size();
    write_json_file(man, fs::path(o.out) / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string calib, out, config;
};

static int cmd_train(TrainOpts& o) {
    load_config(o.config);  // no tunables yet; still validate the file if given

    const std::vector<ForceRow> rows =
        read_forces_csv((fs::path(o.calib) / "forces.csv").string());
    if (rows.empty()) throw FormatError("calibration force list is empty");
    std::vector<ForceVector> forces;
    std::vector<Image> imgs;
    char name[64];
    for (std::size_t i = 0; i < rows.size(); ++i) {
        forces.push_back({rows[i].fx, rows[i].fy, rows[i].fz});
        std::snprintf(name, sizeof name, "calib_%05zu.pgm", i);
        imgs.push_back(read_image((fs::path(o.calib) / name).string()));
    }
    const int h = imgs[0].height, w = imgs[0].width;

    const LandmarkShape tpl = default_template(h, w);
    const Triangulation tri = build_triangulation(tpl, h, w);
    std::vector<Image> warped;
    warped.reserve(imgs.size());
    for (const Image& img : imgs) warped.push_back(piecewise_warp(img, tpl, tri));

    const EigenNailModel model = train_eigennail(warped, forces);
    fs::create_directories(o.out);
    save_eigennail(model, (fs::path(o.out) / "eigennail.json").string());

    const std::vector<LandmarkShape> shapes(imgs.size(), tpl);
    const ShapeModel sm = fit_shape_model(shapes);
    const TextureModel tm = fit_texture_model(warped, tri);
    const GpaResult gpa = procrustes_align(shapes);
    std::vector<Eigen::VectorXd> sp, tp;
    for (std::size_t i = 0; i < warped.size(); ++i) {
        sp.push_back(shape_params(sm, gpa.aligned[i]));
        tp.push_back(texture_params(tm, texture_vector(warped[i], tri)));
    }
    const double weight = default_appearance_weight(sm, tm);
    const AppearanceModel am = combine_appearance(sm, tm, sp, tp, weight);
    save_appearance(am, tri, (fs::path(o.out) / "appearance.json").string());
    save_landmarks(tpl, (fs::path(o.out) / "template_landmarks.csv").string());

    double acc = 0.0;
    for (std::size_t i = 0; i < warped.size(); ++i) {
        const ForceVector f = predict(model, warped[i]).f;
        acc += (f.fx - forces[i].fx) * (f.fx - forces[i].fx) +
               (f.fy - forces[i].fy) * (f.fy - forces[i].fy) +
               (f.fz - forces[i].fz) * (f.fz - forces[i].fz);
    }
    json sum;
    sum["schema"] = "train-summary/1";
    sum["samples"] = warped.size();
    sum["k"] = model.k();
    sum["texture_k"] = tm.k;
    sum["combined_k"] = am.k;
    sum["training_rms_n"] = std::sqrt(acc / (3.0 * warped.size()));
    sum["height"] = h;
    sum["width"] = w;
    write_json_file(sum, fs::path(o.out) / "train_summary.json");
    return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOpts {
    std::string model, frames, out, trial = "trial", config;
    bool save_crops = false;
    double dt = 0.05;
    long min_area = 500;
    CLI::Option *o_trial = nullptr, *o_crops = nullptr, *o_dt = nullptr, *o_area = nullptr;
};

static long count_frames(const fs::path& dir, const char* finger) {
    long n = 0;
    char name[64];
    for (;;) {
        std::snprintf(name, sizeof name, "%s_%05ld.pgm", finger, n);
        if (!fs::exists(dir / name)) break;
        ++n;
    }
    return n;
}

static int cmd_estimate(EstimateOpts& o) {
    const json j = load_config(o.config);
    cfg(j, "trial", o.o_trial, o.trial);
    cfg(j, "save-crops", o.o_crops, o.save_crops);
    cfg(j, "dt", o.o_dt, o.dt);
    cfg(j, "min-area", o.o_area, o.min_area);
    if (!(o.dt > 0)) throw std::invalid_argument("dt must be positive");

    const auto [am, tri] = load_appearance((fs::path(o.model) / "appearance.json").string());
    const EigenNailModel en = load_eigennail((fs::path(o.model) / "eigennail.json").string());
    const LandmarkShape& tpl = tri.points;
    const Eigen::Vector2d tplc = nailgrasp::detail::centroid(tpl);

    long n_frames = -1;
    for (int f = 0; f < kNumFingers; ++f) {
        const long n = count_frames(o.frames, kFingerNames[f]);
        n_frames = n_frames < 0 ? n : std::min(n_frames, n);
    }
    if (n_frames <= 0) throw FormatError("no finger frames found in " + o.frames);

    fs::create_directories(o.out);
    std::vector<std::array<ForceVector, 4>> est(n_frames);
    std::vector<std::array<bool, 4>> have(n_frames, {false, false, false, false});
    json skips = json::array();
    long processed = 0, extrapolated = 0;
    char name[128];

    std::ofstream det((fs::path(o.out) / "detections.csv").string());
    if (!det) throw FormatError("cannot open detections.csv for writing");
    det << "frame,finger,centroid_row,centroid_col,area\n";

    for (long i = 0; i < n_frames; ++i)
        for (int f = 0; f < kNumFingers; ++f) {
            std::snprintf(name, sizeof name, "%s_%05ld.pgm", kFingerNames[f], i);
            const Image img = read_image((fs::path(o.frames) / name).string());
            auto skip = [&](const std::string& why) {
                skips.push_back({{"frame", i}, {"finger", kFingerNames[f]}, {"reason", why}});
            };
            Image mask(img.height, img.width, 1, 0.0);
            for (std::size_t p = 0; p < img.pixels.size(); ++p)
                mask.pixels[p] = img.pixels[p] > 0.1 ? 1.0 : 0.0;
            const std::vector<Blob> blobs = connected_components(mask, o.min_area);
            if (blobs.size() != 1) {
                skip("expected 1 blob, found " + std::to_string(blobs.size()));
                continue;
            }
            LandmarkShape init = tpl;
            for (auto& p : init.points)
                p += Eigen::Vector2d{blobs[0].centroid_col - tplc.x(),
                                     blobs[0].centroid_row - tplc.y()};
            AamResult res;
            try {
                res = aam_search(am, tri, img, init);
            } catch (const std::invalid_argument&) {
                skip("initialization outside the image");
                continue;
            }
            if (!res.converged) {
                skip("registration did not converge");
                continue;
            }
            const Image crop = piecewise_warp(img, res.landmarks, tri);
            const PredictResult pr = predict(en, crop);
            est[i][f] = pr.f;
            have[i][f] = true;
            ++processed;
            if (pr.extrapolated) ++extrapolated;
            std::snprintf(name, sizeof name, "%ld,%s,%.17g,%.17g,%ld\n", i, kFingerNames[f],
                          blobs[0].centroid_row, blobs[0].centroid_col, blobs[0].area);
            det << name;
            if (o.save_crops) {
                std::snprintf(name, sizeof name, "%s_%s_%05ld.pgm", o.trial.c_str(),
                              kFingerNames[f], i);
                write_image(crop, (fs::path(o.out) / name).string());
            }
        }
    det.close();

    std::vector<long> full;
    for (long i = 0; i < n_frames; ++i)
        if (have[i][0] && have[i][1] && have[i][2] && have[i][3]) full.push_back(i);
    if (full.empty()) throw FormatError("no frame was processed for all four fingers");

    std::array<std::vector<ForceVector>, 4> series;
    for (long idx : full)
        for (int f = 0; f < 4; ++f) series[f].push_back(est[idx][f]);
    const PhaseBoundaries pb = detect_phases(series, o.dt);
    auto phase_of = [&](long pos) {
        if (pos < pb.grasp) return Phase::PreContact;
        if (pos < pb.lift) return Phase::Grasp;
        if (pos < pb.hold_begin) return Phase::Lift;
        if (pos < pb.hold_end) return Phase::Hold;
        return Phase::Replace;
    };
    std::vector<ForceRow> rows;
    for (std::size_t pos = 0; pos < full.size(); ++pos)
        for (int f = 0; f < 4; ++f) {
            const ForceVector& fv = series[f][pos];
            rows.push_back({full[pos] * o.dt, kFingerNames[f], fv.fx, fv.fy, fv.fz,
                            phase_name(phase_of(static_cast<long>(pos))), "estimated"});
        }
    write_forces_csv(rows, (fs::path(o.out) / "estimated.csv").string());

    const double frac = double(processed) / double(4 * n_frames);
    json log;
    log["schema"] = "estimate-log/1";
    log["frames"] = n_frames;
    log["finger_frames"] = 4 * n_frames;
    log["processed"] = processed;
    log["processed_fraction"] = frac;
    log["extrapolated"] = extrapolated;
    log["skips"] = skips;
    log["model_k"] = en.k();
    write_json_file(log, fs::path(o.out) / "estimate_log.json");
    if (frac < 0.95) {
        std::fprintf(stderr, "error: only %.1f%% of finger frames were processed\n", 100.0 * frac);
        return 3;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// simulate-session

struct SimulateOpts {
    std::string out, scenario = "constrained", config;
    std::uint64_t seed = 42, model_seed = 1234;
    double dt = 0.05, noise_sigma = 0.0;
    bool no_frames = false;
    int camera_frames = 0;
    CLI::Option *o_scenario = nullptr, *o_seed = nullptr, *o_dt = nullptr, *o_noise = nullptr,
                *o_mseed = nullptr, *o_noframes = nullptr, *o_cam = nullptr;
};

static int cmd_simulate(SimulateOpts& o) {
    const json j = load_config(o.config);
    cfg(j, "scenario", o.o_scenario, o.scenario);
    cfg(j, "seed", o.o_seed, o.seed);
    cfg(j, "dt", o.o_dt, o.dt);
    cfg(j, "noise-sigma", o.o_noise, o.noise_sigma);
    cfg(j, "model-seed", o.o_mseed, o.model_seed);
    cfg(j, "no-frames", o.o_noframes, o.no_frames);
    cfg(j, "camera-frames", o.o_cam, o.camera_frames);

    const GraspSession s = simulate_session(scenario_from_name(o.scenario), o.seed, o.dt);
    fs::create_directories(o.out);
    write_forces_csv(session_rows(s, "oracle"), (fs::path(o.out) / "forces.csv").string());

    long n_frames = 0;
    char name[64];
    if (!o.no_frames || o.camera_frames > 0) {
        const NailForwardModel m = default_nail_model(64, 32, o.noise_sigma, o.model_seed);
        if (!o.no_frames)
            for (const FrameRef& ref : session_frames(s)) {
                const Image v = render_finger_view(m, s, ref);
                std::snprintf(name, sizeof name, "%s_%05ld.pgm", kFingerNames[ref.finger],
                              ref.frame_index);
                write_image(v, (fs::path(o.out) / name).string());
                if (ref.finger == 0) n_frames = std::max(n_frames, ref.frame_index + 1);
            }
        for (int k = 0; k < o.camera_frames; ++k) {
            std::snprintf(name, sizeof name, "camera_fingers_%05d.ppm", k);
            write_image(render_camera_frame(m, s, k, false), (fs::path(o.out) / name).string());
            std::snprintf(name, sizeof name, "camera_thumb_%05d.ppm", k);
            write_image(render_camera_frame(m, s, k, true), (fs::path(o.out) / name).string());
        }
    }

    json man;
    man["schema"] = "manifest/1";
    man["command"] = "simulate-session";
    man["created_utc"] = iso_now();
    man["parameters"] = {{"scenario", o.scenario},   {"seed", o.seed},
                         {"dt", o.dt},               {"noise_sigma", o.noise_sigma},
                         {"model_seed", o.model_seed}, {"frames", !o.no_frames},
                         {"camera_frames", o.camera_frames}};
    man["samples"] = s.samples();
    man["finger_frames"] = n_frames;
    man["object_weight_n"] = s.object_weight;
    write_json_file(man, fs::path(o.out) / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// servo

struct ServoOpts {
    std::string out, scenario = "static", measurement = "rendered", config;
    double lambda = 2.0, duration = 3.0, control_dt = 0.001, capture_dt = 0.05;
    int cameras = 1;
    CLI::Option *o_scenario = nullptr, *o_meas = nullptr, *o_lambda = nullptr, *o_dur = nullptr,
                *o_cdt = nullptr, *o_kdt = nullptr, *o_cams = nullptr;
};

static int cmd_servo(ServoOpts& o) {
    const json j = load_config(o.config);
    cfg(j, "scenario", o.o_scenario, o.scenario);
    cfg(j, "measurement", o.o_meas, o.measurement);
    cfg(j, "lambda", o.o_lambda, o.lambda);
    cfg(j, "duration", o.o_dur, o.duration);
    cfg(j, "control-dt", o.o_cdt, o.control_dt);
    cfg(j, "capture-dt", o.o_kdt, o.capture_dt);
    cfg(j, "cameras", o.o_cams, o.cameras);

    const ServoScenario sc = make_servo_scenario(o.scenario);
    ServoConfig cfg_;
    cfg_.lambda = o.lambda;
    cfg_.control_dt = o.control_dt;
    cfg_.capture_dt = o.capture_dt;
    cfg_.duration = o.duration;
    cfg_.cameras = o.cameras;
    cfg_.measurement = o.measurement;
    const TrackingResult res = run_tracking(sc, cfg_);

    fs::create_directories(o.out);
    write_trace(res, (fs::path(o.out) / "trace.csv").string());

    json sum;
    sum["schema"] = "servo-summary/1";
    sum["final_error_px"] = res.final_error_px;
    sum["converged"] = !res.feature_lost && res.final_error_px < 1.0;
    sum["feature_lost"] = res.feature_lost;
    sum["events"] = res.events;
    json times = json::array();
    for (int c = 0; c < o.cameras; ++c) times.push_back(json::array());
    for (const CaptureRecord& r : res.captures) times.at(r.camera).push_back(r.time);
    sum["capture_times_s"] = times;
    sum["ticks"] = res.trace.size();
    write_json_file(sum, fs::path(o.out) / "servo_summary.json");

    json scj;
    scj["schema"] = "servo-scenario/1";
    scj["name"] = sc.name;
    scj["moving"] = sc.moving;
    scj["lambda"] = o.lambda;
    scj["control_dt_s"] = o.control_dt;
    scj["capture_dt_s"] = o.capture_dt;
    scj["duration_s"] = o.duration;
    scj["cameras"] = o.cameras;
    scj["measurement"] = o.measurement;
    scj["init_position_m"] = {sc.init_pose.position.x(), sc.init_pose.position.y(),
                              sc.init_pose.position.z()};
    scj["desired_position_m"] = {sc.desired_pose.position.x(), sc.desired_pose.position.y(),
                                 sc.desired_pose.position.z()};
    json dots = json::array();
    for (const auto& d : sc.dots) dots.push_back({d.x(), d.y(), d.z()});
    scj["dots_m"] = dots;
    write_json_file(scj, fs::path(o.out) / "scenario.json");
    return 0;
}

// ---------------------------------------------------------------------------
// analyze / report

struct AnalyzeOpts {
    std::vector<std::string> constrained, unconstrained;
    std::string out, config;
};

static GraspTrial load_trial(const std::string& dir, Scenario sc) {
    GraspTrial t;
    t.scenario = sc;
    t.id = fs::path(dir).lexically_normal().filename().string();
    if (t.id.empty()) t.id = dir;
    const fs::path fp = fs::path(dir) / "forces.csv";
    const fs::path ep = fs::path(dir) / "estimated.csv";
    const bool has_raw = fs::exists(fp), has_est = fs::exists(ep);
    if (!has_raw && !has_est)
        throw FormatError("trial directory " + dir + " has neither forces.csv nor estimated.csv");
    if (has_est) {
        const ForceSeries est = rows_to_series(read_forces_csv(ep.string()));
        t.dt = est.dt;
        t.series = est.series;
        t.labels = est.phases;
        if (has_raw) {
            const ForceSeries raw = rows_to_series(read_forces_csv(fp.string()));
            const long ratio = std::lround(est.dt / raw.dt);
            if (ratio < 1 || std::abs(est.dt - double(ratio) * raw.dt) > 1e-9)
                throw FormatError("estimated/raw sampling mismatch in " + dir);
            const long n_raw = static_cast<long>(raw.series[0].size());
            const long n = std::min<long>(static_cast<long>(est.series[0].size()),
                                          (n_raw - 1) / ratio + 1);
            for (int f = 0; f < 4; ++f) {
                t.series[f].resize(n);
                t.reference[f].reserve(n);
                for (long i = 0; i < n; ++i) t.reference[f].push_back(raw.series[f][i * ratio]);
            }
            t.labels.resize(n);
        }
    } else {
        const ForceSeries raw = rows_to_series(read_forces_csv(fp.string()));
        t.dt = raw.dt;
        t.series = raw.series;
        t.labels = raw.phases;
    }
    return t;
}

static int cmd_analyze(AnalyzeOpts& o) {
    const json j = load_config(o.config);
    if (o.constrained.empty() && j.contains("constrained"))
        o.constrained = j.at("constrained").get<std::vector<std::string>>();
    if (o.unconstrained.empty() && j.contains("unconstrained"))
        o.unconstrained = j.at("unconstrained").get<std::vector<std::string>>();

    std::vector<GraspTrial> trials;
    for (const std::string& d : o.constrained)
        trials.push_back(load_trial(d, Scenario::Constrained));
    for (const std::string& d : o.unconstrained)
        trials.push_back(load_trial(d, Scenario::Unconstrained));
    const Report rep = trial_report(trials);
    fs::create_directories(o.out);
    write_report_json(rep, (fs::path(o.out) / "report.json").string());
    write_report_csv(rep, (fs::path(o.out) / "report.csv").string());
    write_report_svg(rep, (fs::path(o.out) / "report.svg").string());
    return 0;
}

struct ReportOpts {
    std::string in, out;
};

static int cmd_report(ReportOpts& o) {
    const Report rep = read_report_json(o.in);
    fs::create_directories(o.out);
    write_report_csv(rep, (fs::path(o.out) / "report.csv").string());
    write_report_svg(rep, (fs::path(o.out) / "report.svg").string());
    return 0;
}

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"fingernail-imaging grasp-force pipeline"};
    app.require_subcommand(1);

    CalibrateOpts cal;
    auto* c1 = app.add_subcommand("calibrate", "render a calibration force grid");
    c1->add_option("--out", cal.out, "output directory")->required();
    cal.o_grid = c1->add_option("--grid", cal.grid, "grid preset (default|dense)");
    cal.o_noise = c1->add_option("--noise-sigma", cal.noise_sigma, "image noise std dev");
    cal.o_seed = c1->add_option("--seed", cal.seed, "forward-model seed");
    cal.o_h = c1->add_option("--height", cal.height, "nail image height");
    cal.o_w = c1->add_option("--width", cal.width, "nail image width");
    c1->add_option("--config", cal.config, "JSON config file");

    TrainOpts tr;
    auto* c2 = app.add_subcommand("train", "fit the force-estimation models");
    c2->add_option("--calib", tr.calib, "calibration directory")->required();
    c2->add_option("--out", tr.out, "output directory")->required();
    c2->add_option("--config", tr.config, "JSON config file");

    EstimateOpts es;
    auto* c3 = app.add_subcommand("estimate", "estimate forces from finger frames");
    c3->add_option("--model", es.model, "model directory")->required();
    c3->add_option("--frames", es.frames, "frames directory")->required();
    c3->add_option("--out", es.out, "output directory")->required();
    es.o_trial = c3->add_option("--trial", es.trial, "trial name used for crop files");
    es.o_crops = c3->add_flag("--save-crops", es.save_crops, "write registered nail crops");
    es.o_dt = c3->add_option("--dt", es.dt, "frame period in seconds");
    es.o_area = c3->add_option("--min-area", es.min_area, "minimum blob area in pixels");
    c3->add_option("--config", es.config, "JSON config file");

    SimulateOpts si;
    auto* c4 = app.add_subcommand("simulate-session", "synthesize a grasp session");
    c4->add_option("--out", si.out, "output directory")->required();
    si.o_scenario = c4->add_option("--scenario", si.scenario, "constrained|unconstrained")
                        ->check(CLI::IsMember({"constrained", "unconstrained"}));
    si.o_seed = c4->add_option("--seed", si.seed, "session seed");
    si.o_dt = c4->add_option("--dt", si.dt, "force sample period in seconds");
    si.o_noise = c4->add_option("--noise-sigma", si.noise_sigma, "image noise std dev");
    si.o_mseed = c4->add_option("--model-seed", si.model_seed, "forward-model seed");
    si.o_noframes = c4->add_flag("--no-frames", si.no_frames, "skip finger-view rendering");
    si.o_cam = c4->add_option("--camera-frames", si.camera_frames,
                              "number of full camera frames to render");
    c4->add_option("--config", si.config, "JSON config file");

    ServoOpts se;
    auto* c5 = app.add_subcommand("servo", "run the eye-in-hand tracking simulation");
    c5->add_option("--out", se.out, "output directory")->required();
    se.o_scenario = c5->add_option("--scenario", se.scenario, "static|moving");
    se.o_meas = c5->add_option("--measurement", se.measurement, "rendered|geometric");
    se.o_lambda = c5->add_option("--lambda", se.lambda, "control gain");
    se.o_dur = c5->add_option("--duration", se.duration, "simulated seconds");
    se.o_cdt = c5->add_option("--control-dt", se.control_dt, "control period in seconds");
    se.o_kdt = c5->add_option("--capture-dt", se.capture_dt, "capture period in seconds");
    se.o_cams = c5->add_option("--cameras", se.cameras, "1 or 2 cameras");
    c5->add_option("--config", se.config, "JSON config file");

    AnalyzeOpts an;
    auto* c6 = app.add_subcommand("analyze", "compare grasp trials across conditions");
    c6->add_option("--constrained", an.constrained, "constrained trial directories");
    c6->add_option("--unconstrained", an.unconstrained, "unconstrained trial directories");
    c6->add_option("--out", an.out, "output directory")->required();
    c6->add_option("--config", an.config, "JSON config file");

    ReportOpts re;
    auto* c7 = app.add_subcommand("report", "re-emit CSV and SVG from a report");
    c7->add_option("--in", re.in, "report.json path")->required();
    c7->add_option("--out", re.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::function<int()> action;
    if (c1->parsed()) action = [&] { return cmd_calibrate(cal); };
    if (c2->parsed()) action = [&] { return cmd_train(tr); };
    if (c3->parsed()) action = [&] { return cmd_estimate(es); };
    if (c4->parsed()) action = [&] { return cmd_simulate(si); };
    if (c5->parsed()) action = [&] { return cmd_servo(se); };
    if (c6->parsed()) action = [&] { return cmd_analyze(an); };
    if (c7->parsed()) action = [&] { return cmd_report(re); };

    try {
        return action();
    } catch (const UnderdeterminedError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const DegenerateConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
