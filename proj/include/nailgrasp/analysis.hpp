#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "synth.hpp"

namespace nailgrasp {

struct GraspTrial {
    std::string id;
    Scenario scenario = Scenario::Constrained;
    double dt = 0.05;
    std::array<std::vector<ForceVector>, 4> series;     // thumb, index, middle, ring
    std::vector<Phase> labels;                          // empty when unlabeled
    std::array<std::vector<ForceVector>, 4> reference;  // empty when no ground truth
};

struct PhaseBoundaries {
    int grasp = -1;
    int lift = -1;
    int hold_begin = -1, hold_end = -1;  // half-open sample window
    int replace = -1;
};

namespace detail {

inline int sustained_above(const std::vector<double>& v, double thresh, int from, int count,
                           bool above) {
    for (int i = from; i + count <= static_cast<int>(v.size()); ++i) {
        bool ok = true;
        for (int k = 0; k < count && ok; ++k)
            ok = above ? v[i + k] > thresh : v[i + k] < thresh;
        if (ok) return i;
    }
    return -1;
}

inline double median_of(std::vector<double> v) {
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + m, v.end());
    double hi = v[m];
    if (v.size() % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + m - 1, v.begin() + m);
        return 0.5 * (v[m - 1] + hi);
    }
    return hi;
}

}  // namespace detail

// Segment a trial into grasp / lift / hold / replace events:
//  - grasp: thumb normal force above 0.5 N sustained for 0.2 s
//  - lift: total normal force exceeding 1.1x the pre-lift plateau (running
//    median of totals collected from 0.5 s after grasp onset)
//  - hold: longest window of at least 5 s in which every total stays within
//    +/-10% of the window mean (ties resolved to the earliest window)
//  - replace: thumb normal force below 0.5 N sustained for 0.2 s after hold
inline PhaseBoundaries detect_phases(const std::array<std::vector<ForceVector>, 4>& series,
                                     double dt) {
    if (!(dt > 0)) throw std::invalid_argument("detect_phases: dt must be positive");
    const int n = static_cast<int>(series[0].size());
    for (const auto& s : series)
        if (static_cast<int>(s.size()) != n)
            throw std::invalid_argument("detect_phases: series lengths differ");
    if (n == 0) throw NoGraspError("empty force series");

    std::vector<double> thumb(n), total(n);
    for (int i = 0; i < n; ++i) {
        thumb[i] = series[0][i].fz;
        total[i] = series[0][i].fz + series[1][i].fz + series[2][i].fz + series[3][i].fz;
    }
    const int k02 = std::max(1, static_cast<int>(std::lround(0.2 / dt)));

    PhaseBoundaries pb;
    pb.grasp = detail::sustained_above(thumb, 0.5, 0, k02, true);
    if (pb.grasp < 0) throw NoGraspError("no grasp onset found");

    const int base_from = pb.grasp + static_cast<int>(std::lround(0.5 / dt));
    const int lift_from = pb.grasp + static_cast<int>(std::lround(1.0 / dt));
    std::vector<double> baseline;
    for (int i = base_from; i < n; ++i) {
        if (i >= lift_from && !baseline.empty() &&
            total[i] > 1.1 * detail::median_of(baseline)) {
            pb.lift = i;
            break;
        }
        baseline.push_back(total[i]);
    }
    if (pb.lift < 0) throw NoGraspError("no lift event found");

    const int min_len = static_cast<int>(std::lround(5.0 / dt));
    int best_a = -1, best_len = 0;
    for (int a = pb.lift; a < n; ++a) {
        if (total[a] <= 0.5) continue;
        double sum = 0, mn = total[a], mx = total[a];
        for (int b = a; b < n && total[b] > 0.5; ++b) {
            sum += total[b];
            mn = std::min(mn, total[b]);
            mx = std::max(mx, total[b]);
            const int len = b - a + 1;
            const double mean = sum / len;
            if (len >= min_len && mn >= 0.9 * mean && mx <= 1.1 * mean && len > best_len) {
                best_len = len;
                best_a = a;
            }
        }
    }
    if (best_a < 0) throw NoGraspError("no stable hold window found");
    pb.hold_begin = best_a;
    pb.hold_end = best_a + best_len;

    pb.replace = detail::sustained_above(thumb, 0.5, pb.hold_end, k02, false);
    if (pb.replace < 0) throw NoGraspError("no replace event found");
    return pb;
}

// Hold window used for statistics: ground-truth labels when present,
// otherwise the detected boundaries.
inline std::pair<int, int> hold_window(const GraspTrial& t, const PhaseBoundaries& pb) {
    if (!t.labels.empty()) {
        int first = -1, last = -1;
        for (int i = 0; i < static_cast<int>(t.labels.size()); ++i)
            if (t.labels[i] == Phase::Hold) {
                if (first < 0) first = i;
                last = i;
            }
        if (first >= 0) return {first, last + 1};
    }
    return {pb.hold_begin, pb.hold_end};
}

// ---------------------------------------------------------------------------
// Per-trial statistics

struct RmsError {
    double fx = 0, fy = 0, fz = 0, combined = 0;
};

inline RmsError rms_error(const std::vector<ForceVector>& a, const std::vector<ForceVector>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("rms_error: series must have equal nonzero length");
    double sx = 0, sy = 0, sz = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sx += (a[i].fx - b[i].fx) * (a[i].fx - b[i].fx);
        sy += (a[i].fy - b[i].fy) * (a[i].fy - b[i].fy);
        sz += (a[i].fz - b[i].fz) * (a[i].fz - b[i].fz);
    }
    RmsError r;
    const double n = double(a.size());
    r.fx = std::sqrt(sx / n);
    r.fy = std::sqrt(sy / n);
    r.fz = std::sqrt(sz / n);
    r.combined = std::sqrt((sx + sy + sz) / (3.0 * n));
    return r;
}

namespace detail {
inline void check_window(const std::array<std::vector<ForceVector>, 4>& series, int begin,
                         int end) {
    if (begin < 0 || end <= begin || end > static_cast<int>(series[0].size()))
        throw std::invalid_argument("invalid analysis window");
}
inline ForceVector window_mean(const std::vector<ForceVector>& s, int begin, int end) {
    ForceVector m{0, 0, 0};
    for (int i = begin; i < end; ++i) {
        m.fx += s[i].fx;
        m.fy += s[i].fy;
        m.fz += s[i].fz;
    }
    const double n = end - begin;
    return {m.fx / n, m.fy / n, m.fz / n};
}
}  // namespace detail

struct EquilibriumGap {
    double normal_pct = 0.0;
    double shear_pct = 0.0;
};

// Relative force-balance mismatch between the thumb and the opposing fingers
// over a window, in percent of the thumb force.
inline EquilibriumGap equilibrium_gap(const std::array<std::vector<ForceVector>, 4>& series,
                                      int begin, int end) {
    detail::check_window(series, begin, end);
    std::array<ForceVector, 4> m;
    for (int f = 0; f < 4; ++f) m[f] = detail::window_mean(series[f], begin, end);
    EquilibriumGap g;
    const double thumb_n = m[0].fz;
    if (std::abs(thumb_n) < 1e-6) throw UndefinedGapError("thumb normal force is zero");
    g.normal_pct = std::abs(thumb_n - (m[1].fz + m[2].fz + m[3].fz)) / std::abs(thumb_n) * 100.0;
    const double tsx = m[0].fx, tsy = m[0].fy;
    const double thumb_s = std::hypot(tsx, tsy);
    if (thumb_s < 1e-6) throw UndefinedGapError("thumb shear force is zero");
    const double dx = tsx - (m[1].fx + m[2].fx + m[3].fx);
    const double dy = tsy - (m[1].fy + m[2].fy + m[3].fy);
    g.shear_pct = std::hypot(dx, dy) / thumb_s * 100.0;
    return g;
}

struct FingerShares {
    std::array<double, 3> normal_pct{};  // index, middle, ring
    std::array<double, 3> shear_pct{};
};

inline FingerShares normalize_shares(const std::array<std::vector<ForceVector>, 4>& series,
                                     int begin, int end) {
    detail::check_window(series, begin, end);
    FingerShares out;
    double tn = 0, ts = 0;
    std::array<double, 3> nrm, shr;
    for (int f = 1; f < 4; ++f) {
        const ForceVector m = detail::window_mean(series[f], begin, end);
        nrm[f - 1] = m.fz;
        shr[f - 1] = std::hypot(m.fx, m.fy);
        tn += nrm[f - 1];
        ts += shr[f - 1];
    }
    if (tn <= 0 || ts <= 0) throw UndefinedGapError("finger forces vanish over the window");
    for (int i = 0; i < 3; ++i) {
        out.normal_pct[i] = nrm[i] / tn * 100.0;
        out.shear_pct[i] = shr[i] / ts * 100.0;
    }
    return out;
}

// Sample variance (n-1) of the three finger hold means: low values mean the
// load is split evenly.
inline double balance_variance(const std::array<std::vector<ForceVector>, 4>& series, int begin,
                               int end) {
    detail::check_window(series, begin, end);
    std::array<double, 3> m;
    for (int f = 1; f < 4; ++f) m[f - 1] = detail::window_mean(series[f], begin, end).fz;
    const double mean = (m[0] + m[1] + m[2]) / 3.0;
    return ((m[0] - mean) * (m[0] - mean) + (m[1] - mean) * (m[1] - mean) +
            (m[2] - mean) * (m[2] - mean)) /
           2.0;
}

// Per-finger steadiness: sample standard deviation of the normal force.
inline std::array<double, 4> steadiness(const std::array<std::vector<ForceVector>, 4>& series,
                                        int begin, int end) {
    detail::check_window(series, begin, end);
    if (end - begin < 2) throw std::invalid_argument("steadiness: window too short");
    std::array<double, 4> out{};
    for (int f = 0; f < 4; ++f) {
        const double mean = detail::window_mean(series[f], begin, end).fz;
        double acc = 0;
        for (int i = begin; i < end; ++i)
            acc += (series[f][i].fz - mean) * (series[f][i].fz - mean);
        out[f] = std::sqrt(acc / (end - begin - 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mann-Whitney u test

enum class MwMode { Exact, NormalApprox };

struct MwResult {
    double u1 = 0, u2 = 0, u = 0;
    double p = 1.0;
    MwMode mode = MwMode::Exact;
};

namespace detail {

inline std::vector<double> midranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * (double(i + 1) + double(j + 1));  // average of 1-based ranks
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double u_from_ranks(const std::vector<double>& ranks, const std::vector<std::size_t>& idx,
                           std::size_t n1, std::size_t n2, double* u1_out, double* u2_out) {
    double r1 = 0;
    for (std::size_t i : idx) r1 += ranks[i];
    const double u1 = r1 - double(n1) * double(n1 + 1) / 2.0;
    const double u2 = double(n1) * double(n2) - u1;
    if (u1_out) *u1_out = u1;
    if (u2_out) *u2_out = u2;
    return std::min(u1, u2);
}

inline double choose(std::size_t n, std::size_t k) {
    double c = 1.0;
    for (std::size_t i = 0; i < k; ++i) c = c * double(n - i) / double(i + 1);
    return c;
}

}  // namespace detail

// Two-sided Mann-Whitney u. The exact mode enumerates every split of the
// pooled observations into the two group sizes and counts splits whose
// statistic is at most the observed one. Ties use midranks in both modes; the
// normal mode applies the tie-corrected variance and a continuity correction.
inline MwResult mann_whitney_u(const std::vector<double>& xs, const std::vector<double>& ys,
                               MwMode mode) {
    const std::size_t n1 = xs.size(), n2 = ys.size(), n = n1 + n2;
    if (n1 == 0 || n2 == 0) throw std::invalid_argument("mann_whitney_u: empty sample");
    std::vector<double> pooled = xs;
    pooled.insert(pooled.end(), ys.begin(), ys.end());
    const std::vector<double> ranks = detail::midranks(pooled);

    std::vector<std::size_t> idx(n1);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    MwResult res;
    res.mode = mode;
    res.u = detail::u_from_ranks(ranks, idx, n1, n2, &res.u1, &res.u2);

    if (mode == MwMode::Exact) {
        if (detail::choose(n, n1) > 2e6)
            throw std::invalid_argument("mann_whitney_u: exact enumeration too large");
        long long hits = 0, total = 0;
        for (;;) {
            const double u = detail::u_from_ranks(ranks, idx, n1, n2, nullptr, nullptr);
            if (u <= res.u + 1e-12) ++hits;
            ++total;
            // next n1-combination of {0..n-1}
            int i = static_cast<int>(n1) - 1;
            while (i >= 0 && idx[i] == i + n - n1) --i;
            if (i < 0) break;
            ++idx[i];
            for (std::size_t j = i + 1; j < n1; ++j) idx[j] = idx[j - 1] + 1;
        }
        res.p = double(hits) / double(total);
        return res;
    }

    // tie-corrected normal approximation with continuity correction
    const double mu = double(n1) * double(n2) / 2.0;
    double tie = 0.0;
    {
        std::vector<double> sorted = pooled;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = double(j - i + 1);
            tie += t * t * t - t;
            i = j + 1;
        }
    }
    const double var = double(n1) * double(n2) / 12.0 *
                       (double(n + 1) - tie / (double(n) * double(n - 1)));
    if (var <= 0) {
        res.p = 1.0;  // all observations identical
        return res;
    }
    const double z = (res.u - mu + 0.5) / std::sqrt(var);
    res.p = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
    return res;
}

// ---------------------------------------------------------------------------
// Report across trials

struct TrialStats {
    std::string id;
    Scenario scenario = Scenario::Constrained;
    PhaseBoundaries bounds;
    double dt = 0.05;
    double hold_duration_s = 0.0;  // from the statistics window
    std::array<double, 4> hold_mean_normal{};
    std::array<double, 4> hold_mean_shear{};
    std::array<double, 4> steady{};
    double balance = 0.0;
    EquilibriumGap gap;
    FingerShares shares;
    bool has_reference = false;
    RmsError rms_pooled;
    std::array<RmsError, 4> rms_finger;
};

struct ConditionAggregate {
    int trials = 0;
    std::array<double, 4> mean_normal{};
    std::array<double, 4> mean_shear{};
    std::array<double, 4> mean_steadiness{};
    double mean_balance = 0.0;
    double mean_gap_normal = 0.0, mean_gap_shear = 0.0;
};

struct SignificanceEntry {
    std::string metric;
    double u = 0.0, p = 1.0;
    bool significant = false;  // alpha = 0.05
    std::string direction;     // which condition has the larger mean
};

struct Report {
    std::vector<TrialStats> trials;
    ConditionAggregate constrained, unconstrained;
    std::vector<SignificanceEntry> tests;
};

inline TrialStats trial_stats(const GraspTrial& t) {
    TrialStats s;
    s.id = t.id;
    s.scenario = t.scenario;
    s.dt = t.dt;
    s.bounds = detect_phases(t.series, t.dt);
    const auto [wb, we] = hold_window(t, s.bounds);
    s.hold_duration_s = (we - wb) * t.dt;
    for (int f = 0; f < 4; ++f) {
        const ForceVector m = detail::window_mean(t.series[f], wb, we);
        s.hold_mean_normal[f] = m.fz;
        s.hold_mean_shear[f] = std::hypot(m.fx, m.fy);
    }
    s.steady = steadiness(t.series, wb, we);
    s.balance = balance_variance(t.series, wb, we);
    s.gap = equilibrium_gap(t.series, wb, we);
    s.shares = normalize_shares(t.series, wb, we);
    s.has_reference = !t.reference[0].empty();
    if (s.has_reference) {
        double acc = 0;
        for (int f = 0; f < 4; ++f) {
            s.rms_finger[f] = rms_error(t.series[f], t.reference[f]);
            acc += s.rms_finger[f].combined * s.rms_finger[f].combined;
        }
        s.rms_pooled.combined = std::sqrt(acc / 4.0);
    }
    return s;
}

inline Report trial_report(const std::vector<GraspTrial>& trials) {
    Report rep;
    int nc = 0, nu = 0;
    for (const auto& t : trials) (t.scenario == Scenario::Constrained ? nc : nu) += 1;
    if (nc < 2 || nu < 2)
        throw std::invalid_argument("trial_report: need at least two trials per condition");
    for (const auto& t : trials) rep.trials.push_back(trial_stats(t));

    auto aggregate = [&](Scenario sc) {
        ConditionAggregate a;
        for (const auto& s : rep.trials) {
            if (s.scenario != sc) continue;
            ++a.trials;
            for (int f = 0; f < 4; ++f) {
                a.mean_normal[f] += s.hold_mean_normal[f];
                a.mean_shear[f] += s.hold_mean_shear[f];
                a.mean_steadiness[f] += s.steady[f];
            }
            a.mean_balance += s.balance;
            a.mean_gap_normal += s.gap.normal_pct;
            a.mean_gap_shear += s.gap.shear_pct;
        }
        for (int f = 0; f < 4; ++f) {
            a.mean_normal[f] /= a.trials;
            a.mean_shear[f] /= a.trials;
            a.mean_steadiness[f] /= a.trials;
        }
        a.mean_balance /= a.trials;
        a.mean_gap_normal /= a.trials;
        a.mean_gap_shear /= a.trials;
        return a;
    };
    rep.constrained = aggregate(Scenario::Constrained);
    rep.unconstrained = aggregate(Scenario::Unconstrained);

    auto collect = [&](Scenario sc, auto&& get) {
        std::vector<double> v;
        for (const auto& s : rep.trials)
            if (s.scenario == sc) v.push_back(get(s));
        return v;
    };
    auto add_test = [&](const std::string& metric, auto&& get) {
        const std::vector<double> xs = collect(Scenario::Constrained, get);
        const std::vector<double> ys = collect(Scenario::Unconstrained, get);
        const MwMode mode = detail::choose(xs.size() + ys.size(), xs.size()) <= 2e6
                                ? MwMode::Exact
                                : MwMode::NormalApprox;
        const MwResult r = mann_whitney_u(xs, ys, mode);
        SignificanceEntry e;
        e.metric = metric;
        e.u = r.u;
        e.p = r.p;
        e.significant = r.p < 0.05;
        const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
        const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
        e.direction = mx > my ? "constrained_greater" : "unconstrained_greater";
        rep.tests.push_back(e);
    };
    for (int f = 0; f < 4; ++f)
        add_test(std::string("normal_") + kFingerNames[f],
                 [f](const TrialStats& s) { return s.hold_mean_normal[f]; });
    for (int f = 0; f < 4; ++f)
        add_test(std::string("shear_") + kFingerNames[f],
                 [f](const TrialStats& s) { return s.hold_mean_shear[f]; });
    add_test("balance", [](const TrialStats& s) { return s.balance; });
    for (int f = 0; f < 4; ++f)
        add_test(std::string("steadiness_") + kFingerNames[f],
                 [f](const TrialStats& s) { return s.steady[f]; });

    // residual check when every trial carries a reference: thumb RMS against
    // the pooled per-finger RMS
    bool all_ref = true;
    for (const auto& s : rep.trials) all_ref = all_ref && s.has_reference;
    if (all_ref && !rep.trials.empty()) {
        std::vector<double> thumb_rms, finger_rms;
        for (const auto& s : rep.trials) {
            thumb_rms.push_back(s.rms_finger[0].combined);
            for (int f = 1; f < 4; ++f) finger_rms.push_back(s.rms_finger[f].combined);
        }
        const MwMode mode = detail::choose(thumb_rms.size() + finger_rms.size(),
                                           thumb_rms.size()) <= 2e6
                                ? MwMode::Exact
                                : MwMode::NormalApprox;
        const MwResult r = mann_whitney_u(thumb_rms, finger_rms, mode);
        SignificanceEntry e;
        e.metric = "residual_thumb_vs_fingers";
        e.u = r.u;
        e.p = r.p;
        e.significant = r.p < 0.05;
        const double mx =
            std::accumulate(thumb_rms.begin(), thumb_rms.end(), 0.0) / thumb_rms.size();
        const double my =
            std::accumulate(finger_rms.begin(), finger_rms.end(), 0.0) / finger_rms.size();
        e.direction = mx > my ? "thumb_greater" : "fingers_greater";
        rep.tests.push_back(e);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {
inline nlohmann::json rms_json(const RmsError& r) {
    return {{"fx", r.fx}, {"fy", r.fy}, {"fz", r.fz}, {"combined", r.combined}};
}
inline RmsError json_rms(const nlohmann::json& j) {
    return {j.at("fx"), j.at("fy"), j.at("fz"), j.at("combined")};
}
}  // namespace detail

inline nlohmann::json report_to_json(const Report& rep) {
    nlohmann::json j;
    j["schema"] = "grasp-report/1";
    auto arr = nlohmann::json::array();
    for (const auto& s : rep.trials) {
        nlohmann::json t;
        t["id"] = s.id;
        t["scenario"] = scenario_name(s.scenario);
        t["dt_s"] = s.dt;
        t["boundaries"] = {{"grasp", s.bounds.grasp},
                           {"lift", s.bounds.lift},
                           {"hold_begin", s.bounds.hold_begin},
                           {"hold_end", s.bounds.hold_end},
                           {"replace", s.bounds.replace}};
        t["hold_duration_s"] = s.hold_duration_s;
        t["hold_mean_normal_n"] = s.hold_mean_normal;
        t["hold_mean_shear_n"] = s.hold_mean_shear;
        t["steadiness_n"] = s.steady;
        t["balance_n2"] = s.balance;
        t["gap_normal_pct"] = s.gap.normal_pct;
        t["gap_shear_pct"] = s.gap.shear_pct;
        t["share_normal_pct"] = s.shares.normal_pct;
        t["share_shear_pct"] = s.shares.shear_pct;
        t["has_reference"] = s.has_reference;
        if (s.has_reference) {
            t["rms_pooled"] = detail::rms_json(s.rms_pooled);
            auto fr = nlohmann::json::array();
            for (const auto& r : s.rms_finger) fr.push_back(detail::rms_json(r));
            t["rms_finger"] = fr;
        }
        arr.push_back(t);
    }
    j["trials"] = arr;
    auto agg = [&](const ConditionAggregate& a) {
        nlohmann::json g;
        g["trials"] = a.trials;
        g["mean_normal_n"] = a.mean_normal;
        g["mean_shear_n"] = a.mean_shear;
        g["mean_steadiness_n"] = a.mean_steadiness;
        g["mean_balance_n2"] = a.mean_balance;
        g["mean_gap_normal_pct"] = a.mean_gap_normal;
        g["mean_gap_shear_pct"] = a.mean_gap_shear;
        return g;
    };
    j["constrained"] = agg(rep.constrained);
    j["unconstrained"] = agg(rep.unconstrained);
    auto ts = nlohmann::json::array();
    for (const auto& e : rep.tests)
        ts.push_back({{"metric", e.metric},
                      {"u", e.u},
                      {"p", e.p},
                      {"significant", e.significant},
                      {"direction", e.direction}});
    j["tests"] = ts;
    return j;
}

inline Report report_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "grasp-report/1") throw FormatError("unexpected report schema");
    Report rep;
    for (const auto& t : j.at("trials")) {
        TrialStats s;
        s.id = t.at("id").get<std::string>();
        s.scenario = scenario_from_name(t.at("scenario").get<std::string>());
        s.dt = t.at("dt_s").get<double>();
        const auto& b = t.at("boundaries");
        s.bounds.grasp = b.at("grasp");
        s.bounds.lift = b.at("lift");
        s.bounds.hold_begin = b.at("hold_begin");
        s.bounds.hold_end = b.at("hold_end");
        s.bounds.replace = b.at("replace");
        s.hold_duration_s = t.at("hold_duration_s").get<double>();
        s.hold_mean_normal = t.at("hold_mean_normal_n").get<std::array<double, 4>>();
        s.hold_mean_shear = t.at("hold_mean_shear_n").get<std::array<double, 4>>();
        s.steady = t.at("steadiness_n").get<std::array<double, 4>>();
        s.balance = t.at("balance_n2").get<double>();
        s.gap.normal_pct = t.at("gap_normal_pct").get<double>();
        s.gap.shear_pct = t.at("gap_shear_pct").get<double>();
        s.shares.normal_pct = t.at("share_normal_pct").get<std::array<double, 3>>();
        s.shares.shear_pct = t.at("share_shear_pct").get<std::array<double, 3>>();
        s.has_reference = t.at("has_reference").get<bool>();
        if (s.has_reference) {
            s.rms_pooled = detail::json_rms(t.at("rms_pooled"));
            for (int f = 0; f < 4; ++f) s.rms_finger[f] = detail::json_rms(t.at("rms_finger").at(f));
        }
        rep.trials.push_back(s);
    }
    auto agg = [&](const nlohmann::json& g) {
        ConditionAggregate a;
        a.trials = g.at("trials");
        a.mean_normal = g.at("mean_normal_n").get<std::array<double, 4>>();
        a.mean_shear = g.at("mean_shear_n").get<std::array<double, 4>>();
        a.mean_steadiness = g.at("mean_steadiness_n").get<std::array<double, 4>>();
        a.mean_balance = g.at("mean_balance_n2").get<double>();
        a.mean_gap_normal = g.at("mean_gap_normal_pct").get<double>();
        a.mean_gap_shear = g.at("mean_gap_shear_pct").get<double>();
        return a;
    };
    rep.constrained = agg(j.at("constrained"));
    rep.unconstrained = agg(j.at("unconstrained"));
    for (const auto& t : j.at("tests")) {
        SignificanceEntry e;
        e.metric = t.at("metric").get<std::string>();
        e.u = t.at("u").get<double>();
        e.p = t.at("p").get<double>();
        e.significant = t.at("significant").get<bool>();
        e.direction = t.at("direction").get<std::string>();
        rep.tests.push_back(e);
    }
    return rep;
}

inline void write_report_json(const Report& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << report_to_json(rep).dump(2) << "\n";
}

inline Report read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad report file " + path + ": " + e.what());
    }
    return report_from_json(j);
}

inline void write_report_csv(const Report& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "id,scenario,grasp_s,lift_s,hold_begin_s,hold_end_s,replace_s,hold_duration_s,"
           "thumb_normal_n,index_normal_n,middle_normal_n,ring_normal_n,"
           "thumb_shear_n,index_shear_n,middle_shear_n,ring_shear_n,"
           "balance_n2,steadiness_thumb_n,steadiness_index_n,steadiness_middle_n,"
           "steadiness_ring_n,gap_normal_pct,gap_shear_pct,"
           "share_index_pct,share_middle_pct,share_ring_pct,"
           "shear_share_index_pct,shear_share_middle_pct,shear_share_ring_pct,rms_combined_n\n";
    char buf[1024];
    for (const auto& s : rep.trials) {
        std::snprintf(
            buf, sizeof buf,
            "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,"
            "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
            s.id.c_str(), scenario_name(s.scenario), s.bounds.grasp * s.dt, s.bounds.lift * s.dt,
            s.bounds.hold_begin * s.dt, s.bounds.hold_end * s.dt, s.bounds.replace * s.dt,
            s.hold_duration_s, s.hold_mean_normal[0], s.hold_mean_normal[1], s.hold_mean_normal[2],
            s.hold_mean_normal[3], s.hold_mean_shear[0], s.hold_mean_shear[1], s.hold_mean_shear[2],
            s.hold_mean_shear[3], s.balance, s.steady[0], s.steady[1], s.steady[2], s.steady[3],
            s.gap.normal_pct, s.gap.shear_pct, s.shares.normal_pct[0], s.shares.normal_pct[1],
            s.shares.normal_pct[2], s.shares.shear_pct[0], s.shares.shear_pct[1],
            s.shares.shear_pct[2], s.has_reference ? s.rms_pooled.combined : 0.0);
        out << buf;
    }
    out << "\nmetric,u,p,significant,direction\n";
    for (const auto& e : rep.tests) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%d,%s\n", e.metric.c_str(), e.u, e.p,
                      e.significant ? 1 : 0, e.direction.c_str());
        out << buf;
    }
}

// Grouped bar chart of hold-phase mean normal force per finger with error
// bars (std across trials), one bar per condition.
inline void write_report_svg(const Report& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");

    std::array<std::array<double, 4>, 2> mean{}, sd{};
    std::array<int, 2> cnt{};
    for (const auto& s : rep.trials) {
        const int c = s.scenario == Scenario::Constrained ? 0 : 1;
        ++cnt[c];
        for (int f = 0; f < 4; ++f) mean[c][f] += s.hold_mean_normal[f];
    }
    for (int c = 0; c < 2; ++c)
        for (int f = 0; f < 4; ++f) mean[c][f] /= std::max(1, cnt[c]);
    for (const auto& s : rep.trials) {
        const int c = s.scenario == Scenario::Constrained ? 0 : 1;
        for (int f = 0; f < 4; ++f)
            sd[c][f] += (s.hold_mean_normal[f] - mean[c][f]) * (s.hold_mean_normal[f] - mean[c][f]);
    }
    for (int c = 0; c < 2; ++c)
        for (int f = 0; f < 4; ++f) sd[c][f] = cnt[c] > 1 ? std::sqrt(sd[c][f] / (cnt[c] - 1)) : 0.0;

    double top = 0;
    for (int c = 0; c < 2; ++c)
        for (int f = 0; f < 4; ++f) top = std::max(top, mean[c][f] + sd[c][f]);
    top = top <= 0 ? 1.0 : top * 1.15;

    const double W = 640, H = 400, ml = 60, mr = 20, mt = 40, mb = 50;
    const double plot_w = W - ml - mr, plot_h = H - mt - mb;
    auto ypix = [&](double v) { return mt + plot_h * (1.0 - v / top); };
    char buf[512];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
    out << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">Hold-phase mean normal force by finger</text>\n";
    // axes
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#000\"/>\n", ml,
                  mt, ml, mt + plot_h);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#000\"/>\n", ml,
                  mt + plot_h, ml + plot_w, mt + plot_h);
    out << buf;
    for (int g = 0; g <= 4; ++g) {
        const double v = top * g / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\" font-family=\"sans-serif\" "
                      "font-size=\"11\">%.2f</text>\n",
                      ml - 6, ypix(v) + 4, v);
        out << buf;
    }
    const char* fill[2] = {"#4878a8", "#d0803c"};
    for (int f = 0; f < 4; ++f) {
        const double gx = ml + plot_w * (f + 0.5) / 4.0;
        for (int c = 0; c < 2; ++c) {
            const double bw = 32, bx = gx + (c == 0 ? -bw - 4 : 4);
            const double by = ypix(mean[c][f]);
            std::snprintf(buf, sizeof buf,
                          "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                          "fill=\"%s\"/>\n",
                          bx, by, bw, mt + plot_h - by, fill[c]);
            out << buf;
            if (sd[c][f] > 0) {
                const double cx_ = bx + bw / 2.0;
                std::snprintf(
                    buf, sizeof buf,
                    "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#000\"/>\n",
                    cx_, ypix(mean[c][f] + sd[c][f]), cx_, ypix(mean[c][f] - sd[c][f]));
                out << buf;
            }
        }
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" "
                      "font-family=\"sans-serif\" font-size=\"12\">%s</text>\n",
                      gx, mt + plot_h + 18, kFingerNames[f]);
        out << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"12\" height=\"12\" fill=\"%s\"/>"
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\">"
                  "constrained</text>\n",
                  ml + 10.0, mt + 6.0, fill[0], ml + 26.0, mt + 16.0);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"12\" height=\"12\" fill=\"%s\"/>"
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\">"
                  "unconstrained</text>\n",
                  ml + 130.0, mt + 6.0, fill[1], ml + 146.0, mt + 16.0);
    out << buf;
    out << "</svg>\n";
}

}  // namespace nailgrasp
