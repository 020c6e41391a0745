// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance <path to drorl_cli> <configs directory>

#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <unistd.h>

using namespace drorl;
using drorl::testing::random_q;
using drorl::testing::random_simplex;
using drorl::testing::random_vector;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

constexpr std::array<Divergence, 4> kAll{Divergence::TV, Divergence::Wasserstein, Divergence::KL,
                                         Divergence::ChiSquare};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double median_at(const std::vector<Series>& series, const std::string& label, std::size_t n) {
    for (const auto& s : series)
        if (s.label == label)
            for (const auto& p : s.points)
                if (p.N == n) return p.median;
    throw Error("no summary point for " + label + " at N=" + std::to_string(n));
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome oracle_equivalence() {
    std::mt19937_64 rng(1);
    std::string detail;
    bool pass = true;
    for (auto kind : kAll) {
        const bool smooth = kind == Divergence::KL || kind == Divergence::ChiSquare;
        const double tol = smooth ? 1e-4 : 1e-6;
        double worst = 0.0;
        for (int t = 0; t < 1000; ++t) {
            const std::size_t n = 2 + rng() % 3;
            const Vector p = random_simplex(rng, n, !smooth), v = random_vector(rng, n, 0.0, 10.0);
            const double rho = random_vector(rng, 1, 0.0, smooth ? 1.5 : 1.0)[0];
            worst = std::max(worst, std::abs(worst_case_mean(kind, p, v, rho) - oracle_worst_case(p, v, rho, kind)));
        }
        pass &= worst <= tol;
        detail += std::string(to_string(kind)) + " max err " + fmt("%.2e", worst) + "; ";
    }
    return {pass, detail};
}

Outcome contraction_monotonicity() {
    std::mt19937_64 rng(2);
    const double gamma = 0.9, vmax = 1.0 / (1.0 - gamma);
    std::size_t violations = 0;
    for (auto kind : kAll)
        for (int t = 0; t < 500; ++t) {
            const std::uint64_t seed = static_cast<std::uint64_t>(t);
            const TabularMDP m = build_random_mdp(5, 3, seed, 0.5, gamma);
            const BehaviorDistribution mu =
                behavior_partial(Policy::deterministic({0, 1, 2, 0, 1}, 3), 5, 3);
            const Counts c = tally(sample_dataset_iid(m, mu, 10 + seed % 200, seed), 5, 3);
            const AmbiguityModel amb = build_ambiguity(c, make_kind(kind), 0.1);
            const QFunction q1 = random_q(rng, 5, 3, vmax), q2 = random_q(rng, 5, 3, vmax);
            const QFunction t1 = robust_bellman_backup(q1, amb, m.rewards(), gamma);
            const QFunction t2 = robust_bellman_backup(q2, amb, m.rewards(), gamma);
            if (sup_norm_diff(t1.values(), t2.values()) > gamma * sup_norm_diff(q1.values(), q2.values()) + 1e-9)
                ++violations;
            QFunction hi = q1;
            for (std::size_t k = 0; k < 15; ++k) hi.values()[k] = std::max(q1.values()[k], q2.values()[k]);
            const QFunction th = robust_bellman_backup(hi, amb, m.rewards(), gamma);
            for (std::size_t k = 0; k < 15; ++k)
                if (t1.values()[k] > th.values()[k] + 1e-9 || t2.values()[k] > th.values()[k] + 1e-9) {
                    ++violations;
                    break;
                }
        }
    return {violations == 0, "2000 pairs, " + std::to_string(violations) + " violations"};
}

Outcome zero_radius_reduction() {
    std::size_t mismatches = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t ns = 3 + seed % 6, na = 2 + seed % 3;
        const TabularMDP m = build_random_mdp(ns, na, seed, 0.5, 0.95);
        std::vector<std::size_t> acts(ns);
        for (std::size_t s = 0; s < ns; ++s) acts[s] = (s * 7 + seed) % na;
        const Counts c =
            tally(sample_dataset_iid(m, behavior_partial(Policy::deterministic(acts, na), ns, na), 100 + 50 * seed, seed),
                  ns, na);
        for (auto kind : kAll) {
            AmbiguityModel amb = build_ambiguity(c, make_kind(kind), 0.1);
            std::fill(amb.radii.begin(), amb.radii.end(), 0.0);
            const SolveReport robust = drqi(amb, m.rewards(), m.gamma(), {});
            const SolveReport plain = evi(amb.center, m.rewards(), m.gamma(), {});
            mismatches += !(robust.q == plain.q);
        }
    }
    return {mismatches == 0, "20 datasets x 4 kinds, " + std::to_string(mismatches) + " non-identical Q tables"};
}

Outcome membership() {
    const TabularMDP m = build_random_mdp(5, 2, 0);
    std::string detail;
    bool pass = true;
    for (auto kind : kAll) {
        const double freq = run_membership(m, make_kind(kind), 50, 0.2, 200, 0);
        pass &= freq >= 0.8;
        detail += std::string(to_string(kind)) + " " + fmt("%.3f", freq) + "; ";
    }
    return {pass, detail + "target 0.8"};
}

struct SweepSummary {
    std::vector<Series> series;
    double v_star = 0.0;
};

SweepSummary sweep_summary(const std::filesystem::path& config) {
    const ExperimentConfig cfg = load_config(config.string());
    const SweepResult res = run_sweep(cfg);
    if (!res.errors.empty()) throw Error(std::to_string(res.errors.size()) + " sweep rows failed");
    return {summarize(res.rows), make_environment(cfg.env).optimal_value()};
}

Outcome fig1_milestone(const SweepSummary& s) {
    const double drqi = median_at(s.series, "drqi-tv", 10000), evi = median_at(s.series, "evi", 100000);
    const bool pass = drqi < 0.1 * s.v_star && drqi < evi;
    return {pass, "DRQI-TV median at N=1e4 " + fmt("%.4g", drqi) + ", 10% of V* " + fmt("%.4g", 0.1 * s.v_star) +
                      ", EVI median at N=1e5 " + fmt("%.4g", evi)};
}

Outcome fig2_milestone(const SweepSummary& s) {
    const double drqi = median_at(s.series, "drqi-tv", 100000), evi = median_at(s.series, "evi", 100000);
    const double bound = 0.01 * s.v_star;
    return {drqi < bound && evi < bound, "medians at N=1e5: DRQI-TV " + fmt("%.4g", drqi) + ", EVI " +
                                             fmt("%.4g", evi) + ", 1% of V* " + fmt("%.4g", bound)};
}

Outcome scaling_slope(const SweepSummary& s) {
    std::vector<double> xs, ys;
    for (const auto& series : s.series) {
        if (series.label != "drqi-tv") continue;
        for (const auto& p : series.points)
            if (p.N >= 1000 && p.N <= 100000 && p.median > 0.0) {
                xs.push_back(std::log(static_cast<double>(p.N)));
                ys.push_back(std::log(p.median));
            }
    }
    if (xs.size() < 2) return {false, "fewer than two non-zero medians"};
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const double slope = sxy / sxx;
    return {slope >= -1.2 && slope <= -0.3,
            "full coverage, " + std::to_string(xs.size()) + " points, slope " + fmt("%.3f", slope)};
}

Outcome linear_equivalence() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const TabularMDP m = build_random_mdp(6, 2, 100 + seed, 1.0, 0.9);
        const LinearMDPSpec spec = linear_from_tabular(m);
        const OfflineDataset ds = sample_dataset_generative(m, 5000 / 12, seed);
        LinearSolveConfig cfg;
        cfg.lambda = 1e-10;
        cfg.c1 = 0.0;
        const SolveReport lin = lm_drqi(ds, spec.phi, spec.theta, m.gamma(), cfg);
        const SolveReport tab = evi(empirical_estimator(tally(ds, 6, 2)), m.rewards(), m.gamma(), {});
        worst = std::max(worst, sup_norm_diff(lin.q.values(), tab.q.values()));
    }
    return {worst <= 1e-5, "max |Q_lin - Q_evi| " + fmt("%.2e", worst)};
}

Outcome determinism(const std::string& cli, const std::filesystem::path& config) {
    const ExperimentConfig cfg = load_config(config.string());
    std::ostringstream a, b;
    emit_csv(a, run_sweep(cfg, 1).rows);
    emit_csv(b, run_sweep(cfg, 8).rows);
    const bool in_process = a.str() == b.str();

    const auto tmp = std::filesystem::temp_directory_path() / ("drorl-acceptance-" + std::to_string(::getpid()));
    std::filesystem::create_directories(tmp);
    std::vector<std::string> csvs;
    for (int workers : {1, 8, 1}) {
        const auto out = tmp / ("w" + std::to_string(workers) + "-" + std::to_string(csvs.size()));
        const std::string cmd = "\"" + cli + "\" sweep --config \"" + config.string() + "\" --out \"" + out.string() +
                                "\" --workers " + std::to_string(workers) + " > /dev/null";
        if (std::system(cmd.c_str()) != 0) throw Error("command failed: " + cmd);
        csvs.push_back(slurp(out / "results.csv"));
    }
    std::filesystem::remove_all(tmp);
    const bool cli_same = csvs[0] == csvs[1] && csvs[1] == csvs[2];
    const bool matches_library = csvs[0] == a.str();
    return {in_process && cli_same && matches_library,
            std::string("in-process 1 vs 8 workers ") + (in_process ? "identical" : "differ") + ", CLI runs " +
                (cli_same ? "identical" : "differ") + ", CLI vs library " + (matches_library ? "identical" : "differ")};
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: acceptance <drorl_cli> <configs dir>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const std::filesystem::path configs = argv[2];

    int failures = 0;
    auto run = [&](int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (limit_s > 0.0 && secs > limit_s) {
            o.pass = false;
            o.detail += " over the " + fmt("%.0f", limit_s) + " s budget";
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << " ("
                  << fmt("%.1f", secs) << " s)" << std::endl;
    };

    run(1, "worst-case solvers match the brute-force oracle", 120, oracle_equivalence);
    run(2, "robust backup is a monotone gamma-contraction", 60, contraction_monotonicity);
    run(3, "zero radii reduce DRQI to empirical value iteration", 0, zero_radius_reduction);
    run(4, "true kernel lies in the data-driven set", 300, membership);

    std::optional<SweepSummary> full;
    run(5, "partial coverage: DRQI-TV beats EVI", 900,
        [&] { return fig1_milestone(sweep_summary(configs / "fig1_partial.json")); });
    run(6, "full coverage: DRQI-TV and EVI near optimal", 900, [&] {
        full = sweep_summary(configs / "fig2_full.json");
        return fig2_milestone(*full);
    });
    run(7, "suboptimality decays at a polynomial rate in N", 0, [&] {
        if (!full) throw Error("full-coverage sweep unavailable");
        return scaling_slope(*full);
    });
    run(8, "one-hot linear DRQI matches tabular EVI", 120, linear_equivalence);
    run(9, "sweep output is byte-identical across worker counts", 0,
        [&] { return determinism(cli, configs / "reference.json"); });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
