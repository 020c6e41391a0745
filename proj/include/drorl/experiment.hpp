#pragma once

// Experiment harness: configuration, sweeps over (algorithm, N, seed), and
// membership-frequency experiments for the data-driven uncertainty sets.

#include "drorl/environments.hpp"
#include "drorl/error.hpp"
#include "drorl/offline_data.hpp"
#include "drorl/oracle.hpp"
#include "drorl/random.hpp"
#include "drorl/robust_backup.hpp"
#include "drorl/solvers.hpp"
#include "drorl/tabular_mdp.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace drorl {

enum class Coverage { Full, Partial };

/// Source-state distribution of the partial-coverage behavior data.
enum class StateMarginal {
    NonTerminal, // uniform over tiles that are neither holes nor goals
    Uniform,     // uniform over every state
    Occupancy,   // discounted state occupancy of the optimal policy
};

struct AlgorithmSpec {
    std::string name = "drqi"; // drqi | evi | vi_lcb
    Divergence kind = Divergence::TV;
    double constant = 1.0;     // radius constant for wasserstein / kl / chi2
    double c_b = 1.0;          // vi_lcb penalty constant

    std::string kind_label() const { return name == "drqi" ? std::string(to_string(kind)) : "none"; }
    std::string label() const { return name == "drqi" ? name + "-" + kind_label() : name; }
};

struct ExperimentConfig {
    struct Env {
        std::string map = "builtin:4x4";
        double gamma = 0.95;
        SlipMode slip_mode = SlipMode::Slippery;
        double goal_reward = 1.0;
    } env;
    struct Data {
        Coverage coverage = Coverage::Partial;
        std::vector<std::size_t> N{100, 316, 1000, 3162, 10000, 31623, 100000};
        std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        StateMarginal state_marginal = StateMarginal::NonTerminal;
    } data;
    std::vector<AlgorithmSpec> algorithms{AlgorithmSpec{}};
    struct Solve {
        std::optional<std::size_t> K;
        std::optional<double> tol;
        double delta = 0.1;
    } solve;
    struct Output {
        std::string directory = "out";
        bool plot = true;
        bool record_runtime = true;
    } output;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;

    void validate() const {
        if (data.N.empty()) throw ValidationError("config: data.N must not be empty");
        for (std::size_t i = 0; i < data.N.size(); ++i) {
            if (data.N[i] == 0) throw ValidationError("config: data.N entries must be positive");
            if (i > 0 && data.N[i] <= data.N[i - 1])
                throw ValidationError("config: data.N must be strictly increasing");
        }
        auto sorted = data.seeds;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ValidationError("config: data.seeds must be distinct");
        if (data.seeds.empty()) throw ValidationError("config: data.seeds must not be empty");
        if (algorithms.empty()) throw ValidationError("config: algorithms must not be empty");
        for (const auto& a : algorithms)
            if (a.name != "drqi" && a.name != "evi" && a.name != "vi_lcb")
                throw ValidationError("config: unknown algorithm '" + a.name + "'");
        detail::check_delta(solve.delta);
        if (!(env.gamma > 0.0 && env.gamma < 1.0)) throw ValidationError("config: env.gamma must lie in (0, 1)");
    }
};

inline std::string_view to_string(Coverage c) { return c == Coverage::Full ? "full" : "partial"; }

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        if (j.contains("env")) {
            const auto& e = j.at("env");
            cfg.env.map = detail::get_or<std::string>(e, "map", cfg.env.map);
            cfg.env.gamma = detail::get_or(e, "gamma", cfg.env.gamma);
            cfg.env.goal_reward = detail::get_or(e, "goal_reward", cfg.env.goal_reward);
            const auto slip = detail::get_or<std::string>(e, "slip_mode", "slippery");
            if (slip == "slippery") cfg.env.slip_mode = SlipMode::Slippery;
            else if (slip == "deterministic") cfg.env.slip_mode = SlipMode::Deterministic;
            else throw ValidationError("config: env.slip_mode must be slippery or deterministic");
        }
        if (j.contains("data")) {
            const auto& d = j.at("data");
            const auto cov = detail::get_or<std::string>(d, "coverage", "partial");
            if (cov == "full") cfg.data.coverage = Coverage::Full;
            else if (cov == "partial") cfg.data.coverage = Coverage::Partial;
            else throw ValidationError("config: data.coverage must be full or partial");
            cfg.data.N = detail::get_or(d, "N", cfg.data.N);
            cfg.data.seeds = detail::get_or(d, "seeds", cfg.data.seeds);
            const auto marg = detail::get_or<std::string>(d, "state_marginal", "nonterminal");
            if (marg == "nonterminal") cfg.data.state_marginal = StateMarginal::NonTerminal;
            else if (marg == "uniform") cfg.data.state_marginal = StateMarginal::Uniform;
            else if (marg == "occupancy") cfg.data.state_marginal = StateMarginal::Occupancy;
            else throw ValidationError("config: data.state_marginal must be nonterminal, uniform or occupancy");
        }
        if (j.contains("algorithms")) {
            cfg.algorithms.clear();
            for (const auto& a : j.at("algorithms")) {
                AlgorithmSpec spec;
                spec.name = detail::get_or<std::string>(a, "name", "drqi");
                spec.kind = parse_divergence(detail::get_or<std::string>(a, "kind", "tv"));
                spec.constant = detail::get_or(a, "constant", 1.0);
                spec.c_b = detail::get_or(a, "c_b", 1.0);
                cfg.algorithms.push_back(spec);
            }
        }
        if (j.contains("solve")) {
            const auto& s = j.at("solve");
            if (s.contains("K") && !s.at("K").is_null()) cfg.solve.K = s.at("K").get<std::size_t>();
            if (s.contains("tol") && !s.at("tol").is_null()) cfg.solve.tol = s.at("tol").get<double>();
            cfg.solve.delta = detail::get_or(s, "delta", cfg.solve.delta);
        }
        if (j.contains("output")) {
            const auto& o = j.at("output");
            cfg.output.directory = detail::get_or<std::string>(o, "directory", cfg.output.directory);
            cfg.output.plot = detail::get_or(o, "plot", cfg.output.plot);
            cfg.output.record_runtime = detail::get_or(o, "record_runtime", cfg.output.record_runtime);
        }
        cfg.master_seed = detail::get_or<std::uint64_t>(j, "master_seed", cfg.master_seed);
        cfg.workers = detail::get_or<std::size_t>(j, "workers", cfg.workers);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), 0);
    }
    return parse_config(j);
}

/// Environment instance shared read-only by every row of a sweep.
struct Environment {
    std::string name;
    GridworldSpec grid;
    TabularMDP mdp;
    Policy pi_star;
    ValueFunction v_star;

    double optimal_value() const { return expected_initial_value(mdp, v_star); }
};

inline Environment make_environment(const ExperimentConfig::Env& env) {
    Environment out;
    if (env.map.rfind("builtin:", 0) == 0) {
        if (env.map != "builtin:4x4") throw ValidationError("unknown builtin map '" + env.map + "'");
        out.grid = frozenlake_4x4(env.slip_mode, env.gamma);
        out.name = "frozenlake4x4";
    } else {
        out.grid = load_map(env.map, env.slip_mode, env.gamma);
        out.name = std::filesystem::path(env.map).stem().string();
    }
    out.grid.goal_reward = env.goal_reward;
    out.mdp = build_frozenlake(out.grid);
    auto [q, pi] = value_iteration(out.mdp, 1e-12);
    out.pi_star = std::move(pi);
    out.v_star = policy_evaluation_exact(out.mdp, out.pi_star);
    return out;
}

inline BehaviorDistribution partial_behavior(const Environment& env, StateMarginal marginal) {
    const std::size_t ns = env.mdp.n_states(), na = env.mdp.n_actions();
    Vector m(ns, 0.0);
    switch (marginal) {
    case StateMarginal::Uniform: return behavior_partial(env.pi_star, ns, na);
    case StateMarginal::NonTerminal:
        for (std::size_t s = 0; s < ns; ++s)
            m[s] = (env.grid.tiles[s] == Tile::Hole || env.grid.tiles[s] == Tile::Goal) ? 0.0 : 1.0;
        break;
    case StateMarginal::Occupancy: {
        const auto d = occupancy_measure(env.mdp, env.pi_star);
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) m[s] += d(s, a);
        break;
    }
    }
    double sum = 0.0;
    for (double x : m) sum += x;
    for (double& x : m) x /= sum;
    return behavior_partial(env.pi_star, ns, na, std::span<const double>(m));
}

struct ResultRow {
    std::string algo;
    std::string kind;
    std::string env;
    std::string coverage;
    std::size_t N = 0;
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    double suboptimality = 0.0;
    double runtime_ms = 0.0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

struct RowError {
    std::string algo;
    std::size_t N = 0;
    std::uint64_t seed = 0;
    std::string message;
};

struct SweepResult {
    std::vector<ResultRow> rows;
    std::vector<RowError> errors;
};

/// Dataset seed of one row; independent of which other algorithms are configured.
inline std::uint64_t row_seed(std::uint64_t master, const AlgorithmSpec& algo, std::size_t n,
                              std::uint64_t seed) {
    return combine_seed(combine_seed(combine_seed(master, hash_label(algo.label())), n), seed);
}

inline OfflineDataset make_dataset(const Environment& env, const ExperimentConfig& cfg,
                                   const BehaviorDistribution& mu, std::size_t n, std::uint64_t seed) {
    if (cfg.data.coverage == Coverage::Full)
        return sample_dataset_generative(env.mdp, std::max<std::size_t>(1, n / env.mdp.n_pairs()), seed);
    return sample_dataset_iid(env.mdp, mu, n, seed);
}

/// Fits and solves one algorithm on one dataset.
inline SolveReport run_algorithm(const AlgorithmSpec& algo, const TabularMDP& mdp, const Counts& counts,
                                 const ExperimentConfig::Solve& solve) {
    SolveConfig sc;
    sc.max_iterations = solve.K;
    sc.tol = solve.tol;
    sc.delta = solve.delta;
    if (algo.name == "drqi") {
        sc.kind = make_kind(algo.kind, algo.constant);
        return drqi(build_ambiguity(counts, sc.kind, solve.delta), mdp.rewards(), mdp.gamma(), sc);
    }
    const EmpiricalModel model = empirical_estimator(counts);
    if (algo.name == "evi") return evi(model, mdp.rewards(), mdp.gamma(), sc);
    if (algo.name == "vi_lcb")
        return vi_lcb(model, counts, mdp.rewards(), mdp.gamma(), solve.delta, algo.c_b, sc);
    throw ValidationError("unknown algorithm '" + algo.name + "'");
}

/// Every (algorithm, N, seed) row, in that nested order, regardless of `workers`.
inline SweepResult run_sweep(const ExperimentConfig& cfg, std::optional<std::size_t> workers = {}) {
    cfg.validate();
    const Environment env = make_environment(cfg.env);
    const BehaviorDistribution mu = partial_behavior(env, cfg.data.state_marginal);

    struct Task {
        const AlgorithmSpec* algo;
        std::size_t n;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const auto& a : cfg.algorithms)
        for (std::size_t n : cfg.data.N)
            for (std::uint64_t seed : cfg.data.seeds) tasks.push_back({&a, n, seed});

    std::vector<std::optional<ResultRow>> rows(tasks.size());
    std::vector<std::optional<RowError>> errors(tasks.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& t = tasks[i];
            try {
                const auto start = std::chrono::steady_clock::now();
                const OfflineDataset ds =
                    make_dataset(env, cfg, mu, t.n, row_seed(cfg.master_seed, *t.algo, t.n, t.seed));
                const Counts counts = tally(ds, env.mdp.n_states(), env.mdp.n_actions());
                const SolveReport rep = run_algorithm(*t.algo, env.mdp, counts, cfg.solve);
                const double gap = suboptimality(env.mdp, rep.policy, env.v_star);
                const double ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
                rows[i] = ResultRow{t.algo->label(), t.algo->kind_label(), env.name,
                                    std::string(to_string(cfg.data.coverage)), t.n, t.seed,
                                    rep.iterations, gap, cfg.output.record_runtime ? ms : 0.0};
            } catch (const std::exception& e) {
                errors[i] = RowError{t.algo->label(), t.n, t.seed, e.what()};
            }
        }
    };

    const std::size_t n_workers = std::max<std::size_t>(1, workers.value_or(cfg.workers));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(n_workers, tasks.size()); ++w) pool.emplace_back(worker);
    }

    SweepResult out;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (rows[i]) out.rows.push_back(std::move(*rows[i]));
        if (errors[i]) out.errors.push_back(std::move(*errors[i]));
    }
    return out;
}

/// Fraction of trials in which the true kernel lies inside every (s, a)
/// ball of the data-driven set built from n_per_pair generative samples.
/// n_per_pair = 0 means no data at all, so every radius sits at its cap.
inline double run_membership(const TabularMDP& mdp, const UncertaintyKind& kind, std::size_t n_per_pair,
                             double delta, std::size_t trials, std::uint64_t seed) {
    if (trials < 50) throw ValidationError("run_membership: at least 50 trials required");
    detail::check_delta(delta);
    std::size_t hits = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const Counts counts =
            n_per_pair == 0 ? Counts(mdp.n_states(), mdp.n_actions())
                            : tally(sample_dataset_generative(mdp, n_per_pair, combine_seed(seed, trial)),
                                    mdp.n_states(), mdp.n_actions());
        const AmbiguityModel amb = build_ambiguity(counts, kind, delta);
        bool inside = true;
        for (std::size_t s = 0; s < mdp.n_states() && inside; ++s)
            for (std::size_t a = 0; a < mdp.n_actions() && inside; ++a)
                inside = divergence(kind.divergence, mdp.transition_row(s, a), amb.center.row(s, a)) <=
                         amb.radius(s, a);
        hits += inside;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
}

} // namespace drorl
