#pragma once

#include "drorl/error.hpp"
#include "drorl/offline_data.hpp"
#include "drorl/robust_backup.hpp"
#include "drorl/tabular_mdp.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>

namespace drorl {

struct SolveConfig {
    /// Iteration cap; unset means ceil(log(1 / ((1 - gamma)^2 tol)) / log(1 / gamma)).
    std::optional<std::size_t> max_iterations;
    /// Early stop once ||Q_{k+1} - Q_k||_inf <= tol; unset means (1 - gamma) * 1e-8.
    std::optional<double> tol;
    double delta = 0.1;
    UncertaintyKind kind = UncertaintyKind::tv();

    double resolved_tol(double gamma) const { return tol.value_or((1.0 - gamma) * 1e-8); }

    std::size_t resolved_iterations(double gamma) const {
        if (max_iterations) return *max_iterations;
        const double t = std::max(resolved_tol(gamma), 1e-300);
        const double k = std::ceil(std::log(1.0 / ((1.0 - gamma) * (1.0 - gamma) * t)) / std::log(1.0 / gamma));
        return static_cast<std::size_t>(std::max(1.0, k));
    }

    void validate() const {
        if (max_iterations && *max_iterations == 0) throw ValidationError("K must be at least 1");
        if (tol && !(*tol >= 0.0)) throw ValidationError("tol must be >= 0");
        detail::check_delta(delta);
    }
};

struct SolveReport {
    std::string algo;
    std::string kind = "none";
    QFunction q;
    Policy policy;
    std::size_t iterations = 0;
    Vector residuals;
    double wall_time_ms = 0.0;
    Vector weights; // linear solver only
};

namespace detail {

/// Q_0 = 0, Q_{k+1} = backup(Q_k) until K steps or the residual drops to tol.
template <class Backup>
SolveReport fixed_point(std::size_t ns, std::size_t na, Backup&& backup, std::size_t max_iter, double tol) {
    const auto start = std::chrono::steady_clock::now();
    SolveReport rep;
    QFunction q(ns, na);
    for (std::size_t k = 0; k < max_iter; ++k) {
        QFunction next = backup(q);
        for (double x : next.values())
            if (!std::isfinite(x)) throw NumericError("fixed-point iteration produced a non-finite value");
        const double res = sup_norm_diff(next.values(), q.values());
        q = std::move(next);
        rep.residuals.push_back(res);
        ++rep.iterations;
        if (res <= tol) break;
    }
    rep.policy = greedy_policy(q);
    rep.q = std::move(q);
    rep.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

inline void check_rewards(std::span<const double> rewards, std::size_t ns, std::size_t na) {
    if (rewards.size() != ns * na) throw ValidationError("reward table does not match the model");
}

} // namespace detail

/// Distributionally robust Q-iteration with the empirical robust Bellman operator.
inline SolveReport drqi(const AmbiguityModel& amb, std::span<const double> rewards, double gamma,
                        const SolveConfig& cfg) {
    cfg.validate();
    detail::check_rewards(rewards, amb.n_states(), amb.n_actions());
    auto rep = detail::fixed_point(
        amb.n_states(), amb.n_actions(),
        [&](const QFunction& q) { return robust_bellman_backup(q, amb, rewards, gamma); },
        cfg.resolved_iterations(gamma), cfg.resolved_tol(gamma));
    rep.algo = "drqi";
    rep.kind = std::string(to_string(amb.kind.divergence));
    return rep;
}

/// Empirical value iteration: plain value iteration on the estimated kernel.
inline SolveReport evi(const EmpiricalModel& model, std::span<const double> rewards, double gamma,
                       const SolveConfig& cfg) {
    cfg.validate();
    const std::size_t ns = model.n_states(), na = model.n_actions();
    detail::check_rewards(rewards, ns, na);
    auto rep = detail::fixed_point(
        ns, na,
        [&](const QFunction& q) {
            const Vector v = greedy_values(q);
            QFunction out(ns, na);
            for (std::size_t s = 0; s < ns; ++s)
                for (std::size_t a = 0; a < na; ++a)
                    out(s, a) = rewards[s * na + a] + gamma * expected_value(model.row(s, a), v);
            return out;
        },
        cfg.resolved_iterations(gamma), cfg.resolved_tol(gamma));
    rep.algo = "evi";
    return rep;
}

/// Hoeffding-style reward penalty of VI-LCB.
inline double lcb_penalty(std::uint64_t n_sa, std::uint64_t n_total, std::size_t ns, std::size_t na,
                          double gamma, double delta, double c_b) {
    const double horizon = 1.0 / (1.0 - gamma);
    const double log_term = std::log(2.0 * static_cast<double>(ns) * static_cast<double>(na) *
                                     static_cast<double>(std::max<std::uint64_t>(n_total, 1)) / delta);
    const double n = static_cast<double>(std::max<std::uint64_t>(n_sa, 1));
    return std::min(horizon, gamma * horizon * std::sqrt(c_b * log_term / n));
}

/// Value iteration on the empirical model with penalized rewards
/// r - b(s, a), clipping Q to [0, 1 / (1 - gamma)] at every step.
inline SolveReport vi_lcb(const EmpiricalModel& model, const Counts& counts, std::span<const double> rewards,
                          double gamma, double delta, double c_b, const SolveConfig& cfg) {
    cfg.validate();
    detail::check_delta(delta);
    if (!(c_b > 0.0)) throw ValidationError("vi_lcb: c_b must be positive");
    const std::size_t ns = model.n_states(), na = model.n_actions();
    detail::check_rewards(rewards, ns, na);
    Vector penalty(ns * na);
    for (std::size_t k = 0; k < ns * na; ++k)
        penalty[k] = lcb_penalty(counts.pair[k], counts.total, ns, na, gamma, delta, c_b);
    const double vmax = 1.0 / (1.0 - gamma);
    auto rep = detail::fixed_point(
        ns, na,
        [&](const QFunction& q) {
            const Vector v = greedy_values(q);
            QFunction out(ns, na);
            for (std::size_t s = 0; s < ns; ++s)
                for (std::size_t a = 0; a < na; ++a) {
                    const std::size_t k = s * na + a;
                    out(s, a) = std::clamp(
                        rewards[k] - penalty[k] + gamma * expected_value(model.row(s, a), v), 0.0, vmax);
                }
            return out;
        },
        cfg.resolved_iterations(gamma), cfg.resolved_tol(gamma));
    rep.algo = "vi_lcb";
    return rep;
}

// Report document: one "key values..." line per field.
inline void write_report(std::ostream& os, const SolveReport& rep) {
    os << "algo " << rep.algo << '\n';
    os << "kind " << rep.kind << '\n';
    os << "iterations " << rep.iterations << '\n';
    os << "residuals";
    for (double r : rep.residuals) {
        os << ' ';
        detail::write_real(os, r);
    }
    os << "\npolicy";
    for (std::size_t s = 0; s < rep.policy.n_states(); ++s) os << ' ' << rep.policy.action(s);
    os << '\n';
}

} // namespace drorl
