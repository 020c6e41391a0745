#pragma once

#include "drorl/error.hpp"
#include "drorl/offline_data.hpp"
#include "drorl/tabular_mdp.hpp"
#include "drorl/uncertainty.hpp"
#include "drorl/worst_case.hpp"

#include <cmath>
#include <span>
#include <string>

namespace drorl {

/// Data-driven rectangular uncertainty set: one ball per (s, a) around the
/// estimated kernel, with radii from the visit counts.
struct AmbiguityModel {
    UncertaintyKind kind;
    EmpiricalModel center;
    Vector radii; // [s * n_actions + a]
    double delta = 0.1;
    std::uint64_t n_total = 0;

    std::size_t n_states() const noexcept { return center.n_states(); }
    std::size_t n_actions() const noexcept { return center.n_actions(); }
    double radius(std::size_t s, std::size_t a) const { return radii[s * n_actions() + a]; }
};

/// Smoothing level of the add-L center used by each smoothed set.
inline double center_smoothing(Divergence d, double delta) {
    if (d == Divergence::KL) return 1.0;
    if (d == Divergence::ChiSquare) return std::log(1.0 / delta);
    return 0.0;
}

/// Empirical center for TV / Wasserstein, add-L for KL (L = 1) and
/// chi-square (L = log(1/delta)); radii from the kind's schedule.
inline AmbiguityModel build_ambiguity(const Counts& counts, const UncertaintyKind& kind, double delta) {
    detail::check_delta(delta);
    AmbiguityModel amb;
    amb.kind = kind;
    amb.delta = delta;
    amb.n_total = counts.total;
    amb.center = kind.smoothed_center()
                     ? add_L_estimator(counts, center_smoothing(kind.divergence, delta))
                     : empirical_estimator(counts);
    amb.radii.resize(counts.pair.size());
    for (std::size_t k = 0; k < counts.pair.size(); ++k)
        amb.radii[k] = radius_for(kind, counts.pair[k], counts.total, counts.n_states,
                                  counts.n_actions, delta);
    return amb;
}

/// (T Q)(s, a) = r(s, a) + gamma * inf_{P in ball(s, a)} E_P[max_b Q(s', b)].
inline QFunction robust_bellman_backup(const QFunction& q, const AmbiguityModel& amb,
                                       std::span<const double> rewards, double gamma) {
    const std::size_t ns = amb.n_states(), na = amb.n_actions();
    if (q.n_states() != ns || q.n_actions() != na || rewards.size() != ns * na)
        throw ValidationError("robust_bellman_backup: dimension mismatch");
    const Vector v = greedy_values(q);
    QFunction out(ns, na);
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) {
            try {
                out(s, a) = rewards[s * na + a] +
                            gamma * worst_case_mean(amb.kind.divergence, amb.center.row(s, a), v,
                                                    amb.radius(s, a));
            } catch (const Error& e) {
                throw NumericError("robust backup at (" + std::to_string(s) + ", " +
                                   std::to_string(a) + "): " + e.what());
            }
        }
    return out;
}

} // namespace drorl
