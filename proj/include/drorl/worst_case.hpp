#pragma once

// Inner problem of the robust backup: inf E_P[V] over a divergence ball
// around a nominal distribution p, restricted to the probability simplex.

#include "drorl/error.hpp"
#include "drorl/tabular_mdp.hpp"
#include "drorl/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace drorl {

/// Optional diagnostics from a worst-case solve.
struct SolverDiagnostics {
    int iterations = 0;
    double multiplier = 0.0;          // dual variable at the returned point (KL: lambda, chi2: 1/(2 lambda))
    double achieved_divergence = 0.0; // divergence of the returned minimizer, where one is formed
    bool closed_form = false;
};

namespace detail {

inline void check_inputs(std::span<const double> p, std::span<const double> v, double rho,
                         const char* who) {
    if (p.size() != v.size() || p.empty())
        throw ValidationError(std::string(who) + ": p and V must have the same non-zero size");
    if (!in_simplex(p, 1e-9)) throw ValidationError(std::string(who) + ": p is not in the simplex");
    for (double x : v)
        if (!std::isfinite(x)) throw ValidationError(std::string(who) + ": V must be finite");
    if (!(rho >= 0.0) || std::isnan(rho)) throw ValidationError(std::string(who) + ": rho must be >= 0");
}

inline void check_positive(std::span<const double> p, const char* who) {
    for (double x : p)
        if (!(x > 0.0)) throw ValidationError(std::string(who) + ": center must be strictly positive");
}

/// Index of the smallest entry, lowest index on ties.
inline std::size_t argmin_index(std::span<const double> v) {
    return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

inline double clamp_result(double x, std::span<const double> v, double mean) {
    const double lo = *std::min_element(v.begin(), v.end());
    return std::clamp(x, lo, std::max(lo, mean));
}

} // namespace detail

/// Total variation ball, (1/2)||P - p||_1 <= rho. Exact: moves up to rho mass
/// from the highest-valued states onto the lowest-valued one.
inline double worst_case_mean_tv(std::span<const double> p, std::span<const double> v, double rho,
                                 SolverDiagnostics* diag = nullptr) {
    detail::check_inputs(p, v, rho, "worst_case_mean_tv");
    if (diag) *diag = SolverDiagnostics{0, 0.0, 0.0, true};
    if (rho == 0.0) return expected_value(p, v);

    const std::size_t n = p.size();
    const std::size_t lowest = detail::argmin_index(v);
    const double budget = std::min(rho, std::max(0.0, 1.0 - p[lowest]));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return v[i] > v[j]; });

    std::vector<double> q(p.begin(), p.end());
    double remaining = budget;
    for (std::size_t i : order) {
        if (remaining <= 0.0) break;
        if (i == lowest) continue;
        const double take = std::min(remaining, q[i]);
        q[i] -= take;
        remaining -= take;
    }
    q[lowest] += budget - remaining;
    if (diag) diag->achieved_divergence = budget - remaining;
    return expected_value(q, v);
}

/// Order-1 Wasserstein ball under the discrete metric 1{x != y}. The optimal
/// coupling keeps min(P, p) in place, so the transport cost equals the TV
/// distance and the solution coincides with worst_case_mean_tv.
inline double worst_case_mean_wasserstein(std::span<const double> p, std::span<const double> v,
                                          double rho, SolverDiagnostics* diag = nullptr) {
    return worst_case_mean_tv(p, v, rho, diag);
}

/// KL ball, KL(P || p) <= rho, through the one-dimensional dual
///   sup_{lambda > 0}  -lambda log E_p[exp(-V / lambda)] - lambda rho,
/// maximized by golden-section search on lambda.
inline double worst_case_mean_kl(std::span<const double> p, std::span<const double> v, double rho,
                                 SolverDiagnostics* diag = nullptr) {
    detail::check_inputs(p, v, rho, "worst_case_mean_kl");
    detail::check_positive(p, "worst_case_mean_kl");
    if (diag) *diag = SolverDiagnostics{};
    const double mean = expected_value(p, v);
    const double vmin = *std::min_element(v.begin(), v.end());
    const double vmax = *std::max_element(v.begin(), v.end());
    if (rho == 0.0 || vmax == vmin) {
        if (diag) diag->closed_form = true;
        return mean;
    }

    // log-sum-exp shifted by vmin keeps every exponent <= 0.
    auto dual = [&](double lambda) {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * std::exp(-(v[i] - vmin) / lambda);
        return vmin - lambda * std::log(acc) - lambda * rho;
    };

    const double rho_eff = std::max(rho, 1e-12);
    double lo = 1e-8;
    double hi = std::max(lo, (vmax - vmin + 1.0) / rho_eff);
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = dual(x1), f2 = dual(x2);
    double best_x = lo, best = dual(lo);
    if (const double fh = dual(hi); fh > best) best = fh, best_x = hi;
    int it = 0;
    for (; it < 1000 && hi - lo > 1e-10; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2, f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = dual(x2);
        } else {
            hi = x2;
            x2 = x1, f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = dual(x1);
        }
    }
    if (f1 > best) best = f1, best_x = x1;
    if (f2 > best) best = f2, best_x = x2;

    if (diag) {
        diag->iterations = it;
        diag->multiplier = best_x;
        // Primal minimizer P ~ p exp(-V / lambda).
        double z = 0.0;
        std::vector<double> w(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) z += w[i] = p[i] * std::exp(-(v[i] - vmin) / best_x);
        double kl = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double q = w[i] / z;
            if (q > 0.0) kl += q * std::log(q / p[i]);
        }
        diag->achieved_divergence = kl;
    }
    return detail::clamp_result(best, v, mean);
}

namespace detail {

/// Minimizer of the chi-square Lagrangian for a fixed inverse multiplier t:
///   P_i = p_i * max(0, 1 + t (eta - V_i)),  with eta chosen so sum P = 1.
/// `order` sorts states by ascending V.
inline void chi2_water_fill(std::span<const double> p, std::span<const double> v,
                            const std::vector<std::size_t>& order, double t, std::vector<double>& out) {
    const std::size_t n = p.size();
    double mass = 0.0, moment = 0.0, eta = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        mass += p[i];
        moment += p[i] * v[i];
        eta = ((1.0 - mass) / t + moment) / mass;
        if (k + 1 == n || 1.0 + t * (eta - v[order[k + 1]]) <= 0.0) break;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = p[i] * std::max(0.0, 1.0 + t * (eta - v[i]));
}

inline double chi2_divergence(std::span<const double> q, std::span<const double> p) {
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += (q[i] - p[i]) * (q[i] - p[i]) / p[i];
    return d;
}

} // namespace detail

/// Chi-square ball, sum (P - p)^2 / p <= rho. Uses the closed form
/// E_p[V] - sqrt(rho Var_p[V]) when it stays nonnegative; otherwise bisects
/// the multiplier with the water-filling inner solution.
inline double worst_case_mean_chi2(std::span<const double> p, std::span<const double> v, double rho,
                                   SolverDiagnostics* diag = nullptr) {
    detail::check_inputs(p, v, rho, "worst_case_mean_chi2");
    detail::check_positive(p, "worst_case_mean_chi2");
    if (diag) *diag = SolverDiagnostics{};
    const std::size_t n = p.size();
    const double mean = expected_value(p, v);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += p[i] * (v[i] - mean) * (v[i] - mean);
    if (rho == 0.0 || var <= 0.0) {
        if (diag) diag->closed_form = true;
        return mean;
    }

    const double vmax = *std::max_element(v.begin(), v.end());
    const double vmin = *std::min_element(v.begin(), v.end());
    const double t_interior = std::sqrt(rho / var);
    if (t_interior * (vmax - mean) <= 1.0) {
        if (diag) *diag = SolverDiagnostics{0, t_interior, rho, true};
        return detail::clamp_result(mean - std::sqrt(rho * var), v, mean);
    }

    // All mass on argmin V (in proportion to p) is the limit t -> infinity.
    double low_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (v[i] == vmin) low_mass += p[i];
    if (rho >= 1.0 / low_mass - 1.0) {
        if (diag) *diag = SolverDiagnostics{0, INFINITY, 1.0 / low_mass - 1.0, true};
        return vmin;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });

    std::vector<double> q(n);
    auto divergence_at = [&](double t) {
        detail::chi2_water_fill(p, v, order, t, q);
        return detail::chi2_divergence(q, p);
    };

    double lo = 0.0, hi = t_interior;
    int it = 0;
    while (divergence_at(hi) < rho && it < 200) lo = hi, hi *= 2.0, ++it;
    double t = hi;
    for (; it < 400; ++it) {
        t = 0.5 * (lo + hi);
        const double d = divergence_at(t);
        if (std::abs(d - rho) <= 1e-9 || hi - lo <= 1e-15 * hi) break;
        (d < rho ? lo : hi) = t;
    }
    const double d = divergence_at(t);
    if (diag) *diag = SolverDiagnostics{it, t, d, false};
    return detail::clamp_result(expected_value(q, v), v, mean);
}

/// Dispatch on the set kind.
inline double worst_case_mean(Divergence d, std::span<const double> p, std::span<const double> v,
                              double rho, SolverDiagnostics* diag = nullptr) {
    switch (d) {
    case Divergence::TV: return worst_case_mean_tv(p, v, rho, diag);
    case Divergence::Wasserstein: return worst_case_mean_wasserstein(p, v, rho, diag);
    case Divergence::KL: return worst_case_mean_kl(p, v, rho, diag);
    case Divergence::ChiSquare: return worst_case_mean_chi2(p, v, rho, diag);
    }
    throw ValidationError("unknown uncertainty kind");
}

} // namespace drorl
