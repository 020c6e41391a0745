#pragma once

// Brute-force reference for the worst-case mean. Shares no code with the
// closed-form and dual solvers in worst_case.hpp.

#include "drorl/error.hpp"
#include "drorl/uncertainty.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace drorl {

/// Divergence D(q, p) of a candidate q from the center p, by definition.
inline double divergence(Divergence d, std::span<const double> q, std::span<const double> p) {
    double acc = 0.0;
    switch (d) {
    case Divergence::TV:
        for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(q[i] - p[i]);
        return 0.5 * acc;
    case Divergence::Wasserstein: {
        // Discrete ground metric: the best coupling leaves min(q_i, p_i) on the diagonal.
        double stay = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) stay += std::min(q[i], p[i]);
        return std::max(0.0, 1.0 - stay);
    }
    case Divergence::KL:
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (q[i] <= 0.0) continue;
            if (p[i] <= 0.0) return std::numeric_limits<double>::infinity();
            acc += q[i] * std::log(q[i] / p[i]);
        }
        return acc;
    case Divergence::ChiSquare:
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] <= 0.0) {
                if (q[i] > 0.0) return std::numeric_limits<double>::infinity();
                continue;
            }
            acc += (q[i] - p[i]) * (q[i] - p[i]) / p[i];
        }
        return acc;
    }
    return acc;
}

namespace detail {

class OracleSearch {
public:
    OracleSearch(std::span<const double> p, std::span<const double> v, double rho, Divergence kind)
        : p_(p), v_(v), rho_(rho), kind_(kind), n_(p.size()) {
        std::copy(p.begin(), p.end(), origin_.begin());
        // Helmert basis of the sum-zero subspace.
        for (std::size_t k = 1; k < n_; ++k) {
            std::array<double, 4> b{};
            const double scale = 1.0 / std::sqrt(static_cast<double>(k * (k + 1)));
            for (std::size_t i = 0; i < k; ++i) b[i] = scale;
            b[k] = -static_cast<double>(k) * scale;
            basis_.push_back(b);
        }
    }

    bool feasible(std::span<const double> q) const {
        return divergence(kind_, q, p_) <= rho_ * (1.0 + 1e-12) + 1e-15;
    }

    double value(std::span<const double> q) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_; ++i) acc += q[i] * v_[i];
        return acc;
    }

    /// Calls f on every point of the regular grid {k / m} on the simplex.
    template <class F>
    void for_each_grid_point(std::size_t m, F&& f) const {
        std::array<double, 4> q{};
        std::array<std::size_t, 4> k{};
        const double h = 1.0 / static_cast<double>(m);
        // Enumerate compositions of m into n parts.
        auto recurse = [&](auto&& self, std::size_t i, std::size_t left) -> void {
            if (i + 1 == n_) {
                k[i] = left;
                for (std::size_t j = 0; j < n_; ++j) q[j] = static_cast<double>(k[j]) * h;
                f(std::span<const double>(q.data(), n_));
                return;
            }
            for (std::size_t c = 0; c <= left; ++c) {
                k[i] = c;
                self(self, i + 1, left - c);
            }
        };
        recurse(recurse, 0, m);
    }

    /// Exhaustive sweep of the regular grid.
    double grid(std::size_t m) const {
        double best = std::numeric_limits<double>::infinity();
        for_each_grid_point(m, [&](std::span<const double> q) {
            if (feasible(q)) best = std::min(best, value(q));
        });
        return best;
    }

    /// Moves the ray origin to the mean of the feasible grid points, which
    /// lies inside the (convex) feasible set and away from the simplex faces
    /// when the set is wide enough to contain several grid points.
    void recenter(std::size_t m) {
        std::array<double, 4> sum{};
        std::size_t count = 0;
        for_each_grid_point(m, [&](std::span<const double> q) {
            if (!feasible(q)) return;
            for (std::size_t i = 0; i < n_; ++i) sum[i] += q[i];
            ++count;
        });
        if (count <= n_) return;
        std::array<double, 4> c{};
        for (std::size_t i = 0; i < n_; ++i) c[i] = sum[i] / static_cast<double>(count);
        if (feasible(std::span<const double>(c.data(), n_))) origin_ = c;
    }

    /// Boundary point of the feasible set hit by the ray from p along the
    /// sum-zero direction with Helmert coordinates w; returns its value.
    double ray(const std::array<double, 3>& w) const {
        std::array<double, 4> u{};
        for (std::size_t k = 0; k + 1 < n_; ++k)
            for (std::size_t i = 0; i < n_; ++i) u[i] += w[k] * basis_[k][i];

        double s_max = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n_; ++i)
            if (u[i] < 0.0) s_max = std::min(s_max, origin_[i] / -u[i]);
        if (!std::isfinite(s_max)) s_max = 0.0;

        std::array<double, 4> q{};
        auto at = [&](double s) {
            for (std::size_t i = 0; i < n_; ++i) q[i] = std::max(0.0, origin_[i] + s * u[i]);
            return std::span<const double>(q.data(), n_);
        };
        double s = s_max;
        if (!feasible(at(s_max))) {
            // The origin is feasible and the set is convex, so feasibility
            // along the ray is an interval starting at s = 0.
            double lo = 0.0, hi = s_max;
            for (int it = 0; it < 64; ++it) {
                const double mid = 0.5 * (lo + hi);
                (feasible(at(mid)) ? lo : hi) = mid;
            }
            s = lo;
        }
        return value(at(s));
    }

    /// Same ray, direction given by polar angles.
    double ray(double theta, double phi) const {
        if (n_ == 2) return ray({theta < std::numbers::pi ? 1.0 : -1.0, 0.0, 0.0});
        if (n_ == 3) return ray({std::cos(theta), std::sin(theta), 0.0});
        return ray({std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta), std::cos(phi)});
    }

    /// Coarse sweep over directions, then Nelder-Mead in Cartesian direction
    /// space from each of the best few (no pole degeneracy).
    double radial() const {
        if (n_ == 2) return std::min(ray(0.0, 0.0), ray(4.0, 0.0));
        const double two_pi = 2.0 * std::numbers::pi;
        const std::size_t n_theta = n_ == 3 ? 720 : 96;
        const std::size_t n_phi = n_ == 3 ? 1 : 48;
        std::vector<std::pair<double, std::array<double, 3>>> coarse;
        for (std::size_t i = 0; i < n_theta; ++i)
            for (std::size_t j = 0; j < n_phi; ++j) {
                const double t = two_pi * static_cast<double>(i) / static_cast<double>(n_theta);
                const double ph = n_ == 3 ? 0.0 : std::numbers::pi * (static_cast<double>(j) + 0.5) /
                                                      static_cast<double>(n_phi);
                const std::array<double, 3> w = n_ == 3 ? std::array<double, 3>{std::cos(t), std::sin(t), 0.0}
                                                        : std::array<double, 3>{std::sin(ph) * std::cos(t),
                                                                                std::sin(ph) * std::sin(t), std::cos(ph)};
                coarse.emplace_back(ray(w), w);
            }
        const std::size_t starts = std::min<std::size_t>(4, coarse.size());
        std::partial_sort(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(starts), coarse.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });

        double best = coarse.front().first;
        for (std::size_t k = 0; k < starts; ++k) {
            std::array<double, 3> w = coarse[k].second;
            // Restarting from the best vertex guards against early collapse.
            for (double scale : {0.1, 0.01, 0.001}) best = std::min(best, nelder_mead(w, scale));
        }
        return best;
    }

    /// Nelder-Mead over unnormalized Helmert coordinates (the ray value only
    /// depends on the direction). Updates w to the best point found.
    double nelder_mead(std::array<double, 3>& w, double scale) const {
        const std::size_t dim = n_ - 1;
        using Point = std::array<double, 3>;
        std::vector<std::pair<double, Point>> simplex;
        simplex.emplace_back(ray(w), w);
        for (std::size_t i = 0; i < dim; ++i) {
            Point x = w;
            x[i] += scale;
            simplex.emplace_back(ray(x), x);
        }
        auto blend = [&](const Point& a, const Point& b, double t) {
            Point out{};
            for (std::size_t i = 0; i < dim; ++i) out[i] = a[i] + t * (b[i] - a[i]);
            return out;
        };
        auto by_value = [](const auto& x, const auto& y) { return x.first < y.first; };
        for (int it = 0; it < 2000; ++it) {
            std::sort(simplex.begin(), simplex.end(), by_value);
            double size = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < dim; ++i) norm += simplex[0].second[i] * simplex[0].second[i];
            for (std::size_t j = 1; j <= dim; ++j)
                for (std::size_t i = 0; i < dim; ++i)
                    size = std::max(size, std::abs(simplex[j].second[i] - simplex[0].second[i]));
            if (size <= 1e-12 * std::sqrt(norm)) break;

            Point centroid{};
            for (std::size_t j = 0; j < dim; ++j)
                for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[j].second[i] / static_cast<double>(dim);
            auto& worst = simplex[dim];
            const Point refl = blend(centroid, worst.second, -1.0);
            const double fr = ray(refl);
            if (fr < simplex[0].first) {
                const Point exp = blend(centroid, worst.second, -2.0);
                const double fe = ray(exp);
                worst = fe < fr ? std::pair{fe, exp} : std::pair{fr, refl};
            } else if (fr < simplex[dim - 1].first) {
                worst = {fr, refl};
            } else {
                const Point con = blend(centroid, worst.second, fr < worst.first ? -0.5 : 0.5);
                const double fc = ray(con);
                if (fc < std::min(fr, worst.first)) {
                    worst = {fc, con};
                } else {
                    for (std::size_t j = 1; j <= dim; ++j) {
                        simplex[j].second = blend(simplex[0].second, simplex[j].second, 0.5);
                        simplex[j].first = ray(simplex[j].second);
                    }
                }
            }
        }
        const auto& top = *std::min_element(simplex.begin(), simplex.end(), by_value);
        w = top.second;
        return top.first;
    }

    /// Polyhedral sets only (TV, Wasserstein): the minimum of a linear
    /// objective sits at a vertex, so enumerate every basic solution of the
    /// set written in standard form {x >= 0 : A x = b}.
    double vertices() const {
        const std::size_t n = n_;
        Eigen::MatrixXd a;
        Eigen::VectorXd b;
        if (kind_ == Divergence::TV) {
            // q = p + x - y with sum x = sum y <= rho; t = q >= 0 as slacks.
            a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n + 2), static_cast<Eigen::Index>(3 * n + 1));
            b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n + 2));
            for (std::size_t i = 0; i < n; ++i) {
                const auto xi = static_cast<Eigen::Index>(i), yi = static_cast<Eigen::Index>(n + i);
                const auto ti = static_cast<Eigen::Index>(2 * n + 1 + i), row = static_cast<Eigen::Index>(2 + i);
                a(0, xi) = 1.0;
                a(0, yi) = -1.0;
                a(1, xi) = 1.0;
                a(row, xi) = 1.0;
                a(row, yi) = -1.0;
                a(row, ti) = -1.0;
                b(row) = -p_[i];
            }
            a(1, static_cast<Eigen::Index>(2 * n)) = 1.0;
            b(1) = rho_;
        } else if (kind_ == Divergence::Wasserstein) {
            // Couplings pi(i <- j) with source marginal p and off-diagonal mass <= rho.
            a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(n * n + 1));
            b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n + 1));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const auto col = static_cast<Eigen::Index>(i * n + j);
                    a(static_cast<Eigen::Index>(j), col) = 1.0;
                    if (i != j) a(static_cast<Eigen::Index>(n), col) = 1.0;
                }
            for (std::size_t j = 0; j < n; ++j) b(static_cast<Eigen::Index>(j)) = p_[j];
            a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n * n)) = 1.0;
            b(static_cast<Eigen::Index>(n)) = rho_;
        } else {
            return std::numeric_limits<double>::infinity();
        }

        const auto m = a.rows(), k = a.cols();
        std::vector<bool> pick(static_cast<std::size_t>(k), false);
        std::fill(pick.begin(), pick.begin() + m, true);
        Eigen::MatrixXd basis(m, m);
        std::vector<Eigen::Index> cols(static_cast<std::size_t>(m));
        std::array<double, 4> q{};
        double best = std::numeric_limits<double>::infinity();
        do {
            Eigen::Index c = 0;
            for (Eigen::Index j = 0; j < k; ++j)
                if (pick[static_cast<std::size_t>(j)]) cols[static_cast<std::size_t>(c)] = j, basis.col(c++) = a.col(j);
            Eigen::FullPivLU<Eigen::MatrixXd> lu(basis);
            if (lu.rank() < m) continue;
            const Eigen::VectorXd xb = lu.solve(b);
            if (xb.minCoeff() < -1e-12 || (basis * xb - b).cwiseAbs().maxCoeff() > 1e-10) continue;
            Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
            for (Eigen::Index t = 0; t < m; ++t) x(cols[static_cast<std::size_t>(t)]) = std::max(0.0, xb(t));
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (kind_ == Divergence::TV) {
                    q[i] = p_[i] + x(static_cast<Eigen::Index>(i)) - x(static_cast<Eigen::Index>(n + i));
                } else {
                    q[i] = 0.0;
                    for (std::size_t j = 0; j < n; ++j) q[i] += x(static_cast<Eigen::Index>(i * n + j));
                }
                q[i] = std::max(0.0, q[i]);
                total += q[i];
            }
            for (std::size_t i = 0; i < n; ++i) q[i] /= total;
            const std::span<const double> qs(q.data(), n);
            if (feasible(qs)) best = std::min(best, value(qs));
        } while (std::prev_permutation(pick.begin(), pick.end()));
        return best;
    }

private:
    std::span<const double> p_;
    std::span<const double> v_;
    double rho_;
    Divergence kind_;
    std::size_t n_;
    std::vector<std::array<double, 4>> basis_;
    std::array<double, 4> origin_{}; // ray origin, p unless recentered
};

} // namespace detail

/// Brute-force min of E_P[V] over {P in simplex : D(P, p) <= rho} for
/// dimension <= 4. Combines an exhaustive regular simplex grid (at most
/// grid_steps per axis, capped so the sweep stays tractable in 3 and 4
/// dimensions) with a refined sweep over boundary points along rays from p
/// and from an interior point of the set, and, for the polyhedral sets, an enumeration of every vertex.
/// Every candidate is feasible, so the result never undercuts the optimum.
inline double oracle_worst_case(std::span<const double> p, std::span<const double> v, double rho,
                                Divergence kind, std::size_t grid_steps = 2000) {
    if (p.size() != v.size() || p.empty()) throw ValidationError("oracle: size mismatch");
    if (p.size() > 4) throw UnsupportedError("oracle_worst_case supports dimension <= 4");
    if (grid_steps < 200) throw ValidationError("oracle_worst_case: grid_steps must be >= 200");
    if (!(rho >= 0.0)) throw ValidationError("oracle: rho must be >= 0");

    detail::OracleSearch search(p, v, rho, kind);
    double best = search.value(p);
    if (p.size() == 1 || rho == 0.0) return best;

    const std::size_t cap = p.size() == 2 ? grid_steps : p.size() == 3 ? 200 : 48;
    best = std::min(best, search.grid(std::min(grid_steps, cap)));
    best = std::min(best, search.radial());
    if (p.size() > 2) {
        search.recenter(p.size() == 3 ? 100 : 24);
        best = std::min(best, search.radial());
    }
    best = std::min(best, search.vertices());
    return best;
}

} // namespace drorl
