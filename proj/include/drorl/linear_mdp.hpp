#pragma once

// Linear MDPs: P(s'|s,a) = <phi(s,a), nu(s')>, r(s,a) = <phi(s,a), theta>,
// and robust Q-iteration over d-rectangular IPM balls around a ridge
// estimate of nu.

#include "drorl/error.hpp"
#include "drorl/offline_data.hpp"
#include "drorl/solvers.hpp"
#include "drorl/tabular_mdp.hpp"
#include "drorl/uncertainty.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>

namespace drorl {

/// Known feature map, phi(s, a) in R^d stored at [(s * n_actions + a) * d + i].
struct FeatureMap {
    std::size_t d = 0;
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    Vector values;

    std::span<const double> operator()(std::size_t s, std::size_t a) const {
        return {values.data() + (s * n_actions + a) * d, d};
    }

    double dot(std::size_t s, std::size_t a, std::span<const double> w) const {
        return expected_value((*this)(s, a), w);
    }
};

struct LinearMDPSpec {
    FeatureMap phi;
    Vector nu;    // d rows over states, [i * n_states + s']
    Vector theta; // d
    double gamma = 0.9;
    Vector d0;

    std::size_t d() const noexcept { return phi.d; }
    std::size_t n_states() const noexcept { return phi.n_states; }
    std::size_t n_actions() const noexcept { return phi.n_actions; }
    std::span<const double> nu_row(std::size_t i) const {
        return {nu.data() + i * n_states(), n_states()};
    }

    void validate() const {
        const std::size_t d = phi.d, ns = phi.n_states, na = phi.n_actions;
        if (d == 0 || ns == 0 || na == 0) throw ValidationError("linear MDP: empty dimensions");
        if (phi.values.size() != ns * na * d || nu.size() != d * ns || theta.size() != d || d0.size() != ns)
            throw ValidationError("linear MDP: array sizes do not match (d, n_states, n_actions)");
        for (std::size_t k = 0; k < ns * na; ++k) {
            std::span<const double> f(phi.values.data() + k * d, d);
            if (!detail::in_simplex(f, 1e-12))
                throw ValidationError("linear MDP: features must be nonnegative and sum to 1");
        }
        for (std::size_t i = 0; i < d; ++i)
            if (!detail::in_simplex(nu_row(i), 1e-12))
                throw ValidationError("linear MDP: nu rows must be distributions");
    }

    /// The tabular MDP this spec induces.
    TabularMDP induced_mdp() const {
        validate();
        const std::size_t d = phi.d, ns = phi.n_states, na = phi.n_actions;
        Vector trans(ns * na * ns, 0.0), rewards(ns * na, 0.0);
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                auto f = phi(s, a);
                double* row = trans.data() + (s * na + a) * ns;
                for (std::size_t i = 0; i < d; ++i) {
                    if (f[i] == 0.0) continue;
                    auto r = nu_row(i);
                    for (std::size_t t = 0; t < ns; ++t) row[t] += f[i] * r[t];
                }
                rewards[s * na + a] = std::clamp(expected_value(f, theta), 0.0, 1.0);
            }
        return TabularMDP(ns, na, std::move(trans), std::move(rewards), gamma, d0);
    }
};

enum class FeatureMode { Random, OneHot };

namespace detail {

inline void dirichlet_fill(std::mt19937_64& rng, double* out, std::size_t n) {
    std::gamma_distribution<double> g(1.0, 1.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += out[i] = g(rng);
    if (sum <= 0.0) {
        std::fill(out, out + n, 1.0 / static_cast<double>(n));
        return;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

} // namespace detail

/// Random linear MDP. Random mode draws phi(s, a) and every nu_i from flat
/// Dirichlet distributions; OneHot mode (d = |S||A|) uses indicator features
/// and so encodes an arbitrary tabular MDP.
inline LinearMDPSpec generate_linear_mdp(std::size_t d, std::size_t n_states, std::size_t n_actions,
                                         std::uint64_t seed, FeatureMode mode, double gamma = 0.9) {
    if (n_states == 0 || n_actions == 0 || d == 0) throw ValidationError("generate_linear_mdp: empty dimensions");
    if (mode == FeatureMode::OneHot && d != n_states * n_actions)
        throw ValidationError("generate_linear_mdp: OneHot needs d = n_states * n_actions");
    std::mt19937_64 rng(seed);
    LinearMDPSpec spec;
    spec.gamma = gamma;
    spec.phi = {d, n_states, n_actions, Vector(n_states * n_actions * d, 0.0)};
    if (mode == FeatureMode::OneHot) {
        for (std::size_t k = 0; k < n_states * n_actions; ++k) spec.phi.values[k * d + k] = 1.0;
    } else {
        for (std::size_t k = 0; k < n_states * n_actions; ++k)
            detail::dirichlet_fill(rng, spec.phi.values.data() + k * d, d);
    }
    spec.nu.resize(d * n_states);
    for (std::size_t i = 0; i < d; ++i) detail::dirichlet_fill(rng, spec.nu.data() + i * n_states, n_states);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    spec.theta.resize(d);
    for (auto& t : spec.theta) t = unif(rng);
    spec.d0.assign(n_states, 1.0 / static_cast<double>(n_states));
    spec.validate();
    return spec;
}

/// One-hot embedding of a tabular MDP.
inline LinearMDPSpec linear_from_tabular(const TabularMDP& mdp) {
    const std::size_t ns = mdp.n_states(), na = mdp.n_actions(), d = ns * na;
    LinearMDPSpec spec;
    spec.gamma = mdp.gamma();
    spec.phi = {d, ns, na, Vector(d * d, 0.0)};
    for (std::size_t k = 0; k < d; ++k) spec.phi.values[k * d + k] = 1.0;
    spec.nu = mdp.transitions();
    spec.theta = mdp.rewards();
    spec.d0 = mdp.d0();
    spec.validate();
    return spec;
}

/// Ridge estimate of the measures nu from offline data.
struct RidgeEstimate {
    std::size_t d = 0;
    std::size_t n_states = 0;
    double lambda = 1.0;
    std::uint64_t n_samples = 0;
    Eigen::MatrixXd gram;   // Lambda_N = (lambda / N) I + (1 / N) sum phi phi^T
    Eigen::MatrixXd nu_hat; // d x n_states, signed

    double nu(std::size_t i, std::size_t s) const {
        return nu_hat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
    }
};

inline RidgeEstimate ridge_fit(const OfflineDataset& ds, const FeatureMap& phi, double lambda,
                               std::size_t n_states) {
    if (ds.size() == 0) throw ValidationError("ridge_fit: dataset is empty");
    if (!(lambda > 0.0)) throw ValidationError("ridge_fit: lambda must be positive");
    if (n_states != phi.n_states) throw ValidationError("ridge_fit: n_states does not match the feature map");
    const auto d = static_cast<Eigen::Index>(phi.d);
    const double n = static_cast<double>(ds.size());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(d, d) * (lambda / n);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(n_states));
    // Sums over records grouped by (s, a); identical to the per-record sums.
    const Counts counts = tally(ds, n_states, phi.n_actions);
    for (std::size_t s = 0; s < phi.n_states; ++s)
        for (std::size_t a = 0; a < phi.n_actions; ++a) {
            const auto n_sa = counts.n(s, a);
            if (n_sa == 0) continue;
            Eigen::Map<const Eigen::VectorXd> f(phi(s, a).data(), d);
            gram.noalias() += (static_cast<double>(n_sa) / n) * (f * f.transpose());
            for (std::size_t t = 0; t < n_states; ++t)
                if (const auto c = counts.n(s, a, t); c > 0)
                    rhs.col(static_cast<Eigen::Index>(t)) += (static_cast<double>(c) / n) * f;
        }
    gram = (0.5 * (gram + gram.transpose())).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericError("ridge_fit: Gram matrix is not positive definite");
    RidgeEstimate est;
    est.d = phi.d;
    est.n_states = n_states;
    est.lambda = lambda;
    est.n_samples = ds.size();
    est.nu_hat = llt.solve(rhs);
    est.gram = std::move(gram);
    return est;
}

struct IPMRadii {
    Vector rho;
    double c1 = 1.0;
};

/// rho_i = c1 log(N d / ((1 - gamma) delta)) / (1 - gamma) * sqrt(d / N) * sqrt(Lambda_N^{-1}(i, i)).
inline IPMRadii ipm_radii(const Eigen::MatrixXd& gram, std::uint64_t n, std::size_t d, double gamma,
                          double delta, double c1) {
    detail::check_delta(delta);
    if (n == 0 || d == 0) throw ValidationError("ipm_radii: N and d must be positive");
    if (!(c1 >= 0.0)) throw ValidationError("ipm_radii: c1 must be >= 0");
    const double nn = static_cast<double>(n), dd = static_cast<double>(d);
    const double scale = c1 * std::log(nn * dd / ((1.0 - gamma) * delta)) / (1.0 - gamma) * std::sqrt(dd / nn);
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericError("ipm_radii: Lambda_N is not positive definite");
    IPMRadii out;
    out.c1 = c1;
    out.rho.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i));
        const double inv_ii = llt.solve(e)(static_cast<Eigen::Index>(i));
        out.rho[i] = scale * std::sqrt(std::max(0.0, inv_ii));
    }
    return out;
}

/// Q(s, a) = phi(s, a)^T w.
struct LinearQ {
    Vector w;
};

/// How iterates are kept bounded after each backup.
enum class WeightProjection {
    Box,            // clamp every weight into [0, 1 / (1 - gamma)]
    EuclideanBall,  // rescale onto ||w||_2 <= 1 / (1 - gamma)
};

/// V(s') = max_b phi(s', b)^T w over all states.
inline Vector linear_values(const FeatureMap& phi, std::span<const double> w) {
    Vector v(phi.n_states);
    for (std::size_t s = 0; s < phi.n_states; ++s) {
        double m = phi.dot(s, 0, w);
        for (std::size_t a = 1; a < phi.n_actions; ++a) m = std::max(m, phi.dot(s, a, w));
        v[s] = m;
    }
    return v;
}

/// Pre-projection backup: w'_i = theta_i + gamma * clamp(nu_hat_i^T V - rho_i, 0, 1 / (1 - gamma)).
inline Vector lm_backup_weights(const LinearQ& q, const FeatureMap& phi, const RidgeEstimate& est,
                                const IPMRadii& radii, std::span<const double> theta, double gamma) {
    const Vector v = linear_values(phi, q.w);
    const double vmax = 1.0 / (1.0 - gamma);
    Vector out(phi.d);
    for (std::size_t i = 0; i < phi.d; ++i) {
        double inner = 0.0;
        for (std::size_t s = 0; s < est.n_states; ++s) inner += est.nu(i, s) * v[s];
        out[i] = theta[i] + gamma * std::clamp(inner - radii.rho[i], 0.0, vmax);
    }
    return out;
}

inline void project_weights(Vector& w, double gamma, WeightProjection mode) {
    const double vmax = 1.0 / (1.0 - gamma);
    if (mode == WeightProjection::Box) {
        for (double& x : w) x = std::clamp(x, 0.0, vmax);
        return;
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > vmax)
        for (double& x : w) x *= vmax / norm;
}

inline LinearQ lm_robust_backup(const LinearQ& q, const FeatureMap& phi, const RidgeEstimate& est,
                                const IPMRadii& radii, std::span<const double> theta, double gamma,
                                WeightProjection mode = WeightProjection::Box) {
    LinearQ out{lm_backup_weights(q, phi, est, radii, theta, gamma)};
    project_weights(out.w, gamma, mode);
    return out;
}

struct LinearSolveConfig {
    double lambda = 1.0;
    double delta = 0.1;
    double c1 = 1.0;
    std::size_t max_iterations = 1000;
    double tol = 1e-10;
    WeightProjection projection = WeightProjection::Box;
};

/// Enumerated Q(s, a) = phi(s, a)^T w.
inline QFunction linear_q_table(const FeatureMap& phi, std::span<const double> w) {
    QFunction q(phi.n_states, phi.n_actions);
    for (std::size_t s = 0; s < phi.n_states; ++s)
        for (std::size_t a = 0; a < phi.n_actions; ++a) q(s, a) = phi.dot(s, a, w);
    return q;
}

/// Ridge fit, IPM radii, then robust iteration from w = 0. With
/// max_iterations = 0 the weights are theta, the image of w = 0 under one backup.
inline SolveReport lm_drqi(const OfflineDataset& ds, const FeatureMap& phi, std::span<const double> theta,
                           double gamma, const LinearSolveConfig& cfg) {
    if (theta.size() != phi.d) throw ValidationError("lm_drqi: theta has wrong size");
    const auto start = std::chrono::steady_clock::now();
    const RidgeEstimate est = ridge_fit(ds, phi, cfg.lambda, phi.n_states);
    const IPMRadii radii = ipm_radii(est.gram, est.n_samples, phi.d, gamma, cfg.delta, cfg.c1);

    SolveReport rep;
    rep.algo = "lm_drqi";
    rep.kind = "ipm";
    LinearQ q{Vector(phi.d, 0.0)};
    if (cfg.max_iterations == 0) {
        q.w.assign(theta.begin(), theta.end());
    }
    for (std::size_t k = 0; k < cfg.max_iterations; ++k) {
        LinearQ next = lm_robust_backup(q, phi, est, radii, theta, gamma, cfg.projection);
        double diff = 0.0;
        for (std::size_t i = 0; i < phi.d; ++i) diff += (next.w[i] - q.w[i]) * (next.w[i] - q.w[i]);
        diff = std::sqrt(diff);
        q = std::move(next);
        rep.residuals.push_back(diff);
        ++rep.iterations;
        if (!std::isfinite(diff)) throw NumericError("lm_drqi: non-finite iterate");
        if (diff <= cfg.tol) break;
    }
    rep.q = linear_q_table(phi, q.w);
    rep.policy = greedy_policy(rep.q);
    rep.weights = std::move(q.w);
    rep.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

// Text documents, same scheme as the tabular MDP format.

inline void write_linear_mdp(std::ostream& os, const LinearMDPSpec& spec) {
    os << "drorl-linear-mdp 1\n";
    os << "d " << spec.d() << "\nn_states " << spec.n_states() << "\nn_actions " << spec.n_actions();
    os << "\ngamma ";
    detail::write_real(os, spec.gamma);
    os << "\nd0 ";
    detail::write_reals(os, spec.d0);
    os << "\ntheta ";
    detail::write_reals(os, spec.theta);
    os << "\nphi\n";
    for (std::size_t k = 0; k < spec.n_states() * spec.n_actions(); ++k) {
        detail::write_reals(os, {spec.phi.values.data() + k * spec.d(), spec.d()});
        os << '\n';
    }
    os << "nu\n";
    for (std::size_t i = 0; i < spec.d(); ++i) {
        detail::write_reals(os, spec.nu_row(i));
        os << '\n';
    }
}

inline LinearMDPSpec read_linear_mdp(std::istream& is) {
    detail::LineReader in(is);
    int version = 0;
    if (!(in.keyed("drorl-linear-mdp") >> version) || version != 1)
        throw ParseError("unsupported linear-mdp version", in.line());
    LinearMDPSpec spec;
    std::size_t d = 0, ns = 0, na = 0;
    if (!(in.keyed("d") >> d)) throw ParseError("bad d", in.line());
    if (!(in.keyed("n_states") >> ns)) throw ParseError("bad n_states", in.line());
    if (!(in.keyed("n_actions") >> na)) throw ParseError("bad n_actions", in.line());
    if (!(in.keyed("gamma") >> spec.gamma)) throw ParseError("bad gamma", in.line());
    auto d0 = in.keyed("d0");
    spec.d0 = in.reals(d0, ns, "d0");
    auto th = in.keyed("theta");
    spec.theta = in.reals(th, d, "theta");
    in.keyed("phi");
    spec.phi = {d, ns, na, {}};
    for (std::size_t k = 0; k < ns * na; ++k) {
        auto ls = in.next("phi row");
        auto row = in.reals(ls, d, "phi row");
        spec.phi.values.insert(spec.phi.values.end(), row.begin(), row.end());
    }
    in.keyed("nu");
    for (std::size_t i = 0; i < d; ++i) {
        auto ls = in.next("nu row");
        auto row = in.reals(ls, ns, "nu row");
        spec.nu.insert(spec.nu.end(), row.begin(), row.end());
    }
    spec.validate();
    return spec;
}

inline void write_ridge_estimate(std::ostream& os, const RidgeEstimate& est) {
    os << "drorl-ridge-estimate 1\n";
    os << "d " << est.d << "\nn_states " << est.n_states << "\nlambda ";
    detail::write_real(os, est.lambda);
    os << "\nN " << est.n_samples << "\nLambda_N\n";
    for (Eigen::Index i = 0; i < est.gram.rows(); ++i) {
        for (Eigen::Index j = 0; j < est.gram.cols(); ++j) {
            if (j) os << ' ';
            detail::write_real(os, est.gram(i, j));
        }
        os << '\n';
    }
    os << "nu_hat\n";
    for (Eigen::Index i = 0; i < est.nu_hat.rows(); ++i) {
        for (Eigen::Index j = 0; j < est.nu_hat.cols(); ++j) {
            if (j) os << ' ';
            detail::write_real(os, est.nu_hat(i, j));
        }
        os << '\n';
    }
}

inline RidgeEstimate read_ridge_estimate(std::istream& is) {
    detail::LineReader in(is);
    int version = 0;
    if (!(in.keyed("drorl-ridge-estimate") >> version) || version != 1)
        throw ParseError("unsupported ridge-estimate version", in.line());
    RidgeEstimate est;
    if (!(in.keyed("d") >> est.d)) throw ParseError("bad d", in.line());
    if (!(in.keyed("n_states") >> est.n_states)) throw ParseError("bad n_states", in.line());
    if (!(in.keyed("lambda") >> est.lambda)) throw ParseError("bad lambda", in.line());
    if (!(in.keyed("N") >> est.n_samples)) throw ParseError("bad N", in.line());
    const auto d = static_cast<Eigen::Index>(est.d), ns = static_cast<Eigen::Index>(est.n_states);
    auto read_matrix = [&](const char* key, Eigen::Index rows, Eigen::Index cols) {
        in.keyed(key);
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            auto ls = in.next(key);
            auto row = in.reals(ls, static_cast<std::size_t>(cols), key);
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
        }
        return m;
    };
    est.gram = read_matrix("Lambda_N", d, d);
    est.nu_hat = read_matrix("nu_hat", d, ns);
    return est;
}

} // namespace drorl
