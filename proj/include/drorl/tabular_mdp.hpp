#pragma once

#include "drorl/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace drorl {

using Vector = std::vector<double>;

namespace detail {

inline void write_real(std::ostream& os, double x) {
    std::ostringstream tmp;
    tmp << std::setprecision(17) << x;
    os << tmp.str();
}

inline void write_reals(std::ostream& os, std::span<const double> xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) os << ' ';
        write_real(os, xs[i]);
    }
}

inline bool in_simplex(std::span<const double> p, double tol) {
    double sum = 0.0;
    for (double x : p) {
        if (!std::isfinite(x) || x < -tol) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

} // namespace detail

/// Dense table indexed by (state, action), row-major in the action index.
/// The tag keeps Q-values and occupancy measures from being mixed up.
template <class Tag>
class StateActionTable {
public:
    StateActionTable() = default;
    StateActionTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
        : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, fill) {}
    StateActionTable(std::size_t n_states, std::size_t n_actions, Vector values)
        : n_states_(n_states), n_actions_(n_actions), values_(std::move(values)) {
        if (values_.size() != n_states_ * n_actions_)
            throw ValidationError("state-action table has wrong size");
    }

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }

    double& operator()(std::size_t s, std::size_t a) { return values_[s * n_actions_ + a]; }
    double operator()(std::size_t s, std::size_t a) const { return values_[s * n_actions_ + a]; }

    std::span<const double> row(std::size_t s) const {
        return {values_.data() + s * n_actions_, n_actions_};
    }

    const Vector& values() const noexcept { return values_; }
    Vector& values() noexcept { return values_; }

    friend bool operator==(const StateActionTable&, const StateActionTable&) = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    Vector values_;
};

using QFunction = StateActionTable<struct QFunctionTag>;
using OccupancyMeasure = StateActionTable<struct OccupancyTag>;

/// Per-state values.
struct ValueFunction {
    Vector values;

    double operator[](std::size_t s) const { return values[s]; }
    std::size_t size() const noexcept { return values.size(); }
};

/// Finite discounted MDP with state-action rewards in [0, 1].
class TabularMDP {
public:
    TabularMDP() = default;

    /// `transitions` is laid out as [(s * n_actions + a) * n_states + s'],
    /// `rewards` as [s * n_actions + a].
    TabularMDP(std::size_t n_states, std::size_t n_actions, Vector transitions, Vector rewards,
               double gamma, Vector d0)
        : n_states_(n_states), n_actions_(n_actions), transitions_(std::move(transitions)),
          rewards_(std::move(rewards)), gamma_(gamma), d0_(std::move(d0)) {
        validate();
    }

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }
    std::size_t n_pairs() const noexcept { return n_states_ * n_actions_; }
    double gamma() const noexcept { return gamma_; }

    std::span<const double> transition_row(std::size_t s, std::size_t a) const {
        return {transitions_.data() + (s * n_actions_ + a) * n_states_, n_states_};
    }
    double reward(std::size_t s, std::size_t a) const { return rewards_[s * n_actions_ + a]; }

    const Vector& transitions() const noexcept { return transitions_; }
    const Vector& rewards() const noexcept { return rewards_; }
    const Vector& d0() const noexcept { return d0_; }

    double value_upper_bound() const noexcept { return 1.0 / (1.0 - gamma_); }

    friend bool operator==(const TabularMDP&, const TabularMDP&) = default;

private:
    void validate() const {
        if (n_states_ == 0 || n_actions_ == 0)
            throw ValidationError("MDP needs at least one state and one action");
        if (!(gamma_ > 0.0 && gamma_ < 1.0))
            throw ValidationError("gamma must lie in (0, 1)");
        if (transitions_.size() != n_states_ * n_actions_ * n_states_)
            throw ValidationError("transition table has wrong size");
        if (rewards_.size() != n_states_ * n_actions_)
            throw ValidationError("reward table has wrong size");
        if (d0_.size() != n_states_) throw ValidationError("d0 has wrong size");
        for (std::size_t s = 0; s < n_states_; ++s)
            for (std::size_t a = 0; a < n_actions_; ++a)
                if (!detail::in_simplex(transition_row(s, a), 1e-12))
                    throw ValidationError("transition row (" + std::to_string(s) + ", " +
                                          std::to_string(a) + ") is not a distribution");
        for (double r : rewards_)
            if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("reward outside [0, 1]");
        if (!detail::in_simplex(d0_, 1e-12)) throw ValidationError("d0 is not a distribution");
    }

    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    Vector transitions_;
    Vector rewards_;
    double gamma_ = 0.0;
    Vector d0_;
};

/// Stationary policy; either one action per state or a distribution per state.
class Policy {
public:
    Policy() = default;

    static Policy deterministic(std::vector<std::size_t> actions, std::size_t n_actions) {
        Policy p;
        p.n_states_ = actions.size();
        p.n_actions_ = n_actions;
        p.probs_.assign(p.n_states_ * n_actions, 0.0);
        for (std::size_t s = 0; s < actions.size(); ++s) {
            if (actions[s] >= n_actions) throw ValidationError("policy action index out of range");
            p.probs_[s * n_actions + actions[s]] = 1.0;
        }
        p.actions_ = std::move(actions);
        return p;
    }

    static Policy stochastic(std::size_t n_states, std::size_t n_actions, Vector probs) {
        if (probs.size() != n_states * n_actions) throw ValidationError("policy table has wrong size");
        for (std::size_t s = 0; s < n_states; ++s)
            if (!detail::in_simplex({probs.data() + s * n_actions, n_actions}, 1e-12))
                throw ValidationError("policy row " + std::to_string(s) + " is not a distribution");
        Policy p;
        p.n_states_ = n_states;
        p.n_actions_ = n_actions;
        p.probs_ = std::move(probs);
        return p;
    }

    static Policy uniform(std::size_t n_states, std::size_t n_actions) {
        return stochastic(n_states, n_actions,
                          Vector(n_states * n_actions, 1.0 / static_cast<double>(n_actions)));
    }

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }
    bool is_deterministic() const noexcept { return !actions_.empty() || n_states_ == 0; }

    double prob(std::size_t s, std::size_t a) const { return probs_[s * n_actions_ + a]; }

    /// Only valid for deterministic policies.
    std::size_t action(std::size_t s) const {
        if (actions_.empty()) throw ValidationError("policy is not deterministic");
        return actions_[s];
    }
    const std::vector<std::size_t>& actions() const noexcept { return actions_; }

    friend bool operator==(const Policy&, const Policy&) = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    Vector probs_;
    std::vector<std::size_t> actions_;
};

inline double expected_value(std::span<const double> p, std::span<const double> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * v[i];
    return acc;
}

inline double sup_norm_diff(std::span<const double> x, std::span<const double> y) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
    return m;
}

/// V(s) = max_a Q(s, a).
inline Vector greedy_values(const QFunction& q) {
    Vector v(q.n_states());
    for (std::size_t s = 0; s < q.n_states(); ++s) {
        auto row = q.row(s);
        v[s] = *std::max_element(row.begin(), row.end());
    }
    return v;
}

/// Greedy policy; ties go to the lowest action index.
inline Policy greedy_policy(const QFunction& q) {
    std::vector<std::size_t> actions(q.n_states());
    for (std::size_t s = 0; s < q.n_states(); ++s) {
        auto row = q.row(s);
        actions[s] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return Policy::deterministic(std::move(actions), q.n_actions());
}

/// One non-robust Bellman optimality backup under the true kernel.
inline QFunction bellman_backup(const TabularMDP& mdp, const QFunction& q) {
    const Vector v = greedy_values(q);
    QFunction out(mdp.n_states(), mdp.n_actions());
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a)
            out(s, a) = mdp.reward(s, a) + mdp.gamma() * expected_value(mdp.transition_row(s, a), v);
    return out;
}

/// Value iteration to a sup-norm Bellman residual of at most `tol`.
inline std::pair<QFunction, Policy> value_iteration(const TabularMDP& mdp, double tol) {
    if (!(tol > 0.0)) throw ValidationError("value_iteration: tol must be positive");
    QFunction q(mdp.n_states(), mdp.n_actions());
    for (;;) {
        QFunction next = bellman_backup(mdp, q);
        for (double x : next.values())
            if (!std::isfinite(x)) throw NumericError("value_iteration: non-finite Q-value");
        const double residual = sup_norm_diff(next.values(), q.values());
        q = std::move(next);
        if (residual <= tol) break;
    }
    Policy pi = greedy_policy(q);
    return {std::move(q), std::move(pi)};
}

namespace detail {

inline void check_policy(const TabularMDP& mdp, const Policy& pi) {
    if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
        throw ValidationError("policy dimensions do not match the MDP");
}

/// P^pi as a dense |S| x |S| matrix and r^pi.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> policy_kernel(const TabularMDP& mdp,
                                                                 const Policy& pi) {
    const auto n = static_cast<Eigen::Index>(mdp.n_states());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            const double w = pi.prob(s, a);
            if (w == 0.0) continue;
            r(static_cast<Eigen::Index>(s)) += w * mdp.reward(s, a);
            auto row = mdp.transition_row(s, a);
            for (std::size_t t = 0; t < mdp.n_states(); ++t)
                p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) += w * row[t];
        }
    return {std::move(p), std::move(r)};
}

/// Solves A x = b with one round of iterative refinement and checks the residual.
inline Eigen::VectorXd solve_checked(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                     const char* what) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    Eigen::VectorXd x = lu.solve(b);
    x += lu.solve(b - a * x);
    if (!x.allFinite()) throw NumericError(std::string(what) + ": singular system");
    const double residual = (a * x - b).cwiseAbs().maxCoeff();
    if (residual > 1e-10 * std::max(1.0, b.cwiseAbs().maxCoeff()))
        throw NumericError(std::string(what) + ": residual too large");
    return x;
}

} // namespace detail

/// V^pi from the linear system (I - gamma P^pi) V = r^pi.
inline ValueFunction policy_evaluation_exact(const TabularMDP& mdp, const Policy& pi) {
    detail::check_policy(mdp, pi);
    auto [p, r] = detail::policy_kernel(mdp, pi);
    const auto n = p.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * p;
    Eigen::VectorXd v = detail::solve_checked(a, r, "policy_evaluation_exact");
    return ValueFunction{Vector(v.data(), v.data() + n)};
}

/// Normalized discounted state-action occupancy, from the flow equations
/// d = (1 - gamma) d0 + gamma (P^pi)^T d.
inline OccupancyMeasure occupancy_measure(const TabularMDP& mdp, const Policy& pi) {
    detail::check_policy(mdp, pi);
    auto [p, r] = detail::policy_kernel(mdp, pi);
    (void)r;
    const auto n = p.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - mdp.gamma() * p.transpose();
    Eigen::VectorXd b(n);
    for (Eigen::Index s = 0; s < n; ++s)
        b(s) = (1.0 - mdp.gamma()) * mdp.d0()[static_cast<std::size_t>(s)];
    Eigen::VectorXd ds = detail::solve_checked(a, b, "occupancy_measure");
    OccupancyMeasure d(mdp.n_states(), mdp.n_actions());
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a2 = 0; a2 < mdp.n_actions(); ++a2)
            d(s, a2) = std::max(0.0, ds(static_cast<Eigen::Index>(s))) * pi.prob(s, a2);
    return d;
}

/// max d(s,a) / mu(s,a); +infinity when d puts mass where mu has none.
inline double concentrability(std::span<const double> d_pi, std::span<const double> mu) {
    if (d_pi.size() != mu.size()) throw ValidationError("concentrability: size mismatch");
    double c = 0.0;
    for (std::size_t i = 0; i < d_pi.size(); ++i) {
        if (d_pi[i] <= 0.0) continue;
        if (mu[i] <= 0.0) return std::numeric_limits<double>::infinity();
        c = std::max(c, d_pi[i] / mu[i]);
    }
    return c;
}

/// E_{s ~ d0}[V*(s) - V^pi(s)] under the true model.
inline double suboptimality(const TabularMDP& mdp, const Policy& pi,
                            const ValueFunction& pi_star_value) {
    const ValueFunction v = policy_evaluation_exact(mdp, pi);
    double gap = 0.0;
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        gap += mdp.d0()[s] * (pi_star_value[s] - v[s]);
    if (gap < 0.0 && gap > -1e-9) gap = 0.0;
    return gap;
}

inline double expected_initial_value(const TabularMDP& mdp, const ValueFunction& v) {
    return expected_value(mdp.d0(), v.values);
}

// Plain-text format:
//   drorl-tabular-mdp 1
//   n_states <n>
//   n_actions <n>
//   gamma <x>
//   d0 <x...>
//   rewards            (then n_states lines of n_actions values)
//   transitions        (then n_states*n_actions lines of n_states values)

inline void write_mdp(std::ostream& os, const TabularMDP& mdp) {
    os << "drorl-tabular-mdp 1\n";
    os << "n_states " << mdp.n_states() << '\n';
    os << "n_actions " << mdp.n_actions() << '\n';
    os << "gamma ";
    detail::write_real(os, mdp.gamma());
    os << "\nd0 ";
    detail::write_reals(os, mdp.d0());
    os << "\nrewards\n";
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        detail::write_reals(os, {mdp.rewards().data() + s * mdp.n_actions(), mdp.n_actions()});
        os << '\n';
    }
    os << "transitions\n";
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            detail::write_reals(os, mdp.transition_row(s, a));
            os << '\n';
        }
}

namespace detail {

class LineReader {
public:
    explicit LineReader(std::istream& is) : is_(is) {}

    std::istringstream next(const char* context) {
        std::string line;
        while (std::getline(is_, line)) {
            ++line_no_;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
        }
        throw ParseError(std::string("unexpected end of input, expected ") + context, line_no_);
    }

    std::istringstream keyed(const std::string& key) {
        auto ls = next(key.c_str());
        std::string got;
        ls >> got;
        if (got != key) throw ParseError("expected '" + key + "', found '" + got + "'", line_no_);
        return ls;
    }

    Vector reals(std::istringstream& ls, std::size_t n, const char* context) {
        Vector out(n);
        for (auto& x : out)
            if (!(ls >> x)) throw ParseError(std::string("too few values in ") + context, line_no_);
        std::string extra;
        if (ls >> extra) throw ParseError(std::string("too many values in ") + context, line_no_);
        return out;
    }

    std::size_t line() const noexcept { return line_no_; }

private:
    std::istream& is_;
    std::size_t line_no_ = 0;
};

} // namespace detail

inline TabularMDP read_mdp(std::istream& is) {
    detail::LineReader in(is);
    {
        auto ls = in.keyed("drorl-tabular-mdp");
        int version = 0;
        if (!(ls >> version) || version != 1)
            throw ParseError("unsupported tabular-mdp version", in.line());
    }
    std::size_t ns = 0, na = 0;
    double gamma = 0.0;
    if (!(in.keyed("n_states") >> ns)) throw ParseError("bad n_states", in.line());
    if (!(in.keyed("n_actions") >> na)) throw ParseError("bad n_actions", in.line());
    if (!(in.keyed("gamma") >> gamma)) throw ParseError("bad gamma", in.line());
    auto d0_line = in.keyed("d0");
    Vector d0 = in.reals(d0_line, ns, "d0");
    in.keyed("rewards");
    Vector rewards;
    rewards.reserve(ns * na);
    for (std::size_t s = 0; s < ns; ++s) {
        auto ls = in.next("rewards row");
        auto row = in.reals(ls, na, "rewards row");
        rewards.insert(rewards.end(), row.begin(), row.end());
    }
    in.keyed("transitions");
    Vector trans;
    trans.reserve(ns * na * ns);
    for (std::size_t k = 0; k < ns * na; ++k) {
        auto ls = in.next("transition row");
        auto row = in.reals(ls, ns, "transition row");
        trans.insert(trans.end(), row.begin(), row.end());
    }
    return TabularMDP(ns, na, std::move(trans), std::move(rewards), gamma, std::move(d0));
}

} // namespace drorl
