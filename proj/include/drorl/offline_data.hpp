#pragma once

#include "drorl/error.hpp"
#include "drorl/random.hpp"
#include "drorl/tabular_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace drorl {

/// Joint distribution mu over (s, a), laid out [s * n_actions + a].
struct BehaviorDistribution {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    Vector joint;

    BehaviorDistribution() = default;
    BehaviorDistribution(std::size_t ns, std::size_t na, Vector p)
        : n_states(ns), n_actions(na), joint(std::move(p)) {
        if (joint.size() != ns * na) throw ValidationError("behavior distribution has wrong size");
        if (!detail::in_simplex(joint, 1e-12))
            throw ValidationError("behavior distribution is not a distribution");
    }

    double operator()(std::size_t s, std::size_t a) const { return joint[s * n_actions + a]; }

    /// mu(a | s); zero when the state has no mass.
    double conditional(std::size_t s, std::size_t a) const {
        double m = 0.0;
        for (std::size_t b = 0; b < n_actions; ++b) m += (*this)(s, b);
        return m > 0.0 ? (*this)(s, a) / m : 0.0;
    }
};

/// Mixture behavior: half the time the optimal action, half a uniform action.
/// The state marginal defaults to uniform over all states.
inline BehaviorDistribution behavior_partial(const Policy& pi_star, std::size_t n_states,
                                             std::size_t n_actions,
                                             std::optional<std::span<const double>> state_marginal = {}) {
    if (!pi_star.is_deterministic()) throw ValidationError("behavior_partial: pi* must be deterministic");
    if (pi_star.n_states() != n_states || pi_star.n_actions() != n_actions)
        throw ValidationError("behavior_partial: policy dimensions mismatch");
    Vector marginal(n_states, 1.0 / static_cast<double>(n_states));
    if (state_marginal) {
        if (state_marginal->size() != n_states || !detail::in_simplex(*state_marginal, 1e-9))
            throw ValidationError("behavior_partial: invalid state marginal");
        marginal.assign(state_marginal->begin(), state_marginal->end());
        double sum = 0.0;
        for (double x : marginal) sum += x;
        for (double& x : marginal) x /= sum;
    }
    Vector joint(n_states * n_actions);
    const double uniform = 0.5 / static_cast<double>(n_actions);
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a)
            joint[s * n_actions + a] = marginal[s] * ((a == pi_star.action(s) ? 0.5 : 0.0) + uniform);
    // Normalize away rounding so the simplex check holds at 1e-12.
    double sum = 0.0;
    for (double x : joint) sum += x;
    for (double& x : joint) x /= sum;
    return BehaviorDistribution(n_states, n_actions, std::move(joint));
}

struct Transition {
    std::size_t s = 0;
    std::size_t a = 0;
    double r = 0.0;
    std::size_t next = 0;

    friend bool operator==(const Transition&, const Transition&) = default;
};

enum class SamplingScheme { IID, GenerativeEqual };

struct OfflineDataset {
    std::vector<Transition> records;
    SamplingScheme scheme = SamplingScheme::IID;
    std::size_t n_per_pair = 0; // generative scheme only
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return records.size(); }
    friend bool operator==(const OfflineDataset&, const OfflineDataset&) = default;
};

namespace detail {

/// First index whose cumulative mass exceeds u * total.
inline std::size_t sample_cumulative(std::span<const double> cumulative, double u) {
    const double target = u * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) {
        // Rounding pushed target to the total; fall back to the last positive bin.
        it = std::prev(cumulative.end());
        while (it != cumulative.begin() && *std::prev(it) == *it) --it;
    }
    return static_cast<std::size_t>(it - cumulative.begin());
}

inline Vector cumulative_of(std::span<const double> p) {
    Vector c(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) c[i] = acc += p[i];
    return c;
}

inline std::vector<Vector> kernel_cumulatives(const TabularMDP& mdp) {
    std::vector<Vector> out;
    out.reserve(mdp.n_pairs());
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a)
            out.push_back(cumulative_of(mdp.transition_row(s, a)));
    return out;
}

} // namespace detail

/// N i.i.d. records: (s, a) ~ mu, s' ~ P(.|s, a). Record i depends only on (seed, i).
inline OfflineDataset sample_dataset_iid(const TabularMDP& mdp, const BehaviorDistribution& mu,
                                         std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ValidationError("sample_dataset_iid: N must be at least 1");
    if (mu.n_states != mdp.n_states() || mu.n_actions != mdp.n_actions())
        throw ValidationError("sample_dataset_iid: behavior distribution dimensions mismatch");
    const Vector mu_cum = detail::cumulative_of(mu.joint);
    const auto kernel_cum = detail::kernel_cumulatives(mdp);
    OfflineDataset ds;
    ds.scheme = SamplingScheme::IID;
    ds.seed = seed;
    ds.records.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        CounterStream rng(seed, i);
        const std::size_t pair = detail::sample_cumulative(mu_cum, rng.uniform());
        const std::size_t s = pair / mdp.n_actions(), a = pair % mdp.n_actions();
        const std::size_t next = detail::sample_cumulative(kernel_cum[pair], rng.uniform());
        ds.records[i] = {s, a, mdp.reward(s, a), next};
    }
    return ds;
}

/// Exactly n_per_pair next-state samples from every (s, a), in pair order.
inline OfflineDataset sample_dataset_generative(const TabularMDP& mdp, std::size_t n_per_pair,
                                                std::uint64_t seed) {
    if (n_per_pair == 0) throw ValidationError("sample_dataset_generative: n_per_pair must be >= 1");
    const auto kernel_cum = detail::kernel_cumulatives(mdp);
    OfflineDataset ds;
    ds.scheme = SamplingScheme::GenerativeEqual;
    ds.n_per_pair = n_per_pair;
    ds.seed = seed;
    ds.records.reserve(n_per_pair * mdp.n_pairs());
    for (std::size_t pair = 0; pair < mdp.n_pairs(); ++pair) {
        const std::size_t s = pair / mdp.n_actions(), a = pair % mdp.n_actions();
        for (std::size_t j = 0; j < n_per_pair; ++j) {
            CounterStream rng(seed, pair * n_per_pair + j);
            ds.records.push_back({s, a, mdp.reward(s, a),
                                  detail::sample_cumulative(kernel_cum[pair], rng.uniform())});
        }
    }
    return ds;
}

/// Visit counts N(s,a) and N(s,a,s').
struct Counts {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<std::uint64_t> pair;   // [s * n_actions + a]
    std::vector<std::uint64_t> triple; // [(s * n_actions + a) * n_states + s']
    std::uint64_t total = 0;

    Counts() = default;
    Counts(std::size_t ns, std::size_t na)
        : n_states(ns), n_actions(na), pair(ns * na, 0), triple(ns * na * ns, 0) {}

    std::uint64_t n(std::size_t s, std::size_t a) const { return pair[s * n_actions + a]; }
    std::uint64_t n(std::size_t s, std::size_t a, std::size_t next) const {
        return triple[(s * n_actions + a) * n_states + next];
    }
    std::span<const std::uint64_t> successors(std::size_t s, std::size_t a) const {
        return {triple.data() + (s * n_actions + a) * n_states, n_states};
    }

    friend bool operator==(const Counts&, const Counts&) = default;
};

inline Counts tally(const OfflineDataset& ds, std::size_t n_states, std::size_t n_actions) {
    Counts c(n_states, n_actions);
    for (const auto& t : ds.records) {
        if (t.s >= n_states || t.next >= n_states || t.a >= n_actions)
            throw ValidationError("tally: record index out of range");
        ++c.pair[t.s * n_actions + t.a];
        ++c.triple[(t.s * n_actions + t.a) * n_states + t.next];
        ++c.total;
    }
    return c;
}

enum class EstimatorKind { Empirical, AddL };

/// Estimated transition kernel together with the counts it came from.
struct EmpiricalModel {
    EstimatorKind kind = EstimatorKind::Empirical;
    double L = 0.0;
    Counts counts;
    Vector rows; // same layout as TabularMDP transitions

    std::size_t n_states() const noexcept { return counts.n_states; }
    std::size_t n_actions() const noexcept { return counts.n_actions; }
    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {rows.data() + (s * n_actions() + a) * n_states(), n_states()};
    }
};

/// N(s,a,s') / N(s,a), or the uniform row for unvisited pairs.
inline EmpiricalModel empirical_estimator(const Counts& counts) {
    EmpiricalModel m;
    m.kind = EstimatorKind::Empirical;
    m.counts = counts;
    const std::size_t ns = counts.n_states;
    m.rows.assign(counts.triple.size(), 1.0 / static_cast<double>(ns));
    for (std::size_t k = 0; k < counts.pair.size(); ++k) {
        if (counts.pair[k] == 0) continue;
        const double n = static_cast<double>(counts.pair[k]);
        for (std::size_t t = 0; t < ns; ++t)
            m.rows[k * ns + t] = static_cast<double>(counts.triple[k * ns + t]) / n;
    }
    return m;
}

/// Add-L smoothing: (N(s,a,s') + L) / (N(s,a) + L |S|).
inline EmpiricalModel add_L_estimator(const Counts& counts, double L) {
    if (!(L > 0.0) || !std::isfinite(L)) throw ValidationError("add_L_estimator: L must be positive");
    EmpiricalModel m;
    m.kind = EstimatorKind::AddL;
    m.L = L;
    m.counts = counts;
    const std::size_t ns = counts.n_states;
    m.rows.resize(counts.triple.size());
    for (std::size_t k = 0; k < counts.pair.size(); ++k) {
        const double denom = static_cast<double>(counts.pair[k]) + L * static_cast<double>(ns);
        for (std::size_t t = 0; t < ns; ++t)
            m.rows[k * ns + t] = (static_cast<double>(counts.triple[k * ns + t]) + L) / denom;
    }
    return m;
}

/// Wraps a known kernel as a model, as if counts were infinite.
inline EmpiricalModel exact_model(const TabularMDP& mdp) {
    EmpiricalModel m;
    m.counts = Counts(mdp.n_states(), mdp.n_actions());
    m.rows = mdp.transitions();
    return m;
}

// Dataset file: header "s,a,r,sp", then one record per line.

inline void write_dataset(std::ostream& os, const OfflineDataset& ds) {
    os << "s,a,r,sp\n";
    for (const auto& t : ds.records) {
        os << t.s << ',' << t.a << ',';
        detail::write_real(os, t.r);
        os << ',' << t.next << '\n';
    }
}

inline OfflineDataset read_dataset(std::istream& is) {
    OfflineDataset ds;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(is, line)) throw ParseError("empty dataset file", 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "s,a,r,sp") throw ParseError("expected header 's,a,r,sp'", line_no);
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        Transition t;
        char c1 = 0, c2 = 0, c3 = 0;
        long long s = -1, a = -1, sp = -1;
        if (!(ls >> s >> c1 >> a >> c2 >> t.r >> c3 >> sp) || c1 != ',' || c2 != ',' || c3 != ',' ||
            s < 0 || a < 0 || sp < 0)
            throw ParseError("malformed dataset record", line_no);
        std::string rest;
        if (ls >> rest) throw ParseError("trailing characters in dataset record", line_no);
        t.s = static_cast<std::size_t>(s);
        t.a = static_cast<std::size_t>(a);
        t.next = static_cast<std::size_t>(sp);
        ds.records.push_back(t);
    }
    return ds;
}

} // namespace drorl
