#pragma once

#include "drorl/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace drorl {

enum class Divergence { TV, Wasserstein, KL, ChiSquare };

/// Which ball surrounds the nominal model, and the scale constant used by
/// its radius schedule (ignored for TV).
struct UncertaintyKind {
    Divergence divergence = Divergence::TV;
    double constant = 1.0;

    static UncertaintyKind tv() { return {Divergence::TV, 1.0}; }
    static UncertaintyKind wasserstein(double c = 1.0) { return checked({Divergence::Wasserstein, c}); }
    static UncertaintyKind kl(double c = 1.0) { return checked({Divergence::KL, c}); }
    static UncertaintyKind chi_square(double c = 1.0) { return checked({Divergence::ChiSquare, c}); }

    /// True for the sets centred on the add-L estimate.
    bool smoothed_center() const noexcept {
        return divergence == Divergence::KL || divergence == Divergence::ChiSquare;
    }

    friend bool operator==(const UncertaintyKind&, const UncertaintyKind&) = default;

private:
    static UncertaintyKind checked(UncertaintyKind k) {
        if (!(k.constant > 0.0) || !std::isfinite(k.constant))
            throw ValidationError("uncertainty set constant must be positive");
        return k;
    }
};

inline std::string_view to_string(Divergence d) {
    switch (d) {
    case Divergence::TV: return "tv";
    case Divergence::Wasserstein: return "wasserstein";
    case Divergence::KL: return "kl";
    case Divergence::ChiSquare: return "chi2";
    }
    return "?";
}

inline Divergence parse_divergence(std::string_view name) {
    if (name == "tv") return Divergence::TV;
    if (name == "wasserstein" || name == "w") return Divergence::Wasserstein;
    if (name == "kl") return Divergence::KL;
    if (name == "chi2" || name == "chi_square" || name == "chisquare") return Divergence::ChiSquare;
    throw ValidationError("unknown uncertainty kind '" + std::string(name) + "'");
}

inline UncertaintyKind make_kind(Divergence d, double constant = 1.0) {
    switch (d) {
    case Divergence::TV: return UncertaintyKind::tv();
    case Divergence::Wasserstein: return UncertaintyKind::wasserstein(constant);
    case Divergence::KL: return UncertaintyKind::kl(constant);
    case Divergence::ChiSquare: return UncertaintyKind::chi_square(constant);
    }
    throw ValidationError("unknown uncertainty kind");
}

namespace detail {

inline void check_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
}

} // namespace detail

/// Largest meaningful radius of each set; an unvisited pair gets this.
inline double radius_cap(Divergence d, std::size_t n_states) {
    const double ns = static_cast<double>(n_states);
    switch (d) {
    case Divergence::TV:
    case Divergence::Wasserstein: return 1.0;
    case Divergence::KL: return std::log(ns);
    case Divergence::ChiSquare: return ns + 1.0;
    }
    return 0.0;
}

inline double radius_tv(std::uint64_t n_sa, std::size_t n_states, std::size_t n_actions, double delta) {
    detail::check_delta(delta);
    if (n_sa == 0) return 1.0;
    const double ns = static_cast<double>(n_states), na = static_cast<double>(n_actions);
    const double numer = std::max(ns, 2.0 * std::log(2.0 * ns * na / delta));
    return std::min(1.0, std::sqrt(numer / static_cast<double>(n_sa)));
}

inline double radius_wasserstein(std::uint64_t n_sa, std::size_t n_states, std::size_t n_actions,
                                 double delta, double c_w) {
    detail::check_delta(delta);
    if (n_sa == 0) return 1.0;
    const double ns = static_cast<double>(n_states), na = static_cast<double>(n_actions);
    return std::min(1.0, std::sqrt(c_w * ns * std::log(ns * na / delta) / static_cast<double>(n_sa)));
}

inline double radius_kl(std::uint64_t n_sa, std::uint64_t n_total, std::size_t n_states,
                        std::size_t n_actions, double delta, double c_kl) {
    detail::check_delta(delta);
    const double cap = radius_cap(Divergence::KL, n_states);
    if (n_sa == 0) return cap;
    const double ns = static_cast<double>(n_states), na = static_cast<double>(n_actions);
    const double r = c_kl * ns * std::log(ns * ns * na / delta) *
                     std::log(static_cast<double>(n_total)) / static_cast<double>(n_sa);
    return std::min(cap, r);
}

inline double radius_chi2(std::uint64_t n_sa, std::size_t n_states, std::size_t n_actions,
                          double delta, double c_c) {
    detail::check_delta(delta);
    const double cap = radius_cap(Divergence::ChiSquare, n_states);
    if (n_sa == 0) return cap;
    const double ns = static_cast<double>(n_states), na = static_cast<double>(n_actions);
    return std::min(cap, c_c * ns * std::log(ns * ns * na / delta) / static_cast<double>(n_sa));
}

inline double radius_for(const UncertaintyKind& kind, std::uint64_t n_sa, std::uint64_t n_total,
                         std::size_t n_states, std::size_t n_actions, double delta) {
    switch (kind.divergence) {
    case Divergence::TV: return radius_tv(n_sa, n_states, n_actions, delta);
    case Divergence::Wasserstein:
        return radius_wasserstein(n_sa, n_states, n_actions, delta, kind.constant);
    case Divergence::KL: return radius_kl(n_sa, n_total, n_states, n_actions, delta, kind.constant);
    case Divergence::ChiSquare: return radius_chi2(n_sa, n_states, n_actions, delta, kind.constant);
    }
    throw ValidationError("unknown uncertainty kind");
}

} // namespace drorl
