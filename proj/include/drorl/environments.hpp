#pragma once

#include "drorl/error.hpp"
#include "drorl/tabular_mdp.hpp"

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace drorl {

enum class Tile : char { Start = 'S', Frozen = 'F', Hole = 'H', Goal = 'G' };

enum class SlipMode { Slippery, Deterministic };

/// Gridworld actions, in the usual FrozenLake order.
enum GridAction : std::size_t { kLeft = 0, kDown = 1, kRight = 2, kUp = 3 };

struct GridworldSpec {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Tile> tiles; // row-major, row 0 on top
    SlipMode slip = SlipMode::Slippery;
    double gamma = 0.95;
    double goal_reward = 1.0;

    Tile at(std::size_t row, std::size_t col) const { return tiles[row * width + col]; }

    void validate() const {
        if (width == 0 || height == 0) throw ValidationError("gridworld: empty grid");
        if (tiles.size() != width * height)
            throw ValidationError("gridworld: tile array does not match width x height");
        std::size_t starts = 0, goals = 0;
        for (Tile t : tiles) {
            starts += t == Tile::Start;
            goals += t == Tile::Goal;
        }
        if (starts != 1) throw ValidationError("gridworld: exactly one Start tile required");
        if (goals == 0) throw ValidationError("gridworld: at least one Goal tile required");
        if (!(goal_reward >= 0.0 && goal_reward <= 1.0))
            throw ValidationError("gridworld: goal reward must lie in [0, 1]");
    }
};

/// Parses a map, one row per line using the characters S/F/H/G.
inline GridworldSpec parse_map(std::string_view text, SlipMode slip = SlipMode::Slippery,
                               double gamma = 0.95) {
    GridworldSpec spec;
    spec.slip = slip;
    spec.gamma = gamma;
    std::istringstream is{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        if (spec.width == 0) spec.width = line.size();
        if (line.size() != spec.width) throw ParseError("ragged map row", line_no);
        for (char c : line) {
            switch (c) {
            case 'S': case 'F': case 'H': case 'G':
                spec.tiles.push_back(static_cast<Tile>(c));
                break;
            default:
                throw ParseError(std::string("unknown map character '") + c + "'", line_no);
            }
        }
        ++spec.height;
    }
    spec.validate();
    return spec;
}

inline GridworldSpec load_map(const std::string& path, SlipMode slip = SlipMode::Slippery,
                              double gamma = 0.95) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open map file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_map(buf.str(), slip, gamma);
}

inline constexpr std::string_view kFrozenLake4x4 = "SFFF\nFHFH\nFFFH\nHFFG\n";

inline GridworldSpec frozenlake_4x4(SlipMode slip = SlipMode::Slippery, double gamma = 0.95) {
    return parse_map(kFrozenLake4x4, slip, gamma);
}

/// Exact kernel of the gridworld. Holes and goals are absorbing with zero
/// reward; the reward of (s, a) is the goal reward times the probability
/// of stepping onto a goal tile.
inline TabularMDP build_frozenlake(const GridworldSpec& spec) {
    spec.validate();
    const std::size_t ns = spec.width * spec.height;
    constexpr std::size_t na = 4;
    Vector trans(ns * na * ns, 0.0);
    Vector rewards(ns * na, 0.0);
    Vector d0(ns, 0.0);

    auto step = [&](std::size_t s, std::size_t dir) {
        std::size_t row = s / spec.width, col = s % spec.width;
        switch (dir) {
        case kLeft: if (col > 0) --col; break;
        case kDown: if (row + 1 < spec.height) ++row; break;
        case kRight: if (col + 1 < spec.width) ++col; break;
        case kUp: if (row > 0) --row; break;
        }
        return row * spec.width + col;
    };

    for (std::size_t s = 0; s < ns; ++s) {
        const Tile tile = spec.tiles[s];
        if (tile == Tile::Start) d0[s] = 1.0;
        for (std::size_t a = 0; a < na; ++a) {
            double* row = trans.data() + (s * na + a) * ns;
            if (tile == Tile::Hole || tile == Tile::Goal) {
                row[s] = 1.0;
                continue;
            }
            if (spec.slip == SlipMode::Deterministic) {
                row[step(s, a)] += 1.0;
            } else {
                for (std::size_t dir : {(a + 3) % 4, a, (a + 1) % 4}) row[step(s, dir)] += 1.0 / 3.0;
            }
            double p_goal = 0.0;
            for (std::size_t t = 0; t < ns; ++t)
                if (spec.tiles[t] == Tile::Goal) p_goal += row[t];
            rewards[s * na + a] = spec.goal_reward * p_goal;
        }
    }
    return TabularMDP(ns, na, std::move(trans), std::move(rewards), spec.gamma, std::move(d0));
}

/// Random MDP: Dirichlet(concentration) transition rows, Uniform[0,1]
/// rewards, uniform initial distribution.
inline TabularMDP build_random_mdp(std::size_t n_states, std::size_t n_actions, std::uint64_t seed,
                                   double concentration = 1.0, double gamma = 0.9) {
    if (n_states == 0 || n_actions == 0) throw ValidationError("random MDP needs states and actions");
    if (!(concentration > 0.0)) throw ValidationError("concentration must be positive");
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma_dist(concentration, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vector trans(n_states * n_actions * n_states);
    for (std::size_t k = 0; k < n_states * n_actions; ++k) {
        double* row = trans.data() + k * n_states;
        double sum = 0.0;
        for (std::size_t t = 0; t < n_states; ++t) sum += row[t] = gamma_dist(rng);
        if (sum > 0.0) {
            for (std::size_t t = 0; t < n_states; ++t) row[t] /= sum;
        } else {
            std::fill(row, row + n_states, 0.0);
            row[std::uniform_int_distribution<std::size_t>(0, n_states - 1)(rng)] = 1.0;
        }
    }
    Vector rewards(n_states * n_actions);
    for (auto& r : rewards) r = unif(rng);
    Vector d0(n_states, 1.0 / static_cast<double>(n_states));
    return TabularMDP(n_states, n_actions, std::move(trans), std::move(rewards), gamma, std::move(d0));
}

} // namespace drorl
