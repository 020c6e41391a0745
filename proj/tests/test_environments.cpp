#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace drorl;

namespace {

std::size_t neighbor(std::size_t s, int dr, int dc, std::size_t w, std::size_t h) {
    const int r = static_cast<int>(s / w) + dr, c = static_cast<int>(s % w) + dc;
    if (r < 0 || c < 0 || r >= static_cast<int>(h) || c >= static_cast<int>(w)) return s;
    return static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c);
}

double optimal_start_value(SlipMode mode) {
    const TabularMDP m = build_frozenlake(frozenlake_4x4(mode));
    auto [q, pi] = value_iteration(m, 1e-12);
    return expected_initial_value(m, policy_evaluation_exact(m, pi));
}

} // namespace

TEST(FrozenLake, StandardMapDimensions) {
    const TabularMDP m = build_frozenlake(frozenlake_4x4());
    EXPECT_EQ(m.n_states(), 16U);
    EXPECT_EQ(m.n_actions(), 4U);
    EXPECT_EQ(m.d0()[0], 1.0);
    EXPECT_DOUBLE_EQ(m.gamma(), 0.95);
}

TEST(FrozenLake, DeterministicMoveRight) {
    const TabularMDP m = build_frozenlake(frozenlake_4x4(SlipMode::Deterministic));
    const std::size_t s = 6; // row 1, column 2
    auto row = m.transition_row(s, kRight);
    for (std::size_t t = 0; t < 16; ++t) EXPECT_EQ(row[t], t == 7 ? 1.0 : 0.0);
}

TEST(FrozenLake, SlipperyUpSplitsIntoThree) {
    const GridworldSpec spec = frozenlake_4x4();
    const TabularMDP m = build_frozenlake(spec);
    const std::size_t s = 10; // row 2, column 2: all four neighbors exist
    const std::size_t up = neighbor(s, -1, 0, 4, 4), left = neighbor(s, 0, -1, 4, 4), right = neighbor(s, 0, 1, 4, 4);
    ASSERT_TRUE(up != left && left != right && up != right);
    auto row = m.transition_row(s, kUp);
    for (std::size_t t = 0; t < 16; ++t) {
        const double expected = (t == up || t == left || t == right) ? 1.0 / 3.0 : 0.0;
        EXPECT_NEAR(row[t], expected, 1e-15) << t;
    }
}

TEST(FrozenLake, OffGridStaysInPlace) {
    const TabularMDP m = build_frozenlake(frozenlake_4x4(SlipMode::Deterministic));
    EXPECT_EQ(m.transition_row(0, kLeft)[0], 1.0);
    EXPECT_EQ(m.transition_row(0, kUp)[0], 1.0);
    const TabularMDP slip = build_frozenlake(frozenlake_4x4());
    // Left from the corner: left and up bounce back, down moves.
    EXPECT_NEAR(slip.transition_row(0, kLeft)[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(slip.transition_row(0, kLeft)[4], 1.0 / 3.0, 1e-15);
}

TEST(FrozenLake, AbsorbingHolesAndGoal) {
    const GridworldSpec spec = frozenlake_4x4();
    const TabularMDP m = build_frozenlake(spec);
    for (std::size_t s = 0; s < 16; ++s) {
        if (spec.tiles[s] != Tile::Hole && spec.tiles[s] != Tile::Goal) continue;
        for (std::size_t a = 0; a < 4; ++a) {
            EXPECT_EQ(m.transition_row(s, a)[s], 1.0);
            EXPECT_EQ(m.reward(s, a), 0.0);
        }
    }
}

TEST(FrozenLake, RewardIsProbabilityOfEnteringGoal) {
    const TabularMDP m = build_frozenlake(frozenlake_4x4());
    // From 14 (row 3, column 2) moving Right: slips to Up (10), Right (15 = goal) or Down (stays).
    EXPECT_NEAR(m.reward(14, kRight), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.reward(14, kDown), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(m.reward(0, kRight), 0.0);
    GridworldSpec half = frozenlake_4x4();
    half.goal_reward = 0.5;
    EXPECT_NEAR(build_frozenlake(half).reward(14, kRight), 0.5 / 3.0, 1e-15);
}

TEST(FrozenLake, DeterministicBeatsSlippery) {
    const double det = optimal_start_value(SlipMode::Deterministic);
    const double slip = optimal_start_value(SlipMode::Slippery);
    EXPECT_GT(det, slip);
    // Shortest safe path is six steps, the reward arrives on the sixth.
    EXPECT_NEAR(det, std::pow(0.95, 5), 1e-9);
}

TEST(FrozenLake, ExpectedReturnsMatchArrivalReward) {
    // Under any policy, E[sum gamma^t r(s_t, a_t)] equals E[sum gamma^t 1{s_{t+1} = goal}]:
    // compare against an explicit arrival-reward evaluation of the uniform policy.
    const GridworldSpec spec = frozenlake_4x4();
    const TabularMDP m = build_frozenlake(spec);
    const Policy pi = Policy::uniform(16, 4);
    Vector v(16, 0.0);
    for (int it = 0; it < 4000; ++it) {
        Vector next(16, 0.0);
        for (std::size_t s = 0; s < 16; ++s) {
            if (spec.tiles[s] == Tile::Hole || spec.tiles[s] == Tile::Goal) continue;
            for (std::size_t a = 0; a < 4; ++a)
                for (std::size_t t = 0; t < 16; ++t) {
                    const double arrive = spec.tiles[t] == Tile::Goal ? 1.0 : 0.0;
                    next[s] += pi.prob(s, a) * m.transition_row(s, a)[t] * (arrive + 0.95 * v[t]);
                }
        }
        v = next;
    }
    const ValueFunction exact = policy_evaluation_exact(m, pi);
    for (std::size_t s = 0; s < 16; ++s) EXPECT_NEAR(exact[s], v[s], 1e-9);
}

TEST(MapParsing, ErrorsAndFixture) {
    try {
        parse_map("SFF\nFH\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2U);
    }
    try {
        parse_map("SF\nFX\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2U);
    }
    EXPECT_THROW(parse_map("FF\nFG\n"), ValidationError);
    EXPECT_THROW(parse_map("SS\nFG\n"), ValidationError);
    EXPECT_THROW(parse_map("SF\nFF\n"), ValidationError);
    EXPECT_THROW(load_map("/nonexistent/map.txt"), Error);

    const GridworldSpec fixture = load_map(std::string(DRORL_DATA_DIR) + "/frozenlake_4x4.txt");
    const GridworldSpec builtin = frozenlake_4x4();
    EXPECT_EQ(fixture.width, 4U);
    EXPECT_EQ(fixture.height, 4U);
    EXPECT_EQ(fixture.tiles, builtin.tiles);
}

TEST(RandomMdp, DeterministicGivenSeed) {
    EXPECT_EQ(build_random_mdp(6, 3, 42), build_random_mdp(6, 3, 42));
    EXPECT_NE(build_random_mdp(6, 3, 42), build_random_mdp(6, 3, 43));
}

TEST(RandomMdp, LargeConcentrationIsNearUniform) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const TabularMDP m = build_random_mdp(10, 2, seed, 1e6);
        for (double p : m.transitions()) EXPECT_LE(p, 2.0 / 10.0);
    }
}

TEST(RandomMdp, SingleStateRow) {
    const TabularMDP m = build_random_mdp(1, 3, 9, 0.1);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(m.transition_row(0, a)[0], 1.0);
    EXPECT_THROW(build_random_mdp(0, 1, 1), ValidationError);
}

TEST(RandomMdp, SmallConcentrationStillValid) {
    // Very peaked Dirichlet draws can underflow; rows must stay distributions.
    for (std::uint64_t seed = 0; seed < 50; ++seed) EXPECT_NO_THROW(build_random_mdp(5, 2, seed, 1e-3));
}
