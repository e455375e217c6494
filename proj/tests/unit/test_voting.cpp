#include "vf/voting.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vf;
using namespace vf::voting;

namespace
{
    VoteObject num(double v, std::uint32_t member, bool valid = true)
    {
        return VoteObject{encode_f64(v), valid, MemberId(member)};
    }

    Ballot scalar_ballot(const std::vector<double> &xs, Technique t, MetricFn metric = euclidean_metric)
    {
        Ballot b;
        for (std::size_t i = 0; i < xs.size(); ++i)
            b.items.push_back(num(xs[i], static_cast<std::uint32_t>(i + 1)));
        b.select.kind = t;
        b.metric = std::move(metric);
        return b;
    }

    double value(const Decision &d)
    {
        EXPECT_TRUE(d.decided());
        if (!d.decided())
            return std::nan("");
        auto v = decode_f64s(d.value->payload);
        EXPECT_TRUE(v && v->size() == 1);
        return v ? v->front() : std::nan("");
    }

    constexpr Technique all_techniques[] = {Technique::majority, Technique::median, Technique::plurality,
                                            Technique::weighted_average, Technique::consensus};
} // namespace

TEST(Majority, PicksTheClassHoldingMoreThanHalf)
{
    EXPECT_EQ(value(vote(scalar_ballot({4, 4, 5}, Technique::majority))), 4);
    EXPECT_EQ(vote(scalar_ballot({1, 2, 3}, Technique::majority)).reason, NoDecision::no_majority);
}

TEST(Majority, CountsInvalidItemsAgainstN)
{
    auto b = scalar_ballot({4, 4, 4, 4}, Technique::majority);
    b.items[2].valid = b.items[3].valid = false;
    EXPECT_EQ(vote(b).reason, NoDecision::no_majority);
    b.items[2].valid = true;
    EXPECT_EQ(value(vote(b)), 4);
}

TEST(Majority, EpsilonLinksCloseValues)
{
    auto b = scalar_ballot({1.0, 1.05, 1.1, 7}, Technique::majority);
    EXPECT_FALSE(vote(b).decided());
    b.select.epsilon = 0.06;
    // linkage is transitive: 1.0 ~ 1.05 ~ 1.1
    EXPECT_EQ(value(vote(b)), 1.0);
}

TEST(Majority, MaskingBoundHoldsOnRandomBallots)
{
    std::mt19937_64 rng(21);
    for (std::uint32_t n = 1; n <= 9; ++n)
    {
        const std::uint32_t max_faults = (n + 1) / 2 - 1;
        for (int trial = 0; trial < 300; ++trial)
        {
            const double truth = double(rng() % 1000);
            std::vector<double> xs(n, truth);
            std::vector<std::uint32_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0u);
            std::shuffle(idx.begin(), idx.end(), rng);
            auto b = scalar_ballot(xs, Technique::majority, {});
            const auto k = max_faults == 0 ? 0 : rng() % (max_faults + 1);
            for (std::uint32_t f = 0; f < k; ++f)
            {
                auto &item = b.items[idx[f]];
                if (rng() % 2)
                    item.valid = false;
                else
                    item.payload = encode_f64(truth + 1 + double(rng() % 3)); // colluding corruptions allowed
            }
            EXPECT_EQ(value(vote(b)), truth) << "n=" << n << " k=" << k;
        }
    }
}

TEST(Plurality, LargestClassWinsAndTiesAreConfigurable)
{
    EXPECT_EQ(value(vote(scalar_ballot({1, 1, 2, 3, 4}, Technique::plurality))), 1);
    auto b = scalar_ballot({2, 2, 1, 1}, Technique::plurality);
    EXPECT_EQ(vote(b).reason, NoDecision::tie);
    b.select.tie_break = TieBreak::lowest_member_id;
    // member 1 holds 2
    EXPECT_EQ(value(vote(b)), 2);
}

TEST(Median, SmallCases)
{
    EXPECT_EQ(value(vote(scalar_ballot({1, 5, 9}, Technique::median))), 5);
    EXPECT_EQ(value(vote(scalar_ballot({7}, Technique::median))), 7);
    EXPECT_EQ(value(vote(scalar_ballot({3, 3}, Technique::median))), 3);
    auto b = scalar_ballot({1, 5, 9}, Technique::median);
    for (auto &i : b.items)
        i.valid = false;
    EXPECT_EQ(vote(b).reason, NoDecision::no_valid_items);
}

TEST(Median, EqualsSortMedianOnOddScalarBallots)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-100, 100);
    for (int trial = 0; trial < 1000; ++trial)
    {
        const std::size_t n = 1 + 2 * (rng() % 6);
        std::vector<double> xs(n);
        for (auto &x : xs)
            x = u(rng);
        auto sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(value(vote(scalar_ballot(xs, Technique::median))), sorted[n / 2]);
    }
}

TEST(Median, IgnoresInvalidItems)
{
    auto b = scalar_ballot({1, 100, 2, 3, -50}, Technique::median);
    b.items[1].valid = b.items[4].valid = false;
    EXPECT_EQ(value(vote(b)), 2);
}

TEST(WeightedAverage, FrozenThreeItemValue)
{
    auto b = scalar_ballot({0, 0, 9}, Technique::weighted_average);
    b.select.scaling_factor = 1;
    EXPECT_NEAR(value(vote(b)), 1.0323886639676114, 1e-15);
}

TEST(WeightedAverage, FaultyItemHasZeroWeight)
{
    auto b = scalar_ballot({10, 20, 1e6}, Technique::weighted_average);
    b.items[2].valid = false;
    EXPECT_DOUBLE_EQ(value(vote(b)), 15);
    for (auto &i : b.items)
        i.valid = false;
    EXPECT_EQ(vote(b).reason, NoDecision::zero_weight);
}

TEST(WeightedAverage, InvalidPayloadNeverInfluencesOutput)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int trial = 0; trial < 200; ++trial)
    {
        auto b = scalar_ballot({u(rng), u(rng), u(rng), u(rng), u(rng)}, Technique::weighted_average);
        b.items[rng() % 5].valid = false;
        const auto ref = vote(b);
        for (auto &i : b.items)
            if (!i.valid)
                i.payload = encode_f64(u(rng) * 1e9);
        EXPECT_EQ(vote(b).value, ref.value);
    }
}

TEST(WeightedAverage, IdenticalInputsReturnBitExact)
{
    for (double v : {0.1, -3.7, 1e-300, 12345.678})
        for (double s : {0.01, 1.0, 100.0})
        {
            auto b = scalar_ballot({v, v, v, v}, Technique::weighted_average);
            b.select.scaling_factor = s;
            EXPECT_EQ(vote(b).value->payload, encode_f64(v));
        }
}

TEST(WeightedAverage, NonNumericPayloadIsRefused)
{
    Ballot b;
    b.select.kind = Technique::weighted_average;
    b.items = {VoteObject{Bytes{1, 2, 3}, true, MemberId(1)}, VoteObject{Bytes{4, 5, 6}, true, MemberId(2)}};
    b.metric = [](const VoteObject &, const VoteObject &) { return 0.0; };
    EXPECT_EQ(vote(b).reason, NoDecision::not_numeric);
}

// With f of N items invalidated, the worst deviation from the fault-free
// mean over a fixed corpus does not shrink as f grows.
TEST(WeightedAverage, ImprecisionGrowsWithInvalidItems)
{
    constexpr std::size_t n = 7;
    std::mt19937_64 rng(13);
    std::normal_distribution<double> noise(0, 1);
    std::vector<std::vector<double>> corpus(500, std::vector<double>(n));
    for (auto &c : corpus)
        for (auto &x : c)
            x = 50 + noise(rng);
    double prev = 0;
    for (std::size_t f = 0; f < n; ++f)
    {
        double worst = 0;
        for (const auto &c : corpus)
        {
            const double mean = std::accumulate(c.begin(), c.end(), 0.0) / n;
            auto b = scalar_ballot(c, Technique::weighted_average);
            for (std::size_t i = 0; i < f; ++i)
                b.items[i].valid = false;
            worst = std::max(worst, std::abs(value(vote(b)) - mean));
        }
        EXPECT_GE(worst, prev) << "f=" << f;
        prev = worst;
    }
}

TEST(Consensus, DemandsAllItemsValidAndEqual)
{
    EXPECT_EQ(value(vote(scalar_ballot({4, 4, 4}, Technique::consensus))), 4);
    EXPECT_EQ(vote(scalar_ballot({4, 4, 5}, Technique::consensus)).reason, NoDecision::disagreement);
    auto b = scalar_ballot({4, 4, 4}, Technique::consensus);
    b.items[0].valid = false;
    EXPECT_EQ(vote(b).reason, NoDecision::invalid_item);
    b.select.require_all = false;
    EXPECT_EQ(value(vote(b)), 4);
}

TEST(Vote, IsInvariantUnderItemPermutation)
{
    std::mt19937_64 rng(99);
    for (auto t : all_techniques)
        for (int trial = 0; trial < 200; ++trial)
        {
            const std::size_t n = 1 + rng() % 7;
            std::vector<double> xs(n);
            for (auto &x : xs)
                x = double(rng() % 4);
            auto b = scalar_ballot(xs, t);
            b.select.tie_break = TieBreak::lowest_member_id;
            for (auto &i : b.items)
                i.valid = rng() % 5 != 0;
            const auto ref = vote(b);
            std::shuffle(b.items.begin(), b.items.end(), rng);
            const auto got = vote(b);
            ASSERT_EQ(got.decided(), ref.decided()) << to_string(t);
            if (!ref.decided())
            {
                EXPECT_EQ(got.reason, ref.reason);
                continue;
            }
            if (t == Technique::weighted_average)
                EXPECT_NEAR(value(got), value(ref), 1e-12);
            else
                EXPECT_EQ(got.value, ref.value) << to_string(t);
        }
}

TEST(Vote, RejectsBadParameters)
{
    auto b = scalar_ballot({1, 2}, Technique::weighted_average);
    b.select.scaling_factor = 0;
    EXPECT_THROW(vote(b), Error);
    b.select.scaling_factor = 1;
    b.select.epsilon = -1;
    EXPECT_THROW(vote(b), Error);
}

TEST(Metric, DefaultIsDiscreteAndChecksLength)
{
    VoteObject a{Bytes{1, 2}, true, {}}, b{Bytes{1, 3}, true, {}}, c{Bytes{1}, true, {}};
    EXPECT_EQ(default_metric(a, a), 0);
    EXPECT_EQ(default_metric(a, b), 1);
    try
    {
        (void)default_metric(a, c);
        FAIL();
    }
    catch (const Error &e)
    {
        EXPECT_EQ(e.code(), Errc::length_mismatch);
    }
}

TEST(Technique, NamesRoundTrip)
{
    for (auto t : all_techniques)
        EXPECT_EQ(technique_from_string(to_string(t)), t);
    EXPECT_FALSE(technique_from_string("borda"));
}
