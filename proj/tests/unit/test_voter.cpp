#include "vf/vf.hpp"

#include <gtest/gtest.h>

using namespace vf;

namespace
{
    struct FarmRun
    {
        sim::RunResult run;
        std::map<std::uint32_t, std::shared_ptr<const voter::VoterShared>> voters;
        std::map<std::uint32_t, std::vector<std::optional<proto::Vote>>> votes;
    };

    struct FarmSpec
    {
        std::uint32_t n = 3;
        std::uint64_t sessions = 1;
        sim::Tick dt = 50;
        bool cyclic = false;
        std::set<std::uint32_t> crashed;
        std::set<std::uint32_t> silent; // user supplies no input
        std::function<double(std::uint32_t node, std::uint64_t k)> input = [](std::uint32_t, std::uint64_t) {
            return 3.0;
        };
    };

    FarmRun run_farm(const FarmSpec &spec)
    {
        FarmRun out;
        sim::Fabric fab;
        proto::install_formatter(fab);
        for (std::uint32_t i = 1; i <= spec.n; ++i)
            fab.spawn(sim::user_at(i), [&out, &spec](sim::ProcessContext ctx) -> sim::Task<void> {
                const auto node = ctx.self().node.value;
                auto h = client::FarmHandle::open(voting::euclidean_metric);
                for (std::uint32_t j = 1; j <= spec.n; ++j)
                    (void)h.add(NodeId(j), MemberId(j));
                client::RunOptions o;
                o.dt = spec.dt;
                o.cyclic_send_order = spec.cyclic;
                if (!h.run(ctx, o))
                    co_return;
                out.voters[node] = h.voter_state();
                for (std::uint64_t k = 1; k <= spec.sessions; ++k)
                {
                    if (!spec.silent.count(node))
                        (void)co_await h.input(ctx, k, encode_f64(spec.input(node, k)));
                    auto s = co_await h.get(ctx, 100 * spec.dt);
                    out.votes[node].push_back(s.kind == VfStatusKind::done ? h.last_vote() : std::nullopt);
                }
                (void)co_await h.close(ctx, 100 * spec.dt);
            });
        for (auto c : spec.crashed)
            for (auto e : {sim::voter_at(c), sim::user_at(c)})
                EXPECT_TRUE(fab.inject(sim::FaultSpec{e, sim::FaultKind::crash, 0, {}, 0, 0, std::nullopt}));
        out.run = fab.run_until_quiescent(1'000'000);
        return out;
    }

    std::vector<VoterPhase> word(const voter::VoterShared &v)
    {
        std::vector<VoterPhase> w;
        for (const auto &[t, p] : v.phases)
            w.push_back(p);
        return w;
    }

    std::vector<std::string> sends_from(const sim::TraceLog &log, const std::string &from)
    {
        std::vector<std::string> out;
        for (const auto &e : log.events())
            if (e.kind == "send" && e.from == from)
                out.push_back(e.to + " " + e.detail.substr(0, e.detail.find(' ')));
        return out;
    }
} // namespace

TEST(Voter, HappySessionWalksThePhaseAutomaton)
{
    auto r = run_farm({});
    ASSERT_TRUE(r.run.status);
    using P = VoterPhase;
    for (const auto &[node, v] : r.voters)
    {
        EXPECT_EQ(word(*v), (std::vector<P>{P::init, P::broadcast, P::voting, P::success, P::init})) << node;
        ASSERT_EQ(v->results.size(), 1u);
        EXPECT_EQ(v->results[0].timeouts, 0u);
        EXPECT_EQ(v->broadcasts, 1u);
        EXPECT_TRUE(v->closed);
    }
}

TEST(Voter, BroadcastWaitsForTheTurn)
{
    // voter i broadcasts once it holds i-1 fellow values
    auto r = run_farm({4, 1, 50, false, {}, {}});
    std::vector<std::string> first_bcast;
    for (const auto &e : r.run.trace.events())
        if (e.kind == "send" && e.detail.rfind("BCAST", 0) == 0 &&
            std::find(first_bcast.begin(), first_bcast.end(), e.from) == first_bcast.end())
            first_bcast.push_back(e.from);
    EXPECT_EQ(first_bcast, (std::vector<std::string>{"voter@1", "voter@2", "voter@3", "voter@4"}));
}

TEST(Voter, SendOrderIsAscendingOrCyclic)
{
    auto asc = sends_from(run_farm({4, 1, 50, false, {}, {}}).run.trace, "voter@3");
    auto cyc = sends_from(run_farm({4, 1, 50, true, {}, {}}).run.trace, "voter@3");
    auto bcasts = [](const std::vector<std::string> &s) {
        std::vector<std::string> out;
        for (const auto &x : s)
            if (x.find("BCAST") != std::string::npos)
                out.push_back(x.substr(0, x.find(' ')));
        return out;
    };
    EXPECT_EQ(bcasts(asc), (std::vector<std::string>{"voter@1", "voter@2", "voter@4"}));
    EXPECT_EQ(bcasts(cyc), (std::vector<std::string>{"voter@4", "voter@1", "voter@2"}));
}

TEST(Voter, DoneNeverPrecedesTheBroadcast)
{
    for (std::uint32_t n = 1; n <= 5; ++n)
    {
        auto r = run_farm({n, 2, 50, false, {}, {}});
        for (std::uint32_t i = 1; i <= n; ++i)
        {
            auto s = sends_from(r.run.trace, "voter@" + std::to_string(i));
            std::size_t bcasts = 0;
            for (const auto &x : s)
            {
                if (x.find("BCAST") != std::string::npos)
                    ++bcasts;
                if (x.find("VF_DONE") != std::string::npos)
                {
                    EXPECT_EQ(bcasts % std::max<std::size_t>(1, n - 1), 0u) << "n=" << n << " voter " << i;
                    EXPECT_GT(bcasts + (n == 1), 0u);
                }
            }
        }
    }
}

TEST(Voter, CrashedFellowCostsOneTimeout)
{
    auto r = run_farm({3, 1, 50, false, {3}, {}});
    ASSERT_TRUE(r.run.status);
    for (std::uint32_t i : {1u, 2u})
    {
        const auto &res = r.voters.at(i)->results.at(0);
        EXPECT_EQ(res.timeouts, 1u);
        ASSERT_EQ(res.ballot.size(), 3u);
        EXPECT_FALSE(res.ballot.back().valid);
        ASSERT_TRUE(r.votes.at(i).at(0));
        EXPECT_TRUE(r.votes.at(i).at(0)->decided);
    }
}

TEST(Voter, MissingUserInputBecomesAnInvalidMarker)
{
    auto r = run_farm({3, 1, 50, false, {}, {2}});
    EXPECT_TRUE(r.voters.at(2)->results.at(0).user_input_missing);
    // voter 3 holds both valid values and one invalid slot
    const auto &v3 = r.voters.at(3)->results.at(0);
    ASSERT_EQ(v3.ballot.size(), 3u);
    EXPECT_EQ(std::count_if(v3.ballot.begin(), v3.ballot.end(), [](const VoteObject &v) { return !v.valid; }), 1);
    EXPECT_TRUE(r.votes.at(3).at(0)->decided);
    // voter 1 timed out on slot 2 before the marker was sent; the marker
    // then fills its last slot ahead of voter 3's value
    EXPECT_EQ(r.voters.at(1)->results.at(0).timeouts, 1u);
    EXPECT_FALSE(r.votes.at(1).at(0)->decided);
}

TEST(Voter, OneValueFaultIsMaskedInTmr)
{
    FarmSpec s;
    s.sessions = 3;
    s.input = [](std::uint32_t node, std::uint64_t k) { return node == k ? -1.0 : double(10 * k); };
    auto r = run_farm(s);
    for (std::uint32_t i = 1; i <= 3; ++i)
        for (std::uint64_t k = 1; k <= 3; ++k)
        {
            const auto &v = r.votes.at(i).at(k - 1);
            ASSERT_TRUE(v);
            EXPECT_EQ(v->value, encode_f64(double(10 * k)));
        }
}

TEST(Voter, BallotsAreIdenticalAcrossVotersWithoutFaults)
{
    FarmSpec s;
    s.n = 5;
    s.sessions = 3;
    s.input = [](std::uint32_t node, std::uint64_t k) { return node == 5 ? -1.0 : double(k); };
    auto r = run_farm(s);
    for (std::uint64_t k = 0; k < 3; ++k)
        for (std::uint32_t i = 2; i <= 5; ++i)
            EXPECT_EQ(r.voters.at(i)->results.at(k).ballot, r.voters.at(1)->results.at(k).ballot);
}

TEST(Voter, WarnMidSessionIsDeferredThenExcludes)
{
    sim::Fabric fab;
    proto::install_formatter(fab);
    std::map<std::uint32_t, std::shared_ptr<const voter::VoterShared>> voters;
    std::vector<FarmMember> smaller{{NodeId(1), MemberId(1)}, {NodeId(2), MemberId(2)}};
    for (std::uint32_t i = 1; i <= 3; ++i)
        fab.spawn(sim::user_at(i), [&](sim::ProcessContext ctx) -> sim::Task<void> {
            const auto node = ctx.self().node.value;
            auto h = client::FarmHandle::open();
            for (std::uint32_t j = 1; j <= 3; ++j)
                (void)h.add(NodeId(j), MemberId(j));
            client::RunOptions o;
            o.dt = 50;
            (void)h.run(ctx, o);
            voters[node] = h.voter_state();
            if (node == 3)
                co_await ctx.sleep(20);
            (void)co_await h.input(ctx, 1, Bytes{1});
            if (node == 1)
            {
                // every voter is inside session 1, waiting on user 3
                co_await ctx.sleep(5);
                for (std::uint32_t j = 1; j <= 3; ++j)
                    ctx.notify(sim::voter_at(j), proto::encode(proto::Warn{1, smaller}));
            }
            (void)co_await h.get(ctx, 1000);
        });
    fab.run_until_quiescent(100000);
    for (std::uint32_t j = 1; j <= 3; ++j)
    {
        const auto &v = *voters.at(j);
        ASSERT_EQ(v.results.size(), 1u);
        EXPECT_EQ(v.results[0].epoch, 0u) << "session 1 keeps the old layout";
        EXPECT_EQ(v.results[0].ballot.size(), 3u);
        EXPECT_EQ(v.epoch, 1u);
    }
    EXPECT_TRUE(voters.at(3)->excluded);
    EXPECT_FALSE(voters.at(1)->excluded);
}

TEST(Ballot, CanonicalOrderIsByMember)
{
    std::vector<VoteObject> items{{Bytes{3}, true, MemberId(3)}, {Bytes{}, false, std::nullopt},
                                  {Bytes{1}, true, MemberId(1)}, {Bytes{2}, false, MemberId(2)}};
    auto c = voter::detail::canonical_ballot(items);
    ASSERT_EQ(c.size(), 4u);
    EXPECT_EQ(c[0].source, MemberId(1));
    EXPECT_EQ(c[1].source, MemberId(2));
    EXPECT_EQ(c[2].source, MemberId(3));
    EXPECT_FALSE(c[3].source);
}
