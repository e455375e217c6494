#pragma once

// Cost model of the farm: object counts, a synchronous crossbar model of
// the broadcast phase, and simulated session latency.
//
// Crossbar: every step, each eligible voter may complete its next send.
// Voter i becomes eligible once it holds i-1 fellow values, as the voter
// loop broadcasts when its count reaches its ident. A send completes only
// when the ports it needs are free this step; contention is resolved in
// favour of the lower sender ident. With half-duplex ports a node takes
// part in at most one transfer per step (the rendezvous of a blocking
// send occupies both ends), so the crossbar moves at most floor(N/2)
// messages per step. With full-duplex ports a node may send and receive in
// the same step, for a capacity of N.

#include "client.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace vf::perf
{
    using Permutation = std::vector<std::uint32_t>;

    enum class Ports : std::uint8_t
    {
        half_duplex,
        full_duplex,
    };

    struct CrossbarModel
    {
        std::uint32_t n = 4;
        Ports ports = Ports::half_duplex;

        double capacity() const { return ports == Ports::half_duplex ? std::floor(n / 2.0) : double(n); }
    };

    struct ScheduleResult
    {
        std::uint64_t steps = 0;
        std::uint64_t messages = 0;
        /// messages / (steps * capacity)
        double utilization = 0;
    };

    inline Permutation identity_permutation(std::uint32_t n)
    {
        Permutation p(n);
        std::iota(p.begin(), p.end(), 1u);
        return p;
    }

    /// i -> i+1 mod N.
    inline Permutation one_cycled_permutation(std::uint32_t n)
    {
        Permutation p(n);
        for (std::uint32_t i = 0; i < n; ++i)
            p[i] = (i + 1) % n + 1;
        return p;
    }

    inline bool is_permutation_of_n(const Permutation &p)
    {
        std::vector<bool> seen(p.size() + 1, false);
        for (auto v : p)
        {
            if (v < 1 || v > p.size() || seen[v])
                return false;
            seen[v] = true;
        }
        return true;
    }

    /// Send order of voter i: pi^i(1), ..., pi^i(N), skipping i. The identity
    /// gives ascending order; the one-cycle gives i+1, ..., N, 1, ..., i-1.
    inline std::vector<std::vector<std::uint32_t>> send_orders(const Permutation &pi)
    {
        const auto n = static_cast<std::uint32_t>(pi.size());
        std::vector<std::vector<std::uint32_t>> orders(n + 1);
        for (std::uint32_t i = 1; i <= n; ++i)
            for (std::uint32_t k = 1; k <= n; ++k)
            {
                std::uint32_t v = k;
                for (std::uint32_t r = 0; r < i; ++r)
                    v = pi[v - 1];
                if (v != i)
                    orders[i].push_back(v);
            }
        return orders;
    }

    inline ScheduleResult schedule_steps(const CrossbarModel &m, const Permutation &pi)
    {
        if (m.n < 2 || pi.size() != m.n || !is_permutation_of_n(pi))
            throw Error(Errc::invalid_argument, "schedule needs N >= 2 and a permutation of 1..N");
        const auto orders = send_orders(pi);
        const auto n = m.n;
        std::vector<std::size_t> pos(n + 1, 0);
        std::vector<std::uint32_t> held(n + 1, 1); // own value included
        ScheduleResult r;
        auto pending = [&] {
            for (std::uint32_t i = 1; i <= n; ++i)
                if (pos[i] < orders[i].size())
                    return true;
            return false;
        };
        while (pending())
        {
            ++r.steps;
            std::vector<bool> eligible(n + 1, false);
            for (std::uint32_t i = 1; i <= n; ++i)
                eligible[i] = held[i] >= i && pos[i] < orders[i].size();
            std::vector<bool> tx(n + 1, false), rx(n + 1, false);
            for (std::uint32_t i = 1; i <= n; ++i)
            {
                if (!eligible[i])
                    continue;
                const auto d = orders[i][pos[i]];
                const bool free = m.ports == Ports::half_duplex ? !(tx[i] || rx[i] || tx[d] || rx[d]) : !(tx[i] || rx[d]);
                if (!free)
                    continue;
                tx[i] = rx[d] = true;
                ++pos[i];
                ++held[d];
                ++r.messages;
            }
        }
        r.utilization = double(r.messages) / (double(r.steps) * m.capacity());
        return r;
    }

    /// Exhaustive search over all N! orders for N <= 8, else the one-cycle.
    /// Ties go to the lexicographically smallest permutation.
    inline Permutation best_permutation(const CrossbarModel &m)
    {
        if (m.n > 8)
            return one_cycled_permutation(m.n);
        auto p = identity_permutation(m.n);
        auto best = p;
        auto best_steps = schedule_steps(m, p).steps;
        while (std::next_permutation(p.begin(), p.end()))
        {
            auto s = schedule_steps(m, p).steps;
            if (s < best_steps)
            {
                best_steps = s;
                best = p;
            }
        }
        return best;
    }

    // ---- fits --------------------------------------------------------------

    struct PolyFit
    {
        /// coefficients[k] multiplies x^k
        std::vector<double> coefficients;
        double r_squared = 0;
    };

    inline PolyFit fit_polynomial(const std::vector<double> &x, const std::vector<double> &y, unsigned degree)
    {
        if (x.size() != y.size() || x.size() <= degree)
            throw Error(Errc::invalid_argument, "need more points than the polynomial degree");
        const auto rows = static_cast<Eigen::Index>(x.size());
        Eigen::MatrixXd a(rows, degree + 1);
        Eigen::VectorXd b(rows);
        for (Eigen::Index i = 0; i < rows; ++i)
        {
            double p = 1;
            for (unsigned k = 0; k <= degree; ++k, p *= x[static_cast<std::size_t>(i)])
                a(i, k) = p;
            b(i) = y[static_cast<std::size_t>(i)];
        }
        Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
        const double mean = b.mean();
        const double ss_res = (a * c - b).squaredNorm();
        const double ss_tot = (b.array() - mean).square().sum();
        PolyFit f;
        f.coefficients.assign(c.data(), c.data() + c.size());
        f.r_squared = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
        return f;
    }

    // ---- resources ---------------------------------------------------------

    struct Resources
    {
        std::size_t voters = 0;
        std::size_t local_links = 0;
        std::size_t virtual_links = 0;

        friend bool operator==(const Resources &, const Resources &) = default;
    };

    inline Resources resource_report(std::size_t n)
    {
        if (n < 1)
            throw Error(Errc::invalid_argument, "N must be at least 1");
        return {n, n, n * (n - 1) / 2};
    }

    // ---- simulated sessions ------------------------------------------------

    struct OrganConfig
    {
        std::uint32_t n = 3;
        sim::Tick dt = 100;
        sim::FabricConfig fabric;
        /// Nodes whose voter and user module are down from t=0.
        std::vector<std::uint32_t> crashed;
        bool cyclic_send_order = false;
        sim::Tick max_time = 1'000'000;
    };

    struct OrganRun
    {
        /// Last VF_DONE minus first input, over live user modules.
        sim::Tick latency = 0;
        std::size_t done = 0;
        Resources live;
        sim::RunResult result;
    };

    /// One session of an N-modular restoring organ with equal inputs.
    inline OrganRun run_restoring_organ(const OrganConfig &cfg)
    {
        sim::Fabric fab(cfg.fabric);
        proto::install_formatter(fab);
        OrganRun out;
        std::optional<sim::Tick> first_input;
        sim::Tick last_done = 0;
        bool sampled = false;

        auto user = [&](sim::ProcessContext ctx) -> sim::Task<void> {
            auto h = client::FarmHandle::open();
            for (std::uint32_t i = 1; i <= cfg.n; ++i)
                (void)h.add(NodeId(i), MemberId(i));
            client::RunOptions o;
            o.dt = cfg.dt;
            o.cyclic_send_order = cfg.cyclic_send_order;
            if (!h.run(ctx, o))
                co_return;
            first_input = std::min(first_input.value_or(ctx.now()), ctx.now());
            (void)co_await h.input(ctx, 1, encode_f64(1.0));
            auto s = co_await h.get(ctx, cfg.max_time);
            if (s.kind != VfStatusKind::done)
                co_return;
            ++out.done;
            last_done = std::max(last_done, ctx.now());
            // no user module closes before its own VF_DONE, so at the first
            // one every live voter and link still exists
            if (!sampled)
            {
                sampled = true;
                auto &f = ctx.fabric();
                out.live = {f.count_running(sim::Role::voter), f.count_links(sim::LinkKind::local),
                            f.count_links(sim::LinkKind::virtual_link)};
            }
            (void)co_await h.close(ctx, cfg.max_time);
        };

        for (std::uint32_t i = 1; i <= cfg.n; ++i)
            fab.spawn(sim::user_at(i), user, "user");
        for (auto c : cfg.crashed)
            for (auto e : {sim::voter_at(c), sim::user_at(c)})
                if (auto st = fab.inject(sim::FaultSpec{e, sim::FaultKind::crash, 0, {}, 0, 0, std::nullopt}); !st)
                    throw Error(st.code(), st.detail());
        out.result = fab.run_until_quiescent(cfg.max_time);
        out.latency = first_input ? last_done - *first_input : 0;
        return out;
    }

    struct TimingRow
    {
        std::uint32_t n = 0;
        double mean = 0;
        double stddev = 0;
    };

    /// Mean and sample standard deviation of simulated session latency over
    /// `reps` runs per farm size; repetition r uses seed base_seed + r.
    inline std::vector<TimingRow> timing_harness(std::uint32_t n_min, std::uint32_t n_max, std::size_t reps,
                                                 sim::Tick jitter = 0, std::uint64_t base_seed = 1,
                                                 sim::Tick delay = 1, sim::Tick dt = 100)
    {
        std::vector<TimingRow> rows;
        for (auto n = n_min; n <= n_max; ++n)
        {
            std::vector<double> xs;
            for (std::size_t r = 0; r < reps; ++r)
            {
                OrganConfig c;
                c.n = n;
                c.dt = dt;
                c.fabric.delay = delay;
                c.fabric.jitter = jitter;
                c.fabric.seed = base_seed + r;
                c.fabric.shuffle = jitter > 0;
                xs.push_back(double(run_restoring_organ(c).latency));
            }
            const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
            double var = 0;
            for (double x : xs)
                var += (x - mean) * (x - mean);
            var = xs.size() > 1 ? var / double(xs.size() - 1) : 0.0;
            rows.push_back({n, mean, std::sqrt(var)});
        }
        return rows;
    }

    inline constexpr std::string_view timing_csv_header = "N,average,standard_deviation";

    /// One row per farm size in the column order of the published timing
    /// table; values in ticks.
    inline std::string timing_csv(const std::vector<TimingRow> &rows)
    {
        std::string out(timing_csv_header);
        out += '\n';
        char buf[96];
        for (const auto &r : rows)
        {
            std::snprintf(buf, sizeof buf, "%u,%.10g,%.10g\n", r.n, r.mean, r.stddev);
            out += buf;
        }
        return out;
    }
} // namespace vf::perf
