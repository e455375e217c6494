// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include "support/lifecycle_fuzz.hpp"
#include "support/rl_corpus.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>

using namespace vf;

namespace
{
    int failures = 0;

    void report(int id, const std::string &name, bool pass, const std::string &detail)
    {
        std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << detail << std::endl;
        failures += !pass;
    }

    std::string num(double x, const char *f = "%.6g")
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, f, x);
        return buf;
    }

    template <class F>
    double seconds(F &&f)
    {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    // ---- reliability -------------------------------------------------------

    void reliability_values()
    {
        double tmr = 0, cross = 0;
        const double t = seconds([&] {
            tmr = reliability::r_tmr(0.5);
            cross = reliability::simplex_crosspoint_1spare(1.0);
        });
        const bool ok = tmr == 0.5 && std::abs(cross - 0.2324) <= 5e-4 && t < 1.0;
        report(1, "reliability closed forms", ok,
               "r_tmr(0.5)=" + num(tmr, "%.17g") + " crosspoint(C=1)=" + num(cross, "%.10f") + " in " +
                   num(t, "%.3f") + " s");
    }

    void markov_oracle()
    {
        reliability::OracleReport rep;
        const double t = seconds([&] { rep = reliability::verify_markov(25, 50, 5.0); });
        const bool ok = rep.points >= 25 * 50 && rep.max_abs_diff <= 1e-9 && rep.max_conservation_error <= 1e-12 &&
                        t < 30.0;
        report(2, "markov oracle", ok,
               std::to_string(rep.points) + " points, max diff " + num(rep.max_abs_diff, "%.3e") +
                   ", conservation " + num(rep.max_conservation_error, "%.3e") + " in " + num(t, "%.3f") + " s");
    }

    void closed_form_states()
    {
        const auto model = reliability::build_model(3, 1);
        std::vector<double> ts;
        for (int k = 1; k <= 20; ++k)
            ts.push_back(0.25 * k);
        double worst = 0;
        std::size_t checked = 0;
        for (double c : {0.0, 0.25, 0.5, 0.75, 1.0})
        {
            auto tr = reliability::markov_solve(model, 1.0, c, ts);
            for (std::size_t k = 0; k < ts.size(); ++k)
                for (const auto &[label, p] : reliability::closed_forms(c, ts[k]))
                {
                    worst = std::max(worst, std::abs(tr.probabilities[k][model.index(label)] - p));
                    ++checked;
                }
        }
        report(3, "state probabilities", worst <= 1e-9,
               "7 states x 20 times x 5 coverages (" + std::to_string(checked) + " values), max diff " +
                   num(worst, "%.3e"));
    }

    void dominance()
    {
        std::size_t violations = 0;
        double least_strict = 1;
        for (int i = 0; i <= 100; ++i)
            for (int j = 0; j <= 100; ++j)
            {
                const double c = i / 100.0, r = j / 100.0;
                const double d = reliability::r_tmr_1spare(c, r) - reliability::r_tmr(r);
                if (d < 0)
                    ++violations;
                if (c > 0 && r > 0 && r < 1)
                {
                    if (d <= 0)
                        ++violations;
                    least_strict = std::min(least_strict, d);
                }
            }
        report(4, "spare dominates TMR", violations == 0,
               "101x101 grid, " + std::to_string(violations) + " violations, min interior gain " +
                   num(least_strict, "%.3e"));
    }

    // ---- fault masking ------------------------------------------------------

    struct MaskingTrial
    {
        std::uint32_t n;
        std::size_t faulty_modules;
    };

    // One session in which `faulty_modules` distinct modules suffer a value
    // fault: either the user input or every broadcast of the voter is XORed.
    bool masked_session(std::mt19937_64 &rng, MaskingTrial t, std::size_t &effective)
    {
        std::vector<std::uint32_t> nodes(t.n);
        std::iota(nodes.begin(), nodes.end(), 1u);
        std::shuffle(nodes.begin(), nodes.end(), rng);
        const double truth = double(rng() % 1'000'000) / 8.0;

        sim::Fabric fab({1, static_cast<sim::Tick>(rng() % 3), true, rng()});
        proto::install_formatter(fab);
        std::map<std::uint32_t, std::optional<proto::Vote>> votes;
        std::vector<std::shared_ptr<const voter::VoterShared>> voters;
        // faults go in before the processes exist, so they are armed before
        // the first send at t=0
        for (std::size_t f = 0; f < t.faulty_modules; ++f)
        {
            const auto node = nodes[f];
            Bytes mask(8);
            for (auto &b : mask)
                b = static_cast<std::uint8_t>(rng());
            mask[7] |= 1;
            if (rng() % 2)
                (void)fab.inject({sim::user_at(node), sim::FaultKind::value_corruption, 0, mask, 0, 1, std::nullopt});
            else
                for (std::uint32_t j = 1; j <= t.n; ++j)
                    if (j != node)
                        (void)fab.inject(
                            {sim::voter_at(node), sim::FaultKind::value_corruption, 0, mask, 0, 0, sim::voter_at(j)});
        }
        for (std::uint32_t i = 1; i <= t.n; ++i)
            fab.spawn(sim::user_at(i), [&, n = t.n](sim::ProcessContext ctx) -> sim::Task<void> {
                auto h = client::FarmHandle::open(voting::euclidean_metric);
                for (std::uint32_t j = 1; j <= n; ++j)
                    (void)h.add(NodeId(j), MemberId(j));
                client::RunOptions o;
                o.dt = 40;
                if (!h.run(ctx, o))
                    co_return;
                voters.push_back(h.voter_state());
                (void)co_await h.input(ctx, 1, encode_f64(truth));
                if ((co_await h.get(ctx, 4000)).kind == VfStatusKind::done)
                    votes[ctx.self().node.value] = h.last_vote();
                (void)co_await h.close(ctx, 4000);
            });
        if (!fab.run_until_quiescent(1'000'000).status)
            return false;
        // the fault must reach at least one ballot to count as exercised
        for (const auto &v : voters)
            for (const auto &r : v->results)
                for (const auto &item : r.ballot)
                    if (item.payload != encode_f64(truth))
                    {
                        ++effective;
                        goto checked;
                    }
    checked:
        for (std::uint32_t i = 1; i <= t.n; ++i)
        {
            auto it = votes.find(i);
            if (it == votes.end() || !it->second || !it->second->decided || it->second->value != encode_f64(truth))
                return false;
        }
        return true;
    }

    void fault_masking()
    {
        std::mt19937_64 rng(2024);
        std::size_t tmr_ok = 0, tmr_eff = 0, five_ok = 0, five_eff = 0;
        constexpr std::size_t tmr_runs = 500, five_runs = 200;
        for (std::size_t i = 0; i < tmr_runs; ++i)
            tmr_ok += masked_session(rng, {3, 1}, tmr_eff);
        for (std::size_t i = 0; i < five_runs; ++i)
            five_ok += masked_session(rng, {5, 2}, five_eff);
        const bool ok = tmr_ok == tmr_runs && five_ok == five_runs && tmr_eff == tmr_runs && five_eff == five_runs;
        report(5, "fault masking", ok,
               "TMR 1 fault: " + std::to_string(tmr_ok) + "/" + std::to_string(tmr_runs) + " correct; N=5 2 faults: " +
                   std::to_string(five_ok) + "/" + std::to_string(five_runs) + " correct; faults reaching a ballot " +
                   std::to_string(tmr_eff + five_eff) + "/" + std::to_string(tmr_runs + five_runs));
    }

    // ---- timeouts, safety --------------------------------------------------

    void timeout_arithmetic()
    {
        perf::OrganConfig base;
        base.n = 4;
        base.dt = 100;
        const auto l0 = perf::run_restoring_organ(base).latency;
        bool ok = l0 > 0;
        std::string detail = "dt=100 quantum=" + std::to_string(l0);
        for (std::uint32_t m = 1; m <= 3; ++m)
        {
            auto c = base;
            for (std::uint32_t k = 0; k < m; ++k)
                c.crashed.push_back(4 - k);
            const auto r = perf::run_restoring_organ(c);
            const auto delta = r.latency - l0;
            ok = ok && r.done == 4 - m && std::abs(delta - sim::Tick(m) * base.dt) <= l0;
            detail += "; M=" + std::to_string(m) + " delta=" + std::to_string(delta);
        }
        report(6, "timeout arithmetic", ok, detail);
    }

    void protocol_safety()
    {
        std::size_t deadlocks = 0, unrefused_double = 0, unrefused_close = 0, illegal = 0, faults = 0;
        constexpr std::uint64_t seeds = 1000;
        for (std::uint64_t seed = 1; seed <= seeds; ++seed)
        {
            auto r = testing::fuzz_lifecycle(seed);
            deadlocks += !r.quiescent || r.stuck_users > 0;
            unrefused_double += !r.double_input_refused;
            unrefused_close += !r.premature_close_refused;
            illegal += !r.phases_legal;
            faults += r.faults;
        }
        const bool ok = deadlocks == 0 && unrefused_double == 0 && unrefused_close == 0 && illegal == 0;
        report(7, "protocol safety", ok,
               std::to_string(seeds) + " seeds, " + std::to_string(faults) + " faults injected, " +
                   std::to_string(deadlocks) + " deadlocks, double input accepted " +
                   std::to_string(unrefused_double) + ", premature close accepted " + std::to_string(unrefused_close) +
                   ", illegal phase words " + std::to_string(illegal));
    }

    // ---- recovery language -------------------------------------------------

    std::vector<std::uint32_t> decided_nodes(const scenario::Outcome &o, std::uint64_t k)
    {
        std::vector<std::uint32_t> out;
        for (const auto &r : o.sessions)
            if (r.session == k && r.status == "VF_DONE" && r.decided)
                out.push_back(r.node);
        std::sort(out.begin(), out.end());
        return out;
    }

    void recovery_language()
    {
        const auto dir = std::filesystem::path(VF_SOURCE_DIR) / "scenarios";
        std::string detail;
        bool ok = true;

        auto spare = scenario::execute(scenario::load(dir / "three_and_one_spare.json"));
        std::vector<std::string> acts;
        for (const auto &a : spare.actions)
            acts.push_back(a.to_string());
        const bool t4 = acts == std::vector<std::string>{"KILL THREAD1", "START THREAD4", "WARN THREAD2", "WARN THREAD3"} &&
                        decided_nodes(spare, 2) == std::vector<std::uint32_t>{2, 3, 4};
        ok = ok && t4;
        detail += std::string("spare replacement ") + (t4 ? "ok" : "bad") + " [";
        for (std::size_t i = 0; i < acts.size(); ++i)
            detail += (i ? ", " : "") + acts[i];
        detail += "]";

        auto degr = scenario::execute(scenario::load(dir / "graceful_degradation.json"));
        const bool t5 = decided_nodes(degr, 3) == std::vector<std::uint32_t>{1, 3};
        ok = ok && t5;
        detail += std::string("; degradation ") + (t5 ? "ok" : "bad") + ", session 3 decided by " +
                  std::to_string(decided_nodes(degr, 3).size()) + " voters";

        std::size_t round_trips = 0;
        const auto corpus = testing::rl_corpus();
        for (const auto &src : corpus)
        {
            try
            {
                rl::ParseOptions o;
                o.resolver = rl::directory_resolver(dir / "rl");
                const auto p = rl::parse_rl(src, o);
                const auto rc = rl::compile(p);
                round_trips += rl::decode(rc) == p && rl::compile(rl::decode(rc)) == rc;
            }
            catch (const Error &)
            {
            }
        }
        ok = ok && corpus.size() >= 30 && round_trips == corpus.size();
        detail += "; r-code round trip " + std::to_string(round_trips) + "/" + std::to_string(corpus.size());
        report(8, "recovery language", ok, detail);
    }

    // ---- performance -------------------------------------------------------

    void permutations()
    {
        std::vector<double> xs, id_steps, oc_steps;
        double worst_util = 0;
        for (std::uint32_t n : {4u, 8u, 16u, 32u, 64u})
        {
            perf::CrossbarModel m{n, perf::Ports::half_duplex};
            xs.push_back(n);
            id_steps.push_back(double(perf::schedule_steps(m, perf::identity_permutation(n)).steps));
            auto oc = perf::schedule_steps(m, perf::one_cycled_permutation(n));
            oc_steps.push_back(double(oc.steps));
            if (n >= 16)
                worst_util = std::max(worst_util, std::abs(oc.utilization - 2.0 / 3.0) / (2.0 / 3.0));
        }
        const auto quad = perf::fit_polynomial(xs, id_steps, 2);
        const auto lin = perf::fit_polynomial(xs, oc_steps, 1);
        const bool ok = quad.r_squared >= 0.999 && lin.r_squared >= 0.999 && worst_util <= 0.10;
        report(9, "broadcast permutations", ok,
               "identity quadratic R2=" + num(quad.r_squared, "%.8f") + " (a=" + num(quad.coefficients[2]) +
                   "), one-cycle linear R2=" + num(lin.r_squared, "%.8f") + " (slope=" + num(lin.coefficients[1]) +
                   "), utilization deviation " + num(100 * worst_util, "%.2f") + "%");
    }

    void resources()
    {
        bool ok = true;
        std::string detail;
        for (std::uint32_t n = 1; n <= 8; ++n)
        {
            const auto live = perf::run_restoring_organ({n}).live;
            ok = ok && live == perf::Resources{n, n, std::size_t(n) * (n - 1) / 2};
            detail += (n > 1 ? " " : "") + std::to_string(n) + ":(" + std::to_string(live.voters) + "," +
                      std::to_string(live.local_links) + "," + std::to_string(live.virtual_links) + ")";
        }
        report(10, "resource counts", ok, detail);
    }

    void timing_table()
    {
        const auto rows = perf::timing_harness(1, 4, 50, 2);
        bool ok = rows.size() == 4;
        for (std::size_t i = 1; i < rows.size(); ++i)
            ok = ok && rows[i].mean > rows[i - 1].mean;
        const auto csv = perf::timing_csv(rows);
        ok = ok && csv.rfind(std::string(perf::timing_csv_header) + "\n", 0) == 0 &&
             std::count(csv.begin(), csv.end(), '\n') == 5;
        std::string means;
        for (const auto &r : rows)
            means += (means.empty() ? "" : " < ") + num(r.mean, "%.2f");
        report(11, "latency table", ok, "means " + means + " ticks over 50 reps");
        std::cout << csv;
    }
} // namespace

int main()
{
    reliability_values();
    markov_oracle();
    closed_form_states();
    dominance();
    fault_masking();
    timeout_arithmetic();
    protocol_safety();
    recovery_language();
    permutations();
    resources();
    timing_table();
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures;
}
