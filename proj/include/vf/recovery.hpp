#pragma once

// DIR-net: a single process that keeps the phase/fault database, wakes the
// r-code interpreter on error events and carries out the selected actions
// against the simulation. THREADn denotes the voter hosted on node n.

#include "protocol.hpp"
#include "rl/rint.hpp"

#include <functional>
#include <set>

namespace vf::recovery
{
    using sim::Endpoint;
    using sim::ProcessContext;
    using sim::Task;
    using sim::Tick;

    struct ActionRecord
    {
        Tick t = 0;
        rl::ActionInstance action;
        Status status;

        std::string to_string() const
        {
            auto s = action.to_string();
            if (!status)
                s += " (" + std::string(vf::to_string(status.code())) + ")";
            return s;
        }
    };

    /// Brings up a user module on `node` that joins the farm `members` with
    /// the given epoch, starting at session `first_session`.
    using StartFn =
        std::function<void(std::uint32_t node, std::vector<FarmMember> members, std::uint64_t epoch,
                           std::uint64_t first_session)>;

    struct RecoveryConfig
    {
        rl::RCode code;
        /// Initial farm, in ident order.
        std::vector<std::uint32_t> nodes;
        std::set<std::uint32_t> spares;
        /// Groups for group-subject rules; group 1 defaults to the farm.
        std::map<std::uint32_t, std::vector<std::uint32_t>> groups;
        std::uint64_t epoch = 0;
        StartFn start;
        Endpoint endpoint{NodeId(1), sim::Role::dirnet, std::nullopt};
    };

    class DirNet
    {
    public:
        DirNet(sim::Fabric &fabric, RecoveryConfig cfg) : fabric_(fabric), cfg_(std::move(cfg))
        {
            nodes_ = cfg_.nodes;
            epoch_ = cfg_.epoch;
            if (cfg_.groups.empty())
                cfg_.groups[1] = cfg_.nodes;
            for (const auto &[g, ts] : cfg_.groups)
                db_.set_group(g, ts);
            fabric_.on_crash([this](const Endpoint &e, Tick) {
                if (e.role == sim::Role::voter)
                    fabric_.post_notify_from(e, cfg_.endpoint, proto::make_crash_report(e));
            });
        }

        DirNet(const DirNet &) = delete;
        DirNet &operator=(const DirNet &) = delete;

        const Endpoint &endpoint() const noexcept { return cfg_.endpoint; }
        const rl::DirDatabase &db() const noexcept { return db_; }
        const std::vector<ActionRecord> &log() const noexcept { return log_; }
        const std::vector<std::uint32_t> &farm_nodes() const noexcept { return nodes_; }
        std::uint64_t epoch() const noexcept { return epoch_; }
        std::size_t activations() const noexcept { return activations_; }

        void start()
        {
            fabric_.spawn(
                cfg_.endpoint, [this](ProcessContext ctx) { return loop(ctx); }, "dirnet");
        }

        std::vector<FarmMember> members() const
        {
            std::vector<FarmMember> out;
            for (std::size_t i = 0; i < nodes_.size(); ++i)
                out.push_back({NodeId(nodes_[i]), MemberId(static_cast<std::uint32_t>(i + 1))});
            return out;
        }

    private:
        Task<void> loop(ProcessContext ctx)
        {
            for (;;)
            {
                auto env = co_await ctx.receive(std::nullopt);
                if (!env)
                    continue;
                bool trigger = false;
                if (env->msg.kind == proto::Kind::phase)
                {
                    auto p = proto::decode_phase(env->msg);
                    if (env->sender.role == sim::Role::voter)
                        trigger = db_.report_phase(env->sender.node.value, p.phase, ctx.now(), p.session);
                }
                else if (env->msg.kind == proto::Kind::crash_report)
                {
                    auto e = proto::decode_crash_report(env->msg);
                    trigger = db_.record_fault(e.node.value, "crash", ctx.now());
                }
                if (trigger)
                    fire(ctx);
            }
        }

        void fire(ProcessContext ctx)
        {
            ++activations_;
            auto acts = rl::rint_step(cfg_.code, db_);
            ctx.trace("rint", "-", std::to_string(acts.size()) + " action(s)");
            if (acts.empty())
                return;
            execute(ctx, acts);
        }

        static std::optional<std::uint32_t> thread_of(const rl::ActionInstance &a)
        {
            if (a.target && (a.target->kind == rl::EntityKind::thread || a.target->kind == rl::EntityKind::node))
                return a.target->id;
            return std::nullopt;
        }

        void execute(ProcessContext ctx, const std::vector<rl::ActionInstance> &acts)
        {
            // membership first, so that started and warned voters share one layout
            auto next = nodes_;
            for (const auto &a : acts)
            {
                auto t = thread_of(a);
                if (!t)
                    continue;
                if (a.kind == rl::ActionKind::kill || a.kind == rl::ActionKind::shutdown)
                    std::erase(next, *t);
                else if (a.kind == rl::ActionKind::start && std::find(next.begin(), next.end(), *t) == next.end())
                    next.push_back(*t);
            }
            if (next != nodes_)
            {
                nodes_ = std::move(next);
                ++epoch_;
            }
            const auto first_session = db_.max_session() + 1;

            for (const auto &a : acts)
            {
                Status st;
                auto t = thread_of(a);
                const auto voter = t ? sim::voter_at(*t) : Endpoint{};
                switch (a.kind)
                {
                case rl::ActionKind::kill:
                    db_.retire(*t);
                    if (fabric_.alive(voter))
                        fabric_.crash(voter, "KILL");
                    fabric_.release_links(voter, false);
                    break;
                case rl::ActionKind::start:
                case rl::ActionKind::restart:
                case rl::ActionKind::reboot:
                    st = bring_up(*t, a.kind, first_session);
                    break;
                case rl::ActionKind::shutdown:
                    db_.retire(*t);
                    take_down(*t, "SHUTDOWN");
                    break;
                case rl::ActionKind::warn:
                    if (!fabric_.alive(voter) ||
                        std::find(nodes_.begin(), nodes_.end(), *t) == nodes_.end())
                        st = {Errc::unknown_entity_at_runtime, a.target->to_string() + " cannot be warned"};
                    else
                        ctx.notify(voter, proto::encode(proto::Warn{epoch_, members()}));
                    break;
                case rl::ActionKind::purge:
                    db_.purge(t);
                    break;
                }
                log_.push_back({ctx.now(), a, st});
                ctx.trace("action", t ? sim::label(voter) : "-", log_.back().to_string());
            }
        }

        void take_down(std::uint32_t node, std::string_view why)
        {
            for (auto role : {sim::Role::voter, sim::Role::user_module})
            {
                Endpoint e{NodeId(node), role, std::nullopt};
                if (fabric_.alive(e))
                    fabric_.crash(e, why);
                fabric_.release_links(e, false);
            }
        }

        Status bring_up(std::uint32_t node, rl::ActionKind kind, std::uint64_t first_session)
        {
            const auto voter = sim::voter_at(node);
            if (kind == rl::ActionKind::start && fabric_.alive(voter))
                return {Errc::spawn_failed, "THREAD" + std::to_string(node) + " is already running"};
            if (kind != rl::ActionKind::start)
                take_down(node, std::string(rl::to_string(kind)));
            if (!cfg_.start)
                return {Errc::spawn_failed, "no way to start THREAD" + std::to_string(node)};
            for (auto role : {sim::Role::voter, sim::Role::user_module})
            {
                Endpoint e{NodeId(node), role, std::nullopt};
                if (fabric_.has_endpoint(e) && fabric_.state(e) == sim::Fabric::EndpointState::crashed)
                    fabric_.revive(e);
            }
            db_.reinstate(node);
            for (const auto &[g, ts] : cfg_.groups)
                if (g == 1)
                    db_.add_to_group(g, node);
            cfg_.start(node, members(), epoch_, first_session);
            return {};
        }

        sim::Fabric &fabric_;
        RecoveryConfig cfg_;
        rl::DirDatabase db_;
        std::vector<std::uint32_t> nodes_;
        std::uint64_t epoch_ = 0;
        std::vector<ActionRecord> log_;
        std::size_t activations_ = 0;
    };
} // namespace vf::recovery
