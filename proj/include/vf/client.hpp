#pragma once

// User-module side of the farm: a FILE-like handle with open / add / run /
// control / get / close. Every operation that talks to the voter is a
// coroutine awaited from inside the user-module process.

#include "voter.hpp"

#include <map>
#include <memory>
#include <optional>

namespace vf::client
{
    using sim::Endpoint;
    using sim::ProcessContext;
    using sim::Task;
    using sim::Tick;

    /// Errors observable through the VF_error accessor.
    enum class LifecycleError : std::uint8_t
    {
        none,
        timeout,
        internal,
    };

    constexpr std::string_view to_string(LifecycleError e) noexcept
    {
        switch (e)
        {
        case LifecycleError::none: return "VF_NONE";
        case LifecycleError::timeout: return "VF_TIMEOUT";
        case LifecycleError::internal: return "VF_INTERNAL";
        }
        return "?";
    }

    /// Cross-node view used to check that every user module built the same
    /// descriptor (SPMD coherence). One layout per farm epoch.
    class FarmRegistry
    {
    public:
        Status check(std::uint64_t epoch, NodeId node, const std::vector<FarmMember> &members)
        {
            auto [it, fresh] = layouts_.try_emplace(epoch, members, node);
            if (fresh || it->second.first == members)
                return {};
            return {Errc::spmd_incoherent, "node " + std::to_string(node.value) + " disagrees with node " +
                                               std::to_string(it->second.second.value)};
        }

    private:
        std::map<std::uint64_t, std::pair<std::vector<FarmMember>, NodeId>> layouts_;
    };

    struct RunOptions
    {
        Tick dt = 10;
        voting::AlgorithmSelect algorithm;
        std::optional<Endpoint> dirnet;
        std::uint64_t epoch = 0;
        std::uint64_t first_session = 1;
        bool cyclic_send_order = false;
        FarmRegistry *registry = nullptr;
    };

    class FarmHandle
    {
    public:
        /// VF_open: empty descriptor bound to a metric (empty = default).
        static FarmHandle open(MetricFn metric = {})
        {
            FarmHandle h;
            h.desc_.metric = std::move(metric);
            return h;
        }

        std::size_t size() const noexcept { return desc_.size(); }
        const FarmDescriptor &descriptor() const noexcept { return desc_; }
        bool running() const noexcept { return desc_.running; }
        bool closed() const noexcept { return closed_; }
        Errc last_error() const noexcept { return last_; }
        LifecycleError vf_error() const noexcept { return vf_error_; }
        const std::optional<proto::Vote> &last_vote() const noexcept { return last_vote_; }
        const std::string &last_refusal() const noexcept { return last_refusal_; }
        std::shared_ptr<const voter::VoterShared> voter_state() const { return shared_; }

        Status add(NodeId node, MemberId ident)
        {
            if (closed_)
                return fail({Errc::handle_closed, "add on closed handle"});
            if (desc_.running)
                return fail({Errc::already_running, "add after run"});
            for (const auto &m : desc_.members)
                if (m.ident == ident)
                    return fail({Errc::duplicate_ident, "ident " + std::to_string(ident.value)});
            desc_.members.push_back({node, ident});
            return {};
        }

        /// VF_run: spawn the local voter and connect it to its user module and
        /// to every fellow voter.
        Status run(ProcessContext ctx, RunOptions opts = {})
        {
            if (closed_)
                return fail({Errc::handle_closed, "run on closed handle"});
            if (desc_.running)
                return fail({Errc::already_running, "farm already running"});
            if (auto st = validate_descriptor(desc_); !st)
                return fail({Errc::validation_failed, std::string(to_string(st.code())) + ": " + st.detail()});
            const auto me = ctx.self();
            if (me.role != sim::Role::user_module)
                return fail({Errc::validation_failed, "run must be called by a user module"});
            if (!desc_.ident_of(me.node))
                return fail({Errc::validation_failed, "node " + std::to_string(me.node.value) + " not in farm"});
            for (std::size_t i = 0; i < desc_.members.size(); ++i)
                for (std::size_t j = i + 1; j < desc_.members.size(); ++j)
                    if (desc_.members[i].node == desc_.members[j].node)
                        return fail({Errc::validation_failed, "one voter per node"});
            if (opts.registry)
                if (auto st = opts.registry->check(opts.epoch, me.node, desc_.members); !st)
                    return fail(st);

            auto &fab = ctx.fabric();
            const auto v = sim::voter_at(me.node.value);
            if (fab.state(v) == sim::Fabric::EndpointState::crashed ||
                fab.state(v) == sim::Fabric::EndpointState::finished)
                fab.revive(v);
            voter_ep_ = v;
            shared_ = std::make_shared<voter::VoterShared>();
            voter::VoterConfig cfg{me.node,       desc_.members, desc_.metric,   opts.epoch,
                                   opts.first_session, opts.dt,  opts.algorithm, std::nullopt,
                                   opts.dirnet,   opts.cyclic_send_order};
            try
            {
                auto sh = shared_;
                fab.spawn(
                    v,
                    [sh, cfg](ProcessContext c) { return voter::voter_process(c, sh, cfg); },
                    sim::label(v));
            }
            catch (const Error &e)
            {
                return fail({Errc::spawn_failed, e.what()});
            }
            if (auto st = fab.add_link(sim::LinkKind::local, me, v); !st)
                return fail({Errc::internal, st.detail()});
            for (const auto &m : desc_.members)
                if (m.node != me.node)
                    if (auto st = fab.add_link(sim::LinkKind::virtual_link, v, sim::voter_at(m.node.value)); !st)
                        return fail({Errc::internal, st.detail()});
            desc_.created = true;
            desc_.running = true;
            return {};
        }

        /// VF_control: deliver a bundle of requests to the local voter.
        Task<Status> control(ProcessContext ctx, proto::Control c)
        {
            if (!desc_.running || closed_)
                co_return fail({Errc::not_running, "control on a farm that is not running"});
            auto st = co_await ctx.send(*voter_ep_, proto::encode(c));
            if (!st)
                co_return fail({Errc::internal, st.detail()});
            co_return Status{};
        }

        /// Input request for session `seq` with optional extra requests.
        Task<Status> input(ProcessContext ctx, std::uint64_t seq, Bytes value, proto::Control extra = {})
        {
            extra.input_seq = seq;
            extra.input = std::move(value);
            co_return co_await control(ctx, std::move(extra));
        }

        /// VF_get: wait for VF_DONE or VF_REFUSED; VF_NONE with a timeout flag
        /// if neither arrives in time. Voted outputs met on the way are kept
        /// as last_vote().
        Task<VfStatus> get(ProcessContext ctx, Tick timeout)
        {
            if (!desc_.running || closed_)
            {
                fail({Errc::not_running, "get on a farm that is not running"});
                co_return VfStatus{VfStatusKind::none, Errc::not_running};
            }
            const Tick deadline = ctx.now() + timeout;
            for (;;)
            {
                auto env = co_await ctx.receive_until(deadline);
                if (!env)
                {
                    vf_error_ = LifecycleError::timeout;
                    last_ = Errc::timeout;
                    co_return VfStatus{VfStatusKind::none, Errc::timeout};
                }
                switch (env->msg.kind)
                {
                case proto::Kind::vote:
                    last_vote_ = proto::decode_vote(env->msg);
                    break;
                case proto::Kind::done:
                    last_session_ = proto::decode_session(env->msg);
                    co_return VfStatus{VfStatusKind::done, Errc::ok};
                case proto::Kind::refused:
                    last_refusal_ = proto::decode_reason(env->msg);
                    co_return VfStatus{VfStatusKind::refused, Errc::ok};
                default:
                    break;
                }
            }
        }

        /// VF_close: accepted by the voter only between sessions.
        Task<Status> close(ProcessContext ctx, Tick timeout)
        {
            if (closed_)
                co_return fail({Errc::handle_closed, "double close"});
            if (!desc_.running)
            {
                closed_ = true;
                co_return Status{};
            }
            auto st = co_await ctx.send(*voter_ep_, proto::make_close());
            if (!st)
                co_return fail({Errc::internal, st.detail()});
            const Tick deadline = ctx.now() + timeout;
            for (;;)
            {
                auto env = co_await ctx.receive_until(deadline);
                if (!env)
                {
                    vf_error_ = LifecycleError::timeout;
                    co_return fail({Errc::timeout, "no reply to close"});
                }
                if (env->msg.kind == proto::Kind::vote)
                    last_vote_ = proto::decode_vote(env->msg);
                else if (env->msg.kind == proto::Kind::refused)
                {
                    last_refusal_ = proto::decode_reason(env->msg);
                    co_return fail({Errc::close_refused, last_refusal_});
                }
                else if (env->msg.kind == proto::Kind::closed)
                    break;
            }
            auto &fab = ctx.fabric();
            fab.release_links(*voter_ep_, true);
            desc_.running = false;
            closed_ = true;
            co_return Status{};
        }

        /// Close without a voter round trip, for a handle whose voter is gone.
        void abandon(ProcessContext ctx)
        {
            if (voter_ep_)
                ctx.fabric().release_links(*voter_ep_, true);
            desc_.running = false;
            closed_ = true;
        }

        std::uint64_t last_session() const noexcept { return last_session_; }

    private:
        FarmHandle() = default;

        Status fail(Status st)
        {
            last_ = st.code();
            if (st.code() == Errc::internal)
                vf_error_ = LifecycleError::internal;
            return st;
        }

        FarmDescriptor desc_;
        std::optional<Endpoint> voter_ep_;
        std::shared_ptr<voter::VoterShared> shared_;
        std::optional<proto::Vote> last_vote_;
        std::string last_refusal_;
        std::uint64_t last_session_ = 0;
        Errc last_ = Errc::ok;
        LifecycleError vf_error_ = LifecycleError::none;
        bool closed_ = false;
    };
} // namespace vf::client
