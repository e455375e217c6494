#pragma once

// Server-side voter. One process per farm member owns the voter endpoint's
// mailbox; a sibling sending helper drains a FIFO outbox so the voter keeps
// receiving while its broadcast is in flight. Outputs and VF_DONE share that
// FIFO, hence VF_DONE is never observed before the broadcast completed.

#include "protocol.hpp"

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace vf::voter
{
    using sim::Endpoint;
    using sim::Envelope;
    using sim::ProcessContext;
    using sim::Task;
    using sim::Tick;

    struct VoterConfig
    {
        NodeId node;
        std::vector<FarmMember> members;
        MetricFn metric;
        std::uint64_t epoch = 0;
        std::uint64_t first_session = 1;
        Tick dt = 10;
        voting::AlgorithmSelect algorithm;
        std::optional<Endpoint> output;
        std::optional<Endpoint> dirnet;
        /// Fellow order within a broadcast: ascending idents, or starting
        /// at ident+1 and wrapping (the one-cycled order).
        bool cyclic_send_order = false;
    };

    struct SessionResult
    {
        std::uint64_t epoch = 0;
        std::uint64_t session = 0;
        /// All N slots, sorted by source member; invalid slots without a
        /// source come last.
        std::vector<VoteObject> ballot;
        voting::Decision decision;
        Tick started = 0;
        Tick finished = 0;
        std::uint32_t timeouts = 0;
        /// The local user never supplied an input, so this voter broadcast
        /// an invalid marker on its turn.
        bool user_input_missing = false;
    };

    /// State observable from outside the voter process.
    struct VoterShared
    {
        VoterPhase phase = VoterPhase::init;
        std::vector<std::pair<Tick, VoterPhase>> phases;
        std::vector<SessionResult> results;
        std::uint32_t broadcasts = 0;
        std::uint32_t refusals = 0;
        std::uint64_t epoch = 0;
        std::optional<MemberId> ident;
        bool closed = false;
        bool excluded = false;
    };

    namespace detail
    {
        struct Outgoing
        {
            Endpoint to;
            sim::Message msg;
            bool out_of_band = false;
        };

        struct Outbox
        {
            std::deque<Outgoing> queue;
            sim::ProcessId helper = 0;
            bool stop = false;
        };

        inline Task<void> sending_helper(ProcessContext ctx, std::shared_ptr<Outbox> box)
        {
            for (;;)
            {
                while (box->queue.empty())
                {
                    if (box->stop)
                        co_return;
                    co_await ctx.park();
                }
                auto out = std::move(box->queue.front());
                box->queue.pop_front();
                if (out.out_of_band)
                    ctx.notify(out.to, std::move(out.msg));
                else if (auto st = co_await ctx.send(out.to, std::move(out.msg)); !st)
                    ctx.trace("error", sim::label(out.to), std::string(to_string(st.code())) + " " + st.detail());
            }
        }

        /// Sort by source and invalidate payloads whose length differs from
        /// the most common valid length (ties: the shorter).
        inline std::vector<VoteObject> canonical_ballot(std::vector<VoteObject> items)
        {
            std::map<std::size_t, std::size_t> lengths;
            for (const auto &v : items)
                if (v.valid)
                    ++lengths[v.payload.size()];
            std::size_t best_len = 0, best_n = 0;
            for (auto [len, n] : lengths)
                if (n > best_n)
                {
                    best_len = len;
                    best_n = n;
                }
            for (auto &v : items)
                if (v.valid && v.payload.size() != best_len)
                    v.valid = false;
            std::stable_sort(items.begin(), items.end(), [](const VoteObject &a, const VoteObject &b) {
                if (a.source.has_value() != b.source.has_value())
                    return a.source.has_value();
                return a.source && *a.source < *b.source;
            });
            return items;
        }
    } // namespace detail

    class Voter
    {
    public:
        Voter(ProcessContext ctx, std::shared_ptr<VoterShared> shared, VoterConfig cfg)
            : ctx_(ctx), sh_(std::move(shared)), cfg_(std::move(cfg)), expected_(cfg_.first_session)
        {
            sh_->epoch = cfg_.epoch;
            identify();
        }

        Task<void> main()
        {
            box_ = std::make_shared<detail::Outbox>();
            auto box = box_;
            box_->helper = ctx_.fabric().spawn(
                ctx_.self(), [box](ProcessContext c) { return detail::sending_helper(c, box); },
                sim::label(ctx_.self()) + "/sender");
            report(VoterPhase::init);
            if (!sh_->ident)
            {
                exclude();
                co_return;
            }
            for (;;)
            {
                auto env = take_backlog();
                if (!env)
                    env = co_await ctx_.receive(std::nullopt);
                if (!env)
                    continue;
                auto step = idle(*env);
                if (step == Step::stop)
                    co_return;
                if (step == Step::session)
                    co_await session(std::move(*env));
                if (!sh_->ident)
                {
                    exclude();
                    co_return;
                }
            }
        }

    private:
        enum class Step
        {
            stay,
            session,
            stop,
        };

        enum class Rel
        {
            stale,
            current,
            future,
        };

        Rel rel_bcast(const proto::Bcast &b, std::uint64_t current) const
        {
            if (b.epoch != epoch_)
                return b.epoch < epoch_ ? Rel::stale : Rel::future;
            if (b.session != current)
                return b.session < current ? Rel::stale : Rel::future;
            return Rel::current;
        }

        bool from_user(const Envelope &e) const
        {
            return e.sender.role == sim::Role::user_module && e.sender.node == cfg_.node;
        }

        void identify()
        {
            sh_->ident.reset();
            for (const auto &m : cfg_.members)
                if (m.node == cfg_.node)
                    sh_->ident = m.ident;
        }

        void exclude()
        {
            sh_->excluded = true;
            ctx_.trace("exit", "-", "excluded from farm e=" + std::to_string(epoch_));
            stop_helper();
        }

        void stop_helper()
        {
            box_->stop = true;
            ctx_.fabric().wake(box_->helper);
        }

        void push(const Endpoint &to, sim::Message m)
        {
            bool oob = !ctx_.fabric().linked(ctx_.self(), to);
            box_->queue.push_back({to, std::move(m), oob});
            ctx_.fabric().wake(box_->helper);
        }

        Endpoint user() const { return sim::user_at(cfg_.node.value); }

        void refuse(std::string_view why)
        {
            ++sh_->refusals;
            push(user(), proto::make_refused(why));
        }

        void report(VoterPhase p, std::uint64_t session = 0)
        {
            sh_->phase = p;
            sh_->phases.emplace_back(ctx_.now(), p);
            std::uint32_t m = sh_->ident ? sh_->ident->value : 0;
            ctx_.trace("phase", "-",
                       std::string(to_string(p)) + " m=" + std::to_string(m) + " s=" + std::to_string(session));
            if (cfg_.dirnet)
                ctx_.notify(*cfg_.dirnet,
                            proto::encode(proto::PhaseReport{cfg_.node.value, m, p, epoch_, session}));
        }

        void apply_params(const proto::Control &c)
        {
            auto sel = cfg_.algorithm;
            if (c.algorithm)
                sel.kind = *c.algorithm;
            if (c.epsilon)
                sel.epsilon = *c.epsilon;
            if (c.tie_break)
                sel.tie_break = *c.tie_break;
            if (c.require_all)
                sel.require_all = *c.require_all;
            if (c.scaling)
                sel.scaling_factor = *c.scaling;
            if (sel.validate())
                cfg_.algorithm = sel;
            else
                refuse("bad-parameters");
            if (c.output)
                cfg_.output = c.output;
        }

        void apply_warn(const proto::Warn &w)
        {
            if (w.epoch <= epoch_)
                return;
            epoch_ = w.epoch;
            sh_->epoch = w.epoch;
            cfg_.members = w.members;
            identify();
            ctx_.trace("reconfigure", "-", "e=" + std::to_string(epoch_) + " n=" + std::to_string(w.members.size()));
        }

        std::optional<Envelope> take_backlog()
        {
            if (sh_->phase == VoterPhase::failure)
            {
                // only a reset, close or warn can make progress
                for (auto it = backlog_.begin(); it != backlog_.end(); ++it)
                    if (it->msg.kind != proto::Kind::bcast)
                    {
                        auto e = std::move(*it);
                        backlog_.erase(it);
                        return e;
                    }
                return std::nullopt;
            }
            for (auto it = backlog_.begin(); it != backlog_.end();)
            {
                if (it->msg.kind == proto::Kind::bcast)
                {
                    auto b = proto::decode_bcast(it->msg);
                    if (b.epoch < epoch_ || (b.epoch == epoch_ && b.session < expected_))
                    {
                        it = backlog_.erase(it);
                        continue;
                    }
                    if (b.epoch > epoch_)
                    {
                        ++it;
                        continue;
                    }
                }
                auto e = std::move(*it);
                backlog_.erase(it);
                return e;
            }
            return std::nullopt;
        }

        /// Handles one message between sessions.
        Step idle(const Envelope &e)
        {
            switch (e.msg.kind)
            {
            case proto::Kind::control: {
                if (!from_user(e))
                    return Step::stay;
                auto c = proto::decode_control(e.msg);
                if (c.reset && sh_->phase == VoterPhase::failure)
                    report(phase_transition(VoterPhase::failure, VoterEvent::reset), expected_ - 1);
                apply_params(c);
                if (!c.has_input())
                    return Step::stay;
                if (sh_->phase == VoterPhase::failure)
                {
                    refuse("failure");
                    return Step::stay;
                }
                if (*c.input_seq < expected_)
                {
                    refuse("stale");
                    return Step::stay;
                }
                expected_ = *c.input_seq;
                return Step::session;
            }
            case proto::Kind::bcast: {
                if (sh_->phase == VoterPhase::failure)
                {
                    backlog_.push_back(e);
                    return Step::stay;
                }
                auto b = proto::decode_bcast(e.msg);
                if (b.epoch > epoch_)
                {
                    backlog_.push_back(e);
                    return Step::stay;
                }
                if (b.epoch < epoch_ || b.session < expected_)
                    return Step::stay;
                expected_ = b.session;
                return Step::session;
            }
            case proto::Kind::close:
                if (!from_user(e))
                    return Step::stay;
                push(user(), proto::make_closed());
                sh_->closed = true;
                stop_helper();
                return Step::stop;
            case proto::Kind::warn:
                apply_warn(proto::decode_warn(e.msg));
                return Step::stay;
            default:
                return Step::stay;
            }
        }

        std::vector<std::uint32_t> fellows() const
        {
            std::vector<std::uint32_t> ids;
            for (const auto &m : cfg_.members)
                ids.push_back(m.ident.value);
            std::sort(ids.begin(), ids.end());
            std::vector<std::uint32_t> out;
            const auto me = sh_->ident->value;
            if (cfg_.cyclic_send_order)
            {
                auto n = static_cast<std::uint32_t>(ids.size());
                for (std::uint32_t k = 1; k < n; ++k)
                    out.push_back((me - 1 + k) % n + 1);
            }
            else
                for (auto id : ids)
                    if (id != me)
                        out.push_back(id);
            return out;
        }

        void broadcast(std::uint64_t session, const VoteObject &v)
        {
            ++sh_->broadcasts;
            auto msg = proto::encode(proto::Bcast{epoch_, session, sh_->ident->value, v.valid, v.payload});
            for (auto id : fellows())
            {
                FarmMember *m = nullptr;
                for (auto &x : cfg_.members)
                    if (x.ident.value == id)
                        m = &x;
                push(sim::voter_at(m->node.value), msg);
            }
        }

        /// One execution of the turn-based collection loop followed by the vote.
        Task<void> session(Envelope first)
        {
            const std::uint64_t k = expected_;
            const std::size_t n = cfg_.members.size();
            const std::uint32_t me = sh_->ident->value;
            SessionResult res;
            res.epoch = epoch_;
            res.session = k;
            res.started = ctx_.now();
            report(phase_transition(VoterPhase::init, VoterEvent::input_arrived), k);

            std::vector<VoteObject> slots(n);
            std::size_t count = 0;
            std::optional<std::size_t> u;
            bool sent = false;
            Tick deadline = ctx_.now() + cfg_.dt;
            std::optional<proto::Warn> deferred;

            auto counted = [&] {
                ++count;
                deadline = ctx_.now() + cfg_.dt;
                if (count == me)
                {
                    VoteObject own = u ? slots[*u] : VoteObject{{}, false, MemberId(me)};
                    res.user_input_missing = !u;
                    broadcast(k, own);
                    sent = true;
                }
            };

            std::optional<Envelope> env = std::move(first);
            while (count < n)
            {
                if (!env)
                {
                    for (auto it = backlog_.begin(); it != backlog_.end(); ++it)
                        if (it->msg.kind == proto::Kind::bcast &&
                            rel_bcast(proto::decode_bcast(it->msg), k) == Rel::current)
                        {
                            env = std::move(*it);
                            backlog_.erase(it);
                            break;
                        }
                }
                if (!env)
                {
                    env = co_await ctx_.receive_until(deadline);
                    if (!env)
                    {
                        slots[count].valid = false;
                        ++res.timeouts;
                        counted();
                        continue;
                    }
                }
                auto e = std::move(*env);
                env.reset();
                switch (e.msg.kind)
                {
                case proto::Kind::control: {
                    if (!from_user(e))
                        break;
                    auto c = proto::decode_control(e.msg);
                    apply_params(c);
                    if (!c.has_input())
                        break;
                    if (*c.input_seq < k)
                        refuse("stale");
                    else if (*c.input_seq > k)
                        refuse("session-in-progress");
                    else if (u)
                        refuse("duplicate-input");
                    else if (sent)
                        refuse("late-input");
                    else
                    {
                        u = count;
                        slots[count] = VoteObject{c.input, true, MemberId(me)};
                        counted();
                    }
                    break;
                }
                case proto::Kind::bcast: {
                    auto b = proto::decode_bcast(e.msg);
                    auto rel = rel_bcast(b, k);
                    if (rel == Rel::future)
                        backlog_.push_back(std::move(e));
                    else if (rel == Rel::current && b.ident >= 1)
                    {
                        slots[count] = VoteObject{b.value, b.valid, MemberId(b.ident)};
                        counted();
                    }
                    break;
                }
                case proto::Kind::close:
                    if (from_user(e))
                        refuse("close-in-session");
                    break;
                case proto::Kind::warn:
                    deferred = proto::decode_warn(e.msg);
                    break;
                default:
                    break;
                }
            }

            report(phase_transition(VoterPhase::broadcast, VoterEvent::broadcast_complete), k);
            res.ballot = detail::canonical_ballot(std::move(slots));
            try
            {
                res.decision = voting::vote(voting::Ballot{res.ballot, cfg_.algorithm, cfg_.metric});
            }
            catch (const Error &err)
            {
                ctx_.trace("error", "-", err.what());
                res.decision = voting::Decision::none(voting::NoDecision::not_numeric);
            }
            res.finished = ctx_.now();
            const bool ok = res.decision.decided();
            proto::Vote out{k, ok, ok ? std::string() : std::string(voting::to_string(res.decision.reason)),
                            ok ? res.decision.value->payload : Bytes{}};
            push(cfg_.output.value_or(user()), proto::encode(out));
            push(user(), proto::make_done(k));
            sh_->results.push_back(std::move(res));
            expected_ = k + 1;
            auto p = phase_transition(VoterPhase::voting, ok ? VoterEvent::vote_ok : VoterEvent::vote_fail);
            report(p, k);
            if (p == VoterPhase::success)
                report(phase_transition(p, VoterEvent::reset), k);
            if (deferred)
                apply_warn(*deferred);
        }

        ProcessContext ctx_;
        std::shared_ptr<VoterShared> sh_;
        VoterConfig cfg_;
        std::shared_ptr<detail::Outbox> box_;
        std::uint64_t epoch_ = cfg_.epoch;
        std::uint64_t expected_;
        std::deque<Envelope> backlog_;
    };

    inline Task<void> voter_process(ProcessContext ctx, std::shared_ptr<VoterShared> shared, VoterConfig cfg)
    {
        Voter v(ctx, std::move(shared), std::move(cfg));
        co_await v.main();
    }
} // namespace vf::voter
