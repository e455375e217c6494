#pragma once

// Deterministic simulated message-passing fabric.
//
// Processes are coroutines (Task<void>) bound to an endpoint. Send() blocks
// the caller until the message has been delivered (or discarded because the
// recipient is dead); receive() returns the oldest pending message or a
// timeout after exactly dt ticks. All scheduling decisions are taken from a
// single priority queue ordered by (time, tiebreak, sequence); the tiebreak
// is drawn from a seeded RNG only when shuffling is enabled.

#include "core.hpp"
#include "task.hpp"

#include <cassert>
#include <charconv>
#include <coroutine>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace vf::sim
{
    using Tick = std::int64_t;

    enum class Role : std::uint8_t
    {
        user_module,
        voter,
        dirnet,
        rint,
    };

    constexpr std::string_view to_string(Role r) noexcept
    {
        switch (r)
        {
        case Role::user_module: return "user";
        case Role::voter: return "voter";
        case Role::dirnet: return "dirnet";
        case Role::rint: return "rint";
        }
        return "?";
    }

    struct Endpoint
    {
        NodeId node;
        Role role = Role::user_module;
        std::optional<MemberId> member;

        friend auto operator<=>(const Endpoint &a, const Endpoint &b)
        {
            if (auto c = a.node <=> b.node; c != 0)
                return c;
            if (auto c = a.role <=> b.role; c != 0)
                return c;
            auto ma = a.member ? a.member->value : 0u;
            auto mb = b.member ? b.member->value : 0u;
            return ma <=> mb;
        }
        friend bool operator==(const Endpoint &a, const Endpoint &b) { return (a <=> b) == 0; }
    };

    inline Endpoint user_at(std::uint32_t node) { return {NodeId(node), Role::user_module, std::nullopt}; }
    inline Endpoint voter_at(std::uint32_t node) { return {NodeId(node), Role::voter, std::nullopt}; }

    /// "voter@2", "user@1", "dirnet@1#3" (member suffix only when present).
    inline std::string label(const Endpoint &e)
    {
        std::string s(to_string(e.role));
        s += '@';
        s += std::to_string(e.node.value);
        if (e.member)
        {
            s += '#';
            s += std::to_string(e.member->value);
        }
        return s;
    }

    inline std::optional<Endpoint> parse_endpoint(std::string_view s)
    {
        auto at = s.find('@');
        if (at == std::string_view::npos)
            return std::nullopt;
        auto role_s = s.substr(0, at);
        std::optional<Role> role;
        for (auto r : {Role::user_module, Role::voter, Role::dirnet, Role::rint})
            if (to_string(r) == role_s)
                role = r;
        if (!role)
            return std::nullopt;
        auto rest = s.substr(at + 1);
        auto hash = rest.find('#');
        auto parse_u32 = [](std::string_view t) -> std::optional<std::uint32_t> {
            std::uint32_t v = 0;
            auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
            if (ec != std::errc() || p != t.data() + t.size() || v == 0)
                return std::nullopt;
            return v;
        };
        auto node = parse_u32(rest.substr(0, hash));
        if (!node)
            return std::nullopt;
        Endpoint e{NodeId(*node), *role, std::nullopt};
        if (hash != std::string_view::npos)
        {
            auto m = parse_u32(rest.substr(hash + 1));
            if (!m)
                return std::nullopt;
            e.member = MemberId(*m);
        }
        return e;
    }

    enum class LinkKind : std::uint8_t
    {
        local,
        virtual_link,
    };

    struct Link
    {
        LinkKind kind;
        Endpoint a;
        Endpoint b;
    };

    enum class FaultKind : std::uint8_t
    {
        crash,
        value_corruption,
        delay,
        omission,
    };

    constexpr std::string_view to_string(FaultKind k) noexcept
    {
        switch (k)
        {
        case FaultKind::crash: return "crash";
        case FaultKind::value_corruption: return "corrupt";
        case FaultKind::delay: return "delay";
        case FaultKind::omission: return "omission";
        }
        return "?";
    }

    /// A scripted fault. `count` limits how many sends a message fault affects
    /// (0 = every subsequent send); `peer` restricts it to one recipient.
    struct FaultSpec
    {
        Endpoint target;
        FaultKind kind = FaultKind::crash;
        Tick at = 0;
        Bytes mask;
        Tick delay = 0;
        std::uint32_t count = 0;
        std::optional<Endpoint> peer;
    };

    /// Application messages. Value faults touch `payload` only; `header`
    /// carries protocol bookkeeping the communication layer keeps intact.
    struct Message
    {
        std::uint8_t kind = 0;
        Bytes header;
        Bytes payload;
    };

    struct Envelope
    {
        Endpoint sender;
        Endpoint receiver;
        Message msg;
        Tick sent_at = 0;
        Tick delivered_at = 0;
        bool out_of_band = false;
    };

    struct TraceEvent
    {
        Tick t = 0;
        std::string kind;
        std::string from;
        std::string to;
        std::string detail;

        /// `t=<int> <event-kind> <from> <to> <detail>`
        std::string to_line() const
        {
            std::string s = "t=" + std::to_string(t) + ' ' + kind + ' ' + (from.empty() ? "-" : from) + ' ' +
                            (to.empty() ? "-" : to);
            if (!detail.empty())
                s += ' ' + detail;
            return s;
        }
    };

    class TraceLog
    {
    public:
        void push(TraceEvent e) { events_.push_back(std::move(e)); }
        const std::vector<TraceEvent> &events() const noexcept { return events_; }
        std::size_t size() const noexcept { return events_.size(); }
        bool empty() const noexcept { return events_.empty(); }

        std::size_t count(std::string_view kind, std::string_view detail_prefix = {}) const
        {
            std::size_t n = 0;
            for (const auto &e : events_)
                if (e.kind == kind && std::string_view(e.detail).substr(0, detail_prefix.size()) == detail_prefix)
                    ++n;
            return n;
        }

        std::string serialize() const
        {
            std::string out;
            for (const auto &e : events_)
            {
                out += e.to_line();
                out += '\n';
            }
            return out;
        }

        static TraceLog parse(std::string_view text)
        {
            TraceLog log;
            std::istringstream in{std::string(text)};
            std::string line;
            while (std::getline(in, line))
            {
                if (line.empty())
                    continue;
                std::istringstream ls(line);
                std::string t, kind, from, to;
                ls >> t >> kind >> from >> to;
                if (t.rfind("t=", 0) != 0 || to.empty())
                    throw Error(Errc::decode_error, "bad trace line: " + line);
                TraceEvent e;
                e.t = std::stoll(t.substr(2));
                e.kind = kind;
                e.from = from == "-" ? "" : from;
                e.to = to == "-" ? "" : to;
                std::getline(ls, e.detail);
                if (!e.detail.empty() && e.detail.front() == ' ')
                    e.detail.erase(0, 1);
                log.push(std::move(e));
            }
            return log;
        }

    private:
        std::vector<TraceEvent> events_;
    };

    struct FabricConfig
    {
        /// Delivery cost of one message (the partial-synchrony bound D when jitter is 0).
        Tick delay = 1;
        /// Extra uniform per-message delay in [0, jitter].
        Tick jitter = 0;
        /// Randomize the order of same-time events.
        bool shuffle = false;
        std::uint64_t seed = 1;
    };

    using ProcessId = std::uint32_t;
    using EndpointId = std::uint32_t;

    struct RunResult
    {
        Status status;
        Tick end_time = 0;
        TraceLog trace;
    };

    class Fabric;

    /// Handle a process uses to talk to the fabric. Cheap to copy.
    class ProcessContext
    {
    public:
        ProcessContext(Fabric *fabric, ProcessId pid) : fabric_(fabric), pid_(pid) {}

        Fabric &fabric() const noexcept { return *fabric_; }
        ProcessId id() const noexcept { return pid_; }
        Tick now() const noexcept;
        const Endpoint &self() const;

        struct ReceiveAwaiter;
        struct SendAwaiter;
        struct SleepAwaiter;
        struct ParkAwaiter;

        /// Oldest pending message, or nullopt after exactly `dt` ticks.
        /// No dt waits indefinitely.
        ReceiveAwaiter receive(std::optional<Tick> dt) const;
        ReceiveAwaiter receive_until(Tick deadline) const;
        SendAwaiter send(const Endpoint &to, Message msg) const;
        SleepAwaiter sleep(Tick dt) const;
        /// Suspend until another party calls Fabric::wake on this process.
        ParkAwaiter park() const;
        /// Out-of-band notification (watchdog / DIR-net channel): no link,
        /// no delay, not subject to injected faults.
        void notify(const Endpoint &to, Message msg) const;
        void trace(std::string kind, std::string to, std::string detail) const;

    private:
        Fabric *fabric_;
        ProcessId pid_;
    };

    class Fabric
    {
    public:
        explicit Fabric(FabricConfig cfg = {}) : cfg_(cfg), rng_(cfg.seed) {}
        Fabric(const Fabric &) = delete;
        Fabric &operator=(const Fabric &) = delete;

        ~Fabric()
        {
            // frames may reference each other through shared state; drop them in
            // reverse spawn order
            for (auto it = procs_.rbegin(); it != procs_.rend(); ++it)
                it->task = {};
        }

        const FabricConfig &config() const noexcept { return cfg_; }
        Tick now() const noexcept { return now_; }
        const TraceLog &trace() const noexcept { return trace_; }

        using Formatter = std::function<std::string(const Message &)>;
        void set_formatter(Formatter f) { formatter_ = std::move(f); }

        std::string describe(const Message &m) const
        {
            if (formatter_)
                return formatter_(m);
            return "kind=" + std::to_string(m.kind) + " " + to_hex(m.payload);
        }

        // ---- endpoints ----------------------------------------------------

        enum class EndpointState : std::uint8_t
        {
            pending,
            running,
            finished,
            crashed,
        };

        EndpointId endpoint(const Endpoint &e)
        {
            auto it = index_.find(e);
            if (it != index_.end())
                return it->second;
            auto id = static_cast<EndpointId>(eps_.size());
            eps_.push_back(EndpointRec{e, EndpointState::pending, {}, std::nullopt, 0, 0, {}});
            index_.emplace(e, id);
            return id;
        }

        bool has_endpoint(const Endpoint &e) const { return index_.count(e) != 0; }

        EndpointState state(const Endpoint &e) const
        {
            auto it = index_.find(e);
            return it == index_.end() ? EndpointState::pending : eps_[it->second].state;
        }

        bool alive(const Endpoint &e) const
        {
            auto s = state(e);
            return s == EndpointState::running;
        }

        std::vector<Endpoint> endpoints() const
        {
            std::vector<Endpoint> out;
            for (const auto &r : eps_)
                out.push_back(r.ep);
            return out;
        }

        std::size_t count_running(Role role) const
        {
            std::size_t n = 0;
            for (const auto &r : eps_)
                if (r.ep.role == role && r.state == EndpointState::running)
                    ++n;
            return n;
        }

        // ---- links ----------------------------------------------------------

        Status add_link(LinkKind kind, const Endpoint &a, const Endpoint &b)
        {
            if (a == b)
                return {Errc::invalid_argument, "self link"};
            if (kind == LinkKind::local)
            {
                bool ok = a.node == b.node && ((a.role == Role::user_module && b.role == Role::voter) ||
                                               (a.role == Role::voter && b.role == Role::user_module));
                if (!ok)
                    return {Errc::invalid_argument, "local links join a user module and a voter on one node"};
            }
            else if (a.role != Role::voter || b.role != Role::voter)
                return {Errc::invalid_argument, "virtual links join voters"};
            endpoint(a);
            endpoint(b);
            auto key = link_key(a, b);
            if (auto it = links_.find(key); it != links_.end())
            {
                if (it->second != kind)
                    return {Errc::invalid_argument, "link kind mismatch"};
                return {};
            }
            links_.emplace(key, kind);
            trace_.push({now_, "link", label(key.first), label(key.second),
                         kind == LinkKind::local ? "local" : "virtual"});
            return {};
        }

        void remove_link(const Endpoint &a, const Endpoint &b)
        {
            auto key = link_key(a, b);
            if (links_.erase(key))
                trace_.push({now_, "unlink", label(key.first), label(key.second), {}});
        }

        /// Drop every link touching `e`, optionally only when the other end is
        /// not running any more.
        void release_links(const Endpoint &e, bool only_dead_peers)
        {
            std::vector<std::pair<Endpoint, Endpoint>> gone;
            for (const auto &[k, kind] : links_)
            {
                if (!(k.first == e || k.second == e))
                    continue;
                const Endpoint &other = k.first == e ? k.second : k.first;
                if (!only_dead_peers || kind == LinkKind::local || !alive(other))
                    gone.push_back(k);
            }
            for (const auto &k : gone)
                remove_link(k.first, k.second);
        }

        bool linked(const Endpoint &a, const Endpoint &b) const { return links_.count(link_key(a, b)) != 0; }

        std::size_t count_links(LinkKind kind) const
        {
            std::size_t n = 0;
            for (const auto &[k, v] : links_)
                if (v == kind)
                    ++n;
            return n;
        }

        std::vector<Link> links() const
        {
            std::vector<Link> out;
            for (const auto &[k, v] : links_)
                out.push_back({v, k.first, k.second});
            return out;
        }

        // ---- processes ------------------------------------------------------

        using Body = std::function<Task<void>(ProcessContext)>;

        /// Start a process on `e` at the current time. The first process
        /// spawned on an endpoint owns its mailbox.
        ProcessId spawn(const Endpoint &e, Body body, std::string name = {})
        {
            auto eid = endpoint(e);
            auto &rec = eps_[eid];
            if (rec.state == EndpointState::crashed)
                throw Error(Errc::spawn_failed, label(e) + " is crashed");
            auto pid = static_cast<ProcessId>(procs_.size());
            procs_.push_back(ProcessRec{});
            auto &p = procs_.back();
            p.ep = eid;
            p.incarnation = rec.incarnation;
            p.name = name.empty() ? label(e) : std::move(name);
            if (rec.live == 0)
            {
                rec.owner = pid;
                rec.state = EndpointState::running;
            }
            ++rec.live;
            p.body = std::move(body);
            p.task = p.body(ProcessContext(this, pid));
            p.resume_point = p.task.handle();
            trace_.push({now_, "spawn", label(e), {}, p.name});
            schedule(now_, Ev::resume, pid, p.gen);
            return pid;
        }

        /// New incarnation of a crashed or finished endpoint: mailbox and
        /// faults are cleared, state returns to pending.
        void revive(const Endpoint &e)
        {
            auto &rec = eps_[endpoint(e)];
            if (rec.state == EndpointState::running)
                return;
            ++rec.incarnation;
            rec.state = EndpointState::pending;
            rec.mailbox.clear();
            rec.faults.clear();
            rec.live = 0;
            rec.owner.reset();
            trace_.push({now_, "revive", label(e), {}, {}});
        }

        bool process_alive(ProcessId pid) const { return pid < procs_.size() && procs_[pid].alive(); }
        bool process_finished(ProcessId pid) const { return pid < procs_.size() && procs_[pid].finished; }

        /// Processes that are parked with no deadline and nothing pending.
        std::vector<ProcessId> blocked_forever() const
        {
            std::vector<ProcessId> out;
            for (ProcessId i = 0; i < procs_.size(); ++i)
                if (procs_[i].alive() && procs_[i].wait != Wait::none && !procs_[i].has_deadline)
                    out.push_back(i);
            return out;
        }

        const Endpoint &endpoint_of(ProcessId pid) const { return eps_[procs_[pid].ep].ep; }

        /// Resume a parked process at the current time.
        void wake(ProcessId pid)
        {
            auto &p = procs_[pid];
            if (p.alive() && p.wait == Wait::park)
            {
                p.wait = Wait::none;
                schedule(now_, Ev::resume, pid, ++p.gen);
            }
        }

        // ---- faults ---------------------------------------------------------

        using CrashObserver = std::function<void(const Endpoint &, Tick)>;
        void on_crash(CrashObserver f) { crash_observers_.push_back(std::move(f)); }

        Status inject(FaultSpec f)
        {
            if (f.at < now_)
                return {Errc::time_in_past, "fault at t=" + std::to_string(f.at) + " but now=" + std::to_string(now_)};
            auto eid = endpoint(f.target);
            faults_.push_back(std::move(f));
            schedule(faults_.back().at, Ev::activate_fault, 0, faults_.size() - 1, eid);
            return {};
        }

        /// Fail/stop `e` now: its processes stop, its mailbox is discarded and
        /// later deliveries to it are dropped.
        void crash(const Endpoint &e, std::string_view why = "crash")
        {
            auto eid = endpoint(e);
            auto &rec = eps_[eid];
            if (rec.state == EndpointState::crashed)
                return;
            rec.state = EndpointState::crashed;
            rec.mailbox.clear();
            rec.owner.reset();
            rec.live = 0;
            for (ProcessId pid = 0; pid < procs_.size(); ++pid)
            {
                auto &p = procs_[pid];
                if (p.ep == eid && p.incarnation == rec.incarnation && p.alive())
                {
                    p.dead = true;
                    p.wait = Wait::none;
                    graveyard_.push_back(pid);
                }
            }
            trace_.push({now_, "crash", label(e), {}, std::string(why)});
            for (auto &obs : crash_observers_)
                obs(e, now_);
        }

        // ---- running --------------------------------------------------------

        RunResult run_until_quiescent(Tick max_time)
        {
            while (!queue_.empty())
            {
                auto ev = queue_.top();
                if (stale(ev))
                {
                    queue_.pop();
                    continue;
                }
                if (ev.t > max_time)
                {
                    now_ = std::max(now_, max_time);
                    return {Status(Errc::max_time_exceeded, "stopped at t=" + std::to_string(max_time)), now_,
                            trace_};
                }
                queue_.pop();
                now_ = ev.t;
                dispatch(ev);
                bury();
            }
            return {Status{}, now_, trace_};
        }

        /// Emit a trace record on behalf of the environment (scenario runner,
        /// recovery executor).
        void record(std::string kind, std::string from, std::string to, std::string detail)
        {
            trace_.push({now_, std::move(kind), std::move(from), std::move(to), std::move(detail)});
        }

    private:
        friend class ProcessContext;

        enum class Wait : std::uint8_t
        {
            none,
            receive,
            send,
            sleep,
            park,
        };

        struct ProcessRec
        {
            EndpointId ep = 0;
            std::uint32_t incarnation = 0;
            Body body; // outlives the frame: lambda captures stay valid
            Task<void> task;
            std::coroutine_handle<> resume_point;
            std::string name;
            Wait wait = Wait::none;
            std::uint64_t gen = 0;
            bool has_deadline = false;
            std::optional<Envelope> received;
            Status send_status;
            bool dead = false;
            bool finished = false;

            bool alive() const noexcept { return !dead && !finished; }
        };

        struct ActiveFault
        {
            FaultSpec spec;
            std::uint32_t remaining = 0; // 0 = unlimited
        };

        struct EndpointRec
        {
            Endpoint ep;
            EndpointState state = EndpointState::pending;
            std::deque<Envelope> mailbox;
            std::optional<ProcessId> owner;
            std::uint32_t live = 0;
            std::uint32_t incarnation = 0;
            std::vector<ActiveFault> faults;
        };

        enum class Ev : std::uint8_t
        {
            resume,
            timeout,
            deliver,
            activate_fault,
        };

        struct Event
        {
            Tick t;
            std::uint64_t tiebreak;
            std::uint64_t seq;
            Ev kind;
            ProcessId pid;
            std::uint64_t arg;
            std::uint64_t arg2;

            bool operator>(const Event &o) const
            {
                if (t != o.t)
                    return t > o.t;
                if (tiebreak != o.tiebreak)
                    return tiebreak > o.tiebreak;
                return seq > o.seq;
            }
        };

        struct InFlight
        {
            Envelope env;
            ProcessId sender_pid;
            std::uint64_t sender_gen;
            std::uint32_t sender_incarnation;
            EndpointId from;
            EndpointId to;
            bool omitted;
        };

        static std::pair<Endpoint, Endpoint> link_key(const Endpoint &a, const Endpoint &b)
        {
            return a < b ? std::pair{a, b} : std::pair{b, a};
        }

        /// Fault activations take the lowest tiebreak: a fault due at t is
        /// armed before any other event at t, shuffled or not.
        void schedule(Tick t, Ev kind, ProcessId pid, std::uint64_t arg, std::uint64_t arg2 = 0)
        {
            std::uint64_t tb = kind == Ev::activate_fault ? 0 : cfg_.shuffle ? 1 + rng_() % ~std::uint64_t{0} : 1;
            queue_.push(Event{t, tb, seq_++, kind, pid, arg, arg2});
        }

        bool stale(const Event &ev) const
        {
            if (ev.kind != Ev::resume && ev.kind != Ev::timeout)
                return false;
            const auto &p = procs_[ev.pid];
            return !p.alive() || p.gen != ev.arg;
        }

        void dispatch(const Event &ev)
        {
            switch (ev.kind)
            {
            case Ev::resume: {
                auto &p = procs_[ev.pid];
                if (!p.alive() || p.gen != ev.arg)
                    return;
                resume(ev.pid);
                return;
            }
            case Ev::timeout: {
                auto &p = procs_[ev.pid];
                if (!p.alive() || p.gen != ev.arg)
                    return;
                if (p.wait == Wait::receive)
                {
                    p.received.reset();
                    trace_.push({now_, "timeout", label(eps_[p.ep].ep), {}, {}});
                }
                p.wait = Wait::none;
                resume(ev.pid);
                return;
            }
            case Ev::deliver:
                deliver(ev.arg);
                return;
            case Ev::activate_fault:
                activate(ev.arg);
                return;
            }
        }

        void resume(ProcessId pid)
        {
            auto &p = procs_[pid];
            p.wait = Wait::none;
            ++p.gen;
            auto h = std::exchange(p.resume_point, {});
            assert(h);
            current_ = pid;
            h.resume();
            current_.reset();
            auto &q = procs_[pid]; // procs_ may have grown
            if (!q.dead && q.task.handle().done())
            {
                q.finished = true;
                auto &rec = eps_[q.ep];
                if (auto err = q.task.handle().promise().error)
                {
                    std::string what = "unknown";
                    try
                    {
                        std::rethrow_exception(err);
                    }
                    catch (const std::exception &e)
                    {
                        what = e.what();
                    }
                    catch (...)
                    {
                    }
                    trace_.push({now_, "error", label(rec.ep), {}, q.name + ": " + what});
                }
                trace_.push({now_, "exit", label(rec.ep), {}, q.name});
                if (q.incarnation == rec.incarnation && rec.live > 0 && --rec.live == 0 &&
                    rec.state == EndpointState::running)
                {
                    rec.state = EndpointState::finished;
                    rec.mailbox.clear();
                    rec.owner.reset();
                }
                graveyard_.push_back(pid);
            }
        }

        void bury()
        {
            for (auto pid : graveyard_)
                if (pid != current_)
                    procs_[pid].task = {};
            graveyard_.clear();
        }

        void deliver(std::uint64_t slot)
        {
            auto fl = std::move(inflight_[slot]);
            inflight_.erase(slot);
            auto &dst = eps_[fl.to];
            const auto &src = eps_[fl.from];
            bool sender_dead = !fl.env.out_of_band &&
                               (src.incarnation != fl.sender_incarnation || src.state == EndpointState::crashed);
            std::string why;
            if (fl.omitted)
                why = "omission";
            else if (sender_dead)
                why = "sender-crashed";
            else if (dst.state == EndpointState::crashed)
                why = "recipient-crashed";
            else if (dst.state == EndpointState::finished)
                why = "recipient-gone";
            fl.env.delivered_at = now_;
            if (!why.empty())
                trace_.push({now_, "drop", label(fl.env.sender), label(fl.env.receiver),
                             describe(fl.env.msg) + " reason=" + why});
            else
            {
                trace_.push({now_, fl.env.out_of_band ? "notified" : "deliver", label(fl.env.sender),
                             label(fl.env.receiver), describe(fl.env.msg)});
                dst.mailbox.push_back(std::move(fl.env));
                if (dst.owner)
                {
                    auto &r = procs_[*dst.owner];
                    if (r.alive() && r.wait == Wait::receive && !r.received)
                    {
                        r.received = std::move(dst.mailbox.front());
                        dst.mailbox.pop_front();
                        r.wait = Wait::none;
                        schedule(now_, Ev::resume, *dst.owner, ++r.gen);
                    }
                }
            }
            if (!fl.env.out_of_band)
            {
                auto &s = procs_[fl.sender_pid];
                if (s.alive() && s.wait == Wait::send && s.gen == fl.sender_gen)
                {
                    s.send_status = Status{};
                    s.wait = Wait::none;
                    schedule(now_, Ev::resume, fl.sender_pid, ++s.gen);
                }
            }
        }

        void activate(std::uint64_t idx)
        {
            const auto &f = faults_[idx];
            std::string detail(to_string(f.kind));
            if (f.kind == FaultKind::value_corruption)
                detail += " mask=" + to_hex(f.mask);
            if (f.kind == FaultKind::delay)
                detail += " +" + std::to_string(f.delay);
            if (f.count)
                detail += " count=" + std::to_string(f.count);
            if (f.peer)
                detail += " peer=" + label(*f.peer);
            trace_.push({now_, "fault", label(f.target), {}, detail});
            if (f.kind == FaultKind::crash)
            {
                crash(f.target);
                return;
            }
            auto &rec = eps_[endpoint(f.target)];
            rec.faults.push_back(ActiveFault{f, f.count});
        }

        ProcessRec &current_proc(ProcessId pid) { return procs_[pid]; }

        // Called from SendAwaiter::await_suspend.
        void start_send(ProcessId pid, const Endpoint &to, Message msg)
        {
            auto &p = procs_[pid];
            auto &from = eps_[p.ep];
            auto to_id = endpoint(to);
            Tick extra = 0;
            bool omitted = false;
            for (auto it = from.faults.begin(); it != from.faults.end();)
            {
                auto &f = *it;
                if (f.spec.peer && !(*f.spec.peer == to))
                {
                    ++it;
                    continue;
                }
                switch (f.spec.kind)
                {
                case FaultKind::value_corruption:
                    if (!f.spec.mask.empty())
                        for (std::size_t i = 0; i < msg.payload.size(); ++i)
                            msg.payload[i] ^= f.spec.mask[i % f.spec.mask.size()];
                    break;
                case FaultKind::delay:
                    extra += f.spec.delay;
                    break;
                case FaultKind::omission:
                    omitted = true;
                    break;
                case FaultKind::crash:
                    break;
                }
                if (f.remaining > 0 && --f.remaining == 0)
                    it = from.faults.erase(it);
                else
                    ++it;
            }
            Tick jitter = 0;
            if (cfg_.jitter > 0)
                jitter = std::uniform_int_distribution<Tick>(0, cfg_.jitter)(rng_);
            Tick at = now_ + cfg_.delay + extra + jitter;
            trace_.push({now_, "send", label(from.ep), label(to), describe(msg)});
            auto slot = next_slot_++;
            inflight_.emplace(slot, InFlight{Envelope{from.ep, to, std::move(msg), now_, 0, false}, pid, p.gen,
                                             from.incarnation, p.ep, to_id, omitted});
            p.wait = Wait::send;
            schedule(at, Ev::deliver, pid, slot);
        }

        void post_notify(ProcessId pid, const Endpoint &to, Message msg)
        {
            auto &from = eps_[procs_[pid].ep];
            post_notify_from(from.ep, to, std::move(msg));
        }

    public:
        /// Out-of-band message from the environment (e.g. watchdog).
        void post_notify_from(const Endpoint &from, const Endpoint &to, Message msg)
        {
            auto from_id = endpoint(from);
            auto to_id = endpoint(to);
            auto slot = next_slot_++;
            inflight_.emplace(slot, InFlight{Envelope{from, to, std::move(msg), now_, 0, true}, 0, 0,
                                             eps_[from_id].incarnation, from_id, to_id, false});
            schedule(now_, Ev::deliver, 0, slot);
        }

    private:
        FabricConfig cfg_;
        std::mt19937_64 rng_;
        Tick now_ = 0;
        std::uint64_t seq_ = 0;
        std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
        std::vector<EndpointRec> eps_;
        std::map<Endpoint, EndpointId> index_;
        std::map<std::pair<Endpoint, Endpoint>, LinkKind> links_;
        std::deque<ProcessRec> procs_;
        std::vector<ProcessId> graveyard_;
        std::optional<ProcessId> current_;
        std::map<std::uint64_t, InFlight> inflight_;
        std::uint64_t next_slot_ = 0;
        std::vector<FaultSpec> faults_;
        std::vector<CrashObserver> crash_observers_;
        TraceLog trace_;
        Formatter formatter_;

    public:
        // Awaiter plumbing, used by ProcessContext.
        struct Access
        {
            static ProcessRec &proc(Fabric &f, ProcessId pid) { return f.procs_[pid]; }
            static EndpointRec &ep(Fabric &f, ProcessId pid) { return f.eps_[f.procs_[pid].ep]; }
            static void sched(Fabric &f, Tick t, Ev k, ProcessId pid, std::uint64_t arg)
            {
                f.schedule(t, k, pid, arg);
            }
            static void send(Fabric &f, ProcessId pid, const Endpoint &to, Message m)
            {
                f.start_send(pid, to, std::move(m));
            }
            static void notify(Fabric &f, ProcessId pid, const Endpoint &to, Message m)
            {
                f.post_notify(pid, to, std::move(m));
            }
            static constexpr Ev timeout_ev = Ev::timeout;
            static constexpr Ev resume_ev = Ev::resume;
            static constexpr Wait w_receive = Wait::receive;
            static constexpr Wait w_sleep = Wait::sleep;
            static constexpr Wait w_park = Wait::park;
        };
    };

    // ---- awaiters ---------------------------------------------------------

    struct ProcessContext::ReceiveAwaiter
    {
        Fabric *fabric;
        ProcessId pid;
        std::optional<Tick> deadline;
        std::optional<Envelope> immediate;

        bool await_ready()
        {
            auto &ep = Fabric::Access::ep(*fabric, pid);
            if (!ep.mailbox.empty())
            {
                immediate = std::move(ep.mailbox.front());
                ep.mailbox.pop_front();
                return true;
            }
            return false;
        }

        void await_suspend(std::coroutine_handle<> h)
        {
            auto &p = Fabric::Access::proc(*fabric, pid);
            p.resume_point = h;
            p.wait = Fabric::Access::w_receive;
            p.received.reset();
            p.has_deadline = deadline.has_value();
            if (deadline)
                Fabric::Access::sched(*fabric, std::max(*deadline, fabric->now()), Fabric::Access::timeout_ev, pid,
                                      p.gen);
        }

        std::optional<Envelope> await_resume()
        {
            if (immediate)
                return std::move(immediate);
            auto &p = Fabric::Access::proc(*fabric, pid);
            p.has_deadline = false;
            return std::exchange(p.received, std::nullopt);
        }
    };

    struct ProcessContext::SendAwaiter
    {
        Fabric *fabric;
        ProcessId pid;
        Endpoint to;
        Message msg;
        Status early;

        bool await_ready()
        {
            const auto &self = fabric->endpoint_of(pid);
            if (!fabric->linked(self, to))
            {
                early = Status(Errc::no_such_link, label(self) + " -> " + label(to));
                return true;
            }
            return false;
        }

        void await_suspend(std::coroutine_handle<> h)
        {
            auto &p = Fabric::Access::proc(*fabric, pid);
            p.resume_point = h;
            p.has_deadline = true;
            Fabric::Access::send(*fabric, pid, to, std::move(msg));
        }

        Status await_resume()
        {
            if (!early.is_ok())
                return early;
            auto &p = Fabric::Access::proc(*fabric, pid);
            p.has_deadline = false;
            return std::exchange(p.send_status, Status{});
        }
    };

    struct ProcessContext::SleepAwaiter
    {
        Fabric *fabric;
        ProcessId pid;
        Tick until;

        bool await_ready() const noexcept { return false; }

        void await_suspend(std::coroutine_handle<> h)
        {
            auto &p = Fabric::Access::proc(*fabric, pid);
            p.resume_point = h;
            p.wait = Fabric::Access::w_sleep;
            p.has_deadline = true;
            Fabric::Access::sched(*fabric, std::max(until, fabric->now()), Fabric::Access::resume_ev, pid, p.gen);
        }

        void await_resume() noexcept { Fabric::Access::proc(*fabric, pid).has_deadline = false; }
    };

    struct ProcessContext::ParkAwaiter
    {
        Fabric *fabric;
        ProcessId pid;

        bool await_ready() const noexcept { return false; }

        void await_suspend(std::coroutine_handle<> h)
        {
            auto &p = Fabric::Access::proc(*fabric, pid);
            p.resume_point = h;
            p.wait = Fabric::Access::w_park;
            p.has_deadline = false;
        }

        void await_resume() noexcept {}
    };

    inline Tick ProcessContext::now() const noexcept { return fabric_->now(); }
    inline const Endpoint &ProcessContext::self() const { return fabric_->endpoint_of(pid_); }

    inline ProcessContext::ReceiveAwaiter ProcessContext::receive(std::optional<Tick> dt) const
    {
        std::optional<Tick> deadline;
        if (dt)
        {
            if (*dt <= 0)
                throw Error(Errc::invalid_argument, "receive timeout must be positive");
            deadline = fabric_->now() + *dt;
        }
        return ReceiveAwaiter{fabric_, pid_, deadline, std::nullopt};
    }

    inline ProcessContext::ReceiveAwaiter ProcessContext::receive_until(Tick deadline) const
    {
        return ReceiveAwaiter{fabric_, pid_, deadline, std::nullopt};
    }

    inline ProcessContext::SendAwaiter ProcessContext::send(const Endpoint &to, Message msg) const
    {
        return SendAwaiter{fabric_, pid_, to, std::move(msg), {}};
    }

    inline ProcessContext::SleepAwaiter ProcessContext::sleep(Tick dt) const
    {
        return SleepAwaiter{fabric_, pid_, fabric_->now() + dt};
    }

    inline ProcessContext::ParkAwaiter ProcessContext::park() const { return ParkAwaiter{fabric_, pid_}; }

    inline void ProcessContext::notify(const Endpoint &to, Message msg) const
    {
        Fabric::Access::notify(*fabric_, pid_, to, std::move(msg));
    }

    inline void ProcessContext::trace(std::string kind, std::string to, std::string detail) const
    {
        fabric_->record(std::move(kind), label(self()), std::move(to), std::move(detail));
    }
} // namespace vf::sim
