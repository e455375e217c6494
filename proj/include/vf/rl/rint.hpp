#pragma once

// RINT: interprets r-codes against the DIR-net database.
//
// Every rule whose condition holds fires, in program order; the default
// block fires only when none did. A condition over a group holds when some
// live member satisfies it; THREAD@ binds to those members and THREAD~ to
// the other live members of the group.

#include "rcode.hpp"

#include <set>

namespace vf::rl
{
    using Tick = std::int64_t;

    struct PhaseEntry
    {
        std::int64_t phase = 0;
        Tick t = 0;
        std::uint64_t session = 0;
    };

    struct FaultRecord
    {
        std::uint32_t thread = 0;
        std::string kind;
        Tick t = 0;
    };

    /// Phase map, fault records and group membership. Retired threads (killed
    /// by a recovery action) no longer satisfy any predicate.
    class DirDatabase
    {
    public:
        /// True when the report is an error event (VFP_FAILURE).
        bool report_phase(std::uint32_t thread, VoterPhase phase, Tick t, std::uint64_t session = 0)
        {
            if (retired_.count(thread))
                return false;
            phases_[thread] = PhaseEntry{static_cast<std::int64_t>(phase), t, session};
            max_session_ = std::max(max_session_, session);
            return phase == VoterPhase::failure;
        }

        /// True when a record was inserted.
        bool record_fault(std::uint32_t thread, std::string kind, Tick t)
        {
            if (retired_.count(thread))
                return false;
            faults_.push_back({thread, std::move(kind), t});
            return true;
        }

        void set_group(std::uint32_t group, std::vector<std::uint32_t> threads)
        {
            std::sort(threads.begin(), threads.end());
            groups_[group] = std::move(threads);
        }

        void add_to_group(std::uint32_t group, std::uint32_t thread)
        {
            auto &g = groups_[group];
            if (std::find(g.begin(), g.end(), thread) == g.end())
            {
                g.push_back(thread);
                std::sort(g.begin(), g.end());
            }
        }

        void retire(std::uint32_t thread) { retired_.insert(thread); }

        /// A restarted thread starts with a clean slate.
        void reinstate(std::uint32_t thread)
        {
            retired_.erase(thread);
            phases_.erase(thread);
            purge(thread);
        }

        void purge(std::optional<std::uint32_t> thread = std::nullopt)
        {
            std::erase_if(faults_, [&](const FaultRecord &f) { return !thread || f.thread == *thread; });
        }

        bool retired(std::uint32_t thread) const { return retired_.count(thread) != 0; }

        bool faulty(std::uint32_t thread) const
        {
            if (retired(thread))
                return false;
            return std::any_of(faults_.begin(), faults_.end(), [&](const auto &f) { return f.thread == thread; });
        }

        std::optional<std::int64_t> phase_of(std::uint32_t thread) const
        {
            if (retired(thread))
                return std::nullopt;
            auto it = phases_.find(thread);
            if (it == phases_.end())
                return std::nullopt;
            return it->second.phase;
        }

        std::vector<std::uint32_t> live_members(std::uint32_t group) const
        {
            std::vector<std::uint32_t> out;
            if (auto it = groups_.find(group); it != groups_.end())
                for (auto t : it->second)
                    if (!retired(t))
                        out.push_back(t);
            return out;
        }

        const std::vector<FaultRecord> &faults() const { return faults_; }
        const std::map<std::uint32_t, PhaseEntry> &phases() const { return phases_; }
        std::uint64_t max_session() const { return max_session_; }

    private:
        std::map<std::uint32_t, PhaseEntry> phases_;
        std::vector<FaultRecord> faults_;
        std::map<std::uint32_t, std::vector<std::uint32_t>> groups_;
        std::set<std::uint32_t> retired_;
        std::uint64_t max_session_ = 0;
    };

    /// An action bound to one concrete entity. PURGE without a target has
    /// no entity.
    struct ActionInstance
    {
        ActionKind kind = ActionKind::kill;
        std::optional<Entity> target;

        std::string to_string() const
        {
            std::string s(rl::to_string(kind));
            if (target)
                s += " " + target->to_string();
            return s;
        }

        friend bool operator==(const ActionInstance &, const ActionInstance &) = default;
    };

    namespace detail
    {
        struct Instr
        {
            std::uint8_t op;
            Entity subject;
            std::int64_t value;
        };

        inline std::vector<Instr> read_condition_code(ByteReader &r)
        {
            std::vector<Instr> code;
            for (;;)
            {
                auto op = r.u8();
                if (op == op_then)
                    return code;
                Instr in{op, {}, 0};
                switch (op)
                {
                case op_faulty: in.subject = entity_from(r.varint()); break;
                case op_phase:
                    in.subject = entity_from(r.varint());
                    in.value = r.svarint();
                    r.varint(); // symbol
                    break;
                case op_not:
                case op_and:
                case op_or: break;
                default: throw Error(Errc::decode_error, "unexpected opcode in condition");
                }
                code.push_back(in);
            }
        }

        inline bool run_condition(const std::vector<Instr> &code, const DirDatabase &db,
                                  std::optional<std::uint32_t> bound)
        {
            std::vector<bool> st;
            auto subject_thread = [&](const Entity &e) -> std::optional<std::uint32_t> {
                if (e.kind == EntityKind::thread)
                    return e.id;
                if (e.kind == EntityKind::group)
                    return bound;
                return std::nullopt;
            };
            for (const auto &in : code)
            {
                switch (in.op)
                {
                case op_faulty: {
                    auto t = subject_thread(in.subject);
                    st.push_back(t && db.faulty(*t));
                    break;
                }
                case op_phase: {
                    auto t = subject_thread(in.subject);
                    auto p = t ? db.phase_of(*t) : std::nullopt;
                    st.push_back(p && *p == in.value);
                    break;
                }
                case op_not:
                    if (st.empty())
                        throw Error(Errc::decode_error, "NOT on empty stack");
                    st.back() = !st.back();
                    break;
                default: {
                    if (st.size() < 2)
                        throw Error(Errc::decode_error, "binary operator on short stack");
                    bool b = st.back();
                    st.pop_back();
                    st.back() = in.op == op_and ? (st.back() && b) : (st.back() || b);
                }
                }
            }
            if (st.size() != 1)
                throw Error(Errc::decode_error, "malformed condition");
            return st.front();
        }

        inline std::optional<std::uint32_t> group_of(const std::vector<Instr> &code)
        {
            for (const auto &in : code)
                if ((in.op == op_faulty || in.op == op_phase) && in.subject.kind == EntityKind::group)
                    return in.subject.id;
            return std::nullopt;
        }

        struct Binding
        {
            std::vector<std::uint32_t> fulfilling;
            std::vector<std::uint32_t> complement;
        };

        /// Reads one action block; appends bound instances when `fire`.
        inline void run_actions(ByteReader &r, bool fire, const Binding &b, const DirDatabase &db,
                                std::vector<ActionInstance> &out)
        {
            for (;;)
            {
                auto op = r.u8();
                if (op == op_fi)
                    return;
                if (op < op_kill || op > op_purge)
                    throw Error(Errc::decode_error, "unexpected opcode in actions");
                auto kind = static_cast<ActionKind>(op - op_kill);
                std::uint64_t n = 1;
                if (kind == ActionKind::warn || kind == ActionKind::purge)
                    n = r.varint();
                if (n > r.remaining())
                    throw Error(Errc::decode_error, "bad target count");
                if (fire && n == 0)
                    out.push_back({kind, std::nullopt});
                for (std::uint64_t i = 0; i < n; ++i)
                {
                    auto e = entity_from(r.varint());
                    if (!fire)
                        continue;
                    auto emit_threads = [&](const std::vector<std::uint32_t> &ts) {
                        for (auto t : ts)
                            out.push_back({kind, Entity::thread(t)});
                    };
                    if (e.kind == EntityKind::selector)
                        emit_threads(e.id == 0 ? b.fulfilling : b.complement);
                    else if (e.kind == EntityKind::group)
                        emit_threads(db.live_members(e.id));
                    else
                        out.push_back({kind, e});
                }
            }
        }
    } // namespace detail

    /// Evaluates the program once against `db`. Pure: the database is not
    /// modified.
    inline std::vector<ActionInstance> rint_step(const RCode &rc, const DirDatabase &db)
    {
        ByteReader r(rc.bytes);
        read_header(r);
        std::vector<ActionInstance> out;
        bool any = false;
        for (;;)
        {
            auto op = r.u8();
            switch (op)
            {
            case op_include: r.varint(); break;
            case op_rule: {
                auto code = detail::read_condition_code(r);
                detail::Binding b;
                bool fire = false;
                if (auto g = detail::group_of(code))
                {
                    for (auto t : db.live_members(*g))
                        (detail::run_condition(code, db, t) ? b.fulfilling : b.complement).push_back(t);
                    fire = !b.fulfilling.empty();
                }
                else
                    fire = detail::run_condition(code, db, std::nullopt);
                any = any || fire;
                detail::run_actions(r, fire, b, db, out);
                break;
            }
            case op_default: detail::run_actions(r, !any, {}, db, out); break;
            case op_end: return out;
            default: throw Error(Errc::decode_error, "unexpected opcode " + std::to_string(op));
            }
        }
    }
} // namespace vf::rl
