#pragma once

// Recovery Language syntax tree.

#include "../core.hpp"

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vf::rl
{
    enum class EntityKind : std::uint8_t
    {
        thread = 0,
        group = 1,
        node = 2,
        selector = 3, // THREAD@ (id 0) and THREAD~ (id 1)
    };

    struct Entity
    {
        EntityKind kind = EntityKind::thread;
        std::uint32_t id = 1;

        static Entity thread(std::uint32_t n) { return {EntityKind::thread, n}; }
        static Entity group(std::uint32_t n) { return {EntityKind::group, n}; }
        static Entity node(std::uint32_t n) { return {EntityKind::node, n}; }
        static Entity fulfilling() { return {EntityKind::selector, 0}; }
        static Entity complement() { return {EntityKind::selector, 1}; }

        bool is_selector() const noexcept { return kind == EntityKind::selector; }

        std::string to_string() const
        {
            switch (kind)
            {
            case EntityKind::thread: return "THREAD" + std::to_string(id);
            case EntityKind::group: return "GROUP" + std::to_string(id);
            case EntityKind::node: return "NODE" + std::to_string(id);
            case EntityKind::selector: return id == 0 ? "THREAD@" : "THREAD~";
            }
            return "?";
        }

        friend auto operator<=>(const Entity &, const Entity &) = default;
    };

    struct Cond
    {
        enum class Op : std::uint8_t
        {
            faulty,
            phase_eq,
            not_,
            and_,
            or_,
        };

        Op op = Op::faulty;
        Entity subject;
        std::int64_t value = 0;
        /// Name the value was dereferenced from, if any.
        std::optional<std::string> symbol;
        std::vector<Cond> kids;

        static Cond faulty(Entity e) { return {Op::faulty, e, 0, std::nullopt, {}}; }
        static Cond phase_eq(Entity e, std::int64_t v, std::optional<std::string> sym = std::nullopt)
        {
            return {Op::phase_eq, e, v, std::move(sym), {}};
        }
        static Cond negate(Cond c) { return {Op::not_, {}, 0, std::nullopt, {std::move(c)}}; }
        static Cond conj(Cond a, Cond b) { return {Op::and_, {}, 0, std::nullopt, {std::move(a), std::move(b)}}; }
        static Cond disj(Cond a, Cond b) { return {Op::or_, {}, 0, std::nullopt, {std::move(a), std::move(b)}}; }

        bool is_predicate() const noexcept { return op == Op::faulty || op == Op::phase_eq; }

        friend bool operator==(const Cond &, const Cond &) = default;
    };

    enum class ActionKind : std::uint8_t
    {
        kill,
        start,
        restart,
        warn,
        reboot,
        shutdown,
        purge,
    };

    constexpr std::string_view to_string(ActionKind k) noexcept
    {
        switch (k)
        {
        case ActionKind::kill: return "KILL";
        case ActionKind::start: return "START";
        case ActionKind::restart: return "RESTART";
        case ActionKind::warn: return "WARN";
        case ActionKind::reboot: return "REBOOT";
        case ActionKind::shutdown: return "SHUTDOWN";
        case ActionKind::purge: return "PURGE";
        }
        return "?";
    }

    /// PURGE without targets clears every fault record.
    struct Action
    {
        ActionKind kind = ActionKind::kill;
        std::vector<Entity> targets;

        friend bool operator==(const Action &, const Action &) = default;
    };

    using ActionList = std::vector<Action>;

    struct Rule
    {
        Cond cond;
        ActionList actions;

        friend bool operator==(const Rule &, const Rule &) = default;
    };

    struct Program
    {
        std::vector<std::string> includes;
        std::vector<Rule> rules;
        std::optional<ActionList> default_actions;

        friend bool operator==(const Program &, const Program &) = default;
    };

    inline void collect_subjects(const Cond &c, std::vector<Entity> &out)
    {
        if (c.is_predicate())
            out.push_back(c.subject);
        for (const auto &k : c.kids)
            collect_subjects(k, out);
    }

    /// The single group all group predicates of `c` refer to, if exactly one.
    inline std::optional<std::uint32_t> subject_group(const Cond &c)
    {
        std::vector<Entity> subs;
        collect_subjects(c, subs);
        std::optional<std::uint32_t> g;
        for (const auto &e : subs)
            if (e.kind == EntityKind::group)
            {
                if (g && *g != e.id)
                    return std::nullopt;
                g = e.id;
            }
        return g;
    }

    /// Binary operators parse left-associative, so a right operand of equal
    /// precedence is parenthesised.
    inline std::string to_source(const Cond &c, int parent_prec = 0)
    {
        switch (c.op)
        {
        case Cond::Op::faulty: return "-FAULTY " + c.subject.to_string();
        case Cond::Op::phase_eq:
            return "-PHASE " + c.subject.to_string() + " == " +
                   (c.symbol ? "{" + *c.symbol + "}" : std::to_string(c.value));
        case Cond::Op::not_: return "NOT " + to_source(c.kids[0], 3);
        case Cond::Op::and_: {
            auto s = to_source(c.kids[0], 2) + " AND " + to_source(c.kids[1], 3);
            return parent_prec > 2 ? "(" + s + ")" : s;
        }
        case Cond::Op::or_: {
            auto s = to_source(c.kids[0], 1) + " OR " + to_source(c.kids[1], 2);
            return parent_prec > 1 ? "(" + s + ")" : s;
        }
        }
        return "?";
    }

    inline std::string to_source(const Action &a)
    {
        std::string s(to_string(a.kind));
        for (std::size_t i = 0; i < a.targets.size(); ++i)
            s += (i ? ", " : " ") + a.targets[i].to_string();
        return s;
    }

    /// Canonical source text; parsing it yields an equal program.
    inline std::string to_source(const Program &p)
    {
        std::string out;
        for (const auto &inc : p.includes)
            out += "INCLUDE \"" + inc + "\"\n";
        auto actions = [&](const ActionList &as) {
            for (std::size_t i = 0; i < as.size(); ++i)
                out += "    " + to_source(as[i]) + (i + 1 < as.size() ? " AND\n" : "\n");
        };
        for (const auto &r : p.rules)
        {
            out += "IF [ " + to_source(r.cond) + " ]\nTHEN\n";
            actions(r.actions);
            out += "FI\n";
        }
        if (p.default_actions)
        {
            out += "DEFAULT\n";
            actions(*p.default_actions);
            out += "FI\n";
        }
        return out;
    }
} // namespace vf::rl
