#pragma once

// r-code binary format.
//
//   "EFRC" | version u8 | pool: varint n, n x (varint len, bytes) | opcode stream
//
// Conditions are stored in postfix order. Entity operands are the varint
// (id << 2 | kind). A phase comparison carries its value as a zigzag varint
// and a symbol operand (0 = none, else pool index + 1).

#include "ast.hpp"

#include <map>
#include <sstream>

namespace vf::rl
{
    inline constexpr std::uint8_t rcode_version = 1;
    inline constexpr std::string_view rcode_magic = "EFRC";

    enum Op : std::uint8_t
    {
        op_include = 0x01,
        op_rule = 0x02,
        op_then = 0x03,
        op_fi = 0x04,
        op_default = 0x05,
        op_end = 0x06,

        op_faulty = 0x10,
        op_phase = 0x11,
        op_not = 0x12,
        op_and = 0x13,
        op_or = 0x14,

        op_kill = 0x20,
        op_start = 0x21,
        op_restart = 0x22,
        op_warn = 0x23,
        op_reboot = 0x24,
        op_shutdown = 0x25,
        op_purge = 0x26,
    };

    struct RCode
    {
        Bytes bytes;
        friend bool operator==(const RCode &, const RCode &) = default;
    };

    namespace detail
    {
        inline std::uint64_t entity_operand(const Entity &e)
        {
            return static_cast<std::uint64_t>(e.id) << 2 | static_cast<std::uint64_t>(e.kind);
        }

        inline Entity entity_from(std::uint64_t v)
        {
            auto id = v >> 2;
            if (id > UINT32_MAX)
                throw Error(Errc::decode_error, "entity id out of range");
            Entity e{static_cast<EntityKind>(v & 3), static_cast<std::uint32_t>(id)};
            if (e.kind == EntityKind::selector ? id > 1 : id == 0)
                throw Error(Errc::decode_error, "bad entity operand");
            return e;
        }

        class Pool
        {
        public:
            std::uint64_t intern(const std::string &s)
            {
                auto [it, fresh] = index_.try_emplace(s, strings_.size());
                if (fresh)
                    strings_.push_back(s);
                return it->second;
            }
            const std::vector<std::string> &strings() const { return strings_; }

        private:
            std::map<std::string, std::uint64_t> index_;
            std::vector<std::string> strings_;
        };

        inline void intern_cond(Pool &pool, const Cond &c)
        {
            if (c.symbol)
                pool.intern(*c.symbol);
            for (const auto &k : c.kids)
                intern_cond(pool, k);
        }

        inline void emit_cond(ByteWriter &w, Pool &pool, const Cond &c)
        {
            for (const auto &k : c.kids)
                emit_cond(w, pool, k);
            switch (c.op)
            {
            case Cond::Op::faulty:
                w.u8(op_faulty);
                w.varint(entity_operand(c.subject));
                break;
            case Cond::Op::phase_eq:
                w.u8(op_phase);
                w.varint(entity_operand(c.subject));
                w.svarint(c.value);
                w.varint(c.symbol ? pool.intern(*c.symbol) + 1 : 0);
                break;
            case Cond::Op::not_: w.u8(op_not); break;
            case Cond::Op::and_: w.u8(op_and); break;
            case Cond::Op::or_: w.u8(op_or); break;
            }
        }

        inline std::uint8_t action_op(ActionKind k)
        {
            return static_cast<std::uint8_t>(op_kill + static_cast<std::uint8_t>(k));
        }

        inline void emit_actions(ByteWriter &w, const ActionList &as)
        {
            for (const auto &a : as)
            {
                w.u8(action_op(a.kind));
                if (a.kind == ActionKind::warn || a.kind == ActionKind::purge)
                    w.varint(a.targets.size());
                for (const auto &t : a.targets)
                    w.varint(entity_operand(t));
            }
            w.u8(op_fi);
        }
    } // namespace detail

    inline RCode compile(const Program &p)
    {
        detail::Pool pool;
        for (const auto &inc : p.includes)
            pool.intern(inc);
        for (const auto &r : p.rules)
            detail::intern_cond(pool, r.cond);

        ByteWriter body;
        for (const auto &inc : p.includes)
        {
            body.u8(op_include);
            body.varint(pool.intern(inc));
        }
        for (const auto &r : p.rules)
        {
            body.u8(op_rule);
            detail::emit_cond(body, pool, r.cond);
            body.u8(op_then);
            detail::emit_actions(body, r.actions);
        }
        if (p.default_actions)
        {
            body.u8(op_default);
            detail::emit_actions(body, *p.default_actions);
        }
        body.u8(op_end);

        ByteWriter out;
        out.raw(std::span(reinterpret_cast<const std::uint8_t *>(rcode_magic.data()), rcode_magic.size()));
        out.u8(rcode_version);
        out.varint(pool.strings().size());
        for (const auto &s : pool.strings())
            out.str(s);
        out.raw(body.view());
        return RCode{out.take()};
    }

    /// Header plus constant pool; leaves the reader at the opcode stream.
    inline std::vector<std::string> read_header(ByteReader &r)
    {
        for (char c : rcode_magic)
            if (r.u8() != static_cast<std::uint8_t>(c))
                throw Error(Errc::decode_error, "bad magic");
        auto v = r.u8();
        if (v != rcode_version)
            throw Error(Errc::decode_error, "unsupported r-code version " + std::to_string(v));
        auto n = r.varint();
        if (n > r.remaining())
            throw Error(Errc::decode_error, "bad pool size");
        std::vector<std::string> pool;
        for (std::uint64_t i = 0; i < n; ++i)
            pool.push_back(r.str());
        return pool;
    }

    namespace detail
    {
        inline const std::string &pool_at(const std::vector<std::string> &pool, std::uint64_t i)
        {
            if (i >= pool.size())
                throw Error(Errc::decode_error, "pool index out of range");
            return pool[i];
        }

        inline Cond read_cond(ByteReader &r, const std::vector<std::string> &pool)
        {
            std::vector<Cond> stack;
            for (;;)
            {
                auto op = r.u8();
                switch (op)
                {
                case op_faulty: stack.push_back(Cond::faulty(entity_from(r.varint()))); break;
                case op_phase: {
                    auto e = entity_from(r.varint());
                    auto v = r.svarint();
                    auto sym = r.varint();
                    std::optional<std::string> name;
                    if (sym)
                        name = pool_at(pool, sym - 1);
                    stack.push_back(Cond::phase_eq(e, v, std::move(name)));
                    break;
                }
                case op_not:
                    if (stack.empty())
                        throw Error(Errc::decode_error, "NOT on empty stack");
                    stack.back() = Cond::negate(std::move(stack.back()));
                    break;
                case op_and:
                case op_or: {
                    if (stack.size() < 2)
                        throw Error(Errc::decode_error, "binary operator on short stack");
                    auto b = std::move(stack.back());
                    stack.pop_back();
                    auto a = std::move(stack.back());
                    stack.back() = op == op_and ? Cond::conj(std::move(a), std::move(b))
                                                : Cond::disj(std::move(a), std::move(b));
                    break;
                }
                case op_then:
                    if (stack.size() != 1)
                        throw Error(Errc::decode_error, "malformed condition");
                    return std::move(stack.front());
                default: throw Error(Errc::decode_error, "unexpected opcode in condition");
                }
            }
        }

        inline ActionList read_actions(ByteReader &r)
        {
            ActionList out;
            for (;;)
            {
                auto op = r.u8();
                if (op == op_fi)
                {
                    if (out.empty())
                        throw Error(Errc::decode_error, "empty action list");
                    return out;
                }
                if (op < op_kill || op > op_purge)
                    throw Error(Errc::decode_error, "unexpected opcode in actions");
                Action a{static_cast<ActionKind>(op - op_kill), {}};
                std::uint64_t n = 1;
                if (a.kind == ActionKind::warn || a.kind == ActionKind::purge)
                    n = r.varint();
                if (n > r.remaining())
                    throw Error(Errc::decode_error, "bad target count");
                for (std::uint64_t i = 0; i < n; ++i)
                    a.targets.push_back(entity_from(r.varint()));
                out.push_back(std::move(a));
            }
        }
    } // namespace detail

    inline Program decode(const RCode &rc)
    {
        ByteReader r(rc.bytes);
        auto pool = read_header(r);
        Program p;
        for (;;)
        {
            auto op = r.u8();
            switch (op)
            {
            case op_include: p.includes.push_back(detail::pool_at(pool, r.varint())); break;
            case op_rule: {
                auto c = detail::read_cond(r, pool);
                p.rules.push_back(Rule{std::move(c), detail::read_actions(r)});
                break;
            }
            case op_default:
                if (p.default_actions)
                    throw Error(Errc::decode_error, "second default block");
                p.default_actions = detail::read_actions(r);
                break;
            case op_end:
                if (!r.at_end())
                    throw Error(Errc::decode_error, "trailing bytes");
                return p;
            default: throw Error(Errc::decode_error, "unexpected opcode " + std::to_string(op));
            }
        }
    }

    /// One line per opcode: `<offset> <MNEMONIC> <operands>`.
    inline std::string disassemble(const RCode &rc)
    {
        ByteReader r(rc.bytes);
        auto pool = read_header(r);
        std::ostringstream out;
        out << "; r-code v" << int(rcode_version) << ", " << pool.size() << " constants\n";
        for (std::size_t i = 0; i < pool.size(); ++i)
            out << "; #" << i << " \"" << pool[i] << "\"\n";
        auto hex = [](std::size_t off) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "%04zx", off);
            return std::string(buf);
        };
        for (;;)
        {
            auto off = r.position();
            auto op = r.u8();
            out << hex(off) << ' ';
            switch (op)
            {
            case op_include: out << "INCLUDE #" << r.varint(); break;
            case op_rule: out << "RULE"; break;
            case op_then: out << "THEN"; break;
            case op_fi: out << "FI"; break;
            case op_default: out << "DEFAULT"; break;
            case op_end: out << "END\n"; return out.str();
            case op_faulty: out << "FAULTY " << detail::entity_from(r.varint()).to_string(); break;
            case op_phase: {
                auto e = detail::entity_from(r.varint());
                auto v = r.svarint();
                auto sym = r.varint();
                out << "PHASE_EQ " << e.to_string() << ' ' << v;
                if (sym)
                    out << " {" << detail::pool_at(pool, sym - 1) << '}';
                break;
            }
            case op_not: out << "NOT"; break;
            case op_and: out << "AND"; break;
            case op_or: out << "OR"; break;
            default:
                if (op >= op_kill && op <= op_purge)
                {
                    auto k = static_cast<ActionKind>(op - op_kill);
                    out << to_string(k);
                    std::uint64_t n = 1;
                    if (k == ActionKind::warn || k == ActionKind::purge)
                        n = r.varint();
                    for (std::uint64_t i = 0; i < n; ++i)
                        out << (i ? ", " : " ") << detail::entity_from(r.varint()).to_string();
                    break;
                }
                throw Error(Errc::decode_error, "unexpected opcode " + std::to_string(op));
            }
            out << '\n';
        }
    }
} // namespace vf::rl
