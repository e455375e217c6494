#pragma once

// Wire messages exchanged between user modules, voters and the recovery
// layer. Protocol bookkeeping lives in Message::header; only the voted value
// travels in Message::payload, so injected value faults corrupt data and never
// framing.

#include "fabric.hpp"
#include "voting.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vf::proto
{
    using sim::Endpoint;
    using sim::Message;

    enum Kind : std::uint8_t
    {
        control = 1,
        close = 2,
        bcast = 3,
        done = 4,
        refused = 5,
        closed = 6,
        vote = 7,
        phase = 8,
        warn = 9,
        crash_report = 10,
    };

    // ---- endpoint codec -----------------------------------------------------

    inline void put_endpoint(ByteWriter &w, const Endpoint &e)
    {
        w.varint(e.node.value);
        w.u8(static_cast<std::uint8_t>(e.role));
        w.varint(e.member ? e.member->value : 0);
    }

    inline Endpoint get_endpoint(ByteReader &r)
    {
        auto node = r.varint();
        auto role = r.u8();
        auto member = r.varint();
        if (node == 0 || node > UINT32_MAX || role > 3 || member > UINT32_MAX)
            throw Error(Errc::decode_error, "bad endpoint");
        Endpoint e{NodeId(static_cast<std::uint32_t>(node)), static_cast<sim::Role>(role), std::nullopt};
        if (member)
            e.member = MemberId(static_cast<std::uint32_t>(member));
        return e;
    }

    // ---- control bundle (user -> voter) -------------------------------------

    struct Control
    {
        /// Session index carried by an input request.
        std::optional<std::uint64_t> input_seq;
        std::optional<Endpoint> output;
        std::optional<voting::Technique> algorithm;
        std::optional<double> epsilon;
        std::optional<voting::TieBreak> tie_break;
        std::optional<bool> require_all;
        std::optional<double> scaling;
        bool reset = false;
        /// Input object; meaningful only with input_seq.
        Bytes input;

        bool has_input() const noexcept { return input_seq.has_value(); }
    };

    namespace tag
    {
        enum : std::uint8_t
        {
            input = 1,
            output = 2,
            algorithm = 3,
            epsilon = 4,
            tie_break = 5,
            require_all = 6,
            scaling = 7,
            reset = 8,
        };
    }

    inline Message encode(const Control &c)
    {
        ByteWriter w;
        if (c.input_seq)
        {
            w.u8(tag::input);
            w.varint(*c.input_seq);
        }
        if (c.output)
        {
            w.u8(tag::output);
            put_endpoint(w, *c.output);
        }
        if (c.algorithm)
        {
            w.u8(tag::algorithm);
            w.u8(static_cast<std::uint8_t>(*c.algorithm));
        }
        if (c.epsilon)
        {
            w.u8(tag::epsilon);
            w.f64(*c.epsilon);
        }
        if (c.tie_break)
        {
            w.u8(tag::tie_break);
            w.u8(static_cast<std::uint8_t>(*c.tie_break));
        }
        if (c.require_all)
        {
            w.u8(tag::require_all);
            w.u8(*c.require_all ? 1 : 0);
        }
        if (c.scaling)
        {
            w.u8(tag::scaling);
            w.f64(*c.scaling);
        }
        if (c.reset)
            w.u8(tag::reset);
        return Message{Kind::control, w.take(), c.input_seq ? c.input : Bytes{}};
    }

    inline Control decode_control(const Message &m)
    {
        Control c;
        ByteReader r(m.header);
        while (!r.at_end())
        {
            switch (r.u8())
            {
            case tag::input: c.input_seq = r.varint(); break;
            case tag::output: c.output = get_endpoint(r); break;
            case tag::algorithm: {
                auto v = r.u8();
                if (v > static_cast<std::uint8_t>(voting::Technique::consensus))
                    throw Error(Errc::decode_error, "bad algorithm");
                c.algorithm = static_cast<voting::Technique>(v);
                break;
            }
            case tag::epsilon: c.epsilon = r.f64(); break;
            case tag::tie_break: {
                auto v = r.u8();
                if (v > 1)
                    throw Error(Errc::decode_error, "bad tie-break");
                c.tie_break = static_cast<voting::TieBreak>(v);
                break;
            }
            case tag::require_all: c.require_all = r.u8() != 0; break;
            case tag::scaling: c.scaling = r.f64(); break;
            case tag::reset: c.reset = true; break;
            default: throw Error(Errc::decode_error, "unknown control tag");
            }
        }
        if (c.input_seq)
            c.input = m.payload;
        return c;
    }

    // ---- voter <-> voter ----------------------------------------------------

    struct Bcast
    {
        std::uint64_t epoch = 0;
        std::uint64_t session = 0;
        std::uint32_t ident = 0;
        bool valid = true;
        Bytes value;
    };

    inline Message encode(const Bcast &b)
    {
        ByteWriter w;
        w.varint(b.epoch);
        w.varint(b.session);
        w.varint(b.ident);
        w.u8(b.valid ? 1 : 0);
        return Message{Kind::bcast, w.take(), b.value};
    }

    inline Bcast decode_bcast(const Message &m)
    {
        ByteReader r(m.header);
        Bcast b;
        b.epoch = r.varint();
        b.session = r.varint();
        b.ident = static_cast<std::uint32_t>(r.varint());
        b.valid = r.u8() != 0;
        b.value = m.payload;
        return b;
    }

    // ---- voter -> user ------------------------------------------------------

    inline Message make_done(std::uint64_t session)
    {
        ByteWriter w;
        w.varint(session);
        return Message{Kind::done, w.take(), {}};
    }

    inline Message make_refused(std::string_view reason)
    {
        ByteWriter w;
        w.str(reason);
        return Message{Kind::refused, w.take(), {}};
    }

    inline Message make_close() { return Message{Kind::close, {}, {}}; }
    inline Message make_closed() { return Message{Kind::closed, {}, {}}; }

    struct Vote
    {
        std::uint64_t session = 0;
        bool decided = false;
        std::string reason;
        Bytes value;
    };

    inline Message encode(const Vote &v)
    {
        ByteWriter w;
        w.varint(v.session);
        w.u8(v.decided ? 1 : 0);
        w.str(v.reason);
        return Message{Kind::vote, w.take(), v.value};
    }

    inline Vote decode_vote(const Message &m)
    {
        ByteReader r(m.header);
        Vote v;
        v.session = r.varint();
        v.decided = r.u8() != 0;
        v.reason = r.str();
        v.value = m.payload;
        return v;
    }

    inline std::uint64_t decode_session(const Message &m)
    {
        ByteReader r(m.header);
        return r.varint();
    }

    inline std::string decode_reason(const Message &m)
    {
        ByteReader r(m.header);
        return r.str();
    }

    // ---- recovery layer -----------------------------------------------------

    struct PhaseReport
    {
        std::uint32_t node = 0;
        std::uint32_t member = 0;
        VoterPhase phase = VoterPhase::init;
        std::uint64_t epoch = 0;
        std::uint64_t session = 0;
    };

    inline Message encode(const PhaseReport &p)
    {
        ByteWriter w;
        w.varint(p.node);
        w.varint(p.member);
        w.u8(static_cast<std::uint8_t>(p.phase));
        w.varint(p.epoch);
        w.varint(p.session);
        return Message{Kind::phase, w.take(), {}};
    }

    inline PhaseReport decode_phase(const Message &m)
    {
        ByteReader r(m.header);
        PhaseReport p;
        p.node = static_cast<std::uint32_t>(r.varint());
        p.member = static_cast<std::uint32_t>(r.varint());
        auto ph = r.u8();
        if (ph > 4)
            throw Error(Errc::decode_error, "bad phase");
        p.phase = static_cast<VoterPhase>(ph);
        p.epoch = r.varint();
        p.session = r.varint();
        return p;
    }

    /// New farm layout pushed to the surviving voters.
    struct Warn
    {
        std::uint64_t epoch = 0;
        std::vector<FarmMember> members;
    };

    inline Message encode(const Warn &w)
    {
        ByteWriter b;
        b.varint(w.epoch);
        b.varint(w.members.size());
        for (const auto &m : w.members)
        {
            b.varint(m.node.value);
            b.varint(m.ident.value);
        }
        return Message{Kind::warn, b.take(), {}};
    }

    inline Warn decode_warn(const Message &m)
    {
        ByteReader r(m.header);
        Warn w;
        w.epoch = r.varint();
        auto n = r.varint();
        if (n > r.remaining())
            throw Error(Errc::decode_error, "bad member count");
        for (std::uint64_t i = 0; i < n; ++i)
        {
            auto node = static_cast<std::uint32_t>(r.varint());
            auto ident = static_cast<std::uint32_t>(r.varint());
            w.members.push_back({NodeId(node), MemberId(ident)});
        }
        return w;
    }

    inline Message make_crash_report(const Endpoint &e)
    {
        ByteWriter w;
        put_endpoint(w, e);
        return Message{Kind::crash_report, w.take(), {}};
    }

    inline Endpoint decode_crash_report(const Message &m)
    {
        ByteReader r(m.header);
        return get_endpoint(r);
    }

    // ---- trace rendering ----------------------------------------------------

    inline std::string describe_value(const Bytes &b)
    {
        return b.empty() ? std::string("-") : to_hex(b);
    }

    inline std::string describe(const Message &m)
    {
        try
        {
            switch (m.kind)
            {
            case Kind::control: {
                auto c = decode_control(m);
                std::string s = "CONTROL";
                if (c.input_seq)
                    s += " input s=" + std::to_string(*c.input_seq) + " v=" + describe_value(c.input);
                if (c.output)
                    s += " output=" + sim::label(*c.output);
                if (c.algorithm)
                    s += " alg=" + std::string(voting::to_string(*c.algorithm));
                if (c.epsilon)
                    s += " eps=" + std::to_string(*c.epsilon);
                if (c.scaling)
                    s += " scale=" + std::to_string(*c.scaling);
                if (c.reset)
                    s += " reset";
                return s;
            }
            case Kind::close: return "CLOSE";
            case Kind::bcast: {
                auto b = decode_bcast(m);
                return "BCAST e=" + std::to_string(b.epoch) + " s=" + std::to_string(b.session) +
                       " id=" + std::to_string(b.ident) + " valid=" + (b.valid ? "1" : "0") +
                       " v=" + describe_value(b.value);
            }
            case Kind::done: return "VF_DONE s=" + std::to_string(decode_session(m));
            case Kind::refused: return "VF_REFUSED " + decode_reason(m);
            case Kind::closed: return "CLOSED";
            case Kind::vote: {
                auto v = decode_vote(m);
                return "VOTE s=" + std::to_string(v.session) +
                       (v.decided ? " v=" + describe_value(v.value) : " none " + v.reason);
            }
            case Kind::phase: {
                auto p = decode_phase(m);
                return "PHASE m=" + std::to_string(p.member) + " " + std::string(to_string(p.phase)) +
                       " s=" + std::to_string(p.session);
            }
            case Kind::warn: {
                auto w = decode_warn(m);
                std::string s = "WARN e=" + std::to_string(w.epoch) + " farm=";
                for (std::size_t i = 0; i < w.members.size(); ++i)
                    s += (i ? "," : "") + std::to_string(w.members[i].node.value) + ":" +
                         std::to_string(w.members[i].ident.value);
                return s;
            }
            case Kind::crash_report: return "CRASHED " + sim::label(decode_crash_report(m));
            default: break;
            }
        }
        catch (const Error &)
        {
            return "UNDECODABLE kind=" + std::to_string(m.kind);
        }
        return "kind=" + std::to_string(m.kind);
    }

    inline void install_formatter(sim::Fabric &f) { f.set_formatter(&describe); }
} // namespace vf::proto
