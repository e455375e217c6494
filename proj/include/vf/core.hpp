#pragma once

// Shared domain types for the voting farm: identifiers, descriptors, vote
// objects, voter phases and the error vocabulary used by every module.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vf
{
    using Bytes = std::vector<std::uint8_t>;

    enum class Errc : std::uint8_t
    {
        ok = 0,
        // descriptors and phases
        duplicate_ident,
        empty_farm,
        non_contiguous_idents,
        illegal_transition,
        // fabric
        no_such_link,
        time_in_past,
        max_time_exceeded,
        // voting
        length_mismatch,
        // client api
        already_running,
        validation_failed,
        spawn_failed,
        not_running,
        close_refused,
        handle_closed,
        spmd_incoherent,
        timeout,
        internal,
        // recovery language
        syntax_error,
        undefined_name,
        unknown_entity,
        decode_error,
        unknown_entity_at_runtime,
        // reliability
        domain_error,
        integration_failure,
        no_sign_change,
        // scenarios / cli
        scenario_error,
        invalid_argument,
    };

    constexpr std::string_view to_string(Errc e) noexcept
    {
        switch (e)
        {
        case Errc::ok: return "ok";
        case Errc::duplicate_ident: return "DuplicateIdent";
        case Errc::empty_farm: return "EmptyFarm";
        case Errc::non_contiguous_idents: return "NonContiguousIdents";
        case Errc::illegal_transition: return "IllegalTransition";
        case Errc::no_such_link: return "NoSuchLink";
        case Errc::time_in_past: return "TimeInPast";
        case Errc::max_time_exceeded: return "MaxTimeExceeded";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::already_running: return "AlreadyRunning";
        case Errc::validation_failed: return "ValidationFailed";
        case Errc::spawn_failed: return "SpawnFailed";
        case Errc::not_running: return "NotRunning";
        case Errc::close_refused: return "CloseRefused";
        case Errc::handle_closed: return "HandleClosed";
        case Errc::spmd_incoherent: return "SpmdIncoherent";
        case Errc::timeout: return "Timeout";
        case Errc::internal: return "Internal";
        case Errc::syntax_error: return "SyntaxError";
        case Errc::undefined_name: return "UndefinedName";
        case Errc::unknown_entity: return "UnknownEntity";
        case Errc::decode_error: return "DecodeError";
        case Errc::unknown_entity_at_runtime: return "UnknownEntityAtRuntime";
        case Errc::domain_error: return "DomainError";
        case Errc::integration_failure: return "IntegrationFailure";
        case Errc::no_sign_change: return "NoSignChange";
        case Errc::scenario_error: return "ScenarioError";
        case Errc::invalid_argument: return "InvalidArgument";
        }
        return "?";
    }

    class Error : public std::runtime_error
    {
    public:
        Error(Errc code, const std::string &what)
            : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
        {
        }

        Errc code() const noexcept { return code_; }

    private:
        Errc code_;
    };

    /// Outcome of an operation whose failures are part of normal operation
    /// (protocol refusals, topology errors). Exceptional input uses Error.
    class Status
    {
    public:
        Status() = default;
        Status(Errc code, std::string detail = {}) : code_(code), detail_(std::move(detail)) {}

        static Status ok() { return {}; }

        bool is_ok() const noexcept { return code_ == Errc::ok; }
        explicit operator bool() const noexcept { return is_ok(); }
        Errc code() const noexcept { return code_; }
        const std::string &detail() const noexcept { return detail_; }

        friend bool operator==(const Status &a, Errc b) noexcept { return a.code_ == b; }

    private:
        Errc code_ = Errc::ok;
        std::string detail_;
    };

    struct NodeId
    {
        std::uint32_t value = 1;

        constexpr NodeId() = default;
        constexpr explicit NodeId(std::uint32_t v) : value(v)
        {
            if (v < 1)
                throw Error(Errc::invalid_argument, "node ids are positive integers");
        }

        friend constexpr auto operator<=>(NodeId, NodeId) = default;
    };

    struct MemberId
    {
        std::uint32_t value = 1;

        constexpr MemberId() = default;
        constexpr explicit MemberId(std::uint32_t v) : value(v)
        {
            if (v < 1)
                throw Error(Errc::invalid_argument, "member idents start at 1");
        }

        friend constexpr auto operator<=>(MemberId, MemberId) = default;
    };

    /// The unit being voted on: an opaque payload plus the faulty bit.
    struct VoteObject
    {
        Bytes payload;
        bool valid = true;
        std::optional<MemberId> source;

        friend bool operator==(const VoteObject &, const VoteObject &) = default;
    };

    /// Distance between two vote objects. Must be symmetric, non-negative and
    /// zero on identical objects.
    using MetricFn = std::function<double(const VoteObject &, const VoteObject &)>;

    struct FarmMember
    {
        NodeId node;
        MemberId ident;

        friend bool operator==(const FarmMember &, const FarmMember &) = default;
    };

    /// Static map of the allocation of a farm: which node hosts which member.
    struct FarmDescriptor
    {
        std::vector<FarmMember> members;
        MetricFn metric;
        bool created = false;
        bool running = false;

        std::size_t size() const noexcept { return members.size(); }

        std::optional<MemberId> ident_of(NodeId node) const
        {
            for (const auto &m : members)
                if (m.node == node)
                    return m.ident;
            return std::nullopt;
        }

        std::optional<NodeId> node_of(MemberId ident) const
        {
            for (const auto &m : members)
                if (m.ident == ident)
                    return m.node;
            return std::nullopt;
        }

        /// Same placement list. Metric identity is not comparable.
        bool same_layout(const FarmDescriptor &o) const { return members == o.members; }
    };

    inline Status validate_descriptor(const FarmDescriptor &d)
    {
        if (d.members.empty())
            return {Errc::empty_farm, "farm has no members"};
        std::vector<std::uint32_t> idents;
        idents.reserve(d.members.size());
        for (const auto &m : d.members)
            idents.push_back(m.ident.value);
        std::sort(idents.begin(), idents.end());
        for (std::size_t i = 1; i < idents.size(); ++i)
            if (idents[i] == idents[i - 1])
                return {Errc::duplicate_ident, "ident " + std::to_string(idents[i]) + " used twice"};
        for (std::size_t i = 0; i < idents.size(); ++i)
            if (idents[i] != i + 1)
                return {Errc::non_contiguous_idents, "idents must be exactly 1..N"};
        return {};
    }

    enum class VoterPhase : std::uint8_t
    {
        init = 0,
        broadcast = 1,
        voting = 2,
        success = 3,
        failure = 4,
    };

    constexpr std::string_view to_string(VoterPhase p) noexcept
    {
        switch (p)
        {
        case VoterPhase::init: return "VFP_INIT";
        case VoterPhase::broadcast: return "VFP_BROADCAST";
        case VoterPhase::voting: return "VFP_VOTING";
        case VoterPhase::success: return "VFP_SUCCESS";
        case VoterPhase::failure: return "VFP_FAILURE";
        }
        return "?";
    }

    inline std::optional<VoterPhase> phase_from_string(std::string_view s)
    {
        for (auto p : {VoterPhase::init, VoterPhase::broadcast, VoterPhase::voting, VoterPhase::success,
                       VoterPhase::failure})
            if (to_string(p) == s)
                return p;
        return std::nullopt;
    }

    enum class VoterEvent : std::uint8_t
    {
        input_arrived,
        broadcast_complete,
        vote_ok,
        vote_fail,
        reset,
    };

    constexpr std::string_view to_string(VoterEvent e) noexcept
    {
        switch (e)
        {
        case VoterEvent::input_arrived: return "input-arrived";
        case VoterEvent::broadcast_complete: return "broadcast-complete";
        case VoterEvent::vote_ok: return "vote-ok";
        case VoterEvent::vote_fail: return "vote-fail";
        case VoterEvent::reset: return "reset";
        }
        return "?";
    }

    /// Legal transitions: INIT->BROADCAST->VOTING->{SUCCESS,FAILURE}->INIT.
    /// Anything else throws IllegalTransition.
    inline VoterPhase phase_transition(VoterPhase p, VoterEvent e)
    {
        using P = VoterPhase;
        using E = VoterEvent;
        switch (p)
        {
        case P::init:
            if (e == E::input_arrived)
                return P::broadcast;
            break;
        case P::broadcast:
            if (e == E::broadcast_complete)
                return P::voting;
            break;
        case P::voting:
            if (e == E::vote_ok)
                return P::success;
            if (e == E::vote_fail)
                return P::failure;
            break;
        case P::success:
        case P::failure:
            if (e == E::reset)
                return P::init;
            break;
        }
        throw Error(Errc::illegal_transition,
                    std::string(to_string(p)) + " on " + std::string(to_string(e)));
    }

    /// True iff the sequence is a prefix-closed word of
    /// (INIT BROADCAST VOTING (SUCCESS|FAILURE))*.
    inline bool is_legal_phase_word(std::span<const VoterPhase> word)
    {
        using P = VoterPhase;
        std::optional<P> prev;
        for (auto p : word)
        {
            bool ok = false;
            if (!prev)
                ok = p == P::init;
            else
                switch (*prev)
                {
                case P::init: ok = p == P::broadcast; break;
                case P::broadcast: ok = p == P::voting; break;
                case P::voting: ok = p == P::success || p == P::failure; break;
                case P::success:
                case P::failure: ok = p == P::init; break;
                }
            if (!ok)
                return false;
            prev = p;
        }
        return true;
    }

    enum class VfStatusKind : std::uint8_t
    {
        done,
        refused,
        none,
    };

    constexpr std::string_view to_string(VfStatusKind k) noexcept
    {
        switch (k)
        {
        case VfStatusKind::done: return "VF_DONE";
        case VfStatusKind::refused: return "VF_REFUSED";
        case VfStatusKind::none: return "VF_NONE";
        }
        return "?";
    }

    struct VfStatus
    {
        VfStatusKind kind = VfStatusKind::none;
        Errc detail = Errc::ok;

        bool timed_out() const noexcept { return detail == Errc::timeout; }
        friend bool operator==(const VfStatus &a, VfStatusKind k) noexcept { return a.kind == k; }
    };

    // Little-endian byte codec used by the wire formats.
    class ByteWriter
    {
    public:
        void u8(std::uint8_t v) { out_.push_back(v); }

        void varint(std::uint64_t v)
        {
            while (v >= 0x80)
            {
                out_.push_back(static_cast<std::uint8_t>(v | 0x80));
                v >>= 7;
            }
            out_.push_back(static_cast<std::uint8_t>(v));
        }

        void svarint(std::int64_t v)
        {
            varint((static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63));
        }

        void f64(double v)
        {
            std::uint64_t bits;
            static_assert(sizeof bits == sizeof v);
            std::memcpy(&bits, &v, sizeof v);
            for (int i = 0; i < 8; ++i)
                out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
        }

        void bytes(std::span<const std::uint8_t> b)
        {
            varint(b.size());
            out_.insert(out_.end(), b.begin(), b.end());
        }

        void str(std::string_view s)
        {
            varint(s.size());
            out_.insert(out_.end(), s.begin(), s.end());
        }

        void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

        Bytes take() { return std::move(out_); }
        const Bytes &view() const noexcept { return out_; }

    private:
        Bytes out_;
    };

    class ByteReader
    {
    public:
        explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

        bool at_end() const noexcept { return pos_ >= in_.size(); }
        std::size_t position() const noexcept { return pos_; }
        std::size_t remaining() const noexcept { return in_.size() - pos_; }

        std::uint8_t u8()
        {
            need(1);
            return in_[pos_++];
        }

        std::uint64_t varint()
        {
            std::uint64_t v = 0;
            for (int shift = 0; shift < 64; shift += 7)
            {
                auto b = u8();
                v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
                if (!(b & 0x80))
                    return v;
            }
            throw Error(Errc::decode_error, "varint too long");
        }

        std::int64_t svarint()
        {
            auto u = varint();
            return static_cast<std::int64_t>(u >> 1) ^ -static_cast<std::int64_t>(u & 1);
        }

        double f64()
        {
            need(8);
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i)
                bits |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
            pos_ += 8;
            double v;
            std::memcpy(&v, &bits, sizeof v);
            return v;
        }

        Bytes bytes()
        {
            auto n = varint();
            need(n);
            Bytes b(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
            pos_ += n;
            return b;
        }

        std::string str()
        {
            auto b = bytes();
            return {b.begin(), b.end()};
        }

    private:
        void need(std::uint64_t n) const
        {
            if (n > in_.size() - pos_)
                throw Error(Errc::decode_error, "truncated input");
        }

        std::span<const std::uint8_t> in_;
        std::size_t pos_ = 0;
    };

    /// Payloads of numeric techniques are packed little-endian f64 vectors.
    inline Bytes encode_f64s(std::span<const double> values)
    {
        ByteWriter w;
        for (double v : values)
            w.f64(v);
        return w.take();
    }

    inline Bytes encode_f64(double v) { return encode_f64s(std::span<const double>(&v, 1)); }

    inline std::optional<std::vector<double>> decode_f64s(std::span<const std::uint8_t> payload)
    {
        if (payload.size() % 8 != 0)
            return std::nullopt;
        ByteReader r(payload);
        std::vector<double> out;
        out.reserve(payload.size() / 8);
        while (!r.at_end())
            out.push_back(r.f64());
        return out;
    }

    inline std::string to_hex(std::span<const std::uint8_t> b)
    {
        static constexpr char digits[] = "0123456789abcdef";
        std::string s;
        s.reserve(b.size() * 2);
        for (auto c : b)
        {
            s.push_back(digits[c >> 4]);
            s.push_back(digits[c & 0xf]);
        }
        return s;
    }

    inline std::optional<Bytes> from_hex(std::string_view s)
    {
        if (s.size() % 2)
            return std::nullopt;
        auto nib = [](char c) -> int {
            if (c >= '0' && c <= '9')
                return c - '0';
            if (c >= 'a' && c <= 'f')
                return c - 'a' + 10;
            if (c >= 'A' && c <= 'F')
                return c - 'A' + 10;
            return -1;
        };
        Bytes out;
        for (std::size_t i = 0; i < s.size(); i += 2)
        {
            int hi = nib(s[i]), lo = nib(s[i + 1]);
            if (hi < 0 || lo < 0)
                return std::nullopt;
            out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
        }
        return out;
    }
} // namespace vf
