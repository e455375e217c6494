#pragma once

// Voting techniques over arbitrary payloads in a metric space.
//
// Items closer than epsilon are linked; equivalence classes are the connected
// components of that relation. A class is represented by its member with the
// lowest id, so every voter holding the same ballot returns the same object.

#include "core.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

namespace vf::voting
{
    enum class Technique : std::uint8_t
    {
        majority,
        median,
        plurality,
        weighted_average,
        consensus,
    };

    constexpr std::string_view to_string(Technique t) noexcept
    {
        switch (t)
        {
        case Technique::majority: return "majority";
        case Technique::median: return "median";
        case Technique::plurality: return "plurality";
        case Technique::weighted_average: return "weighted-average";
        case Technique::consensus: return "consensus";
        }
        return "?";
    }

    inline std::optional<Technique> technique_from_string(std::string_view s)
    {
        for (auto t : {Technique::majority, Technique::median, Technique::plurality, Technique::weighted_average,
                       Technique::consensus})
            if (to_string(t) == s)
                return t;
        if (s == "weighted_average")
            return Technique::weighted_average;
        return std::nullopt;
    }

    enum class TieBreak : std::uint8_t
    {
        none,
        lowest_member_id,
    };

    struct AlgorithmSelect
    {
        Technique kind = Technique::majority;
        double epsilon = 0.0;
        double scaling_factor = 1.0;
        TieBreak tie_break = TieBreak::none;
        /// Consensus demands every one of the N items to be valid.
        bool require_all = true;

        Status validate() const
        {
            if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
                return {Errc::invalid_argument, "epsilon must be finite and >= 0"};
            if (!(scaling_factor > 0.0) || !std::isfinite(scaling_factor))
                return {Errc::invalid_argument, "scaling factor must be finite and > 0"};
            return {};
        }

        friend bool operator==(const AlgorithmSelect &, const AlgorithmSelect &) = default;
    };

    /// 0 for byte-identical payloads, 1 otherwise.
    inline double default_metric(const VoteObject &a, const VoteObject &b)
    {
        if (a.payload.size() != b.payload.size())
            throw Error(Errc::length_mismatch, std::to_string(a.payload.size()) + " vs " +
                                                   std::to_string(b.payload.size()) + " bytes");
        return a.payload == b.payload ? 0.0 : 1.0;
    }

    /// Euclidean distance between payloads read as little-endian f64 vectors.
    inline double euclidean_metric(const VoteObject &a, const VoteObject &b)
    {
        if (a.payload.size() != b.payload.size())
            throw Error(Errc::length_mismatch, std::to_string(a.payload.size()) + " vs " +
                                                   std::to_string(b.payload.size()) + " bytes");
        auto x = decode_f64s(a.payload);
        auto y = decode_f64s(b.payload);
        if (!x || !y)
            throw Error(Errc::invalid_argument, "payload is not an f64 vector");
        double s = 0.0;
        for (std::size_t i = 0; i < x->size(); ++i)
        {
            double d = (*x)[i] - (*y)[i];
            s += d * d;
        }
        return std::sqrt(s);
    }

    struct Ballot
    {
        std::vector<VoteObject> items;
        AlgorithmSelect select;
        MetricFn metric; // empty: default_metric
    };

    enum class NoDecision : std::uint8_t
    {
        no_valid_items,
        no_majority,
        tie,
        disagreement,
        invalid_item,
        zero_weight,
        not_numeric,
    };

    constexpr std::string_view to_string(NoDecision r) noexcept
    {
        switch (r)
        {
        case NoDecision::no_valid_items: return "no-valid-items";
        case NoDecision::no_majority: return "no-majority";
        case NoDecision::tie: return "tie";
        case NoDecision::disagreement: return "disagreement";
        case NoDecision::invalid_item: return "invalid-item";
        case NoDecision::zero_weight: return "zero-weight";
        case NoDecision::not_numeric: return "not-numeric";
        }
        return "?";
    }

    struct Decision
    {
        std::optional<VoteObject> value;
        NoDecision reason = NoDecision::no_valid_items;

        bool decided() const noexcept { return value.has_value(); }

        static Decision of(VoteObject v) { return {std::move(v), {}}; }
        static Decision none(NoDecision r) { return {std::nullopt, r}; }
    };

    namespace detail
    {
        inline std::uint32_t member_of(const std::vector<VoteObject> &items, std::size_t i)
        {
            return items[i].source ? items[i].source->value : static_cast<std::uint32_t>(i + 1);
        }

        inline MetricFn metric_or_default(const MetricFn &m)
        {
            return m ? m : MetricFn(default_metric);
        }

        inline std::vector<std::size_t> valid_indices(const std::vector<VoteObject> &items)
        {
            std::vector<std::size_t> out;
            for (std::size_t i = 0; i < items.size(); ++i)
                if (items[i].valid)
                    out.push_back(i);
            return out;
        }

        /// Index of the item with the lowest member id among `idx`.
        inline std::size_t representative(const std::vector<VoteObject> &items, const std::vector<std::size_t> &idx)
        {
            std::size_t best = idx.front();
            for (auto i : idx)
                if (member_of(items, i) < member_of(items, best))
                    best = i;
            return best;
        }
    } // namespace detail

    /// Epsilon-linkage classes over the valid items, as lists of item indices.
    /// Classes are ordered by their representative's member id.
    inline std::vector<std::vector<std::size_t>> equivalence_classes(const std::vector<VoteObject> &items,
                                                                     const MetricFn &metric, double epsilon)
    {
        auto d = detail::metric_or_default(metric);
        auto valid = detail::valid_indices(items);
        std::vector<std::size_t> parent(valid.size());
        std::iota(parent.begin(), parent.end(), std::size_t{0});
        auto find = [&](std::size_t x) {
            while (parent[x] != x)
                x = parent[x] = parent[parent[x]];
            return x;
        };
        for (std::size_t a = 0; a < valid.size(); ++a)
            for (std::size_t b = a + 1; b < valid.size(); ++b)
                if (d(items[valid[a]], items[valid[b]]) <= epsilon)
                    parent[find(a)] = find(b);
        std::vector<std::vector<std::size_t>> classes;
        std::vector<std::size_t> slot(valid.size(), SIZE_MAX);
        for (std::size_t a = 0; a < valid.size(); ++a)
        {
            auto r = find(a);
            if (slot[r] == SIZE_MAX)
            {
                slot[r] = classes.size();
                classes.emplace_back();
            }
            classes[slot[r]].push_back(valid[a]);
        }
        std::sort(classes.begin(), classes.end(), [&](const auto &x, const auto &y) {
            return detail::member_of(items, detail::representative(items, x)) <
                   detail::member_of(items, detail::representative(items, y));
        });
        return classes;
    }

    /// Winner is a class holding more than half of all N items, invalid ones included.
    inline Decision majority(const Ballot &b)
    {
        auto classes = equivalence_classes(b.items, b.metric, b.select.epsilon);
        if (classes.empty())
            return Decision::none(NoDecision::no_valid_items);
        const std::size_t n = b.items.size();
        for (const auto &c : classes)
            if (2 * c.size() > n)
                return Decision::of(b.items[detail::representative(b.items, c)]);
        return Decision::none(NoDecision::no_majority);
    }

    inline Decision plurality(const Ballot &b)
    {
        auto classes = equivalence_classes(b.items, b.metric, b.select.epsilon);
        if (classes.empty())
            return Decision::none(NoDecision::no_valid_items);
        std::size_t best = 0;
        for (const auto &c : classes)
            best = std::max(best, c.size());
        std::vector<const std::vector<std::size_t> *> top;
        for (const auto &c : classes)
            if (c.size() == best)
                top.push_back(&c);
        if (top.size() > 1 && b.select.tie_break == TieBreak::none)
            return Decision::none(NoDecision::tie);
        // classes are sorted by representative id, so the first is the tie-break winner
        return Decision::of(b.items[detail::representative(b.items, *top.front())]);
    }

    /// Repeatedly discard the two valid items furthest apart. Of two
    /// survivors, keep the one closer in total to all valid items, then the
    /// lower member id.
    inline Decision median(const Ballot &b)
    {
        auto d = detail::metric_or_default(b.metric);
        auto alive = detail::valid_indices(b.items);
        if (alive.empty())
            return Decision::none(NoDecision::no_valid_items);
        const auto all_valid = alive;
        auto id = [&](std::size_t i) { return detail::member_of(b.items, i); };
        while (alive.size() > 2)
        {
            std::size_t bi = 0, bj = 1;
            double best = -1.0;
            for (std::size_t x = 0; x < alive.size(); ++x)
                for (std::size_t y = x + 1; y < alive.size(); ++y)
                {
                    double dist = d(b.items[alive[x]], b.items[alive[y]]);
                    auto lo = std::min(id(alive[x]), id(alive[y]));
                    auto hi = std::max(id(alive[x]), id(alive[y]));
                    auto blo = std::min(id(alive[bi]), id(alive[bj]));
                    auto bhi = std::max(id(alive[bi]), id(alive[bj]));
                    if (dist > best || (dist == best && std::pair(lo, hi) < std::pair(blo, bhi)))
                    {
                        best = dist;
                        bi = x;
                        bj = y;
                    }
                }
            alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(bj));
            alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(bi));
        }
        if (alive.size() == 1)
            return Decision::of(b.items[alive.front()]);
        auto total = [&](std::size_t i) {
            double s = 0.0;
            for (auto j : all_valid)
                s += d(b.items[i], b.items[j]);
            return s;
        };
        double t0 = total(alive[0]), t1 = total(alive[1]);
        std::size_t pick;
        if (t0 != t1)
            pick = t0 < t1 ? alive[0] : alive[1];
        else
            pick = id(alive[0]) < id(alive[1]) ? alive[0] : alive[1];
        return Decision::of(b.items[pick]);
    }

    /// Componentwise weighted mean of the valid items, with weight
    /// 1/(1+(D/s)^2) where D is the item's mean distance to the other valid
    /// items. Invalid items weigh zero.
    inline Decision weighted_average(const Ballot &b)
    {
        auto d = b.metric ? b.metric : MetricFn(euclidean_metric);
        auto valid = detail::valid_indices(b.items);
        if (valid.empty())
            return Decision::none(NoDecision::zero_weight);
        std::vector<std::vector<double>> xs;
        for (auto i : valid)
        {
            auto v = decode_f64s(b.items[i].payload);
            if (!v || (!xs.empty() && v->size() != xs.front().size()))
                return Decision::none(NoDecision::not_numeric);
            xs.push_back(std::move(*v));
        }
        const double s = b.select.scaling_factor;
        std::vector<double> w(valid.size(), 1.0);
        if (valid.size() > 1)
            for (std::size_t a = 0; a < valid.size(); ++a)
            {
                double sum = 0.0;
                for (std::size_t c = 0; c < valid.size(); ++c)
                    if (c != a)
                        sum += d(b.items[valid[a]], b.items[valid[c]]);
                double mean = sum / static_cast<double>(valid.size() - 1);
                double r = mean / s;
                w[a] = 1.0 / (1.0 + r * r);
            }
        double wsum = std::accumulate(w.begin(), w.end(), 0.0);
        if (!(wsum > 0.0))
            return Decision::none(NoDecision::zero_weight);
        std::vector<double> out(xs.front().size(), 0.0);
        for (std::size_t a = 0; a < xs.size(); ++a)
            for (std::size_t k = 0; k < out.size(); ++k)
                out[k] += w[a] * xs[a][k];
        for (auto &v : out)
            v /= wsum;
        // identical inputs must come back bit-exact
        bool all_same = true;
        for (const auto &x : xs)
            all_same = all_same && x == xs.front();
        if (all_same)
            out = xs.front();
        return Decision::of(VoteObject{encode_f64s(out), true, std::nullopt});
    }

    inline Decision consensus(const Ballot &b)
    {
        auto d = detail::metric_or_default(b.metric);
        auto valid = detail::valid_indices(b.items);
        if (valid.empty())
            return Decision::none(NoDecision::no_valid_items);
        if (b.select.require_all && valid.size() != b.items.size())
            return Decision::none(NoDecision::invalid_item);
        for (std::size_t x = 0; x < valid.size(); ++x)
            for (std::size_t y = x + 1; y < valid.size(); ++y)
                if (d(b.items[valid[x]], b.items[valid[y]]) > b.select.epsilon)
                    return Decision::none(NoDecision::disagreement);
        return Decision::of(b.items[detail::representative(b.items, valid)]);
    }

    inline Decision vote(const Ballot &b)
    {
        if (auto st = b.select.validate(); !st)
            throw Error(st.code(), st.detail());
        switch (b.select.kind)
        {
        case Technique::majority: return majority(b);
        case Technique::median: return median(b);
        case Technique::plurality: return plurality(b);
        case Technique::weighted_average: return weighted_average(b);
        case Technique::consensus: return consensus(b);
        }
        throw Error(Errc::invalid_argument, "unknown technique");
    }
} // namespace vf::voting
