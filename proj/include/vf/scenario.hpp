#pragma once

// Scenario files: a JSON description of a farm, its inputs, injected faults
// and an optional recovery program, plus assertions over the outcome. The
// format is documented in docs/formats.md.

#include "recovery.hpp"
#include "rl/parser.hpp"
#include "client.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>

namespace vf::scenario
{
    using json = nlohmann::json;
    using sim::Tick;
    namespace fs = std::filesystem;

    enum class PayloadKind : std::uint8_t
    {
        f64,
        text,
        hex,
    };

    struct ScenarioFault
    {
        sim::FaultSpec spec;
        /// Armed when the first user module begins this session; `spec.at`
        /// is then ignored.
        std::optional<std::uint64_t> session;
    };

    struct Assertion
    {
        std::string type;
        json args;
    };

    struct Scenario
    {
        std::string name;
        std::string description;
        fs::path base_dir;

        std::uint64_t seed = 1;
        Tick delay = 1;
        Tick jitter = 0;
        bool shuffle = false;
        Tick max_time = 1'000'000;
        Tick dt = 100;
        Tick get_timeout = 0;
        /// When positive, session k starts at (k-1) * session_period.
        Tick session_period = 0;
        bool cyclic_send_order = false;

        std::vector<std::uint32_t> farm;
        std::vector<std::uint32_t> spares;
        std::map<std::uint32_t, std::vector<std::uint32_t>> groups;

        voting::AlgorithmSelect algorithm;
        std::map<std::uint64_t, voting::AlgorithmSelect> session_algorithms;
        PayloadKind payload = PayloadKind::f64;
        std::uint64_t sessions = 0;
        /// inputs[node][k-1] is the node's input for session k.
        std::map<std::uint32_t, std::vector<std::optional<Bytes>>> inputs;

        std::vector<ScenarioFault> faults;
        std::optional<fs::path> rl;
        std::vector<Assertion> assertions;

        Tick effective_get_timeout() const
        {
            if (get_timeout > 0)
                return get_timeout;
            return 10 * dt * static_cast<Tick>(std::max<std::size_t>(1, farm.size() + spares.size()));
        }
    };

    [[noreturn]] inline void bad(const std::string &what) { throw Error(Errc::scenario_error, what); }

    inline Bytes encode_value(PayloadKind kind, const json &v)
    {
        switch (kind)
        {
        case PayloadKind::f64:
            if (v.is_number())
                return encode_f64(v.get<double>());
            if (v.is_array())
            {
                std::vector<double> xs;
                for (const auto &x : v)
                {
                    if (!x.is_number())
                        bad("f64 vectors hold numbers only");
                    xs.push_back(x.get<double>());
                }
                return encode_f64s(xs);
            }
            bad("f64 payloads are numbers or arrays of numbers");
        case PayloadKind::text:
            if (!v.is_string())
                bad("text payloads are strings");
            {
                auto s = v.get<std::string>();
                return Bytes(s.begin(), s.end());
            }
        case PayloadKind::hex:
            if (!v.is_string())
                bad("hex payloads are strings");
            if (auto b = from_hex(v.get<std::string>()))
                return *b;
            bad("bad hex payload " + v.get<std::string>());
        }
        bad("unknown payload kind");
    }

    inline std::string render_value(PayloadKind kind, const Bytes &b)
    {
        if (kind == PayloadKind::text)
            return std::string(b.begin(), b.end());
        if (auto xs = kind == PayloadKind::f64 && !b.empty() ? decode_f64s(b) : std::nullopt)
        {
            std::string s;
            char buf[64];
            for (std::size_t i = 0; i < xs->size(); ++i)
            {
                std::snprintf(buf, sizeof buf, "%.17g", (*xs)[i]);
                s += (i ? " " : "") + std::string(buf);
            }
            return s;
        }
        return to_hex(b);
    }

    inline voting::AlgorithmSelect parse_algorithm(json j, voting::AlgorithmSelect base = {})
    {
        if (j.is_string())
            j = json{{"kind", j}};
        if (!j.is_object())
            bad("algorithm must be a name or an object");
        if (j.contains("kind"))
        {
            auto t = voting::technique_from_string(j.at("kind").get<std::string>());
            if (!t)
                bad("unknown algorithm " + j.at("kind").get<std::string>());
            base.kind = *t;
        }
        base.epsilon = j.value("epsilon", base.epsilon);
        base.scaling_factor = j.value("scaling", base.scaling_factor);
        base.require_all = j.value("require_all", base.require_all);
        if (j.contains("tie_break"))
        {
            auto s = j.at("tie_break").get<std::string>();
            if (s == "none")
                base.tie_break = voting::TieBreak::none;
            else if (s == "lowest-member-id")
                base.tie_break = voting::TieBreak::lowest_member_id;
            else
                bad("unknown tie_break " + s);
        }
        if (auto st = base.validate(); !st)
            bad("algorithm: " + st.detail());
        return base;
    }

    inline sim::Endpoint parse_target(const json &j)
    {
        auto s = j.get<std::string>();
        auto e = sim::parse_endpoint(s);
        if (!e)
            bad("bad endpoint " + s);
        return *e;
    }

    inline ScenarioFault parse_fault(const json &j)
    {
        ScenarioFault f;
        if (!j.contains("target") || !j.contains("kind"))
            bad("faults need target and kind");
        f.spec.target = parse_target(j.at("target"));
        auto kind = j.at("kind").get<std::string>();
        bool found = false;
        for (auto k : {sim::FaultKind::crash, sim::FaultKind::value_corruption, sim::FaultKind::delay,
                       sim::FaultKind::omission})
            if (sim::to_string(k) == kind)
            {
                f.spec.kind = k;
                found = true;
            }
        if (!found)
            bad("unknown fault kind " + kind);
        f.spec.at = j.value("at", Tick{0});
        if (j.contains("session"))
            f.session = j.at("session").get<std::uint64_t>();
        if (j.contains("mask"))
        {
            auto m = from_hex(j.at("mask").get<std::string>());
            if (!m || m->empty())
                bad("fault mask must be non-empty hex");
            f.spec.mask = *m;
        }
        else if (f.spec.kind == sim::FaultKind::value_corruption)
            f.spec.mask = {0xff};
        f.spec.delay = j.value("delay", Tick{0});
        f.spec.count = j.value("count", std::uint32_t{0});
        if (j.contains("peer"))
            f.spec.peer = parse_target(j.at("peer"));
        if (f.spec.at < 0 || f.spec.delay < 0)
            bad("fault times must be non-negative");
        return f;
    }

    inline std::vector<std::uint32_t> node_list(const json &j, const char *what)
    {
        std::vector<std::uint32_t> out;
        if (!j.is_array())
            bad(std::string(what) + " must be an array of node ids");
        for (const auto &x : j)
        {
            auto n = x.get<std::int64_t>();
            if (n < 1)
                bad(std::string(what) + ": node ids start at 1");
            out.push_back(static_cast<std::uint32_t>(n));
        }
        return out;
    }

    inline Scenario parse(const json &j, fs::path base_dir = {})
    {
        try
        {
            Scenario s;
            s.base_dir = std::move(base_dir);
            s.name = j.value("name", std::string("scenario"));
            s.description = j.value("description", std::string());
            s.seed = j.value("seed", s.seed);
            s.delay = j.value("delay", s.delay);
            s.jitter = j.value("jitter", s.jitter);
            s.shuffle = j.value("shuffle", s.shuffle);
            s.max_time = j.value("max_time", s.max_time);
            s.dt = j.value("dt", s.dt);
            s.get_timeout = j.value("get_timeout", s.get_timeout);
            s.session_period = j.value("session_period", s.session_period);
            s.cyclic_send_order = j.value("cyclic_send_order", false);
            if (!j.contains("farm"))
                bad("missing farm");
            s.farm = node_list(j.at("farm"), "farm");
            if (s.farm.empty())
                bad("empty farm");
            if (j.contains("spares"))
                s.spares = node_list(j.at("spares"), "spares");
            std::set<std::uint32_t> seen;
            for (auto n : s.farm)
                if (!seen.insert(n).second)
                    bad("node " + std::to_string(n) + " listed twice");
            for (auto n : s.spares)
                if (!seen.insert(n).second)
                    bad("spare node " + std::to_string(n) + " already in use");
            if (j.contains("groups"))
                for (const auto &[k, v] : j.at("groups").items())
                    s.groups[static_cast<std::uint32_t>(std::stoul(k))] = node_list(v, "group");
            if (j.contains("algorithm"))
                s.algorithm = parse_algorithm(j.at("algorithm"));
            if (j.contains("session_algorithms"))
                for (const auto &[k, v] : j.at("session_algorithms").items())
                    s.session_algorithms[std::stoull(k)] = parse_algorithm(v, s.algorithm);
            auto payload = j.value("payload", std::string("f64"));
            if (payload == "f64")
                s.payload = PayloadKind::f64;
            else if (payload == "text")
                s.payload = PayloadKind::text;
            else if (payload == "hex")
                s.payload = PayloadKind::hex;
            else
                bad("unknown payload kind " + payload);
            if (!j.contains("inputs"))
                bad("missing inputs");
            for (const auto &[k, v] : j.at("inputs").items())
            {
                auto node = static_cast<std::uint32_t>(std::stoul(k));
                if (!seen.count(node))
                    bad("inputs for node " + k + " which is neither in the farm nor a spare");
                auto &list = s.inputs[node];
                for (const auto &x : v)
                    list.push_back(x.is_null() ? std::nullopt : std::optional<Bytes>(encode_value(s.payload, x)));
                s.sessions = std::max<std::uint64_t>(s.sessions, list.size());
            }
            s.sessions = j.value("sessions", s.sessions);
            if (j.contains("faults"))
                for (const auto &f : j.at("faults"))
                    s.faults.push_back(parse_fault(f));
            if (j.contains("rl"))
                s.rl = s.base_dir / j.at("rl").get<std::string>();
            if (j.contains("assertions"))
                for (const auto &a : j.at("assertions"))
                {
                    if (!a.contains("type"))
                        bad("assertion without type");
                    s.assertions.push_back({a.at("type").get<std::string>(), a});
                }
            if (s.dt <= s.delay + s.jitter)
                bad("dt must exceed the delivery bound delay + jitter");
            if (!s.spares.empty() && !s.rl)
                bad("spares need a recovery program");
            if (s.rl && !fs::exists(*s.rl))
                bad("recovery program " + s.rl->string() + " not found");
            return s;
        }
        catch (const json::exception &e)
        {
            bad(std::string("malformed scenario: ") + e.what());
        }
    }

    inline Scenario load(const fs::path &path)
    {
        std::ifstream in(path);
        if (!in)
            bad("cannot open " + path.string());
        json j;
        try
        {
            in >> j;
        }
        catch (const json::exception &e)
        {
            bad(path.string() + ": " + e.what());
        }
        auto s = parse(j, path.parent_path());
        if (!j.contains("name"))
            s.name = path.stem().string();
        return s;
    }

    // ---- execution ---------------------------------------------------------

    struct SessionRecord
    {
        std::uint64_t session = 0;
        std::uint32_t node = 0;
        Tick started = 0;
        Tick finished = 0;
        /// VF_DONE, VF_REFUSED, VF_TIMEOUT or ERROR
        std::string status;
        bool decided = false;
        std::string reason;
        std::optional<Bytes> value;
        bool supplied_input = false;
    };

    struct Outcome
    {
        sim::RunResult run;
        std::vector<SessionRecord> sessions;
        std::vector<recovery::ActionRecord> actions;
        /// One entry per voter incarnation, in spawn order.
        std::vector<std::pair<std::uint32_t, std::shared_ptr<const voter::VoterShared>>> voters;
        std::size_t dirnet_activations = 0;

        /// Last VF_DONE minus first start among the user modules that saw
        /// session k complete.
        std::optional<Tick> latency(std::uint64_t k) const
        {
            std::optional<Tick> lo, hi;
            for (const auto &r : sessions)
                if (r.session == k && r.status == "VF_DONE")
                {
                    lo = std::min(lo.value_or(r.started), r.started);
                    hi = std::max(hi.value_or(r.finished), r.finished);
                }
            if (!lo)
                return std::nullopt;
            return *hi - *lo;
        }
    };

    class Runner
    {
    public:
        Runner(const Scenario &s, bool with_faults) : s_(s), with_faults_(with_faults), fab_(fabric_config(s))
        {
            proto::install_formatter(fab_);
        }

        Outcome run()
        {
            std::vector<FarmMember> members;
            for (std::size_t i = 0; i < s_.farm.size(); ++i)
                members.push_back({NodeId(s_.farm[i]), MemberId(static_cast<std::uint32_t>(i + 1))});

            if (s_.rl)
                start_dirnet();
            for (auto n : s_.farm)
                spawn_user(n, members, 0, 1);
            if (with_faults_)
                for (const auto &f : s_.faults)
                    if (!f.session)
                        if (auto st = fab_.inject(f.spec); !st)
                            bad(st.detail());

            out_.run = fab_.run_until_quiescent(s_.max_time);
            if (dirnet_)
            {
                out_.actions = dirnet_->log();
                out_.dirnet_activations = dirnet_->activations();
            }
            return std::move(out_);
        }

    private:
        static sim::FabricConfig fabric_config(const Scenario &s)
        {
            sim::FabricConfig c;
            c.delay = s.delay;
            c.jitter = s.jitter;
            c.shuffle = s.shuffle;
            c.seed = s.seed;
            return c;
        }

        void start_dirnet()
        {
            std::ifstream in(*s_.rl);
            std::stringstream ss;
            ss << in.rdbuf();
            rl::ParseOptions po;
            po.resolver = rl::directory_resolver(s_.rl->parent_path());
            for (auto n : s_.farm)
                po.declarations.threads.insert(n), po.declarations.nodes.insert(n);
            for (auto n : s_.spares)
                po.declarations.threads.insert(n), po.declarations.nodes.insert(n);
            po.declarations.groups.insert(1);
            for (const auto &[g, _] : s_.groups)
                po.declarations.groups.insert(g);
            rl::RCode code;
            try
            {
                code = rl::compile(rl::parse_rl(ss.str(), po));
            }
            catch (const rl::RlError &e)
            {
                bad(s_.rl->filename().string() + ": " + e.what());
            }
            recovery::RecoveryConfig rc;
            rc.code = std::move(code);
            rc.nodes = s_.farm;
            rc.spares = {s_.spares.begin(), s_.spares.end()};
            rc.groups = s_.groups;
            rc.start = [this](std::uint32_t node, std::vector<FarmMember> members, std::uint64_t epoch,
                              std::uint64_t first) { spawn_user(node, std::move(members), epoch, first); };
            dirnet_ = std::make_unique<recovery::DirNet>(fab_, std::move(rc));
            dirnet_->start();
        }

        void spawn_user(std::uint32_t node, std::vector<FarmMember> members, std::uint64_t epoch,
                        std::uint64_t first_session)
        {
            fab_.spawn(
                sim::user_at(node),
                [this, node, members, epoch, first_session](sim::ProcessContext ctx) {
                    return user(ctx, node, members, epoch, first_session);
                },
                "user");
        }

        std::optional<Bytes> input_of(std::uint32_t node, std::uint64_t k) const
        {
            auto it = s_.inputs.find(node);
            if (it == s_.inputs.end() || k == 0 || k > it->second.size())
                return std::nullopt;
            return it->second[k - 1];
        }

        void arm_session_faults(std::uint64_t k)
        {
            if (!with_faults_ || !armed_.insert(k).second)
                return;
            for (const auto &f : s_.faults)
                if (f.session == k)
                {
                    auto spec = f.spec;
                    spec.at = fab_.now();
                    if (auto st = fab_.inject(spec); !st)
                        bad(st.detail());
                }
        }

        sim::Task<void> user(sim::ProcessContext ctx, std::uint32_t node, std::vector<FarmMember> members,
                             std::uint64_t epoch, std::uint64_t first_session)
        {
            const bool numeric = s_.payload == PayloadKind::f64;
            auto h = client::FarmHandle::open(numeric ? MetricFn(voting::euclidean_metric) : MetricFn{});
            for (const auto &m : members)
                (void)h.add(m.node, m.ident);
            client::RunOptions o;
            o.dt = s_.dt;
            o.algorithm = s_.algorithm;
            if (dirnet_)
                o.dirnet = dirnet_->endpoint();
            o.epoch = epoch;
            o.first_session = first_session;
            o.cyclic_send_order = s_.cyclic_send_order;
            o.registry = &registry_;
            if (auto st = h.run(ctx, o); !st)
            {
                ctx.trace("error", "-", "run: " + st.detail());
                co_return;
            }
            out_.voters.emplace_back(node, h.voter_state());
            const Tick timeout = s_.effective_get_timeout();

            for (auto k = first_session; k <= s_.sessions; ++k)
            {
                if (s_.session_period > 0)
                    if (auto at = static_cast<Tick>(k - 1) * s_.session_period; at > ctx.now())
                        co_await ctx.sleep(at - ctx.now());
                arm_session_faults(k);
                SessionRecord rec;
                rec.session = k;
                rec.node = node;
                rec.started = ctx.now();
                if (auto v = input_of(node, k))
                {
                    proto::Control extra;
                    if (auto it = s_.session_algorithms.find(k); it != s_.session_algorithms.end())
                    {
                        extra.algorithm = it->second.kind;
                        extra.epsilon = it->second.epsilon;
                        extra.tie_break = it->second.tie_break;
                        extra.require_all = it->second.require_all;
                        extra.scaling = it->second.scaling_factor;
                    }
                    rec.supplied_input = true;
                    if (auto st = co_await h.input(ctx, k, *v, extra); !st)
                    {
                        rec.status = "ERROR";
                        rec.reason = std::string(to_string(st.code()));
                        rec.finished = ctx.now();
                        out_.sessions.push_back(rec);
                        h.abandon(ctx);
                        co_return;
                    }
                }
                auto r = co_await h.get(ctx, timeout);
                rec.finished = ctx.now();
                if (r.kind == VfStatusKind::done)
                {
                    rec.status = "VF_DONE";
                    if (const auto &vote = h.last_vote(); vote && vote->session == k)
                    {
                        rec.decided = vote->decided;
                        rec.reason = vote->reason;
                        if (vote->decided)
                            rec.value = vote->value;
                    }
                    out_.sessions.push_back(rec);
                    continue;
                }
                rec.status = r.kind == VfStatusKind::refused ? "VF_REFUSED" : "VF_TIMEOUT";
                rec.reason = r.kind == VfStatusKind::refused ? h.last_refusal() : std::string();
                out_.sessions.push_back(rec);
                h.abandon(ctx);
                co_return;
            }
            for (int attempt = 0; attempt < 3; ++attempt)
            {
                auto st = co_await h.close(ctx, timeout);
                if (st || st.code() != Errc::close_refused)
                    break;
                co_await ctx.sleep(s_.dt);
            }
        }

        const Scenario &s_;
        bool with_faults_;
        sim::Fabric fab_;
        client::FarmRegistry registry_;
        std::unique_ptr<recovery::DirNet> dirnet_;
        std::set<std::uint64_t> armed_;
        Outcome out_;
    };

    inline Outcome execute(const Scenario &s, bool with_faults = true) { return Runner(s, with_faults).run(); }

    // ---- assertions --------------------------------------------------------

    struct Check
    {
        std::string name;
        bool pass = false;
        std::string detail;
    };

    namespace detail
    {
        inline bool compare(const json &a, std::size_t n, std::string &rel)
        {
            if (a.contains("equals"))
            {
                rel = "== " + a.at("equals").dump();
                return n == a.at("equals").get<std::size_t>();
            }
            bool ok = true;
            rel.clear();
            if (a.contains("min"))
            {
                rel += ">= " + a.at("min").dump() + " ";
                ok = ok && n >= a.at("min").get<std::size_t>();
            }
            if (a.contains("max"))
            {
                rel += "<= " + a.at("max").dump();
                ok = ok && n <= a.at("max").get<std::size_t>();
            }
            if (rel.empty())
                bad("count assertions need equals, min or max");
            return ok;
        }

        inline std::vector<const SessionRecord *> records(const Outcome &o, std::uint64_t k,
                                                          const std::optional<std::vector<std::uint32_t>> &nodes)
        {
            std::vector<const SessionRecord *> out;
            for (const auto &r : o.sessions)
                if (r.session == k &&
                    (!nodes || std::find(nodes->begin(), nodes->end(), r.node) != nodes->end()))
                    out.push_back(&r);
            return out;
        }
    } // namespace detail

    inline Check check_one(const Scenario &s, const Outcome &o, const Assertion &a)
    {
        const auto &j = a.args;
        Check c;
        c.name = a.type;
        std::optional<std::vector<std::uint32_t>> nodes;
        if (j.contains("nodes"))
            nodes = node_list(j.at("nodes"), "nodes");

        if (a.type == "count")
        {
            auto ev = j.at("event").get<std::string>();
            auto prefix = j.value("prefix", std::string());
            auto n = o.run.trace.count(ev, prefix);
            std::string rel;
            c.pass = detail::compare(j, n, rel);
            c.name += " " + ev + (prefix.empty() ? "" : " '" + prefix + "'");
            c.detail = std::to_string(n) + " " + rel;
        }
        else if (a.type == "output")
        {
            const auto k = j.at("session").get<std::uint64_t>();
            const auto want = encode_value(s.payload, j.at("value"));
            auto rs = detail::records(o, k, nodes);
            c.name += " s=" + std::to_string(k);
            c.pass = !rs.empty() && (!nodes || rs.size() == nodes->size());
            std::string seen;
            for (auto *r : rs)
            {
                const bool ok = r->status == "VF_DONE" && r->decided && r->value == want;
                c.pass = c.pass && ok;
                seen += " " + std::to_string(r->node) + ":" +
                        (r->value ? render_value(s.payload, *r->value) : r->status + (r->reason.empty() ? "" : "/" + r->reason));
            }
            c.detail = "want " + render_value(s.payload, want) + ", got" + (seen.empty() ? " nothing" : seen);
        }
        else if (a.type == "decided")
        {
            const auto k = j.at("session").get<std::uint64_t>();
            const bool want = j.value("equals", true);
            auto rs = detail::records(o, k, nodes);
            c.name += " s=" + std::to_string(k);
            c.pass = !rs.empty();
            std::string seen;
            for (auto *r : rs)
            {
                c.pass = c.pass && r->status == "VF_DONE" && r->decided == want;
                seen += " " + std::to_string(r->node) + ":" + (r->decided ? "yes" : "no");
            }
            c.detail = std::string("want ") + (want ? "decided" : "undecided") + ", got" + seen;
        }
        else if (a.type == "completed")
        {
            const auto k = j.at("session").get<std::uint64_t>();
            std::size_t n = 0;
            for (auto *r : detail::records(o, k, nodes))
                n += r->status == "VF_DONE" && r->decided;
            std::string rel;
            c.pass = detail::compare(j, n, rel);
            c.name += " s=" + std::to_string(k);
            c.detail = std::to_string(n) + " user modules got a decided VF_DONE, " + rel;
        }
        else if (a.type == "latency_delta")
        {
            const auto k = j.value("session", std::uint64_t{1});
            const auto m = j.at("timeouts").get<std::int64_t>();
            auto base = execute(s, false);
            auto l0 = base.latency(k);
            auto l = o.latency(k);
            c.name += " s=" + std::to_string(k);
            if (!l0 || !l)
            {
                c.detail = "session did not complete";
            }
            else
            {
                const Tick delta = *l - *l0;
                const Tick dev = delta - m * s.dt;
                c.pass = std::abs(dev) <= *l0;
                c.detail = "delta=" + std::to_string(delta) + " expected " + std::to_string(m) + "*dt=" +
                           std::to_string(m * s.dt) + " deviation=" + std::to_string(dev) +
                           " quantum(fault-free latency)=" + std::to_string(*l0);
            }
        }
        else if (a.type == "actions")
        {
            std::vector<std::string> got;
            for (const auto &r : o.actions)
                got.push_back(r.to_string());
            std::string gs;
            for (const auto &g : got)
                gs += (gs.empty() ? "" : ", ") + g;
            if (j.contains("equals"))
                c.pass = got == j.at("equals").get<std::vector<std::string>>();
            else if (j.contains("contains"))
            {
                c.pass = true;
                for (const auto &w : j.at("contains").get<std::vector<std::string>>())
                    c.pass = c.pass && std::find(got.begin(), got.end(), w) != got.end();
            }
            else
                bad("actions assertions need equals or contains");
            c.detail = "[" + gs + "]";
        }
        else if (a.type == "quiescent")
        {
            c.pass = o.run.status.is_ok();
            c.detail = o.run.status.is_ok() ? "t=" + std::to_string(o.run.end_time) : o.run.status.detail();
        }
        else if (a.type == "no_errors")
        {
            auto n = o.run.trace.count("error");
            c.pass = n == 0;
            c.detail = std::to_string(n) + " error events";
        }
        else if (a.type == "phases_legal")
        {
            c.pass = true;
            std::size_t n = 0;
            for (const auto &[node, sh] : o.voters)
            {
                std::vector<VoterPhase> word;
                for (const auto &[t, p] : sh->phases)
                    word.push_back(p);
                if (!is_legal_phase_word(word))
                {
                    c.pass = false;
                    c.detail += "voter@" + std::to_string(node) + " ";
                }
                ++n;
            }
            c.detail += std::to_string(n) + " voter incarnations checked";
        }
        else
            bad("unknown assertion type " + a.type);
        return c;
    }

    inline std::vector<Check> evaluate(const Scenario &s, const Outcome &o)
    {
        std::vector<Check> out;
        for (const auto &a : s.assertions)
            out.push_back(check_one(s, o, a));
        return out;
    }

    // ---- artifacts ---------------------------------------------------------

    inline std::string sessions_csv(const Scenario &s, const Outcome &o)
    {
        std::string out = "session,node,started,finished,status,decided,reason,value\n";
        for (const auto &r : o.sessions)
            out += std::to_string(r.session) + "," + std::to_string(r.node) + "," + std::to_string(r.started) + "," +
                   std::to_string(r.finished) + "," + r.status + "," + (r.decided ? "1" : "0") + "," + r.reason + "," +
                   (r.value ? render_value(s.payload, *r.value) : "") + "\n";
        return out;
    }

    inline std::string actions_text(const Outcome &o)
    {
        std::string out;
        for (const auto &a : o.actions)
            out += "t=" + std::to_string(a.t) + " " + a.to_string() + "\n";
        return out;
    }

    inline json summary(const Scenario &s, const Outcome &o, const std::vector<Check> &checks)
    {
        json j;
        j["name"] = s.name;
        j["end_time"] = o.run.end_time;
        j["run_status"] = std::string(to_string(o.run.status.code()));
        j["events"] = o.run.trace.size();
        j["actions"] = json::array();
        for (const auto &a : o.actions)
            j["actions"].push_back(a.to_string());
        j["checks"] = json::array();
        bool pass = true;
        for (const auto &c : checks)
        {
            j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
            pass = pass && c.pass;
        }
        j["pass"] = pass;
        return j;
    }

    inline void write_file(const fs::path &p, const std::string &text)
    {
        std::ofstream out(p, std::ios::binary);
        if (!out)
            bad("cannot write " + p.string());
        out << text;
    }

    inline void write_artifacts(const fs::path &dir, const Scenario &s, const Outcome &o,
                                const std::vector<Check> &checks)
    {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec)
            bad("cannot create " + dir.string() + ": " + ec.message());
        write_file(dir / "trace.txt", o.run.trace.serialize());
        write_file(dir / "sessions.csv", sessions_csv(s, o));
        write_file(dir / "actions.txt", actions_text(o));
        write_file(dir / "summary.json", summary(s, o, checks).dump(2) + "\n");
    }

    /// 0 when every assertion holds, 1 on an assertion failure, 2 when the
    /// scenario cannot be loaded or run.
    inline int run_file(const fs::path &path, const std::optional<fs::path> &artifact_root, std::ostream &log)
    {
        try
        {
            auto s = load(path);
            auto o = execute(s);
            auto checks = evaluate(s, o);
            if (artifact_root)
                write_artifacts(*artifact_root / s.name, s, o, checks);
            bool pass = true;
            for (const auto &c : checks)
            {
                log << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
                pass = pass && c.pass;
            }
            log << s.name << ": " << checks.size() << " assertion(s), " << (pass ? "all passed" : "FAILED")
                << ", t=" << o.run.end_time << "\n";
            return pass ? 0 : 1;
        }
        catch (const Error &e)
        {
            log << "error: " << e.what() << "\n";
            return 2;
        }
    }
} // namespace vf::scenario
