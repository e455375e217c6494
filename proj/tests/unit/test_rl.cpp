#include "support/rl_corpus.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vf;
using namespace vf::rl;

namespace
{
    std::filesystem::path rl_dir() { return std::filesystem::path(VF_SOURCE_DIR) / "scenarios" / "rl"; }

    Program load(const std::string &file)
    {
        std::ifstream in(rl_dir() / file);
        std::stringstream ss;
        ss << in.rdbuf();
        ParseOptions o;
        o.resolver = directory_resolver(rl_dir());
        return parse_rl(ss.str(), o);
    }

    RlError parse_error(std::string_view src, ParseOptions o = {})
    {
        try
        {
            (void)parse_rl(src, std::move(o));
        }
        catch (const RlError &e)
        {
            return e;
        }
        ADD_FAILURE() << "parsed: " << src;
        return RlError(Errc::ok, 0, 0, "");
    }

    std::vector<std::string> run(const Program &p, const DirDatabase &db)
    {
        std::vector<std::string> out;
        for (const auto &a : rint_step(compile(p), db))
            out.push_back(a.to_string());
        return out;
    }
} // namespace

TEST(RlParse, SpareProgramHasOneRuleWithThreeActions)
{
    auto p = load("replace_with_spare.rl");
    ASSERT_EQ(p.rules.size(), 1u);
    EXPECT_EQ(p.includes, (std::vector<std::string>{"vf_phases.h"}));
    const auto &r = p.rules[0];
    EXPECT_EQ(r.cond, Cond::disj(Cond::faulty(Entity::thread(1)),
                                 Cond::phase_eq(Entity::thread(1), 4, "VFP_FAILURE")));
    ASSERT_EQ(r.actions.size(), 3u);
    EXPECT_EQ(r.actions[0].kind, ActionKind::kill);
    EXPECT_EQ(r.actions[1].kind, ActionKind::start);
    EXPECT_EQ(r.actions[2].targets, (std::vector<Entity>{Entity::thread(2), Entity::thread(3)}));
}

TEST(RlParse, IsolationProgramUsesGroupSelectors)
{
    auto p = load("isolate_faulty.rl");
    ASSERT_EQ(p.rules.size(), 1u);
    ASSERT_EQ(p.rules[0].actions.size(), 2u);
    EXPECT_EQ(p.rules[0].actions[0].targets, (std::vector<Entity>{Entity::fulfilling()}));
    EXPECT_EQ(p.rules[0].actions[1].targets, (std::vector<Entity>{Entity::complement()}));
}

TEST(RlParse, PrecedenceIsNotThenAndThenOr)
{
    auto p = parse_rl("IF [ -FAULTY THREAD1 OR NOT -FAULTY THREAD2 AND -FAULTY THREAD3 ] THEN KILL THREAD1 FI");
    auto a = Cond::faulty(Entity::thread(1));
    auto b = Cond::negate(Cond::faulty(Entity::thread(2)));
    auto c = Cond::faulty(Entity::thread(3));
    EXPECT_EQ(p.rules[0].cond, Cond::disj(a, Cond::conj(b, c)));
}

TEST(RlParse, ErrorsCarryLineAndColumn)
{
    auto e = parse_error("IF [ -FAULTY THREAD1 ]\nTHEN KILL\nFI");
    EXPECT_EQ(e.code(), Errc::unknown_entity);
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.col(), 1u);

    e = parse_error("IF [ -PHASE THREAD1 == {VFP_FAILURE} ] THEN KILL THREAD1 FI");
    EXPECT_EQ(e.code(), Errc::undefined_name);
    EXPECT_EQ(e.line(), 1u);
    EXPECT_EQ(e.col(), 25u);

    e = parse_error("INCLUDE \"missing.h\"\nDEFAULT PURGE FI");
    EXPECT_EQ(e.code(), Errc::undefined_name);
    EXPECT_EQ(e.line(), 1u);
}

TEST(RlParse, RejectsMalformedPrograms)
{
    for (std::string_view src : {
             "",
             "// only a comment",
             "IF -FAULTY THREAD1 THEN KILL THREAD1 FI",
             "IF [ -FAULTY THREAD1 ] KILL THREAD1 FI",
             "IF [ -FAULTY THREAD1 ] THEN KILL THREAD1",
             "IF [ -FAULTY THREAD1 ] THEN KILL THREAD1 START THREAD2 FI",
             "IF [ -FAULTY THREAD1 ] THEN FI",
             "IF [ -FAULTY ] THEN KILL THREAD1 FI",
             "IF [ -PHASE THREAD1 = 3 ] THEN KILL THREAD1 FI",
             "IF [ (-FAULTY THREAD1 ] THEN KILL THREAD1 FI",
             "DEFAULT PURGE FI DEFAULT PURGE FI",
             "if [ -FAULTY THREAD1 ] then KILL THREAD1 fi",
             "IF [ -FAULTY THREAD1 ] THEN KILL THREAD1 FI $",
             "INCLUDE \"unterminated\nDEFAULT PURGE FI",
         })
        EXPECT_EQ(parse_error(src).code(), Errc::syntax_error) << src;
}

TEST(RlParse, RejectsEntitiesInTheWrongPlace)
{
    for (std::string_view src : {
             "IF [ -FAULTY THREAD@ ] THEN KILL THREAD1 FI",
             "IF [ -FAULTY THREAD1 ] THEN KILL THREAD@ FI",
             "IF [ -FAULTY GROUP1 AND -FAULTY GROUP2 ] THEN KILL THREAD~ FI",
             "IF [ -FAULTY THREAD1 ] THEN REBOOT THREAD1 FI",
             "IF [ -FAULTY THREAD1 ] THEN KILL NODE1 FI",
             "IF [ -FAULTY NODE1 ] THEN REBOOT NODE1 FI",
             "IF [ -FAULTY THREAD1 ] THEN WARN NODE2 FI",
             "IF [ -FAULTY PROCESS1 ] THEN KILL THREAD1 FI",
         })
        EXPECT_EQ(parse_error(src).code(), Errc::unknown_entity) << src;

    ParseOptions o;
    o.declarations.threads = {1, 2, 3};
    EXPECT_EQ(parse_error("IF [ -FAULTY THREAD7 ] THEN KILL THREAD1 FI", o).code(), Errc::unknown_entity);
    EXPECT_NO_THROW(parse_rl("IF [ -FAULTY THREAD3 ] THEN KILL THREAD1 FI", o));
}

TEST(RlParse, CallerDefinitionsResolveNames)
{
    ParseOptions o;
    o.definitions["LIMIT"] = 7;
    auto p = parse_rl("IF [ -PHASE THREAD2 == {LIMIT} ] THEN RESTART THREAD2 FI", o);
    EXPECT_EQ(p.rules[0].cond, Cond::phase_eq(Entity::thread(2), 7, "LIMIT"));
}

TEST(RCode, CorpusRoundTripsThroughBytecodeAndSource)
{
    const auto corpus = vf::testing::rl_corpus();
    ASSERT_GE(corpus.size(), 30u);
    for (const auto &src : corpus)
    {
        ParseOptions o;
        o.resolver = directory_resolver(rl_dir());
        const auto p = parse_rl(src, o);
        const auto rc = compile(p);
        ASSERT_GE(rc.bytes.size(), 6u);
        EXPECT_EQ(std::string(rc.bytes.begin(), rc.bytes.begin() + 4), rcode_magic);
        EXPECT_EQ(decode(rc), p) << src;
        EXPECT_EQ(compile(decode(rc)), rc) << src;
        EXPECT_EQ(parse_rl(to_source(p), o), p) << to_source(p);
        EXPECT_NO_THROW((void)disassemble(rc));
    }
}

TEST(RCode, DecodeRejectsDamagedCode)
{
    auto rc = compile(load("replace_with_spare.rl"));
    auto bad = rc;
    bad.bytes[0] ^= 1;
    EXPECT_THROW(decode(bad), Error);
    bad = rc;
    bad.bytes.pop_back();
    EXPECT_THROW(decode(bad), Error);
    bad = rc;
    bad.bytes.push_back(0x06);
    EXPECT_THROW(decode(bad), Error);
    for (std::size_t cut = 0; cut < rc.bytes.size(); ++cut)
    {
        RCode t{Bytes(rc.bytes.begin(), rc.bytes.begin() + static_cast<std::ptrdiff_t>(cut))};
        EXPECT_THROW(decode(t), Error) << cut;
    }
}

TEST(RCode, DisassemblyListsEveryOpcode)
{
    auto text = disassemble(compile(load("replace_with_spare.rl")));
    for (auto needle : {"INCLUDE #0", "RULE", "FAULTY THREAD1", "PHASE_EQ THREAD1 4 {VFP_FAILURE}", "OR", "THEN",
                        "KILL THREAD1", "START THREAD4", "WARN THREAD2, THREAD3", "FI", "END"})
        EXPECT_NE(text.find(needle), std::string::npos) << needle << "\n" << text;
}

TEST(Rint, SpareProgramFiresOnFaultOrFailurePhase)
{
    auto p = load("replace_with_spare.rl");
    DirDatabase db;
    EXPECT_TRUE(run(p, db).empty());
    db.report_phase(1, VoterPhase::voting, 10);
    EXPECT_TRUE(run(p, db).empty());
    EXPECT_TRUE(db.report_phase(1, VoterPhase::failure, 11));
    const std::vector<std::string> expected{"KILL THREAD1", "START THREAD4", "WARN THREAD2", "WARN THREAD3"};
    EXPECT_EQ(run(p, db), expected);

    DirDatabase faulty;
    EXPECT_TRUE(faulty.record_fault(1, "crash", 5));
    EXPECT_EQ(run(p, faulty), expected);
    faulty.retire(1);
    EXPECT_TRUE(run(p, faulty).empty()) << "a killed thread satisfies no predicate";
    EXPECT_FALSE(faulty.record_fault(1, "crash", 6));
}

TEST(Rint, IsolationProgramBindsFulfillingAndComplement)
{
    auto p = load("isolate_faulty.rl");
    DirDatabase db;
    db.set_group(1, {3, 1, 2});
    EXPECT_TRUE(run(p, db).empty());
    db.record_fault(2, "crash", 4);
    EXPECT_EQ(run(p, db), (std::vector<std::string>{"KILL THREAD2", "WARN THREAD1", "WARN THREAD3"}));
    db.retire(2);
    EXPECT_TRUE(run(p, db).empty());
    db.report_phase(3, VoterPhase::failure, 9);
    EXPECT_EQ(run(p, db), (std::vector<std::string>{"KILL THREAD3", "WARN THREAD1"}));
}

TEST(Rint, DefaultRunsOnlyWhenNoRuleFires)
{
    auto p = parse_rl("IF [ -FAULTY THREAD1 ] THEN KILL THREAD1 FI\n"
                      "IF [ -FAULTY THREAD2 ] THEN KILL THREAD2 FI\n"
                      "DEFAULT PURGE FI");
    DirDatabase db;
    EXPECT_EQ(run(p, db), (std::vector<std::string>{"PURGE"}));
    db.record_fault(1, "omission", 1);
    db.record_fault(2, "omission", 1);
    EXPECT_EQ(run(p, db), (std::vector<std::string>{"KILL THREAD1", "KILL THREAD2"}));
}

TEST(Rint, GroupTargetsExpandToLiveMembers)
{
    auto p = parse_rl("IF [ -FAULTY THREAD9 ] THEN WARN GROUP2 AND PURGE THREAD9 AND REBOOT NODE3 FI");
    DirDatabase db;
    db.set_group(2, {4, 5});
    db.add_to_group(2, 6);
    db.retire(5);
    db.record_fault(9, "value", 2);
    EXPECT_EQ(run(p, db),
              (std::vector<std::string>{"WARN THREAD4", "WARN THREAD6", "PURGE THREAD9", "REBOOT NODE3"}));
}

TEST(Rint, StepDoesNotMutateTheDatabase)
{
    auto rc = compile(load("replace_with_spare.rl"));
    DirDatabase db;
    db.record_fault(1, "crash", 1);
    auto first = rint_step(rc, db);
    EXPECT_EQ(rint_step(rc, db), first);
    EXPECT_EQ(db.faults().size(), 1u);
}

TEST(Rint, PurgeAndReinstateClearFaults)
{
    DirDatabase db;
    db.record_fault(1, "crash", 1);
    db.record_fault(2, "crash", 1);
    db.purge(1);
    EXPECT_FALSE(db.faulty(1));
    EXPECT_TRUE(db.faulty(2));
    db.retire(2);
    db.reinstate(2);
    EXPECT_FALSE(db.faulty(2));
    EXPECT_FALSE(db.retired(2));
    db.record_fault(3, "crash", 1);
    db.purge();
    EXPECT_TRUE(db.faults().empty());
}

namespace
{
    Cond random_cond(std::mt19937_64 &rng, int depth)
    {
        const auto pick = depth <= 0 ? rng() % 2 : rng() % 5;
        const auto thread = Entity::thread(1 + static_cast<std::uint32_t>(rng() % 4));
        switch (pick)
        {
        case 0: return Cond::faulty(thread);
        case 1: return Cond::phase_eq(thread, static_cast<std::int64_t>(rng() % 5));
        case 2: return Cond::negate(random_cond(rng, depth - 1));
        case 3: return Cond::conj(random_cond(rng, depth - 1), random_cond(rng, depth - 1));
        default: return Cond::disj(random_cond(rng, depth - 1), random_cond(rng, depth - 1));
        }
    }
} // namespace

TEST(RlSource, RandomConditionTreesSurvivePrintAndParse)
{
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 2000; ++trial)
    {
        Program p;
        p.rules.push_back(Rule{random_cond(rng, 4), {Action{ActionKind::purge, {}}}});
        EXPECT_EQ(parse_rl(to_source(p)), p) << to_source(p);
        EXPECT_EQ(decode(compile(p)), p);
    }
}
