#pragma once

// Recovery Language parser.
//
//   program   := { INCLUDE string | rule | default }
//   rule      := IF [ cond ] THEN actions FI
//   default   := DEFAULT actions FI
//   cond      := conj { OR conj }
//   conj      := unary { AND unary }
//   unary     := NOT unary | ( cond ) | -FAULTY entity | -PHASE entity == value
//   value     := { NAME } | integer
//   actions   := action { (AND | newline) action }
//   action    := KILL e | START e | RESTART e | WARN e {, e} | REBOOT e | SHUTDOWN e | PURGE [e]
//   entity    := THREADn | GROUPn | NODEn | THREAD@ | THREAD~
//
// Keywords are upper case and case-sensitive. Comments are // and /* */.

#include "ast.hpp"

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace vf::rl
{
    class RlError : public Error
    {
    public:
        RlError(Errc code, std::size_t line, std::size_t col, const std::string &what)
            : Error(code, std::to_string(line) + ":" + std::to_string(col) + ": " + what), line_(line), col_(col)
        {
        }

        std::size_t line() const noexcept { return line_; }
        std::size_t col() const noexcept { return col_; }

    private:
        std::size_t line_;
        std::size_t col_;
    };

    inline constexpr std::string_view vf_phases_h = "/* voter phase identifiers */\n"
                                                    "#define VFP_INIT 0\n"
                                                    "#define VFP_BROADCAST 1\n"
                                                    "#define VFP_VOTING 2\n"
                                                    "#define VFP_SUCCESS 3\n"
                                                    "#define VFP_FAILURE 4\n";

    using Definitions = std::map<std::string, std::int64_t>;
    using IncludeResolver = std::function<std::optional<std::string>(const std::string &)>;

    /// Entities a program may name. Empty sets are not checked.
    struct Declarations
    {
        std::set<std::uint32_t> threads;
        std::set<std::uint32_t> groups;
        std::set<std::uint32_t> nodes;
    };

    struct ParseOptions
    {
        Definitions definitions;
        /// Looks up INCLUDE targets; vf_phases.h is always available.
        IncludeResolver resolver;
        Declarations declarations;
    };

    /// Resolver reading include files relative to `dir`.
    inline IncludeResolver directory_resolver(std::filesystem::path dir)
    {
        return [dir = std::move(dir)](const std::string &name) -> std::optional<std::string> {
            std::ifstream in(dir / name);
            if (!in)
                return std::nullopt;
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
    }

    namespace detail
    {
        inline std::string strip_comments(std::string_view src)
        {
            std::string out;
            out.reserve(src.size());
            for (std::size_t i = 0; i < src.size();)
            {
                if (src.compare(i, 2, "//") == 0)
                {
                    while (i < src.size() && src[i] != '\n')
                        ++i;
                }
                else if (src.compare(i, 2, "/*") == 0)
                {
                    auto end = src.find("*/", i + 2);
                    auto stop = end == std::string_view::npos ? src.size() : end + 2;
                    for (; i < stop; ++i)
                        out.push_back(src[i] == '\n' ? '\n' : ' '); // keep positions
                }
                else
                    out.push_back(src[i++]);
            }
            return out;
        }
    } // namespace detail

    /// Reads `#define NAME integer` lines; blank and comment lines are allowed.
    inline void load_definitions(std::string_view text, Definitions &defs)
    {
        auto clean = detail::strip_comments(text);
        std::istringstream in(clean);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line))
        {
            ++lineno;
            std::istringstream ls(line);
            std::string word, name, value, extra;
            if (!(ls >> word))
                continue;
            if (word != "#define" || !(ls >> name >> value) || (ls >> extra))
                throw RlError(Errc::syntax_error, lineno, 1, "expected '#define NAME integer'");
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
            if (ec != std::errc() || p != value.data() + value.size())
                throw RlError(Errc::syntax_error, lineno, 1, "definition of " + name + " is not an integer");
            defs[name] = v;
        }
    }

    class Parser
    {
    public:
        Parser(std::string_view source, ParseOptions opts) : src_(detail::strip_comments(source)), opts_(std::move(opts))
        {
            lex();
        }

        Program parse()
        {
            Program p;
            while (!at_end())
            {
                const auto &t = peek();
                if (is_word(t, "INCLUDE"))
                {
                    next();
                    auto s = expect(Tok::string, "include file name");
                    include(s);
                    p.includes.push_back(s.text);
                }
                else if (is_word(t, "IF"))
                    p.rules.push_back(rule());
                else if (is_word(t, "DEFAULT"))
                {
                    auto d = next();
                    if (p.default_actions)
                        fail(Errc::syntax_error, d, "second DEFAULT block");
                    p.default_actions = actions(std::nullopt);
                    expect_word("FI");
                }
                else
                    fail(Errc::syntax_error, t, "expected INCLUDE, IF or DEFAULT, found '" + t.text + "'");
            }
            if (p.rules.empty() && !p.default_actions)
                throw RlError(Errc::syntax_error, 1, 1, "program has no rules and no default action");
            return p;
        }

    private:
        enum class Tok
        {
            word,
            string,
            integer,
            punct,
            end,
        };

        struct Token
        {
            Tok kind;
            std::string text;
            std::size_t line;
            std::size_t col;
        };

        void lex()
        {
            std::size_t line = 1, col = 1;
            auto adv = [&](std::size_t &i) {
                if (src_[i] == '\n')
                {
                    ++line;
                    col = 1;
                }
                else
                    ++col;
                ++i;
            };
            for (std::size_t i = 0; i < src_.size();)
            {
                char c = src_[i];
                if (std::isspace(static_cast<unsigned char>(c)))
                {
                    adv(i);
                    continue;
                }
                Token t{Tok::punct, {}, line, col};
                if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
                {
                    t.kind = Tok::word;
                    while (i < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i])) || src_[i] == '_'))
                    {
                        t.text.push_back(src_[i]);
                        adv(i);
                    }
                    if (t.text == "THREAD" && i < src_.size() && (src_[i] == '@' || src_[i] == '~'))
                    {
                        t.text.push_back(src_[i]);
                        adv(i);
                    }
                }
                else if (std::isdigit(static_cast<unsigned char>(c)))
                {
                    t.kind = Tok::integer;
                    while (i < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i])))
                    {
                        t.text.push_back(src_[i]);
                        adv(i);
                    }
                }
                else if (c == '"')
                {
                    t.kind = Tok::string;
                    adv(i);
                    while (i < src_.size() && src_[i] != '"' && src_[i] != '\n')
                    {
                        t.text.push_back(src_[i]);
                        adv(i);
                    }
                    if (i >= src_.size() || src_[i] != '"')
                        throw RlError(Errc::syntax_error, t.line, t.col, "unterminated string");
                    adv(i);
                }
                else if (c == '=' && i + 1 < src_.size() && src_[i + 1] == '=')
                {
                    t.text = "==";
                    adv(i);
                    adv(i);
                }
                else if (c == '-' && i + 1 < src_.size() && std::isalpha(static_cast<unsigned char>(src_[i + 1])))
                {
                    t.kind = Tok::word;
                    t.text.push_back('-');
                    adv(i);
                    while (i < src_.size() && std::isalnum(static_cast<unsigned char>(src_[i])))
                    {
                        t.text.push_back(src_[i]);
                        adv(i);
                    }
                }
                else if (std::string_view("[](){},").find(c) != std::string_view::npos)
                {
                    t.text = std::string(1, c);
                    adv(i);
                }
                else
                    throw RlError(Errc::syntax_error, line, col, std::string("unexpected character '") + c + "'");
                toks_.push_back(std::move(t));
            }
            toks_.push_back(Token{Tok::end, "end of input", line, col});
        }

        bool at_end() const { return toks_[pos_].kind == Tok::end; }
        const Token &peek() const { return toks_[pos_]; }
        Token next()
        {
            auto t = toks_[pos_];
            if (t.kind != Tok::end)
                ++pos_;
            return t;
        }
        const Token &prev() const { return toks_[pos_ - 1]; }

        static bool is_word(const Token &t, std::string_view w) { return t.kind == Tok::word && t.text == w; }
        static bool is_punct(const Token &t, std::string_view p) { return t.kind == Tok::punct && t.text == p; }

        [[noreturn]] static void fail(Errc code, const Token &t, const std::string &what)
        {
            throw RlError(code, t.line, t.col, what);
        }

        Token expect(Tok kind, std::string_view what)
        {
            if (peek().kind != kind)
                fail(Errc::syntax_error, peek(), "expected " + std::string(what) + ", found '" + peek().text + "'");
            return next();
        }

        void expect_word(std::string_view w)
        {
            if (!is_word(peek(), w))
                fail(Errc::syntax_error, peek(), "expected " + std::string(w) + ", found '" + peek().text + "'");
            next();
        }

        void expect_punct(std::string_view p)
        {
            if (!is_punct(peek(), p))
                fail(Errc::syntax_error, peek(), "expected '" + std::string(p) + "', found '" + peek().text + "'");
            next();
        }

        void include(const Token &t)
        {
            std::optional<std::string> text;
            if (t.text == "vf_phases.h")
                text = std::string(vf_phases_h);
            if (opts_.resolver)
                if (auto found = opts_.resolver(t.text))
                    text = std::move(found);
            if (!text)
                fail(Errc::undefined_name, t, "cannot include \"" + t.text + "\"");
            try
            {
                load_definitions(*text, opts_.definitions);
            }
            catch (const RlError &e)
            {
                fail(e.code(), t, t.text + ":" + e.what());
            }
        }

        Rule rule()
        {
            next(); // IF
            expect_punct("[");
            auto c = cond();
            expect_punct("]");
            expect_word("THEN");
            auto group = subject_group(c);
            std::vector<Entity> subs;
            collect_subjects(c, subs);
            std::set<std::uint32_t> groups;
            for (const auto &e : subs)
                if (e.kind == EntityKind::group)
                    groups.insert(e.id);
            Rule r{std::move(c), actions(groups.size() == 1 ? group : std::nullopt)};
            expect_word("FI");
            return r;
        }

        Cond cond()
        {
            auto c = conj();
            while (is_word(peek(), "OR"))
            {
                next();
                c = Cond::disj(std::move(c), conj());
            }
            return c;
        }

        Cond conj()
        {
            auto c = unary();
            while (is_word(peek(), "AND"))
            {
                next();
                c = Cond::conj(std::move(c), unary());
            }
            return c;
        }

        Cond unary()
        {
            const auto &t = peek();
            if (is_word(t, "NOT"))
            {
                next();
                return Cond::negate(unary());
            }
            if (is_punct(t, "("))
            {
                next();
                auto c = cond();
                expect_punct(")");
                return c;
            }
            if (is_word(t, "-FAULTY"))
            {
                next();
                return Cond::faulty(subject());
            }
            if (is_word(t, "-PHASE"))
            {
                next();
                auto e = subject();
                expect_punct("==");
                if (is_punct(peek(), "{"))
                {
                    next();
                    auto name = expect(Tok::word, "definition name");
                    expect_punct("}");
                    auto it = opts_.definitions.find(name.text);
                    if (it == opts_.definitions.end())
                        fail(Errc::undefined_name, name, "{" + name.text + "} is not defined");
                    return Cond::phase_eq(e, it->second, name.text);
                }
                auto v = expect(Tok::integer, "integer or {NAME}");
                return Cond::phase_eq(e, std::stoll(v.text));
            }
            fail(Errc::syntax_error, t, "expected a condition, found '" + t.text + "'");
        }

        Entity entity_token(const Token &t)
        {
            if (t.kind != Tok::word)
                fail(Errc::syntax_error, t, "expected an entity, found '" + t.text + "'");
            if (t.text == "THREAD@")
                return Entity::fulfilling();
            if (t.text == "THREAD~")
                return Entity::complement();
            struct Prefix
            {
                std::string_view p;
                EntityKind k;
            };
            for (auto [p, k] : {Prefix{"THREAD", EntityKind::thread}, Prefix{"GROUP", EntityKind::group},
                                Prefix{"NODE", EntityKind::node}})
                if (t.text.size() > p.size() && t.text.compare(0, p.size(), p) == 0)
                {
                    auto digits = std::string_view(t.text).substr(p.size());
                    std::uint32_t n = 0;
                    auto [q, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
                    if (ec != std::errc() || q != digits.data() + digits.size() || n == 0)
                        break;
                    Entity e{k, n};
                    check_declared(t, e);
                    return e;
                }
            fail(Errc::unknown_entity, t, "unknown entity '" + t.text + "'");
        }

        void check_declared(const Token &t, const Entity &e) const
        {
            const auto &d = opts_.declarations;
            const std::set<std::uint32_t> *set = nullptr;
            switch (e.kind)
            {
            case EntityKind::thread: set = &d.threads; break;
            case EntityKind::group: set = &d.groups; break;
            case EntityKind::node: set = &d.nodes; break;
            case EntityKind::selector: return;
            }
            if (!set->empty() && !set->count(e.id))
                fail(Errc::unknown_entity, t, e.to_string() + " is not declared");
        }

        Entity subject()
        {
            auto t = next();
            auto e = entity_token(t);
            if (e.is_selector() || e.kind == EntityKind::node)
                fail(Errc::unknown_entity, t, e.to_string() + " cannot be a condition subject");
            return e;
        }

        static bool is_action_word(const Token &t)
        {
            for (auto w : {"KILL", "START", "RESTART", "WARN", "REBOOT", "SHUTDOWN", "PURGE"})
                if (is_word(t, w))
                    return true;
            return false;
        }

        ActionList actions(std::optional<std::uint32_t> group)
        {
            ActionList out;
            out.push_back(action(group));
            for (;;)
            {
                if (is_word(peek(), "AND"))
                {
                    next();
                    out.push_back(action(group));
                }
                else if (is_action_word(peek()) && peek().line > prev().line)
                    out.push_back(action(group));
                else if (is_action_word(peek()))
                    fail(Errc::syntax_error, peek(), "actions are separated by AND or a line break");
                else
                    return out;
            }
        }

        Entity target(std::optional<std::uint32_t> group)
        {
            auto t = next();
            auto e = entity_token(t);
            if (e.is_selector() && !group)
                fail(Errc::unknown_entity, t, e.to_string() + " needs a condition on a single group");
            return e;
        }

        Action action(std::optional<std::uint32_t> group)
        {
            auto t = next();
            Action a;
            if (t.text == "KILL")
                a.kind = ActionKind::kill;
            else if (t.text == "START")
                a.kind = ActionKind::start;
            else if (t.text == "RESTART")
                a.kind = ActionKind::restart;
            else if (t.text == "WARN")
                a.kind = ActionKind::warn;
            else if (t.text == "REBOOT")
                a.kind = ActionKind::reboot;
            else if (t.text == "SHUTDOWN")
                a.kind = ActionKind::shutdown;
            else if (t.text == "PURGE")
                a.kind = ActionKind::purge;
            else
                fail(Errc::syntax_error, t, "expected an action, found '" + t.text + "'");

            if (a.kind == ActionKind::purge)
            {
                if (peek().kind == Tok::word && peek().line == t.line && !is_word(peek(), "AND") &&
                    !is_word(peek(), "FI") && !is_action_word(peek()))
                    a.targets.push_back(target(group));
                return a;
            }
            auto first_tok = peek();
            a.targets.push_back(target(group));
            if (a.kind == ActionKind::reboot || a.kind == ActionKind::shutdown)
            {
                if (a.targets[0].kind != EntityKind::node)
                    fail(Errc::unknown_entity, first_tok, std::string(to_string(a.kind)) + " takes a NODE");
                return a;
            }
            if (a.targets[0].kind == EntityKind::node)
                fail(Errc::unknown_entity, first_tok, std::string(to_string(a.kind)) + " takes a thread or group");
            if (a.kind == ActionKind::warn)
                while (is_punct(peek(), ","))
                {
                    next();
                    auto tok = peek();
                    a.targets.push_back(target(group));
                    if (a.targets.back().kind == EntityKind::node)
                        fail(Errc::unknown_entity, tok, "WARN takes threads or groups");
                }
            return a;
        }

        std::string src_;
        ParseOptions opts_;
        std::vector<Token> toks_;
        std::size_t pos_ = 0;
    };

    inline Program parse_rl(std::string_view source, ParseOptions opts = {})
    {
        return Parser(source, std::move(opts)).parse();
    }
} // namespace vf::rl
