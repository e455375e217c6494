// vf: scenario runner, recovery-language compiler, reliability and
// performance reports.

#include "vf/vf.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace
{
    namespace fs = std::filesystem;
    using namespace vf;

    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p, std::ios::binary);
        if (!in)
            throw Error(Errc::invalid_argument, "cannot open " + p.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    rl::RCode load_rcode(const fs::path &p, const std::vector<std::string> &include_dirs)
    {
        auto text = slurp(p);
        if (text.rfind(rl::rcode_magic, 0) == 0)
            return rl::RCode{Bytes(text.begin(), text.end())};
        rl::ParseOptions opts;
        std::vector<rl::IncludeResolver> rs{rl::directory_resolver(p.parent_path())};
        for (const auto &d : include_dirs)
            rs.push_back(rl::directory_resolver(d));
        opts.resolver = [rs](const std::string &name) -> std::optional<std::string> {
            for (const auto &r : rs)
                if (auto t = r(name))
                    return t;
            return std::nullopt;
        };
        return rl::compile(rl::parse_rl(text, std::move(opts)));
    }

    std::vector<std::uint32_t> parse_sizes(const std::string &spec)
    {
        std::vector<std::uint32_t> out;
        if (auto dots = spec.find(".."); dots != std::string::npos)
        {
            auto lo = static_cast<std::uint32_t>(std::stoul(spec.substr(0, dots)));
            auto hi = static_cast<std::uint32_t>(std::stoul(spec.substr(dots + 2)));
            if (lo < 1 || hi < lo)
                throw CLI::ValidationError("--N", "bad range " + spec);
            for (auto n = lo; n <= hi; ++n)
                out.push_back(n);
            return out;
        }
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
        if (out.empty())
            throw CLI::ValidationError("--N", "no sizes in " + spec);
        return out;
    }

    std::string fmt(double x, int prec = 10)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        return buf;
    }

    int cmd_run(const std::vector<std::string> &files, const std::string &out)
    {
        std::optional<fs::path> root;
        if (!out.empty())
            root = out;
        else if (const char *env = std::getenv("VF_ARTIFACT_DIR"); env && *env)
            root = env;
        int rc = 0;
        for (const auto &f : files)
            rc = std::max(rc, scenario::run_file(f, root, std::cout));
        return rc;
    }

    int cmd_reliability(std::vector<double> cs, bool crosspoints, bool verify, const std::string &out,
                        std::size_t steps)
    {
        for (double c : cs)
            reliability::check_unit(c, "C");
        if (crosspoints)
        {
            std::cout << "scheme,C,crosspoint\n";
            std::cout << "tmr,-," << fmt(reliability::simplex_crosspoint_tmr()) << "\n";
            for (double c : cs)
                std::cout << "tmr+1spare," << fmt(c) << "," << fmt(reliability::simplex_crosspoint_1spare(c))
                          << "\n";
        }
        if (verify)
        {
            auto rep = reliability::verify_markov();
            std::cout << "markov grid points: " << rep.points << "\n"
                      << "max |analytic - numeric|: " << fmt(rep.max_abs_diff, 3) << "\n"
                      << "max conservation error: " << fmt(rep.max_conservation_error, 3) << "\n";
            if (rep.max_abs_diff > 1e-9)
                return 1;
        }
        if (crosspoints || verify)
            return 0;
        for (double c : cs)
        {
            auto csv = reliability::curve_csv(c, steps);
            if (out.empty())
            {
                std::cout << "# C=" << fmt(c) << "\n" << csv;
                continue;
            }
            fs::create_directories(out);
            auto path = fs::path(out) / ("curve_C" + fmt(c, 4) + ".csv");
            std::ofstream(path) << csv;
            std::cout << path.string() << "\n";
        }
        return 0;
    }

    int cmd_perf(bool steps, bool resources, bool table6, const std::string &sizes, const std::string &perms,
                 const std::string &ports, std::size_t reps, sim::Tick jitter)
    {
        if (int(steps) + int(resources) + int(table6) != 1)
            throw CLI::ValidationError("perf", "choose exactly one of --steps, --resources, --table6");
        if (resources)
        {
            std::cout << "N,voters,local_links,virtual_links\n";
            for (auto n : parse_sizes(sizes))
            {
                auto r = perf::resource_report(n);
                std::cout << n << "," << r.voters << "," << r.local_links << "," << r.virtual_links << "\n";
            }
            return 0;
        }
        if (table6)
        {
            std::cout << perf::timing_csv(perf::timing_harness(1, 4, reps, jitter));
            return 0;
        }
        perf::Ports p;
        if (ports == "half")
            p = perf::Ports::half_duplex;
        else if (ports == "full")
            p = perf::Ports::full_duplex;
        else
            throw CLI::ValidationError("--ports", "half or full");
        std::vector<std::string> names;
        {
            std::stringstream ss(perms);
            std::string item;
            while (std::getline(ss, item, ','))
            {
                if (item != "identity" && item != "onecycle" && item != "best")
                    throw CLI::ValidationError("--perm", "unknown permutation " + item);
                names.push_back(item);
            }
        }
        const auto ns = parse_sizes(sizes);
        std::cout << "N";
        for (const auto &nm : names)
            std::cout << "," << nm << "_steps," << nm << "_utilization";
        std::cout << "\n";
        std::map<std::string, std::vector<double>> ys;
        std::vector<double> xs;
        for (auto n : ns)
        {
            if (n < 2)
                throw CLI::ValidationError("--N", "schedules need N >= 2");
            perf::CrossbarModel m{n, p};
            xs.push_back(n);
            std::cout << n;
            for (const auto &nm : names)
            {
                auto pi = nm == "identity" ? perf::identity_permutation(n)
                          : nm == "onecycle" ? perf::one_cycled_permutation(n)
                                             : perf::best_permutation(m);
                auto r = perf::schedule_steps(m, pi);
                ys[nm].push_back(double(r.steps));
                std::cout << "," << r.steps << "," << fmt(r.utilization, 6);
            }
            std::cout << "\n";
        }
        if (xs.size() >= 4)
            for (const auto &nm : names)
            {
                auto q = perf::fit_polynomial(xs, ys[nm], 2);
                auto l = perf::fit_polynomial(xs, ys[nm], 1);
                std::cout << "# " << nm << ": quadratic a=" << fmt(q.coefficients[2], 6) << " b=" << fmt(q.coefficients[1], 6)
                          << " c=" << fmt(q.coefficients[0], 6) << " R2=" << fmt(q.r_squared, 8)
                          << "; linear slope=" << fmt(l.coefficients[1], 6) << " R2=" << fmt(l.r_squared, 8) << "\n";
            }
        return 0;
    }
} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"voting farm simulator"};
    app.require_subcommand(1);

    auto *run = app.add_subcommand("run", "run scenario files and check their assertions");
    std::vector<std::string> scenario_files;
    std::string out_dir;
    run->add_option("scenario", scenario_files, "scenario JSON files")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "artifact directory (default: $VF_ARTIFACT_DIR)");

    auto *rlc = app.add_subcommand("rl", "recovery-language tools");
    rlc->require_subcommand(1);
    auto *compile = rlc->add_subcommand("compile", "compile RL source to r-code");
    auto *disasm = rlc->add_subcommand("disasm", "disassemble r-code (or RL source)");
    std::string rl_in, rl_out;
    std::vector<std::string> include_dirs;
    compile->add_option("source", rl_in, "RL source file")->required()->check(CLI::ExistingFile);
    compile->add_option("-o,--output", rl_out, "r-code output file")->required();
    compile->add_option("-I,--include-dir", include_dirs, "extra include directories");
    disasm->add_option("input", rl_in, "r-code or RL source file")->required()->check(CLI::ExistingFile);
    disasm->add_option("-I,--include-dir", include_dirs, "extra include directories");

    auto *rel = app.add_subcommand("reliability", "reliability curves, crosspoints and the Markov oracle");
    std::vector<double> cs{0, 0.25, 0.5, 0.75, 1};
    bool crosspoints = false, verify = false;
    std::string rel_out;
    std::size_t rel_steps = 100;
    rel->add_option("--C", cs, "coverage values")->check(CLI::Range(0.0, 1.0));
    rel->add_flag("--crosspoints", crosspoints, "print crosspoints with the simplex system");
    rel->add_flag("--verify-markov", verify, "compare closed forms with the integrated chain");
    rel->add_option("--out", rel_out, "write one curve file per C into this directory");
    rel->add_option("--steps", rel_steps, "grid intervals over R in [0,1]")->check(CLI::PositiveNumber);

    auto *perf = app.add_subcommand("perf", "resource counts, broadcast schedules and session timing");
    bool steps = false, resources = false, table6 = false;
    std::string sizes = "4..64", perms = "identity,onecycle", ports = "half";
    std::size_t reps = 50;
    sim::Tick jitter = 0;
    perf->add_flag("--steps", steps, "crossbar step counts per permutation");
    perf->add_flag("--resources", resources, "voters and links per farm size");
    perf->add_flag("--table6", table6, "simulated session latency for N=1..4");
    perf->add_option("--N", sizes, "sizes: a,b,c or lo..hi");
    perf->add_option("--perm", perms, "identity, onecycle, best");
    perf->add_option("--ports", ports, "half or full duplex ports");
    perf->add_option("--reps", reps, "repetitions per size")->check(CLI::PositiveNumber);
    perf->add_option("--jitter", jitter, "per-message jitter bound")->check(CLI::NonNegativeNumber);

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (run->parsed())
            return cmd_run(scenario_files, out_dir);
        if (compile->parsed())
        {
            auto rc = load_rcode(rl_in, include_dirs);
            std::ofstream(rl_out, std::ios::binary)
                .write(reinterpret_cast<const char *>(rc.bytes.data()), static_cast<std::streamsize>(rc.bytes.size()));
            std::cout << rl_out << ": " << rc.bytes.size() << " bytes\n";
            return 0;
        }
        if (disasm->parsed())
        {
            std::cout << rl::disassemble(load_rcode(rl_in, include_dirs));
            return 0;
        }
        if (rel->parsed())
            return cmd_reliability(cs, crosspoints, verify, rel_out, rel_steps);
        if (perf->parsed())
            return cmd_perf(steps, resources, table6, sizes, perms, ports, reps, jitter);
    }
    catch (const CLI::Error &e)
    {
        return app.exit(e);
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
