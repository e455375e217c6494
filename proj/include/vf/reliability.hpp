#pragma once

// Reliability of TMR and TMR-and-one-spare systems: closed forms, the
// continuous-time Markov chain they derive from, and crosspoint search.
//
// Component reliability R = exp(-lambda t). Coverage C is the probability
// that the spare is switched in correctly after a module error.

#include "core.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace vf::reliability
{
    inline void check_unit(double x, const char *what)
    {
        if (!(x >= 0.0 && x <= 1.0))
            throw Error(Errc::domain_error, std::string(what) + " must lie in [0,1], got " + std::to_string(x));
    }

    inline double r_tmr(double r)
    {
        check_unit(r, "R");
        return 3 * r * r - 2 * r * r * r;
    }

    inline double r_tmr_1spare(double c, double r)
    {
        check_unit(c, "C");
        check_unit(r, "R");
        const double q = r * (1 - r);
        return (-3 * c * c + 6 * c) * q * q + r_tmr(r);
    }

    // ---- Markov chain ------------------------------------------------------

    /// Rate lambda * (k0 + kc * C).
    struct Transition
    {
        std::size_t from = 0;
        std::size_t to = 0;
        double k0 = 0;
        double kc = 0;

        double rate(double lambda, double c) const { return lambda * (k0 + kc * c); }
    };

    struct MarkovModel
    {
        std::vector<std::string> labels;
        std::vector<Transition> transitions;
        /// Live states; reliability is their probability mass.
        std::vector<bool> useful;
        std::size_t initial = 0;

        std::size_t size() const { return labels.size(); }

        std::size_t index(std::string_view label) const
        {
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == label)
                    return i;
            throw Error(Errc::invalid_argument, "no state " + std::string(label));
        }

        /// Generator Q with dp/dt = p Q; rows sum to zero.
        Eigen::MatrixXd generator(double lambda, double c) const
        {
            Eigen::MatrixXd q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
            for (const auto &t : transitions)
            {
                const double k = t.rate(lambda, c);
                q(static_cast<Eigen::Index>(t.from), static_cast<Eigen::Index>(t.to)) += k;
                q(static_cast<Eigen::Index>(t.from), static_cast<Eigen::Index>(t.from)) -= k;
            }
            return q;
        }
    };

    /// Chain for N modules with M spares. State digits d1 d2 d3 read: working
    /// modules, spares left, and modules whose error went uncovered.
    inline MarkovModel build_model(unsigned n = 3, unsigned m = 1)
    {
        if (n != 3 || m > 1)
            throw Error(Errc::domain_error, "only N=3 with M in {0,1} is modelled");
        MarkovModel mm;
        if (m == 0)
        {
            mm.labels = {"300", "200", "FS"};
            mm.useful = {true, true, false};
            mm.transitions = {{0, 1, 3, 0}, {1, 2, 2, 0}};
            return mm;
        }
        mm.labels = {"310", "300", "200", "FS", "211", "301", "201", "202", "FU"};
        mm.useful = {true, true, true, false, true, true, true, true, false};
        enum : std::size_t
        {
            s310,
            s300,
            s200,
            sFS,
            s211,
            s301,
            s201,
            s202,
            sFU
        };
        mm.transitions = {
            {s310, s300, 0, 4},  {s310, s211, 3, -3}, {s310, s301, 1, -1}, {s300, s200, 3, 0},
            {s200, sFS, 2, 0},   {s301, s201, 0, 3},  {s211, s201, 0, 3},  {s301, s202, 3, -3},
            {s211, s202, 1, -1}, {s201, sFU, 2, 0},   {s211, sFU, 2, -2},  {s202, sFU, 2, 0},
        };
        return mm;
    }

    struct Trajectory
    {
        std::vector<double> times;
        /// probabilities[k][s] at times[k]
        std::vector<std::vector<double>> probabilities;
        /// max over accepted steps of |sum p - 1|
        double max_conservation_error = 0;
        std::size_t steps = 0;
        std::size_t rejected = 0;

        double live_mass(const MarkovModel &m, std::size_t k) const
        {
            double s = 0;
            for (std::size_t i = 0; i < m.size(); ++i)
                if (m.useful[i])
                    s += probabilities[k][i];
            return s;
        }
    };

    struct SolveOptions
    {
        double rtol = 1e-11;
        double atol = 1e-15;
        std::size_t max_steps = 1'000'000;
    };

    /// Forward Kolmogorov equations by an adaptive Dormand-Prince 5(4) pair.
    /// `times` must be non-decreasing and non-negative.
    inline Trajectory markov_solve(const MarkovModel &m, double lambda, double c, const std::vector<double> &times,
                                   SolveOptions opt = {})
    {
        if (!(lambda > 0))
            throw Error(Errc::domain_error, "lambda must be positive");
        check_unit(c, "C");
        const Eigen::MatrixXd qt = m.generator(lambda, c).transpose();
        using Vec = Eigen::VectorXd;
        auto f = [&](const Vec &p) -> Vec { return qt * p; };

        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                                a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                                b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                                e6 = 22.0 / 525, e7 = -1.0 / 40;

        Trajectory out;
        Vec p = Vec::Zero(static_cast<Eigen::Index>(m.size()));
        p(static_cast<Eigen::Index>(m.initial)) = 1.0;
        double t = 0;
        double h = 1e-3 / lambda;
        Vec k1 = f(p);

        for (double target : times)
        {
            if (target < t)
                throw Error(Errc::invalid_argument, "time grid must be non-decreasing and non-negative");
            while (t < target)
            {
                if (out.steps + out.rejected >= opt.max_steps)
                    throw Error(Errc::integration_failure, "step budget exhausted at t=" + std::to_string(t));
                const bool last = t + h >= target;
                const double hh = last ? target - t : h;
                Vec k2 = f(p + hh * (a21 * k1));
                Vec k3 = f(p + hh * (a31 * k1 + a32 * k2));
                Vec k4 = f(p + hh * (a41 * k1 + a42 * k2 + a43 * k3));
                Vec k5 = f(p + hh * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
                Vec k6 = f(p + hh * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
                Vec next = p + hh * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
                Vec k7 = f(next);
                Vec err = hh * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

                double norm = 0;
                for (Eigen::Index i = 0; i < p.size(); ++i)
                {
                    const double sc = opt.atol + opt.rtol * std::max(std::abs(p(i)), std::abs(next(i)));
                    norm = std::max(norm, std::abs(err(i)) / sc);
                }
                if (!std::isfinite(norm))
                    throw Error(Errc::integration_failure, "non-finite error estimate at t=" + std::to_string(t));
                const double factor = norm == 0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
                if (norm <= 1.0)
                {
                    t = last ? target : t + hh;
                    p = std::move(next);
                    k1 = std::move(k7);
                    ++out.steps;
                    out.max_conservation_error = std::max(out.max_conservation_error, std::abs(p.sum() - 1.0));
                    if (!last)
                        h = hh * factor;
                }
                else
                {
                    ++out.rejected;
                    h = hh * factor;
                    if (h < 1e-14 * std::max(1.0, t))
                        throw Error(Errc::integration_failure, "step size underflow at t=" + std::to_string(t));
                }
            }
            out.times.push_back(target);
            out.probabilities.emplace_back(p.data(), p.data() + p.size());
        }
        return out;
    }

    /// p(t) = p(0) exp(Q t), for constant generators.
    inline std::vector<double> markov_expm(const MarkovModel &m, double lambda, double c, double t)
    {
        if (!(lambda > 0))
            throw Error(Errc::domain_error, "lambda must be positive");
        check_unit(c, "C");
        Eigen::MatrixXd e = (m.generator(lambda, c) * t).exp();
        Eigen::RowVectorXd p = e.row(static_cast<Eigen::Index>(m.initial));
        return {p.data(), p.data() + p.size()};
    }

    /// Closed-form probabilities of the live states of the spare chain, keyed
    /// by state label; x = lambda t.
    inline std::vector<std::pair<std::string, double>> closed_forms(double c, double x)
    {
        check_unit(c, "C");
        const double e2 = std::exp(-2 * x), e3 = std::exp(-3 * x), e4 = std::exp(-4 * x);
        const double hump = e4 - 2 * e3 + e2;
        return {
            {"310", e4},
            {"300", 4 * c * (e3 - e4)},
            {"200", 6 * c * hump},
            {"211", 3 * (1 - c) * (e3 - e4)},
            {"301", (1 - c) * (e3 - e4)},
            {"201", 6 * c * (1 - c) * hump},
            {"202", 3 * (1 - c) * (1 - c) * hump},
        };
    }

    // ---- crosspoints -------------------------------------------------------

    using Curve = std::function<double(double)>;

    /// Root of f - g in [lo, hi] by bisection, to `tol` in the argument.
    inline double crosspoint(const Curve &f, const Curve &g, double lo, double hi, double tol = 1e-12)
    {
        auto d = [&](double x) { return f(x) - g(x); };
        double dlo = d(lo), dhi = d(hi);
        if (dlo == 0)
            return lo;
        if (dhi == 0)
            return hi;
        if ((dlo < 0) == (dhi < 0))
            throw Error(Errc::no_sign_change, "curves do not cross on [" + std::to_string(lo) + ", " +
                                                  std::to_string(hi) + "]");
        while (hi - lo > tol)
        {
            const double mid = 0.5 * (lo + hi);
            const double dm = d(mid);
            if (dm == 0)
                return mid;
            if ((dm < 0) == (dlo < 0))
            {
                lo = mid;
                dlo = dm;
            }
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }

    /// Component reliability below which the scheme is worse than a simplex
    /// system. The bracket excludes the trivial roots at 0 and 1.
    inline double simplex_crosspoint_tmr() { return crosspoint(r_tmr, [](double r) { return r; }, 1e-3, 1 - 1e-3); }

    inline double simplex_crosspoint_1spare(double c)
    {
        return crosspoint([c](double r) { return r_tmr_1spare(c, r); }, [](double r) { return r; }, 1e-3, 1 - 1e-3);
    }

    // ---- grids and export --------------------------------------------------

    /// max |Eq-derived R(1) - live-state mass| over C x (lambda t) grid, with
    /// the largest per-step conservation error seen while integrating.
    struct OracleReport
    {
        double max_abs_diff = 0;
        double max_conservation_error = 0;
        std::size_t points = 0;
    };

    inline OracleReport verify_markov(std::size_t nc = 25, std::size_t nt = 50, double t_max = 5.0)
    {
        const auto model = build_model(3, 1);
        std::vector<double> times;
        for (std::size_t k = 1; k <= nt; ++k)
            times.push_back(t_max * static_cast<double>(k) / static_cast<double>(nt));
        OracleReport rep;
        for (std::size_t i = 0; i < nc; ++i)
        {
            const double c = nc == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(nc - 1);
            auto tr = markov_solve(model, 1.0, c, times);
            rep.max_conservation_error = std::max(rep.max_conservation_error, tr.max_conservation_error);
            for (std::size_t k = 0; k < times.size(); ++k)
            {
                const double r = std::exp(-times[k]);
                rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(r_tmr_1spare(c, r) - tr.live_mass(model, k)));
                ++rep.points;
            }
        }
        return rep;
    }

    /// CSV with header R,R_tmr,R_tmr1spare,delta over R = 0, 1/steps, ..., 1.
    inline std::string curve_csv(double c, std::size_t steps = 100)
    {
        check_unit(c, "C");
        std::string out = "R,R_tmr,R_tmr1spare,delta\n";
        char buf[128];
        for (std::size_t i = 0; i <= steps; ++i)
        {
            const double r = static_cast<double>(i) / static_cast<double>(steps);
            const double a = r_tmr(r), b = r_tmr_1spare(c, r);
            std::snprintf(buf, sizeof buf, "%.10g,%.12f,%.12f,%.12f\n", r, a, b, b - a);
            out += buf;
        }
        return out;
    }
} // namespace vf::reliability
