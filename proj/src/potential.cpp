#include "rdw/potential.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rdw/errors.hpp"

namespace rdw {

namespace {

// C^2 matching of a + b s^2 + c s^4 against (s-1)^2/(2 c0) at s0 = 1 - delta0:
//   a + b s0^2 + c s0^4 = delta0^2 / (2 c0)
//   2 b s0 + 4 c s0^3   = -delta0 / c0
//   2 b + 12 c s0^2     = 1 / c0
std::vector<double> matched_even_glue(double c0, double delta0) {
    const double s0 = 1.0 - delta0;
    const double c = (s0 + delta0) / (8.0 * c0 * s0 * s0 * s0);
    const double b = -(s0 + 3.0 * delta0) / (4.0 * c0 * s0);
    const double a = (4.0 * delta0 * delta0 + s0 * s0 + 5.0 * s0 * delta0) / (8.0 * c0);
    return {a, 0.0, b, 0.0, c};
}

}  // namespace

PotentialSpec::PotentialSpec(double c0, double delta0) {
    if (c0 <= 0.0) throw ConfigError("potential: c0 must be positive");
    if (delta0 <= 0.0 || delta0 >= 1.0) throw ConfigError("potential: delta0 must be in (0,1)");
    c0_ = c0;
    delta0_ = delta0;
    s0_ = 1.0 - delta0;
    glue_ = matched_even_glue(c0, delta0);
}

PotentialSpec::PotentialSpec(double c0, double delta0, std::vector<double> glue_coeffs)
    : PotentialSpec(c0, delta0) {
    if (glue_coeffs.empty() || glue_coeffs.size() > 5)
        throw ConfigError("potential: glue polynomial degree must be <= 4");
    glue_coeffs.resize(5, 0.0);
    glue_ = std::move(glue_coeffs);
}

bool PotentialSpec::even_glue() const { return glue_[1] == 0.0 && glue_[3] == 0.0; }

double PotentialSpec::glue_eval(double s) const {
    if (even_glue()) {
        const double t = s * s;
        return glue_[0] + t * (glue_[2] + t * glue_[4]);
    }
    double r = 0.0;
    for (int k = 4; k >= 0; --k) r = r * s + glue_[k];
    return r;
}

double PotentialSpec::glue_d1(double s) const {
    if (even_glue()) return s * (2.0 * glue_[2] + (s * s) * (4.0 * glue_[4]));
    double r = 0.0;
    for (int k = 4; k >= 1; --k) r = r * s + k * glue_[k];
    return r;
}

double PotentialSpec::glue_d2(double s) const {
    return 2.0 * glue_[2] + 6.0 * glue_[3] * s + 12.0 * glue_[4] * (s * s);
}

double PotentialSpec::w(double s) const {
    const double t = std::abs(s);
    if (t >= s0_) {
        const double d = t - 1.0;
        return d * d / (2.0 * c0_);
    }
    return glue_eval(s);
}

double PotentialSpec::w_prime(double s) const {
    const double t = std::abs(s);
    if (t >= s0_) {
        const double d = (t - 1.0) / c0_;
        return s < 0.0 ? -d : d;
    }
    return glue_d1(s);
}

double PotentialSpec::w_second(double s) const {
    if (std::abs(s) >= s0_) return 1.0 / c0_;
    return glue_d2(s);
}

double PotentialSpec::curvature_sup(double S) const {
    double m = w_second(0.0);
    const int kSamples = 4096;
    for (int i = 0; i <= kSamples; ++i) {
        const double s = S * (static_cast<double>(i) / kSamples);
        m = std::max(m, std::max(w_second(s), w_second(-s)));
    }
    if (S >= s0_) m = std::max(m, 1.0 / c0_);
    return m;
}

double PotentialSpec::curvature_abs_sup(double S) const {
    double m = std::abs(w_second(0.0));
    const int kSamples = 4096;
    for (int i = 0; i <= kSamples; ++i) {
        const double s = S * (static_cast<double>(i) / kSamples);
        m = std::max({m, std::abs(w_second(s)), std::abs(w_second(-s))});
    }
    if (S >= s0_) m = std::max(m, 1.0 / c0_);
    return m;
}

bool H1Report::all_pass() const {
    return std::all_of(clauses.begin(), clauses.end(), [](const H1Clause& c) { return c.pass; });
}

H1Report verify_h1(const PotentialSpec& spec) {
    H1Report rep;
    const double s0 = spec.glue_boundary();
    const double kTol = 1e-12;

    // C^2 matching: glue side sampled one ulp inside the junction against
    // the exact quadratic branch at the junction.
    {
        double worst = 0.0;
        for (double sgn : {1.0, -1.0}) {
            const double s = sgn * s0;
            const double si = std::nextafter(s, 0.0);
            const double d = s0 - 1.0;
            const double wq = d * d / (2.0 * spec.c0());
            const double wq1 = sgn * d / spec.c0();
            const double wq2 = 1.0 / spec.c0();
            worst = std::max(worst, std::abs(spec.w(si) - wq));
            worst = std::max(worst, std::abs(spec.w_prime(si) - wq1));
            worst = std::max(worst, std::abs(spec.w_second(si) - wq2));
        }
        rep.clauses.push_back({"c2_matching", worst < kTol, worst, "value/slope/curvature jump at +-(1-delta0)"});
    }

    const int kGrid = 10000;
    auto grid_point = [&](int i) { return -3.0 + 6.0 * static_cast<double>(i) / kGrid; };

    {
        double worst = 0.0;
        for (int i = 0; i <= kGrid; ++i) worst = std::min(worst, spec.w(grid_point(i)));
        rep.clauses.push_back({"nonnegative", worst >= -kTol, worst, "min of w on [-3,3]"});
    }
    {
        const double w1 = std::max(std::abs(spec.w(1.0)), std::abs(spec.w(-1.0)));
        double interior_min = 1e300;
        for (int i = 0; i <= kGrid; ++i) {
            const double s = grid_point(i);
            if (std::abs(std::abs(s) - 1.0) > 1e-3) interior_min = std::min(interior_min, spec.w(s));
        }
        const bool pass = w1 < kTol && interior_min > kTol;
        std::ostringstream os;
        os << "w(+-1)=" << w1 << ", min away from wells=" << interior_min;
        rep.clauses.push_back({"zeros_only_at_wells", pass, w1, os.str()});
    }
    {
        double worst = 0.0;
        for (int i = 0; i <= kGrid; ++i) {
            const double s = grid_point(i);
            worst = std::max(worst, std::abs(spec.w(s) - spec.w(-s)));
        }
        rep.clauses.push_back({"symmetric", worst < kTol, worst, "max |w(s)-w(-s)|"});
    }
    {
        // strictly decreasing on [0,1]: slope negative away from the endpoints
        double worst = -1e300;
        for (int i = 1; i < kGrid; ++i) {
            const double s = static_cast<double>(i) / kGrid;
            if (s < 1e-4 || s > 1.0 - 1e-4) continue;
            worst = std::max(worst, spec.w_prime(s));
        }
        rep.clauses.push_back({"strictly_decreasing_01", worst < 0.0, worst, "max w' on (0,1)"});
    }
    {
        // the tail must be the exact quadratic branch, not an approximation
        double worst = 0.0;
        for (int i = 0; i <= 200; ++i) {
            const double s = s0 + 1e-6 + (3.0 - s0) * static_cast<double>(i) / 200;
            const double d = s - 1.0;
            worst = std::max(worst, std::abs(spec.w(s) - d * d / (2.0 * spec.c0())));
        }
        rep.clauses.push_back({"quadratic_tail", worst == 0.0, worst, "w(s) - (s-1)^2/(2 c0) beyond the junction"});
    }
    return rep;
}

}  // namespace rdw
