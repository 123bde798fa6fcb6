#ifndef RDW_POTENTIAL_HPP
#define RDW_POTENTIAL_HPP

#include <string>
#include <vector>

namespace rdw {

// Double-well potential with quadratic outer branches
//
//     w(s) = (s -+ 1)^2 / (2 c0)   for |s| >= 1 - delta0,
//
// glued to a polynomial on the inner interval [-(1-delta0), 1-delta0].
// The default glue is the even quartic matched C^2 at the junctions
// (s^4 - s^2 + 5/16 for c0 = 1, delta0 = 1/2).  The quadratic branches make
// the Euler-Lagrange equation linear whenever a profile sits in one well.
//
// Even glue polynomials are evaluated through s^2, so w(-s) == w(s) and
// w'(-s) == -w'(s) hold bit-exactly; the field-negation symmetry of the
// whole pipeline rests on this.
class PotentialSpec {
public:
    PotentialSpec() : PotentialSpec(1.0, 0.5) {}
    PotentialSpec(double c0, double delta0);
    // Custom glue coefficients (low to high degree, degree <= 4); used by
    // the validator tests to build broken potentials on purpose.
    PotentialSpec(double c0, double delta0, std::vector<double> glue_coeffs);

    double c0() const { return c0_; }
    double delta0() const { return delta0_; }
    double glue_boundary() const { return s0_; }  // 1 - delta0
    const std::vector<double>& glue_coeffs() const { return glue_; }

    double w(double s) const;
    double w_prime(double s) const;
    double w_second(double s) const;

    // sup of w'' over [-S, S]; with the default glue this is 1/c0 for any
    // S >= 1 - delta0.  Drives the monotone-iteration shift.
    double curvature_sup(double S) const;
    // sup of |w''| over [-S, S]; drives the gradient-flow step size.
    double curvature_abs_sup(double S) const;

private:
    bool even_glue() const;
    double glue_eval(double s) const;
    double glue_d1(double s) const;
    double glue_d2(double s) const;

    double c0_ = 1.0;
    double delta0_ = 0.5;
    double s0_ = 0.5;
    std::vector<double> glue_;  // coefficients of powers 0..4
};

struct H1Clause {
    std::string name;
    bool pass = false;
    double worst = 0.0;     // the extremal value behind the verdict
    std::string detail;
};

struct H1Report {
    std::vector<H1Clause> clauses;
    bool all_pass() const;
};

// Checks every double-well requirement on a dense grid plus exact checks
// at the gluing points: C^2 matching, nonnegativity, zeros exactly at +-1,
// evenness, strict decrease on [0,1], and the exact quadratic tail.
H1Report verify_h1(const PotentialSpec& spec);

}  // namespace rdw

#endif
