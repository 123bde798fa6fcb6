#ifndef RDW_ENERGY_HPP
#define RDW_ENERGY_HPP

#include <optional>
#include <vector>

#include "rdw/field.hpp"
#include "rdw/grid.hpp"
#include "rdw/potential.hpp"

namespace rdw {

struct EnergyBreakdown {
    double gradient_term = 0.0;
    double potential_term = 0.0;
    double field_term = 0.0;
    double total = 0.0;
};

// Discrete G1(v, w, region) = int |grad v|^2 + W(v) - theta g1 v.
//
// Gradient term from forward differences along grid edges (trapezoidal in
// the transverse directions); potential and field terms by cell-lumped
// corner quadrature, which is O(h^2) and keeps truncation, comparison and
// the maximum principle exact node-wise statements of the discrete
// functional.  Region defaults to the whole window; regions are whole
// unit cells, so they are always aligned with the quadrature.
EnergyBreakdown energy(const DiscreteProfile& v, const FieldRealization& field,
                       const PotentialSpec& pot, double theta,
                       std::optional<Region> region = std::nullopt);

// Nodal Euler-Lagrange residual
//
//     r_k = Lap_h v - (1/2)[W'(v) - theta g1]   (quadrature-consistent form)
//
// assembled as the exact (negated, volume-rescaled) gradient of the
// discrete energy, so it matches finite differences of energy() to
// rounding.  Neumann boundaries carry the reflected-ghost stencil; for
// Dirichlet profiles boundary entries are zero and the residual is
// interior-only.
std::vector<double> el_residual_field(const DiscreteProfile& v, const FieldRealization& field,
                                      const PotentialSpec& pot, double theta);
double el_residual(const DiscreteProfile& v, const FieldRealization& field,
                   const PotentialSpec& pot, double theta);

// d G1 / d w(i) at fixed profile: -theta * int_{Q1(i)} v, by the same
// midpoint quadrature as the field term, so the affinity of G1 in a single
// site value is exact to rounding.
double field_derivative(const DiscreteProfile& v, double theta, Site i);

// Midpoint quadrature of v over a region (default: whole window).
double profile_integral(const DiscreteProfile& v, std::optional<Region> region = std::nullopt);
// Midpoint quadrature of v over the unit cell Q1(i).
double cell_integral(const DiscreteProfile& v, Site i);

// clamp(v, -t, t); boundary traces below t are untouched.
DiscreteProfile truncate(const DiscreteProfile& v, double t);
// G1(clamp(v)) - G1(v); requires t > 1 + c0 theta gmax.
double truncation_gap(const DiscreteProfile& v, const FieldRealization& field,
                      const PotentialSpec& pot, double theta, double t);
// Quantitative companion: Q = quadrature over {|v| > t} of
// (c0^-1 (t-1) - theta gmax)(|v| - t) >= 0; the truncation gap is <= -Q.
double truncation_bound(const DiscreteProfile& v, const PotentialSpec& pot, double theta,
                        double gmax, double t);

double linfty_norm(const DiscreteProfile& v);
// max over grid edges of |dv|/h.
double lipschitz_seminorm(const DiscreteProfile& v);

// Cell-center field values on the grid (one entry per quadrature cell).
std::vector<double> cell_field_values(const GridSpec& grid, const FieldRealization& field);

}  // namespace rdw

#endif
