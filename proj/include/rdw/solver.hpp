#ifndef RDW_SOLVER_HPP
#define RDW_SOLVER_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>

#include "rdw/energy.hpp"

namespace rdw {

enum class Scheme { semi_implicit_flow, monotone_iteration };

struct SolverOptions {
    double tau = 0.0;           // 0 -> 0.45 / sup|w''| over the working range
    double residual_tol = 0.0;  // 0 -> 1e-8 in d=1, 1e-6 in d>=2
    double energy_tol = 1e-18;
    int max_iters = 20000;
    double monotone_shift = 0.0;  // 0 -> (1/2) sup w'' over the working range
    Scheme scheme = Scheme::semi_implicit_flow;

    // Extremal flows assert one-sided motion of every node per step.
    // +1: nodes may only move up; -1: only down; 0: no check.
    int monotone_direction = 0;

    // iteration, energy, residual
    std::function<void(int, double, double)> diagnostics;

    void validate(const PotentialSpec& pot) const;  // throws ConfigError
};

struct SolveResult {
    DiscreteProfile profile;
    int iterations = 0;
    double residual = 0.0;
    EnergyBreakdown energy;
    bool converged = false;
};

// Semi-implicit gradient flow (I - 2 tau Lap_h) v+ = v - tau (W'(v) - theta g1),
// or the shifted monotone iteration, run until the Euler-Lagrange residual
// or the energy decrement drops below tolerance.  The energy sequence is
// checked to be non-increasing at every step.  Throws NonConvergenceError
// past max_iters.
SolveResult minimize(const FieldRealization& field, const PotentialSpec& pot, double theta,
                     const GridSpec& grid, const DiscreteProfile& init,
                     const SolverOptions& opts = {});

// Dirichlet solve with an arbitrary per-node boundary trace, ordered as
// boundary_nodes(grid).
SolveResult minimize_with_trace(const FieldRealization& field, const PotentialSpec& pot,
                                double theta, const GridSpec& grid,
                                std::span<const double> trace, const DiscreteProfile& init,
                                const SolverOptions& opts = {});

// Free (Neumann) minimization from the five standard starts
// {+1, -1, 0, +smoothed sign(g1), -smoothed sign(g1)}; lowest energy wins,
// ties broken toward the smaller L2 residual.
struct MultistartResult {
    std::vector<SolveResult> runs;  // one per start, in the order above
    int chosen = -1;
    const SolveResult& best() const { return runs[static_cast<std::size_t>(chosen)]; }
};
MultistartResult minimize_multistart(const FieldRealization& field, const PotentialSpec& pot,
                                     double theta, GridSpec grid, const SolverOptions& opts = {});

// Extremal states: flow from the constant super/subsolution
// +-(1 + c0 theta gmax) under the matching Dirichlet trace.  Iterates are
// monotone by construction and asserted so.
SolveResult extremal_max(const FieldRealization& field, const PotentialSpec& pot, double theta,
                         GridSpec grid, const SolverOptions& opts = {});
SolveResult extremal_min(const FieldRealization& field, const PotentialSpec& pot, double theta,
                         GridSpec grid, const SolverOptions& opts = {});

struct ExtremalPair {
    DiscreteProfile v_plus, v_minus;
    EnergyBreakdown energy_plus, energy_minus;
    int iterations_plus = 0, iterations_minus = 0;
    double residual_plus = 0.0, residual_minus = 0.0;
    double theta = 0.0;
    std::uint64_t field_fingerprint = 0;
};
ExtremalPair extremal_pair(const FieldRealization& field, const PotentialSpec& pot, double theta,
                           GridSpec grid, const SolverOptions& opts = {});

// Two Dirichlet solves with node-wise ordered traces; the outputs are
// ordered as well (strictly in the interior when the traces are strictly
// ordered somewhere).  Unordered traces are a precondition error.
std::pair<SolveResult, SolveResult> ordered_bc_solve(const FieldRealization& field,
                                                     const PotentialSpec& pot, double theta,
                                                     GridSpec grid,
                                                     std::span<const double> bc_low,
                                                     std::span<const double> bc_high,
                                                     const SolverOptions& opts = {});

// Dirichlet trace magnitude of the extremal problems.
double extremal_bc_value(const PotentialSpec& pot, double theta, const DistributionSpec& dist);
// Working range for curvature bounds: 1 + c0 theta gmax + 1/2.
double working_range(const PotentialSpec& pot, double theta, const DistributionSpec& dist);

double auto_tau(const PotentialSpec& pot, double theta, const DistributionSpec& dist);
double auto_residual_tol(int dim);

// Smoothed sign(g1) start profile for the multistart.
DiscreteProfile smoothed_sign_profile(const FieldRealization& field, const GridSpec& grid);

}  // namespace rdw

#endif
