#ifndef RDW_STATS_HPP
#define RDW_STATS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdw/solver.hpp"

namespace rdw {

// Shared knobs for all Monte Carlo drivers.
struct StatContext {
    PotentialSpec potential;
    DistributionSpec dist;
    SolverOptions solver;
    int p = 0;  // grid density; 0 -> 8 / 4 / 2 for d = 1 / 2 / 3

    int grid_p(int dim) const { return p > 0 ? p : (dim == 1 ? 8 : dim == 2 ? 4 : 2); }
    GridSpec grid(int dim, int n) const;
};

// Margin (in unit cells) of the enlarged conditioning box, calibrated from
// the linearized screening length sqrt(2 c0) of the quadratic wells.
int default_conditioning_margin(const PotentialSpec& pot);

// Per-realization scalars.
struct StatRecord {
    bool valid = true;  // false when the solver hit its iteration budget
    std::uint64_t seed = 0;
    int n = 0, dim = 1;
    double theta = 0.0;
    double D_n = 0.0;
    std::optional<double> F_hat;
    double m_plus_hat = 0.0, m_minus_hat = 0.0;  // center-cell magnetizations
    double e_hat_plus = 0.0, e_hat_minus = 0.0;  // energy per volume
    std::optional<double> W0_hat;
    double linfty_max = 0.0;
    double lipschitz_seminorm = 0.0;
    // not part of the export schema, used by the trend diagnostics
    double gap_integral = 0.0;  // n^-d int (v+ - v-)
    double w0_se = 0.0;         // nested-MC standard error of W0_hat
    std::optional<double> b_lower_sample;  // unbiased sample of (E[D | B(0)])^2
};

struct MeanSE {
    int count = 0;
    double mean = 0.0, se = 0.0, sd = 0.0;
};
MeanSE mean_se(std::span<const double> xs);

// Kahan-compensated accumulation in a fixed order.
struct KahanSum {
    double s = 0.0, c = 0.0;
    void add(double x) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    double value() const { return s; }
};

struct Verdict {
    std::string name;
    bool pass = false;
    bool advisory = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

// Pass iff the sequence decreases across every consecutive pair, or
// decreases overall with at most one inversion smaller than its own SE.
bool decreasing_trend(std::span<const double> values, std::span<const double> ses,
                      std::string* detail = nullptr);

// OLS slope of log(y) on log(x).
double loglog_slope(std::span<const int> xs, std::span<const double> ys);

double normal_cdf(double x);
// Kolmogorov-Smirnov distance of the sample to N(0, sigma^2).
double ks_distance_to_normal(std::vector<double> sample, double sigma);

// ---- per-realization estimators ----------------------------------------

// D_n = G1(v+) - G1(v-) on the window.
double raw_gap(const FieldRealization& field, const StatContext& ctx, double theta,
               const GridSpec& grid);

// F^_n: hold the field inside the n-window fixed, redraw the annulus of an
// (n + 2 m_extra)-window K times, and average the extremal gap restricted
// to the inner region (common annulus draw across the v+/v- solves of a
// replica).  m_extra = 0 degenerates to raw_gap.
double conditional_gap(const FieldRealization& inner_field, const StatContext& ctx, double theta,
                       int n, int m_extra, int replicas, std::uint64_t aux_seed);

// W^_0: nested Monte Carlo of the martingale increment at the origin; per
// replica the sites after the origin (dictionary order) are redrawn, and
// the gap is differenced against an independent redraw of the origin
// itself.  Returns the mean and its nested-MC standard error.
struct W0Estimate {
    double value = 0.0;
    double se = 0.0;
};
W0Estimate w0_increment(const FieldRealization& field, const StatContext& ctx, double theta,
                        int replicas, std::uint64_t aux_seed);

// E-hat_j = mean over K shared redraw streams of D with the first j sites
// (dictionary order) held fixed; j = 0..N.  Increments E_j - E_{j-1} are
// the Y_{n,i} estimates and telescope exactly to D - E_0.
std::vector<double> lex_conditional_gaps(const FieldRealization& field, const StatContext& ctx,
                                         double theta, int replicas, std::uint64_t aux_seed);

// E[D | B(0)] estimate: origin held fixed, everything else redrawn.
double origin_conditional_gap(const FieldRealization& field, const StatContext& ctx, double theta,
                              int replicas, std::uint64_t aux_seed);

// Unbiased sample of (E[D | B(0)])^2: the product of two conditionally
// independent half-replica estimates.  A plain squared mean would carry
// the Var(D|B(0))/K nested-MC bias, which swamps the quantity itself at
// desk-scale replica counts.
double origin_conditional_gap_sq(const FieldRealization& field, const StatContext& ctx,
                                 double theta, int replicas_per_half, std::uint64_t aux_seed);

// LL.4 sandwich and the R1 monotonicity of the cell average at one site.
struct MonotonicityRow {
    double h = 0.0;
    double upper = 0.0;   // theta h int_Q v+(w)
    double delta_g1 = 0.0;  // G1(v+(w-h), w-h) - G1(v+(w), w)
    double lower = 0.0;   // theta h int_Q v+(w-h)
    double cell_avg_drop = 0.0;  // int_Q v+(w) - int_Q v+(w-h)
    bool sandwich_ok = false;
    bool monotone_ok = false;
};
struct MonotonicityReport {
    Site site;
    std::vector<MonotonicityRow> rows;
    bool all_pass() const;
};
MonotonicityReport field_monotonicity_check(const FieldRealization& field, const StatContext& ctx,
                                            double theta, const GridSpec& grid, Site i,
                                            std::span<const double> h_list, double tol);

// ---- cell collection (the common Monte Carlo loop) ----------------------

struct NestedOptions {
    bool with_fhat = false;
    int k_fhat = 8;
    int m_extra = -1;  // -1 -> default_conditioning_margin
    bool with_w0 = false;
    int k_w0 = 16;
    bool with_b_lower = false;
    int k_b_lower = 8;
};

// reps records for one (dim, n, theta) cell; realizations are antithetic
// pairs (w, -w) with common random numbers inside each record.  Records
// are bit-reproducible for a fixed master seed regardless of worker count.
// Realizations whose solves exhaust the iteration budget are marked
// invalid; more than failure_budget of them aborts the cell.
struct CellRecords {
    std::vector<StatRecord> records;
    int failures = 0;
};
CellRecords collect_cell(const StatContext& ctx, int dim, int n, double theta, int reps,
                         std::uint64_t master_seed, const NestedOptions& nested, int workers,
                         int failure_budget = 1 << 30);

// Blend a Neumann minimizer into v+ data over a unit collar and price it:
// returns G1(blend) - G1(neumann minimizer), the surface-order cost.
double boundary_blend_cost(const FieldRealization& field, const StatContext& ctx, double theta,
                           const GridSpec& grid);

// ---- aggregates ----------------------------------------------------------

struct VarianceTriple {
    double a = 0.0;
    double mean = 0.0;
    double se = 0.0;
};

struct CellAggregate {
    int dim = 1, n = 0;
    double theta = 0.0;
    int count = 0;
    MeanSE D_n, abs_D, F_hat, m_plus, m_minus, m_sum, e_plus, e_minus, e_diff, W0, gap_integral,
        linfty, lipschitz;
    double linfty_worst = 0.0, lipschitz_worst = 0.0;
    double var_F_over_volume = 0.0;
    double V_hat = 0.0, V_se = 0.0;
    std::vector<VarianceTriple> U_hat;
    double b_sq_hat = 0.0, b_sq_hat_se = 0.0;
    double b_sq_lower = 0.0, b_sq_lower_se = 0.0;
    double b_sq_upper = 0.0;
    double normality_distance = 0.0;
    double blend_cost_mean = 0.0, blend_cost_se = 0.0;
};

CellAggregate aggregate_records(int dim, int n, double theta,
                                std::span<const StatRecord> records);

// Variance/Lindeberg estimators on top of the lexicographic increments;
// d = 1 economics only.
struct VarianceCell {
    int n = 0;
    double V_hat = 0.0, V_se = 0.0;
    std::vector<VarianceTriple> U_hat;
    double telescope_defect = 0.0;  // max |sum Y_i - (D - E_0)| seen
};
std::vector<VarianceCell> variance_increments(const StatContext& ctx, int dim, double theta,
                                              std::span<const int> n_list, int reps, int replicas,
                                              std::span<const double> a_list,
                                              std::uint64_t master_seed, int workers);

}  // namespace rdw

#endif
