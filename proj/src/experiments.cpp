#include "rdw/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rdw/csv.hpp"
#include "rdw/errors.hpp"

namespace rdw {

namespace fs = std::filesystem;
using nlohmann::json;

const char* const kRecordHeader =
    "seed,n,dim,theta,D_n,F_hat,m_plus_hat,m_minus_hat,e_hat_plus,e_hat_minus,W0_hat,"
    "linfty_max,lipschitz_seminorm";

std::string record_row(const StatRecord& r) {
    std::ostringstream os;
    os << csv::fmt(r.seed) << ',' << csv::fmt(r.n) << ',' << csv::fmt(r.dim) << ','
       << csv::fmt(r.theta) << ',' << csv::fmt(r.D_n) << ',' << csv::fmt(r.F_hat) << ','
       << csv::fmt(r.m_plus_hat) << ',' << csv::fmt(r.m_minus_hat) << ','
       << csv::fmt(r.e_hat_plus) << ',' << csv::fmt(r.e_hat_minus) << ',' << csv::fmt(r.W0_hat)
       << ',' << csv::fmt(r.linfty_max) << ',' << csv::fmt(r.lipschitz_seminorm);
    return os.str();
}

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

struct RunState {
    const ExperimentConfig& cfg;
    StatContext ctx;
    fs::path dir;
    std::vector<CellOutput> cells;
    std::vector<CellAggregate> aggregates;
    std::vector<Verdict> verdicts;

    explicit RunState(const ExperimentConfig& c) : cfg(c), ctx(c.stat_context()) {}

    double rtol() const {
        return cfg.solver.residual_tol > 0.0 ? cfg.solver.residual_tol
                                             : auto_residual_tol(cfg.dim);
    }

    std::string cell_name(int n, double theta) const {
        return "cell_d" + csv::fmt(cfg.dim) + "_n" + csv::fmt(n) + "_theta" + csv::slug(theta) +
               ".csv";
    }

    void emit_cell(int n, double theta, const CellRecords& recs) {
        const std::string name = cell_name(n, theta);
        std::ostringstream os;
        os << kRecordHeader << '\n';
        int count = 0;
        for (const StatRecord& r : recs.records)
            if (r.valid) {
                os << record_row(r) << '\n';
                ++count;
            }
        write_text(dir / name, os.str());
        cells.push_back({cfg.dim, n, theta, name, count, recs.failures, false});
        aggregates.push_back(aggregate_records(cfg.dim, n, theta, recs.records));
    }

    void mark_aborted(int n, double theta) {
        cells.push_back({cfg.dim, n, theta, "", 0, 0, true});
        add("cell_completed_n" + csv::fmt(n) + "_theta" + csv::slug(theta), false, 0.0, 0.0,
            "cell aborted: solver failure budget exceeded");
    }

    void add(const std::string& name, bool pass, double value, double threshold,
             const std::string& detail, bool advisory = false) {
        verdicts.push_back({name, pass, advisory, value, threshold, detail});
    }

    CellAggregate& agg_for(int n, double theta) {
        for (CellAggregate& a : aggregates)
            if (a.n == n && a.theta == theta) return a;
        throw ConfigError("internal: missing aggregate cell");
    }
};

// ---- drivers -------------------------------------------------------------

void run_sanity(RunState& st) {
    const ExperimentConfig& cfg = st.cfg;
    for (double theta : cfg.thetas)
        for (int n : cfg.ns) {
            CellRecords recs;
            try {
                recs = collect_cell(st.ctx, cfg.dim, n, theta, cfg.reps, cfg.master_seed, {},
                                    cfg.workers, cfg.failure_budget);
            } catch (const NonConvergenceError&) {
                st.mark_aborted(n, theta);
                continue;
            }
            st.emit_cell(n, theta, recs);

            const FieldRealization f =
                sample_field(cfg.dim, n, cfg.dist, rng::combine(cfg.master_seed, 0));
            const GridSpec grid = st.ctx.grid(cfg.dim, n);
            const ExtremalPair pair = extremal_pair(f, cfg.potential, theta, grid, cfg.solver);
            const std::string tag = "_n" + csv::fmt(n) + "_theta" + csv::slug(theta);

            if (theta == 0.0) {
                double dev_plus = 0.0, dev_minus = 0.0;
                for (double x : pair.v_plus.values) dev_plus = std::max(dev_plus, std::abs(x - 1.0));
                for (double x : pair.v_minus.values) dev_minus = std::max(dev_minus, std::abs(x + 1.0));
                st.add("flat_plus_state" + tag, dev_plus < 1e-6, dev_plus, 1e-6,
                       "sup |v+ - 1| at theta=0");
                st.add("flat_minus_state" + tag, dev_minus < 1e-6, dev_minus, 1e-6,
                       "sup |v- + 1| at theta=0");
                const double emax =
                    std::max(std::abs(pair.energy_plus.total), std::abs(pair.energy_minus.total));
                st.add("zero_energy" + tag, emax < 1e-8, emax, 1e-8, "|G1(v+-)| at theta=0");
            }
            const double bound = extremal_bc_value(cfg.potential, theta, cfg.dist) + 1e-6;
            const double worst = st.agg_for(n, theta).linfty_worst;
            st.add("linfty_bound" + tag, worst <= bound, worst, bound,
                   "max |v| over realizations vs 1 + c0 theta gmax");
            const double res = std::max(pair.residual_plus, pair.residual_minus);
            st.add("residual_tol" + tag, res <= st.rtol(), res, st.rtol(),
                   "extremal solve residuals");

            if (cfg.dump_fields) {
                write_field_csv(f, (st.dir / ("field" + tag + ".csv")).string());
                write_profile_csv(pair.v_plus, (st.dir / ("v_plus" + tag + ".csv")).string());
                write_profile_csv(pair.v_minus, (st.dir / ("v_minus" + tag + ".csv")).string());
            }
        }
}

void run_lemmas(RunState& st) {
    const ExperimentConfig& cfg = st.cfg;
    const int n = cfg.ns.front();
    const GridSpec grid = st.ctx.grid(cfg.dim, n);
    const double rtol = st.rtol();

    for (double theta : cfg.thetas) {
        const std::string tag = "_theta" + csv::slug(theta);
        const double t = cfg.truncation_level(theta);

        // Lemma A on rough profiles
        double worst_gap = -1e300, worst_quant = -1e300;
        for (int r = 0; r < cfg.reps; ++r) {
            const std::uint64_t s = rng::combine(rng::combine(cfg.master_seed, 0xA11), r);
            const FieldRealization f = sample_field(cfg.dim, n, cfg.dist, s);
            const DiscreteProfile v = rough_profile(grid, t, rng::combine(s, 7));
            const double gap = truncation_gap(v, f, cfg.potential, theta, t);
            const double bound = truncation_bound(v, cfg.potential, theta, cfg.dist.gmax, t);
            worst_gap = std::max(worst_gap, gap);
            worst_quant = std::max(worst_quant, gap + bound);
        }
        st.add("lemma_a_nonincrease" + tag, worst_gap <= 1e-10, worst_gap, 1e-10,
               "max truncation gap over rough profiles");
        st.add("lemma_a_quantitative" + tag, worst_quant <= 1e-8, worst_quant, 1e-8,
               "max gap + quadrature bound");

        // ordered boundary data
        const auto bn = boundary_nodes(grid);
        double order_viol = -1e300, strict_min = 1e300;
        const int fgk_reps = std::min(cfg.reps, 20);
        for (int r = 0; r < fgk_reps; ++r) {
            const std::uint64_t s = rng::combine(rng::combine(cfg.master_seed, 0xF6C), r);
            const FieldRealization f = sample_field(cfg.dim, n, cfg.dist, s);
            std::vector<double> lo_tr(bn.size(), 0.9), hi_tr(bn.size(), 1.0);
            const auto [lo, hi] =
                ordered_bc_solve(f, cfg.potential, theta, grid, lo_tr, hi_tr, cfg.solver);
            const LatticeView lat(grid);
            for (int iz = 0; iz < lat.nodes[2]; ++iz)
                for (int iy = 0; iy < lat.nodes[1]; ++iy)
                    for (int ix = 0; ix < lat.nodes[0]; ++ix) {
                        const std::size_t k = lat.node_index(ix, iy, iz);
                        const double d = hi.profile.values[k] - lo.profile.values[k];
                        order_viol = std::max(order_viol, -d);
                        if (!lat.on_boundary(ix, iy, iz)) strict_min = std::min(strict_min, d);
                    }
        }
        st.add("fgk_ordered" + tag, order_viol <= 1e-6, order_viol, 1e-6,
               "max node-wise order violation, traces 0.9 vs 1.0");
        st.add("fgk_strict_interior" + tag, strict_min > 0.0, strict_min, 0.0,
               "min interior gap for strictly ordered traces");

        // extremal sandwich around the free minimizers
        double sandwich_viol = -1e300, linfty_excess = -1e300;
        const int sandwich_reps = std::min(cfg.reps, 20);
        const double bval = extremal_bc_value(cfg.potential, theta, cfg.dist);
        for (int r = 0; r < sandwich_reps; ++r) {
            const std::uint64_t s = rng::combine(rng::combine(cfg.master_seed, 0x5A4D), r);
            const FieldRealization f = sample_field(cfg.dim, n, cfg.dist, s);
            const ExtremalPair pair = extremal_pair(f, cfg.potential, theta, grid, cfg.solver);
            const MultistartResult ms =
                minimize_multistart(f, cfg.potential, theta, grid, cfg.solver);
            for (const SolveResult& run : ms.runs)
                for (std::size_t k = 0; k < run.profile.values.size(); ++k) {
                    sandwich_viol = std::max(sandwich_viol,
                                             pair.v_minus.values[k] - run.profile.values[k]);
                    sandwich_viol = std::max(sandwich_viol,
                                             run.profile.values[k] - pair.v_plus.values[k]);
                }
            linfty_excess = std::max(linfty_excess,
                                     std::max(linfty_norm(pair.v_plus), linfty_norm(pair.v_minus)) -
                                         bval);
        }
        st.add("extremal_sandwich" + tag, sandwich_viol <= 1e-6, sandwich_viol, 1e-6,
               "max violation of v- <= w <= v+ over 5-start minimizers");
        st.add("linfty_bound" + tag, linfty_excess <= 1e-6, linfty_excess, 1e-6,
               "max |v| - (1 + c0 theta gmax)");

        // field-derivative identity, fixed profile (exact) and re-minimized
        double affine_err = -1e300, envelope_err = -1e300;
        const int a2b_pairs = std::min(cfg.reps, 20);
        const double delta = 1e-3;
        for (int r = 0; r < a2b_pairs; ++r) {
            const std::uint64_t s = rng::combine(rng::combine(cfg.master_seed, 0xA2B), r);
            const FieldRealization f = sample_field(cfg.dim, n, cfg.dist, s);
            Site site;
            site[0] = grid.site_lo() + 1 + static_cast<int>(rng::mix(s) % std::max(1u, static_cast<unsigned>(grid.n - 2)));
            const SolveResult plus = extremal_max(f, cfg.potential, theta, grid, cfg.solver);

            const double deriv = field_derivative(plus.profile, theta, site);
            const FieldRealization fp = f.with_value(site, f.value(site) + delta);
            const double e_shift =
                energy(plus.profile, fp, cfg.potential, theta).total - plus.energy.total;
            affine_err = std::max(affine_err, std::abs(e_shift - delta * deriv));

            const FieldRealization fm = f.with_value(site, f.value(site) - delta);
            const double ep = extremal_max(fp, cfg.potential, theta, grid, cfg.solver).energy.total;
            const double em = extremal_max(fm, cfg.potential, theta, grid, cfg.solver).energy.total;
            envelope_err = std::max(envelope_err, std::abs((ep - em) / (2.0 * delta) - deriv));
        }
        st.add("field_derivative_affine" + tag, affine_err <= 1e-10, affine_err, 1e-10,
               "fixed-profile energy shift vs -theta delta int_Q v");
        st.add("field_derivative_envelope" + tag,
               envelope_err <= std::max(1e-4, 5.0 * rtol), envelope_err,
               std::max(1e-4, 5.0 * rtol), "re-minimized central difference vs closed form");

        // one-site sandwich and cell-average monotonicity
        const double h_list[3] = {0.05, 0.1, 0.2};
        bool ll4_ok = true, r1_ok = true;
        double ll4_worst = 0.0;
        const int mono_reps = std::min(cfg.reps, 20);
        for (int r = 0; r < mono_reps; ++r) {
            const std::uint64_t s = rng::combine(rng::combine(cfg.master_seed, 0x114), r);
            const FieldRealization f = sample_field(cfg.dim, n, cfg.dist, s);
            const MonotonicityReport rep = field_monotonicity_check(
                f, st.ctx, theta, grid, Site{}, h_list, 2.0 * rtol);
            for (const MonotonicityRow& row : rep.rows) {
                ll4_ok = ll4_ok && row.sandwich_ok;
                r1_ok = r1_ok && row.monotone_ok;
                ll4_worst = std::max({ll4_worst, row.delta_g1 - row.upper, row.lower - row.delta_g1});
            }
        }
        st.add("ll4_sandwich" + tag, ll4_ok, ll4_worst, 2.0 * rtol,
               "theta h int v+(w) >= dG1 >= theta h int v+(w-h)");
        st.add("r1_cell_average_monotone" + tag, r1_ok, 0.0, 0.0,
               "int_Q v+ nondecreasing in w(0)");
    }
}

void run_scaling(RunState& st) {
    const ExperimentConfig& cfg = st.cfg;
    for (double theta : cfg.thetas) {
        const std::string tag = "_theta" + csv::slug(theta);
        std::vector<double> mean_abs_d, lip_max;
        std::vector<int> ns_used;
        for (int n : cfg.ns) {
            CellRecords recs;
            try {
                recs = collect_cell(st.ctx, cfg.dim, n, theta, cfg.reps, cfg.master_seed, {},
                                    cfg.workers, cfg.failure_budget);
            } catch (const NonConvergenceError&) {
                st.mark_aborted(n, theta);
                continue;
            }
            st.emit_cell(n, theta, recs);
            CellAggregate& agg = st.agg_for(n, theta);

            // collar blend cost on a subset
            const int blend_reps = std::min(cfg.reps, 12);
            std::vector<double> costs;
            const GridSpec grid = st.ctx.grid(cfg.dim, n);
            for (int r = 0; r < blend_reps; ++r) {
                const std::uint64_t s =
                    rng::combine(rng::combine(cfg.master_seed, 0xB1E), static_cast<std::uint64_t>(r));
                const FieldRealization f = sample_field(cfg.dim, n, cfg.dist, s);
                costs.push_back(boundary_blend_cost(f, st.ctx, theta, grid));
            }
            const MeanSE bc = mean_se(costs);
            agg.blend_cost_mean = bc.mean;
            agg.blend_cost_se = bc.se;

            mean_abs_d.push_back(agg.abs_D.mean);
            lip_max.push_back(agg.lipschitz_worst);
            ns_used.push_back(n);
        }
        if (ns_used.size() >= 2 && theta > 0.0) {
            const double slope = loglog_slope(ns_used, mean_abs_d);
            const double limit = static_cast<double>(cfg.dim - 1) + 0.15;
            st.add("gap_exponent" + tag, slope <= limit, slope, limit,
                   "log-log slope of mean |D_n| vs n");
            std::vector<double> blends;
            for (int n : ns_used) blends.push_back(st.agg_for(n, theta).blend_cost_mean);
            const double bslope = loglog_slope(ns_used, blends);
            st.add("blend_exponent" + tag, bslope <= limit, bslope, limit,
                   "log-log slope of the collar blend cost vs n");
        }
        if (ns_used.size() >= 2) {
            const double base = lip_max.front();
            const double worst = *std::max_element(lip_max.begin(), lip_max.end());
            const double limit = 1.25 * base + 0.05;
            st.add("lipschitz_uniform" + tag, worst <= limit, worst, limit,
                   "max discrete Lipschitz seminorm does not grow with n");
        }
    }
}

void run_fluctuation(RunState& st) {
    const ExperimentConfig& cfg = st.cfg;
    const bool nested_ok = cfg.dim == 1;
    for (double theta : cfg.thetas) {
        const std::string ttag = "_theta" + csv::slug(theta);
        const double bval = extremal_bc_value(cfg.potential, theta, cfg.dist);
        for (int n : cfg.ns) {
            NestedOptions nested;
            nested.with_fhat = nested_ok;
            nested.k_fhat = cfg.k_conditional;
            nested.m_extra = cfg.m_extra;
            nested.with_w0 = nested_ok;
            nested.k_w0 = cfg.k_w0;
            nested.with_b_lower = nested_ok;
            nested.k_b_lower = cfg.k_b_lower;

            CellRecords recs;
            try {
                recs = collect_cell(st.ctx, cfg.dim, n, theta, cfg.reps, cfg.master_seed, nested,
                                    cfg.workers, cfg.failure_budget);
            } catch (const NonConvergenceError&) {
                st.mark_aborted(n, theta);
                continue;
            }
            st.emit_cell(n, theta, recs);
            CellAggregate& agg = st.agg_for(n, theta);
            agg.b_sq_upper = 4.0 * theta * theta * bval * bval;
            const std::string tag = "_n" + csv::fmt(n) + ttag;

            st.add("antithetic_mean_zero" + tag, agg.D_n.mean == 0.0, agg.D_n.mean, 0.0,
                   "sample mean of D_n under (w, -w) pairing");
            if (nested_ok) {
                const double fdev = std::abs(agg.F_hat.mean);
                const double flim = 3.0 * agg.F_hat.se + 1e-12;
                st.add("fhat_mean_zero" + tag, fdev <= flim, fdev, flim,
                       "|mean F^_n| vs 3 SE");
                double w0_viol = -1e300;
                for (const StatRecord& r : recs.records)
                    if (r.valid && r.W0_hat)
                        w0_viol = std::max(
                            w0_viol, std::abs(*r.W0_hat) - (2.0 * theta * bval + 3.0 * r.w0_se));
                st.add("w0_bound" + tag, w0_viol <= 1e-9, w0_viol, 1e-9,
                       "|W0| vs 2 theta (1 + c0 theta gmax) + 3 SE");
                const double up_viol = agg.b_sq_hat - (agg.b_sq_upper + 3.0 * agg.b_sq_hat_se + 1e-12);
                const double lo_viol = (agg.b_sq_lower - 3.0 * std::sqrt(agg.b_sq_lower_se * agg.b_sq_lower_se +
                                                                         agg.b_sq_hat_se * agg.b_sq_hat_se)) -
                                       agg.b_sq_hat;
                const double viol = std::max(up_viol, lo_viol);
                st.add("b_sq_sandwich" + tag, viol <= 1e-12, viol, 1e-12,
                       "b^2 within [lower - 3 SE, 4 theta^2 (1 + c0 theta gmax)^2]");
            }
        }
        if (nested_ok && cfg.ns.size() >= 2) {
            const auto vcells = variance_increments(st.ctx, cfg.dim, theta, cfg.ns,
                                                    std::min(cfg.reps, 64), cfg.k_conditional,
                                                    cfg.a_list, rng::combine(cfg.master_seed, 0x7E),
                                                    cfg.workers);
            double defect = 0.0;
            for (const VarianceCell& c : vcells) defect = std::max(defect, c.telescope_defect);
            st.add("increment_telescope" + ttag, defect <= 1e-9, defect, 1e-9,
                   "sum Y_i == D - E_0 with shared streams");
            for (std::size_t ai = 0; ai < cfg.a_list.size(); ++ai) {
                std::vector<double> us, ses;
                for (const VarianceCell& c : vcells) {
                    us.push_back(c.U_hat[ai].mean);
                    ses.push_back(c.U_hat[ai].se);
                }
                std::string detail;
                const bool pass = decreasing_trend(us, ses, &detail);
                st.add("lindeberg_decay_a" + csv::slug(cfg.a_list[ai]) + ttag, pass,
                       us.back(), us.front(), "U_n(a) decreasing in n; " + detail);
            }
            for (const VarianceCell& c : vcells) {
                CellAggregate& agg = st.agg_for(c.n, theta);
                agg.V_hat = c.V_hat;
                agg.V_se = c.V_se;
                agg.U_hat = c.U_hat;
            }
        }
    }
}

void run_uniqueness(RunState& st) {
    const ExperimentConfig& cfg = st.cfg;
    for (double theta : cfg.thetas) {
        const std::string ttag = "_theta" + csv::slug(theta);
        std::vector<double> gaps, gap_ses, sd_e;
        std::vector<int> ns_used;
        for (int n : cfg.ns) {
            CellRecords recs;
            try {
                recs = collect_cell(st.ctx, cfg.dim, n, theta, cfg.reps, cfg.master_seed, {},
                                    cfg.workers, cfg.failure_budget);
            } catch (const NonConvergenceError&) {
                st.mark_aborted(n, theta);
                continue;
            }
            st.emit_cell(n, theta, recs);
            const CellAggregate& agg = st.agg_for(n, theta);
            gaps.push_back(agg.gap_integral.mean);
            gap_ses.push_back(agg.gap_integral.se);
            sd_e.push_back(agg.e_plus.sd);
            ns_used.push_back(n);
        }
        if (ns_used.empty()) continue;

        if (theta == 0.0) {
            const double dev = std::abs(gaps.front() - 2.0);
            st.add("degenerate_disorder_absent" + ttag, dev <= 1e-12, dev, 1e-12,
                   "degenerate: disorder absent; gap integral == 2 exactly");
            continue;
        }

        bool strict = ns_used.size() >= 2;
        for (std::size_t i = 0; i + 1 < gaps.size(); ++i) strict = strict && gaps[i + 1] < gaps[i];
        std::string detail;
        const bool trend = decreasing_trend(gaps, gap_ses, &detail);
        bool se_overlap = false;
        for (std::size_t i = 0; i + 1 < gaps.size(); ++i)
            if (std::abs(gaps[i] - gaps[i + 1]) < 3.0 * std::hypot(gap_ses[i], gap_ses[i + 1]))
                se_overlap = true;
        if (cfg.dim == 1) {
            st.add("gap_integral_decreasing" + ttag, strict, gaps.back(), gaps.front(),
                   "mean n^-d int (v+ - v-) strictly decreasing; " + detail);
        } else {
            // d = 2 trend is advisory when the errors overlap
            st.add("gap_integral_decreasing" + ttag, strict || trend, gaps.back(), gaps.front(),
                   "mean n^-d int (v+ - v-) decreasing; " + detail, se_overlap && !strict);
        }

        const CellAggregate& last = st.agg_for(ns_used.back(), theta);
        const double msum = std::abs(last.m_sum.mean);
        const double mlim = 3.0 * last.m_sum.se + 1e-12;
        st.add("magnetization_symmetry" + ttag, msum <= mlim, msum, mlim,
               "|mean(m+ + m-)| vs 3 SE at the largest n");
        st.add("magnetization_plus_nonneg" + ttag, last.m_plus.mean >= -3.0 * last.m_plus.se,
               last.m_plus.mean, -3.0 * last.m_plus.se, "mean m+ >= -3 SE");

        double ediff_viol = -1e300;
        for (int n : ns_used) {
            const CellAggregate& agg = st.agg_for(n, theta);
            ediff_viol = std::max(ediff_viol,
                                  std::abs(agg.e_diff.mean) - (3.0 * agg.e_diff.se + 1e-12));
        }
        st.add("energy_density_match" + ttag, ediff_viol <= 0.0, ediff_viol, 0.0,
               "|mean(e+ - e-)| within 3 SE for every n");
        if (ns_used.size() >= 2) {
            std::vector<double> sd_ses;
            for (std::size_t i = 0; i < sd_e.size(); ++i) {
                const double cnt = std::max(st.agg_for(ns_used[i], theta).e_plus.count, 2);
                sd_ses.push_back(sd_e[i] / std::sqrt(2.0 * (cnt - 1)));
            }
            std::string sd_detail;
            const bool pass = decreasing_trend(sd_e, sd_ses, &sd_detail);
            st.add("self_averaging" + ttag, pass, sd_e.back(), sd_e.front(),
                   "SD of n^-d G1(v+) shrinking with n; " + sd_detail);
        }
    }
}

void run_clt(RunState& st) {
    const ExperimentConfig& cfg = st.cfg;
    if (cfg.dim != 1) throw ConfigError("clt: requires experiment.dim = 1");
    for (double theta : cfg.thetas) {
        const std::string ttag = "_theta" + csv::slug(theta);
        std::vector<double> var_over_n, var_ses;
        std::vector<int> ns_used;
        for (int n : cfg.ns) {
            NestedOptions nested;
            nested.with_fhat = true;
            nested.k_fhat = cfg.k_conditional;
            nested.m_extra = cfg.m_extra;
            CellRecords recs;
            try {
                recs = collect_cell(st.ctx, cfg.dim, n, theta, cfg.reps, cfg.master_seed, nested,
                                    cfg.workers, cfg.failure_budget);
            } catch (const NonConvergenceError&) {
                st.mark_aborted(n, theta);
                continue;
            }
            st.emit_cell(n, theta, recs);
            const CellAggregate& agg = st.agg_for(n, theta);
            const std::string tag = "_n" + csv::fmt(n) + ttag;
            const double fdev = std::abs(agg.F_hat.mean);
            const double flim = 3.0 * agg.F_hat.se + 1e-12;
            st.add("standardized_mean_zero" + tag, fdev <= flim, fdev, flim,
                   "|mean F^_n| vs 3 SE");
            st.add("normal_distance" + tag, true, agg.normality_distance, 1.0,
                   "KS distance of standardized F^_n to the matched normal (reported)", true);
            var_over_n.push_back(agg.var_F_over_volume);
            const double cnt = std::max(agg.F_hat.count, 2);
            var_ses.push_back(agg.var_F_over_volume * std::sqrt(2.0 / (cnt - 1)));
            ns_used.push_back(n);
        }
        if (ns_used.size() >= 2 && theta > 0.0) {
            std::string detail;
            const bool pass = decreasing_trend(var_over_n, var_ses, &detail);
            st.add("variance_ratio_decay" + ttag, pass, var_over_n.back(), var_over_n.front(),
                   "Var(F^_n)/|L_n| decreasing in n; " + detail);
        }
    }
}

std::string aggregate_csv_text(const RunState& st) {
    std::ostringstream os;
    os << "dim,n,theta,count,D_mean,D_se,absD_mean,absD_se,F_mean,F_se,F_count,m_plus_mean,"
          "m_plus_se,m_minus_mean,m_minus_se,m_sum_mean,m_sum_se,e_plus_mean,e_plus_se,"
          "e_minus_mean,e_minus_se,e_diff_mean,e_diff_se,W0_mean,W0_se,gap_integral_mean,"
          "gap_integral_se,linfty_worst,lipschitz_worst,var_F_over_volume,normality_distance,"
          "b_sq_hat,b_sq_hat_se,b_sq_lower,b_sq_lower_se,b_sq_upper,V_hat,V_se";
    for (double a : st.cfg.a_list) os << ",U_hat_a" << csv::slug(a);
    os << ",blend_cost_mean,blend_cost_se\n";
    for (const CellAggregate& a : st.aggregates) {
        os << csv::fmt(a.dim) << ',' << csv::fmt(a.n) << ',' << csv::fmt(a.theta) << ','
           << csv::fmt(a.count) << ',' << csv::fmt(a.D_n.mean) << ',' << csv::fmt(a.D_n.se) << ','
           << csv::fmt(a.abs_D.mean) << ',' << csv::fmt(a.abs_D.se) << ','
           << csv::fmt(a.F_hat.mean) << ',' << csv::fmt(a.F_hat.se) << ','
           << csv::fmt(a.F_hat.count) << ',' << csv::fmt(a.m_plus.mean) << ','
           << csv::fmt(a.m_plus.se) << ',' << csv::fmt(a.m_minus.mean) << ','
           << csv::fmt(a.m_minus.se) << ',' << csv::fmt(a.m_sum.mean) << ','
           << csv::fmt(a.m_sum.se) << ',' << csv::fmt(a.e_plus.mean) << ','
           << csv::fmt(a.e_plus.se) << ',' << csv::fmt(a.e_minus.mean) << ','
           << csv::fmt(a.e_minus.se) << ',' << csv::fmt(a.e_diff.mean) << ','
           << csv::fmt(a.e_diff.se) << ',' << csv::fmt(a.W0.mean) << ',' << csv::fmt(a.W0.se)
           << ',' << csv::fmt(a.gap_integral.mean) << ',' << csv::fmt(a.gap_integral.se) << ','
           << csv::fmt(a.linfty_worst) << ',' << csv::fmt(a.lipschitz_worst) << ','
           << csv::fmt(a.var_F_over_volume) << ',' << csv::fmt(a.normality_distance) << ','
           << csv::fmt(a.b_sq_hat) << ',' << csv::fmt(a.b_sq_hat_se) << ','
           << csv::fmt(a.b_sq_lower) << ',' << csv::fmt(a.b_sq_lower_se) << ','
           << csv::fmt(a.b_sq_upper) << ',' << csv::fmt(a.V_hat) << ',' << csv::fmt(a.V_se);
        for (std::size_t ai = 0; ai < st.cfg.a_list.size(); ++ai)
            os << ',' << (ai < a.U_hat.size() ? csv::fmt(a.U_hat[ai].mean) : std::string());
        os << ',' << csv::fmt(a.blend_cost_mean) << ',' << csv::fmt(a.blend_cost_se) << '\n';
    }
    return os.str();
}

std::string verdict_line(const Verdict& v) {
    std::ostringstream os;
    os << (v.advisory ? (v.pass ? "[ADV+]" : "[ADV-]") : (v.pass ? "[PASS]" : "[FAIL]")) << ' '
       << v.name << ": value=" << csv::fmt(v.value) << " threshold=" << csv::fmt(v.threshold)
       << " -- " << v.detail;
    return os.str();
}

}  // namespace

void write_field_csv(const FieldRealization& f, const std::string& path) {
    std::ostringstream os;
    os << "zx,zy,zz,value\n";
    for (std::size_t i = 0; i < f.site_count(); ++i) {
        const Site z = f.site_at(i);
        os << csv::fmt(z[0]) << ',' << csv::fmt(z[1]) << ',' << csv::fmt(z[2]) << ','
           << csv::fmt(f.window_values()[i]) << '\n';
    }
    write_text(path, os.str());
}

void write_profile_csv(const DiscreteProfile& v, const std::string& path) {
    const LatticeView lat(v.grid);
    const double h = v.grid.h();
    const double x0 = v.grid.x_lo();
    std::ostringstream os;
    os << "x,y,z,value\n";
    for (int iz = 0; iz < lat.nodes[2]; ++iz)
        for (int iy = 0; iy < lat.nodes[1]; ++iy)
            for (int ix = 0; ix < lat.nodes[0]; ++ix) {
                os << csv::fmt(x0 + ix * h) << ','
                   << csv::fmt(v.grid.dim > 1 ? x0 + iy * h : 0.0) << ','
                   << csv::fmt(v.grid.dim > 2 ? x0 + iz * h : 0.0) << ','
                   << csv::fmt(v.values[lat.node_index(ix, iy, iz)]) << '\n';
            }
    write_text(path, os.str());
}

DiscreteProfile rough_profile(const GridSpec& grid, double t, std::uint64_t seed) {
    DiscreteProfile v = constant_profile(grid, 0.0);
    for (std::size_t k = 0; k < v.values.size(); ++k)
        v.values[k] = rng::uniform_symmetric(rng::mix(rng::combine(seed, k)), 1.2 * t);
    // hard spikes beyond the truncation level
    const double mags[3] = {3.0 * t, -2.2 * t, 1.6 * t};
    for (int s = 0; s < 3; ++s) {
        const std::size_t k =
            rng::combine(seed, 0x5133 + static_cast<std::uint64_t>(s)) % v.values.size();
        v.values[k] = mags[s];
    }
    return v;
}

RunManifest run(const ExperimentConfig& cfg) {
    cfg.validate();
    RunManifest man;
    man.kind = cfg.kind;
    man.started_at = now_iso8601();

    RunState st(cfg);
    st.dir = fs::path(cfg.output_dir) /
             (cfg.kind + "_seed" + csv::fmt(cfg.master_seed) + "_d" + csv::fmt(cfg.dim));
    fs::create_directories(st.dir);

    if (cfg.kind == "sanity") run_sanity(st);
    else if (cfg.kind == "lemmas") run_lemmas(st);
    else if (cfg.kind == "scaling") run_scaling(st);
    else if (cfg.kind == "fluctuation") run_fluctuation(st);
    else if (cfg.kind == "uniqueness") run_uniqueness(st);
    else if (cfg.kind == "clt") run_clt(st);
    else throw ConfigError("unknown kind '" + cfg.kind + "'");

    write_text(st.dir / "aggregate.csv", aggregate_csv_text(st));
    {
        std::ostringstream os;
        for (const Verdict& v : st.verdicts) os << verdict_line(v) << '\n';
        write_text(st.dir / "verdicts.txt", os.str());
    }

    man.run_dir = st.dir.string();
    man.cells = st.cells;
    man.aggregate_csv = "aggregate.csv";
    man.verdict_report = "verdicts.txt";
    man.verdicts = st.verdicts;
    man.all_pass = std::all_of(st.verdicts.begin(), st.verdicts.end(),
                               [](const Verdict& v) { return v.advisory || v.pass; });
    man.finished_at = now_iso8601();

    json j;
    j["artifact"] = "rdw";
    j["version"] = "1.0.0";
    j["kind"] = man.kind;
    j["started_at"] = man.started_at;
    j["finished_at"] = man.finished_at;
    j["master_seed"] = cfg.master_seed;
    j["config"] = cfg.raw;
    j["aggregate_csv"] = man.aggregate_csv;
    j["verdict_report"] = man.verdict_report;
    j["all_pass"] = man.all_pass;
    j["cells"] = json::array();
    for (const CellOutput& c : man.cells)
        j["cells"].push_back({{"dim", c.dim},
                              {"n", c.n},
                              {"theta", c.theta},
                              {"csv", c.csv},
                              {"count", c.count},
                              {"failures", c.failures},
                              {"aborted", c.aborted}});
    j["verdicts"] = json::array();
    for (const Verdict& v : man.verdicts)
        j["verdicts"].push_back({{"name", v.name},
                                 {"pass", v.pass},
                                 {"advisory", v.advisory},
                                 {"value", v.value},
                                 {"threshold", v.threshold},
                                 {"detail", v.detail}});

    man.manifest_path = (st.dir / "manifest.json").string();
    atomic_write(man.manifest_path, j.dump(2) + "\n");
    return man;
}

std::vector<std::string> emit_plots(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("plots: cannot read manifest '" + manifest_path + "'");
    json j;
    in >> j;
    const fs::path dir = fs::path(manifest_path).parent_path();

    if (!j.contains("cells") || j["cells"].empty())
        throw ConfigError("plots: manifest lists no cells; nothing to plot");
    std::vector<std::string> cell_csvs;
    for (const auto& c : j["cells"]) {
        if (c.value("aborted", false)) continue;
        const std::string csvname = c.value("csv", "");
        if (csvname.empty() || !fs::exists(dir / csvname))
            throw ConfigError("plots: missing cell CSV '" + (dir / csvname).string() + "'");
        cell_csvs.push_back(csvname);
    }
    const std::string agg = j.value("aggregate_csv", "aggregate.csv");
    if (!fs::exists(dir / agg))
        throw ConfigError("plots: missing aggregate CSV '" + (dir / agg).string() + "'");

    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& body) {
        write_text(dir / name, body);
        written.push_back((dir / name).string());
    };

    std::ostringstream scaling;
    scaling << "#!/usr/bin/env python3\n"
            << "# log-log scaling of the extremal energy gap\n"
            << "import csv, math\n"
            << "import matplotlib.pyplot as plt\n"
            << "rows = list(csv.DictReader(open('" << agg << "')))\n"
            << "thetas = sorted({r['theta'] for r in rows})\n"
            << "for th in thetas:\n"
            << "    pts = [(int(r['n']), float(r['absD_mean'])) for r in rows if r['theta'] == th\n"
            << "           and float(r['absD_mean']) > 0]\n"
            << "    if len(pts) < 2: continue\n"
            << "    xs, ys = zip(*sorted(pts))\n"
            << "    lx = [math.log(x) for x in xs]; ly = [math.log(y) for y in ys]\n"
            << "    m = len(lx); sx = sum(lx); sy = sum(ly)\n"
            << "    slope = (m*sum(a*b for a,b in zip(lx,ly)) - sx*sy)/(m*sum(a*a for a in lx) - sx*sx)\n"
            << "    plt.loglog(xs, ys, 'o-', label=f'theta={th}, slope={slope:.3f}')\n"
            << "plt.xlabel('n'); plt.ylabel('mean |D_n|'); plt.legend(); plt.grid(True, which='both')\n"
            << "plt.savefig('scaling.png', dpi=150)\n";
    emit("plot_scaling.py", scaling.str());

    std::ostringstream hist;
    hist << "#!/usr/bin/env python3\n"
         << "# histogram of standardized conditional gaps against the matched normal\n"
         << "import csv, math\n"
         << "import matplotlib.pyplot as plt\n"
         << "cells = " << json(cell_csvs).dump() << "\n"
         << "best = None\n"
         << "for name in cells:\n"
         << "    rows = [r for r in csv.DictReader(open(name)) if r['F_hat']]\n"
         << "    if rows and (best is None or int(rows[0]['n']) > best[0]):\n"
         << "        best = (int(rows[0]['n']), int(rows[0]['dim']), rows)\n"
         << "if best is None: raise SystemExit('no F_hat columns filled; run a fluctuation or clt kind')\n"
         << "n, dim, rows = best\n"
         << "xs = [float(r['F_hat'])/math.sqrt(n**dim) for r in rows]\n"
         << "mu = sum(xs)/len(xs)\n"
         << "sd = (sum((x-mu)**2 for x in xs)/(len(xs)-1))**0.5\n"
         << "plt.hist(xs, bins=30, density=True, alpha=0.6, label=f'F_n/sqrt(|L_n|), n={n}')\n"
         << "if sd > 0:\n"
         << "    grid = [mu + sd*(k/50.0 - 4) for k in range(401)]\n"
         << "    pdf = [math.exp(-0.5*((x-mu)/sd)**2)/(sd*math.sqrt(2*math.pi)) for x in grid]\n"
         << "    plt.plot(grid, pdf, label='matched normal')\n"
         << "plt.legend(); plt.savefig('fhat_histogram.png', dpi=150)\n";
    emit("plot_fhat_histogram.py", hist.str());

    std::ostringstream trend;
    trend << "#!/usr/bin/env python3\n"
          << "# finite-n uniqueness trend: volume-averaged gap integral\n"
          << "import csv\n"
          << "import matplotlib.pyplot as plt\n"
          << "rows = list(csv.DictReader(open('" << agg << "')))\n"
          << "thetas = sorted({r['theta'] for r in rows})\n"
          << "for th in thetas:\n"
          << "    pts = sorted((int(r['n']), float(r['gap_integral_mean']), float(r['gap_integral_se']))\n"
          << "                 for r in rows if r['theta'] == th)\n"
          << "    if not pts: continue\n"
          << "    xs = [p[0] for p in pts]; ys = [p[1] for p in pts]; es = [p[2] for p in pts]\n"
          << "    plt.errorbar(xs, ys, yerr=es, marker='o', label=f'theta={th}')\n"
          << "plt.xscale('log', base=2); plt.xlabel('n'); plt.ylabel('mean n^-d int (v+ - v-)')\n"
          << "plt.legend(); plt.grid(True)\n"
          << "plt.savefig('gap_trend.png', dpi=150)\n";
    emit("plot_gap_trend.py", trend.str());
    return written;
}

}  // namespace rdw
