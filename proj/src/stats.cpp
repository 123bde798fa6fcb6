#include "rdw/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "rdw/errors.hpp"

namespace rdw {

GridSpec StatContext::grid(int dim, int n) const {
    GridSpec g;
    g.dim = dim;
    g.n = n;
    g.p = grid_p(dim);
    g.bc = BcKind::neumann;
    g.validate();
    return g;
}

int default_conditioning_margin(const PotentialSpec& pot) {
    // boundary data decay like exp(-dist / sqrt(2 c0)) in the linearized
    // wells; ten screening lengths push the influence below 1e-4
    return static_cast<int>(std::ceil(10.0 * std::sqrt(2.0 * pot.c0())));
}

MeanSE mean_se(std::span<const double> xs) {
    MeanSE m;
    m.count = static_cast<int>(xs.size());
    if (xs.empty()) return m;
    KahanSum s;
    for (double x : xs) s.add(x);
    m.mean = s.value() / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        KahanSum q;
        for (double x : xs) q.add((x - m.mean) * (x - m.mean));
        m.sd = std::sqrt(q.value() / static_cast<double>(xs.size() - 1));
        m.se = m.sd / std::sqrt(static_cast<double>(xs.size()));
    }
    return m;
}

bool decreasing_trend(std::span<const double> values, std::span<const double> ses,
                      std::string* detail) {
    if (values.size() < 2) return false;
    int inversions = 0;
    bool big_inversion = false;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        const double step = values[i + 1] - values[i];
        if (step >= 0.0) {
            ++inversions;
            const double se = std::sqrt(ses[i] * ses[i] + ses[i + 1] * ses[i + 1]);
            if (step >= se) big_inversion = true;
        }
    }
    const bool overall = values.back() < values.front();
    const bool pass = inversions == 0 || (overall && inversions <= 1 && !big_inversion);
    if (detail) {
        std::ostringstream os;
        os << "inversions=" << inversions << ", overall " << values.front() << " -> "
           << values.back();
        *detail = os.str();
    }
    return pass;
}

double loglog_slope(std::span<const int> xs, std::span<const double> ys) {
    const std::size_t m = xs.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double lx = std::log(static_cast<double>(xs[i]));
        const double ly = std::log(std::max(ys[i], 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double d = static_cast<double>(m) * sxx - sx * sx;
    return (static_cast<double>(m) * sxy - sx * sy) / d;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_distance_to_normal(std::vector<double> sample, double sigma) {
    if (sample.empty() || sigma <= 0.0) return 0.0;
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double F = normal_cdf(sample[i] / sigma);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - F));
        d = std::max(d, std::abs(F - static_cast<double>(i) / n));
    }
    return d;
}

namespace {

// deterministic task sweep: results land in index order whatever the
// worker count, so aggregation and CSV bytes never depend on scheduling
void parallel_for(int tasks, int workers, const std::function<void(int)>& body) {
    workers = std::max(1, std::min(workers, tasks));
    if (workers == 1) {
        for (int t = 0; t < tasks; ++t) body(t);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mu;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                const int t = next.fetch_add(1);
                if (t >= tasks) return;
                try {
                    body(t);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<Site> annulus_sites(const FieldRealization& big, int n_inner) {
    const int lo_in = -(n_inner / 2);
    std::vector<Site> out;
    for (std::size_t i = 0; i < big.site_count(); ++i) {
        const Site z = big.site_at(i);
        bool inner = true;
        for (int a = 0; a < big.dim(); ++a)
            if (z[a] < lo_in || z[a] >= lo_in + n_inner) inner = false;
        if (!inner) out.push_back(z);
    }
    return out;
}

std::vector<Site> lex_sorted_sites(const FieldRealization& f) {
    std::vector<Site> sites;
    sites.reserve(f.site_count());
    for (std::size_t i = 0; i < f.site_count(); ++i) sites.push_back(f.site_at(i));
    std::sort(sites.begin(), sites.end(),
              [&](Site a, Site b) { return lex_compare(a, b, f.dim()) < 0; });
    return sites;
}

}  // namespace

double raw_gap(const FieldRealization& field, const StatContext& ctx, double theta,
               const GridSpec& grid) {
    const ExtremalPair pair = extremal_pair(field, ctx.potential, theta, grid, ctx.solver);
    return pair.energy_plus.total - pair.energy_minus.total;
}

double conditional_gap(const FieldRealization& inner_field, const StatContext& ctx, double theta,
                       int n, int m_extra, int replicas, std::uint64_t aux_seed) {
    if (replicas < 1) throw ConfigError("conditional_gap: replicas must be >= 1");
    if (m_extra < 0) throw ConfigError("conditional_gap: margin must be >= 0");
    if (m_extra == 0) return raw_gap(inner_field, ctx, theta, ctx.grid(inner_field.dim(), n));

    const int n_big = n + 2 * m_extra;
    const FieldRealization big = inner_field.resized(n_big);
    const GridSpec grid_big = ctx.grid(inner_field.dim(), n_big);
    const Region inner = centered_region(grid_big, n);
    const std::vector<Site> annulus = annulus_sites(big, n);

    KahanSum acc;
    for (int k = 0; k < replicas; ++k) {
        const FieldRealization draw =
            big.resampled(annulus, rng::combine(aux_seed, static_cast<std::uint64_t>(k)));
        const ExtremalPair pair = extremal_pair(draw, ctx.potential, theta, grid_big, ctx.solver);
        const double gap = energy(pair.v_plus, draw, ctx.potential, theta, inner).total -
                           energy(pair.v_minus, draw, ctx.potential, theta, inner).total;
        acc.add(gap);
    }
    return acc.value() / static_cast<double>(replicas);
}

W0Estimate w0_increment(const FieldRealization& field, const StatContext& ctx, double theta,
                        int replicas, std::uint64_t aux_seed) {
    if (replicas < 1) throw ConfigError("w0_increment: replicas must be >= 1");
    if (!field.contains(Site{})) throw ConfigError("w0_increment: origin not in the window");
    const GridSpec grid = ctx.grid(field.dim(), field.n());
    const std::vector<Site> after = sites_lex_greater(field, Site{}, true);
    const Site origin{};

    std::vector<double> increments;
    increments.reserve(static_cast<std::size_t>(replicas));
    for (int k = 0; k < replicas; ++k) {
        const std::uint64_t rk = rng::combine(aux_seed, static_cast<std::uint64_t>(k));
        const FieldRealization a = field.resampled(after, rng::combine(rk, 1));
        const FieldRealization b = a.resampled(std::span<const Site>(&origin, 1), rng::combine(rk, 2));
        increments.push_back(raw_gap(a, ctx, theta, grid) - raw_gap(b, ctx, theta, grid));
    }
    const MeanSE m = mean_se(increments);
    return {m.mean, m.se};
}

std::vector<double> lex_conditional_gaps(const FieldRealization& field, const StatContext& ctx,
                                         double theta, int replicas, std::uint64_t aux_seed) {
    const GridSpec grid = ctx.grid(field.dim(), field.n());
    const std::vector<Site> order = lex_sorted_sites(field);
    const std::size_t N = order.size();

    std::vector<double> ehat(N + 1, 0.0);
    for (std::size_t j = 0; j <= N; ++j) {
        // redraw sites with index >= j (shared streams across j)
        std::vector<Site> redraw(order.begin() + static_cast<std::ptrdiff_t>(j), order.end());
        KahanSum acc;
        for (int k = 0; k < replicas; ++k) {
            const FieldRealization draw =
                redraw.empty()
                    ? field
                    : field.resampled(redraw, rng::combine(aux_seed, static_cast<std::uint64_t>(k)));
            acc.add(raw_gap(draw, ctx, theta, grid));
        }
        ehat[j] = acc.value() / static_cast<double>(replicas);
    }
    return ehat;
}

double origin_conditional_gap(const FieldRealization& field, const StatContext& ctx, double theta,
                              int replicas, std::uint64_t aux_seed) {
    const GridSpec grid = ctx.grid(field.dim(), field.n());
    std::vector<Site> others;
    for (std::size_t i = 0; i < field.site_count(); ++i) {
        const Site z = field.site_at(i);
        if (!(z == Site{})) others.push_back(z);
    }
    KahanSum acc;
    for (int k = 0; k < replicas; ++k) {
        const FieldRealization draw =
            field.resampled(others, rng::combine(aux_seed, static_cast<std::uint64_t>(k)));
        acc.add(raw_gap(draw, ctx, theta, grid));
    }
    return acc.value() / static_cast<double>(replicas);
}

double origin_conditional_gap_sq(const FieldRealization& field, const StatContext& ctx,
                                 double theta, int replicas_per_half, std::uint64_t aux_seed) {
    const double a = origin_conditional_gap(field, ctx, theta, replicas_per_half,
                                            rng::combine(aux_seed, 1));
    const double b = origin_conditional_gap(field, ctx, theta, replicas_per_half,
                                            rng::combine(aux_seed, 2));
    return a * b;
}

bool MonotonicityReport::all_pass() const {
    return std::all_of(rows.begin(), rows.end(),
                       [](const MonotonicityRow& r) { return r.sandwich_ok && r.monotone_ok; });
}

MonotonicityReport field_monotonicity_check(const FieldRealization& field, const StatContext& ctx,
                                            double theta, const GridSpec& grid, Site i,
                                            std::span<const double> h_list, double tol) {
    MonotonicityReport rep;
    rep.site = i;
    const SolveResult base = extremal_max(field, ctx.potential, theta, grid, ctx.solver);
    const double base_energy = base.energy.total;
    const double base_cell = cell_integral(base.profile, i);

    for (double h : h_list) {
        MonotonicityRow row;
        row.h = h;
        const FieldRealization lowered = field.with_value(i, field.value(i) - h);
        const SolveResult low = extremal_max(lowered, ctx.potential, theta, grid, ctx.solver);
        const double low_cell = cell_integral(low.profile, i);
        row.upper = theta * h * base_cell;
        row.delta_g1 = low.energy.total - base_energy;
        row.lower = theta * h * low_cell;
        row.cell_avg_drop = base_cell - low_cell;
        row.sandwich_ok = row.upper >= row.delta_g1 - tol && row.delta_g1 >= row.lower - tol;
        row.monotone_ok = row.cell_avg_drop >= -tol;
        rep.rows.push_back(row);
    }
    return rep;
}

CellRecords collect_cell(const StatContext& ctx, int dim, int n, double theta, int reps,
                         std::uint64_t master_seed, const NestedOptions& nested, int workers,
                         int failure_budget) {
    const GridSpec grid = ctx.grid(dim, n);
    const int m_extra = nested.m_extra >= 0 ? nested.m_extra
                                            : default_conditioning_margin(ctx.potential);

    CellRecords out;
    out.records.resize(static_cast<std::size_t>(reps));
    std::vector<StatRecord>& records = out.records;
    std::atomic<int> failures{0};
    parallel_for(reps, workers, [&](int r) {
        const std::uint64_t pair_seed =
            rng::combine(master_seed, static_cast<std::uint64_t>(r / 2));
        FieldRealization field = sample_field(dim, n, ctx.dist, pair_seed);
        if (r % 2 == 1) field = negate(field);  // antithetic twin

        StatRecord rec;
        rec.seed = pair_seed;
        rec.n = n;
        rec.dim = dim;
        rec.theta = theta;

        ExtremalPair pair;
        try {
            pair = extremal_pair(field, ctx.potential, theta, grid, ctx.solver);
        } catch (const NonConvergenceError&) {
            rec.valid = false;
            records[static_cast<std::size_t>(r)] = rec;
            failures.fetch_add(1);
            return;
        }
        rec.D_n = pair.energy_plus.total - pair.energy_minus.total;
        rec.m_plus_hat = cell_integral(pair.v_plus, Site{});
        rec.m_minus_hat = cell_integral(pair.v_minus, Site{});
        const double vol = std::pow(static_cast<double>(n), dim);
        rec.e_hat_plus = pair.energy_plus.total / vol;
        rec.e_hat_minus = pair.energy_minus.total / vol;
        rec.gap_integral =
            (profile_integral(pair.v_plus) - profile_integral(pair.v_minus)) / vol;
        rec.linfty_max = std::max(linfty_norm(pair.v_plus), linfty_norm(pair.v_minus));
        rec.lipschitz_seminorm =
            std::max(lipschitz_seminorm(pair.v_plus), lipschitz_seminorm(pair.v_minus));

        const std::uint64_t aux_root = rng::combine(pair_seed, static_cast<std::uint64_t>(r % 2));
        if (nested.with_fhat)
            rec.F_hat = conditional_gap(field, ctx, theta, n, m_extra, nested.k_fhat,
                                        rng::combine(aux_root, 0xF));
        if (nested.with_w0) {
            const W0Estimate w0 =
                w0_increment(field, ctx, theta, nested.k_w0, rng::combine(aux_root, 0xA));
            rec.W0_hat = w0.value;
            rec.w0_se = w0.se;
        }
        if (nested.with_b_lower)
            rec.b_lower_sample = origin_conditional_gap_sq(field, ctx, theta, nested.k_b_lower,
                                                           rng::combine(aux_root, 0xB));
        records[static_cast<std::size_t>(r)] = rec;
    });
    out.failures = failures.load();
    if (out.failures > failure_budget)
        throw NonConvergenceError("cell aborted: solver failure budget exceeded", {},
                                  0.0, out.failures);
    return out;
}

double boundary_blend_cost(const FieldRealization& field, const StatContext& ctx, double theta,
                           const GridSpec& grid) {
    const MultistartResult ms = minimize_multistart(field, ctx.potential, theta, grid, ctx.solver);
    const SolveResult plus = extremal_max(field, ctx.potential, theta, grid, ctx.solver);

    // psi ramps 0 -> 1 over two mesoscopic units from the boundary; the
    // blend keeps v+ data near the boundary and the free minimizer inside
    GridSpec ggrid = grid;
    ggrid.bc = BcKind::neumann;
    const LatticeView lat(ggrid);
    DiscreteProfile blend = ms.best().profile;
    blend.provenance = Provenance::blended;
    const double h = ggrid.h();
    const double side = static_cast<double>(ggrid.n);
    for (int iz = 0; iz < lat.nodes[2]; ++iz)
        for (int iy = 0; iy < lat.nodes[1]; ++iy)
            for (int ix = 0; ix < lat.nodes[0]; ++ix) {
                const int i3[3] = {ix, iy, iz};
                double dist = 1e300;
                for (int a = 0; a < ggrid.dim; ++a) {
                    const double x = i3[a] * h;
                    dist = std::min({dist, x, side - x});
                }
                const double psi = std::clamp(dist / 2.0, 0.0, 1.0);
                const std::size_t k = lat.node_index(ix, iy, iz);
                blend.values[k] = psi * ms.best().profile.values[k] + (1.0 - psi) * plus.profile.values[k];
            }
    return energy(blend, field, ctx.potential, theta).total - ms.best().energy.total;
}

CellAggregate aggregate_records(int dim, int n, double theta,
                                std::span<const StatRecord> records) {
    CellAggregate agg;
    agg.dim = dim;
    agg.n = n;
    agg.theta = theta;
    agg.count = static_cast<int>(records.size());

    auto collect = [&](auto getter) {
        std::vector<double> xs;
        xs.reserve(records.size());
        for (const StatRecord& r : records) {
            if (!r.valid) continue;
            const auto v = getter(r);
            if (v) xs.push_back(*v);
        }
        return mean_se(xs);
    };
    auto always = [](double x) { return std::optional<double>(x); };

    agg.D_n = collect([&](const StatRecord& r) { return always(r.D_n); });
    agg.abs_D = collect([&](const StatRecord& r) { return always(std::abs(r.D_n)); });
    agg.F_hat = collect([](const StatRecord& r) { return r.F_hat; });
    agg.m_plus = collect([&](const StatRecord& r) { return always(r.m_plus_hat); });
    agg.m_minus = collect([&](const StatRecord& r) { return always(r.m_minus_hat); });
    agg.m_sum = collect([&](const StatRecord& r) { return always(r.m_plus_hat + r.m_minus_hat); });
    agg.e_plus = collect([&](const StatRecord& r) { return always(r.e_hat_plus); });
    agg.e_minus = collect([&](const StatRecord& r) { return always(r.e_hat_minus); });
    agg.e_diff = collect([&](const StatRecord& r) { return always(r.e_hat_plus - r.e_hat_minus); });
    agg.W0 = collect([](const StatRecord& r) { return r.W0_hat; });
    agg.gap_integral = collect([&](const StatRecord& r) { return always(r.gap_integral); });
    agg.linfty = collect([&](const StatRecord& r) { return always(r.linfty_max); });
    agg.lipschitz = collect([&](const StatRecord& r) { return always(r.lipschitz_seminorm); });
    for (const StatRecord& r : records) {
        if (!r.valid) continue;
        agg.linfty_worst = std::max(agg.linfty_worst, r.linfty_max);
        agg.lipschitz_worst = std::max(agg.lipschitz_worst, r.lipschitz_seminorm);
    }

    const double vol = std::pow(static_cast<double>(n), dim);
    if (agg.F_hat.count > 1) {
        agg.var_F_over_volume = agg.F_hat.sd * agg.F_hat.sd / vol;
        std::vector<double> std_f;
        for (const StatRecord& r : records)
            if (r.valid && r.F_hat) std_f.push_back(*r.F_hat / std::sqrt(vol));
        const MeanSE sf = mean_se(std_f);
        agg.normality_distance = ks_distance_to_normal(std_f, sf.sd > 0 ? sf.sd : 1.0);
    }
    if (agg.W0.count > 0) {
        std::vector<double> w0sq;
        for (const StatRecord& r : records)
            if (r.valid && r.W0_hat) w0sq.push_back(*r.W0_hat * *r.W0_hat);
        const MeanSE m = mean_se(w0sq);
        agg.b_sq_hat = m.mean;
        agg.b_sq_hat_se = m.se;
    }
    {
        std::vector<double> bl;
        for (const StatRecord& r : records)
            if (r.valid && r.b_lower_sample) bl.push_back(*r.b_lower_sample);
        if (!bl.empty()) {
            const MeanSE m = mean_se(bl);
            agg.b_sq_lower = m.mean;
            agg.b_sq_lower_se = m.se;
        }
    }
    return agg;
}

std::vector<VarianceCell> variance_increments(const StatContext& ctx, int dim, double theta,
                                              std::span<const int> n_list, int reps, int replicas,
                                              std::span<const double> a_list,
                                              std::uint64_t master_seed, int workers) {
    std::vector<VarianceCell> cells;
    for (int n : n_list) {
        VarianceCell cell;
        cell.n = n;
        const GridSpec grid = ctx.grid(dim, n);
        const double vol = std::pow(static_cast<double>(n), dim);

        std::vector<std::vector<double>> incs(static_cast<std::size_t>(reps));
        std::vector<double> defects(static_cast<std::size_t>(reps), 0.0);
        parallel_for(reps, workers, [&](int r) {
            const std::uint64_t seed = rng::combine(master_seed, static_cast<std::uint64_t>(r));
            const FieldRealization field = sample_field(dim, n, ctx.dist, seed);
            const std::uint64_t aux = rng::combine(seed, 0xE);
            const std::vector<double> ehat = lex_conditional_gaps(field, ctx, theta, replicas, aux);
            std::vector<double> y(ehat.size() - 1);
            KahanSum total;
            for (std::size_t j = 1; j < ehat.size(); ++j) {
                y[j - 1] = ehat[j] - ehat[j - 1];
                total.add(y[j - 1]);
            }
            const double d = raw_gap(field, ctx, theta, grid);
            defects[static_cast<std::size_t>(r)] = std::abs(total.value() - (d - ehat.front()));
            incs[static_cast<std::size_t>(r)] = std::move(y);
        });

        const double N = vol;  // |window| = n^d sites
        std::vector<double> v_r(incs.size(), 0.0);
        std::vector<std::vector<double>> u_r(a_list.size(),
                                             std::vector<double>(incs.size(), 0.0));
        for (std::size_t r = 0; r < incs.size(); ++r) {
            KahanSum vsum;
            std::vector<KahanSum> usum(a_list.size());
            for (double yi : incs[r]) {
                vsum.add(yi * yi / N);
                for (std::size_t ai = 0; ai < a_list.size(); ++ai)
                    if (std::abs(yi) >= a_list[ai] * std::sqrt(N)) usum[ai].add(yi * yi / N);
            }
            v_r[r] = vsum.value();
            for (std::size_t ai = 0; ai < a_list.size(); ++ai) u_r[ai][r] = usum[ai].value();
        }
        const MeanSE vm = mean_se(v_r);
        cell.V_hat = vm.mean;
        cell.V_se = vm.se;
        for (std::size_t ai = 0; ai < a_list.size(); ++ai) {
            const MeanSE um = mean_se(u_r[ai]);
            cell.U_hat.push_back({a_list[ai], um.mean, um.se});
        }
        cell.telescope_defect = *std::max_element(defects.begin(), defects.end());
        cells.push_back(std::move(cell));
    }
    return cells;
}

}  // namespace rdw
