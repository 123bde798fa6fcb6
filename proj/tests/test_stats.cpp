#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rdw/errors.hpp"
#include "rdw/stats.hpp"

using namespace rdw;

namespace {

StatContext make_ctx() {
    StatContext ctx;
    return ctx;
}

}  // namespace

TEST_CASE("statistics helpers") {
    const double xs[5] = {1.0, 2.0, 3.0, 4.0, 5.0};
    const MeanSE m = mean_se(std::span<const double>(xs, 5));
    CHECK(m.mean == doctest::Approx(3.0));
    CHECK(m.sd == doctest::Approx(std::sqrt(2.5)));
    CHECK(m.se == doctest::Approx(std::sqrt(2.5 / 5.0)));

    const int ns[3] = {8, 16, 32};
    const double power[3] = {2.0, 4.0, 8.0};  // slope exactly 1
    CHECK(loglog_slope(ns, power) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-6));

    // monotone decreasing passes; one small inversion passes with overall
    // decrease; a large inversion fails
    const double dec[3] = {3.0, 2.0, 1.0}, se1[3] = {0.1, 0.1, 0.1};
    CHECK(decreasing_trend(dec, se1));
    const double inv[3] = {3.0, 3.05, 1.0};
    CHECK(decreasing_trend(inv, se1));
    const double bad[3] = {3.0, 4.5, 1.0};
    CHECK_FALSE(decreasing_trend(bad, se1));
}

TEST_CASE("ks distance recognizes normal-ish and flat samples") {
    std::vector<double> approx_normal;
    for (int i = 1; i < 400; ++i) {
        // inverse-CDF samples of an exact normal
        const double u = i / 400.0;
        double lo = -10, hi = 10;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (normal_cdf(mid) < u ? lo : hi) = mid;
        }
        approx_normal.push_back(0.5 * (lo + hi));
    }
    CHECK(ks_distance_to_normal(approx_normal, 1.0) < 0.01);
    std::vector<double> flat;
    for (int i = 0; i < 400; ++i) flat.push_back(-1.0 + 2.0 * i / 399.0);
    CHECK(ks_distance_to_normal(flat, 1.0) > 0.05);
}

TEST_CASE("raw gap: zero at theta 0, antisymmetric in the field") {
    const StatContext ctx = make_ctx();
    const GridSpec g = ctx.grid(1, 8);
    const FieldRealization f = sample_field(1, 8, ctx.dist, 11);
    CHECK(raw_gap(f, ctx, 0.0, g) == 0.0);

    const double d = raw_gap(f, ctx, 0.5, g);
    const double dn = raw_gap(negate(f), ctx, 0.5, g);
    CHECK(d == -dn);
    CHECK(d != 0.0);
}

TEST_CASE("conditional gap degenerates to the raw gap at margin zero") {
    const StatContext ctx = make_ctx();
    const FieldRealization f = sample_field(1, 8, ctx.dist, 21);
    const double theta = 0.5;
    CHECK(conditional_gap(f, ctx, theta, 8, 0, 4, 99) ==
          raw_gap(f, ctx, theta, ctx.grid(1, 8)));
    CHECK(conditional_gap(f, ctx, 0.0, 8, 3, 2, 99) == 0.0);

    // determinism in the aux seed
    const double a = conditional_gap(f, ctx, theta, 8, 4, 3, 7);
    const double b = conditional_gap(f, ctx, theta, 8, 4, 3, 7);
    CHECK(a == b);
    const double c = conditional_gap(f, ctx, theta, 8, 4, 3, 8);
    CHECK(a != c);
}

TEST_CASE("boundary influence is screened at the default margin") {
    const StatContext ctx = make_ctx();
    const int n = 8;
    const int m = default_conditioning_margin(ctx.potential);
    CHECK(m == 15);  // ceil(10 sqrt(2))
    const FieldRealization f = sample_field(1, n, ctx.dist, 17);
    const double theta = 0.5;

    // pushing the Dirichlet boundary out by two more cells moves the
    // center cell by less than the linearized screening estimate
    double center[2];
    int k = 0;
    for (int extra : {m, m + 2}) {
        const FieldRealization big = f.resized(n + 2 * extra);
        const GridSpec gbig = ctx.grid(1, n + 2 * extra);
        const SolveResult plus = extremal_max(big, ctx.potential, theta, gbig, ctx.solver);
        center[k++] = cell_integral(plus.profile, Site{});
    }
    CHECK(std::abs(center[0] - center[1]) < 1e-4);
}

TEST_CASE("w0 increment: zero without disorder coupling, bounded with it") {
    const StatContext ctx = make_ctx();
    const FieldRealization f = sample_field(1, 8, ctx.dist, 31);
    CHECK(w0_increment(f, ctx, 0.0, 2, 5).value == 0.0);

    const double theta = 0.5;
    const double bval = extremal_bc_value(ctx.potential, theta, ctx.dist);
    for (int rep = 0; rep < 3; ++rep) {
        const FieldRealization fr = sample_field(1, 8, ctx.dist, 40 + static_cast<std::uint64_t>(rep));
        const W0Estimate w0 = w0_increment(fr, ctx, theta, 8, 77);
        CHECK(std::abs(w0.value) <= 2.0 * theta * bval + 3.0 * w0.se + 1e-9);
    }
}

TEST_CASE("lexicographic increments telescope exactly under shared streams") {
    const StatContext ctx = make_ctx();
    const FieldRealization f = sample_field(1, 6, ctx.dist, 51);
    const double theta = 0.5;
    const int K = 3;
    const auto ehat = lex_conditional_gaps(f, ctx, theta, K, 123);
    CHECK(ehat.size() == 7);

    const double d = raw_gap(f, ctx, theta, ctx.grid(1, 6));
    // E_N fixes every site: equals D exactly
    CHECK(ehat.back() == d);
    KahanSum sum;
    for (std::size_t j = 1; j < ehat.size(); ++j) sum.add(ehat[j] - ehat[j - 1]);
    CHECK(std::abs(sum.value() - (d - ehat.front())) < 1e-9);
}

TEST_CASE("one-site sandwich and cell-average monotonicity") {
    const StatContext ctx = make_ctx();
    const GridSpec g = ctx.grid(1, 8);
    const FieldRealization f = sample_field(1, 8, ctx.dist, 61);

    // h = 0 or theta = 0 degenerate to zeros
    {
        const double h0[1] = {0.0};
        const MonotonicityReport rep =
            field_monotonicity_check(f, ctx, 0.5, g, Site{}, h0, 2e-8);
        CHECK(rep.rows[0].upper == 0.0);
        CHECK(std::abs(rep.rows[0].delta_g1) < 1e-12);
        CHECK(rep.all_pass());
    }
    {
        const double hs[1] = {0.1};
        const MonotonicityReport rep =
            field_monotonicity_check(f, ctx, 0.0, g, Site{}, hs, 2e-8);
        CHECK(rep.rows[0].upper == 0.0);
        CHECK(rep.rows[0].lower == 0.0);
        CHECK(rep.all_pass());
    }
    {
        const double hs[3] = {0.05, 0.1, 0.2};
        const MonotonicityReport rep =
            field_monotonicity_check(f, ctx, 0.5, g, Site{}, hs, 2e-8);
        CHECK(rep.all_pass());
        for (const MonotonicityRow& row : rep.rows) {
            CHECK(row.upper >= row.delta_g1 - 2e-8);
            CHECK(row.delta_g1 >= row.lower - 2e-8);
        }
    }
}

TEST_CASE("collect_cell: antithetic exactness and worker independence") {
    const StatContext ctx = make_ctx();
    NestedOptions nested;
    nested.with_fhat = true;
    nested.k_fhat = 2;
    nested.m_extra = 2;

    const CellRecords r1 = collect_cell(ctx, 1, 8, 0.5, 8, 12345, nested, 1);
    const CellRecords r4 = collect_cell(ctx, 1, 8, 0.5, 8, 12345, nested, 4);
    REQUIRE(r1.records.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(r1.records[i].D_n == r4.records[i].D_n);
        CHECK(r1.records[i].F_hat == r4.records[i].F_hat);
        CHECK(r1.records[i].m_plus_hat == r4.records[i].m_plus_hat);
    }

    // twin pairs cancel exactly
    for (std::size_t i = 0; i + 1 < 8; i += 2) {
        CHECK(r1.records[i].D_n == -r1.records[i + 1].D_n);
        CHECK(r1.records[i].m_plus_hat == -r1.records[i + 1].m_minus_hat);
    }
    const CellAggregate agg = aggregate_records(1, 8, 0.5, r1.records);
    CHECK(agg.D_n.mean == 0.0);
    CHECK(agg.m_sum.mean == 0.0);
    CHECK(agg.count == 8);
}

TEST_CASE("gap integral is exactly 2 without disorder") {
    const StatContext ctx = make_ctx();
    const CellRecords recs = collect_cell(ctx, 1, 8, 0.0, 2, 1, {}, 1);
    for (const StatRecord& r : recs.records) {
        CHECK(r.gap_integral == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(r.D_n == 0.0);
        CHECK(r.e_hat_plus == 0.0);
    }
}

TEST_CASE("variance cells: telescope defect small, tail mass shrinks in n") {
    const StatContext ctx = make_ctx();
    const int ns[2] = {4, 8};
    const double as[2] = {0.05, 0.2};
    const auto cells = variance_increments(ctx, 1, 0.5, ns, 6, 3, as, 777, 2);
    REQUIRE(cells.size() == 2);
    for (const VarianceCell& c : cells) {
        CHECK(c.telescope_defect < 1e-9);
        CHECK(c.V_hat >= 0.0);
        REQUIRE(c.U_hat.size() == 2);
        // U(a) <= V by construction
        for (const auto& u : c.U_hat) CHECK(u.mean <= c.V_hat + 1e-15);
    }
}

TEST_CASE("blend cost is nonnegative surface work") {
    const StatContext ctx = make_ctx();
    for (int rep = 0; rep < 3; ++rep) {
        const FieldRealization f = sample_field(1, 8, ctx.dist, 80 + static_cast<std::uint64_t>(rep));
        const double cost = boundary_blend_cost(f, ctx, 0.5, ctx.grid(1, 8));
        CHECK(cost >= -1e-10);
    }
}

TEST_CASE("cell abort past the failure budget") {
    StatContext ctx = make_ctx();
    ctx.solver.max_iters = 1;
    ctx.solver.residual_tol = 1e-300;
    ctx.solver.energy_tol = 1e-300;
    CHECK_THROWS_AS((void)collect_cell(ctx, 1, 8, 0.5, 4, 5, {}, 1, 0), NonConvergenceError);
}
