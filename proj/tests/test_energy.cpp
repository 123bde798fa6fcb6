#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rdw/energy.hpp"
#include "rdw/rng.hpp"

using namespace rdw;

namespace {

const DistributionSpec kUniform{};
const PotentialSpec kW{};

FieldRealization constant_field(int dim, int n, double value) {
    FieldRealization f = sample_field(dim, n, kUniform, 1);
    for (std::size_t i = 0; i < f.site_count(); ++i) f = f.with_value(f.site_at(i), value);
    return f;
}

DiscreteProfile random_profile(const GridSpec& g, double amp, std::uint64_t seed) {
    DiscreteProfile v = constant_profile(g, 0.0);
    for (std::size_t k = 0; k < v.values.size(); ++k)
        v.values[k] = rng::uniform_symmetric(rng::mix(rng::combine(seed, k)), amp);
    return v;
}

GridSpec grid_of(int dim, int n, int p) {
    GridSpec g;
    g.dim = dim;
    g.n = n;
    g.p = p;
    return g;
}

}  // namespace

TEST_CASE("constant profiles have closed-form energies") {
    // v = 1, theta = 0: both wells are energy zero
    for (int dim : {1, 2, 3}) {
        const GridSpec g = grid_of(dim, 4, 2);
        const FieldRealization f = sample_field(dim, 4, kUniform, 3);
        const EnergyBreakdown e = energy(constant_profile(g, 1.0), f, kW, 0.0);
        CHECK(e.gradient_term == 0.0);
        CHECK(e.potential_term == 0.0);
        CHECK(e.field_term == 0.0);
        CHECK(e.total == 0.0);
    }

    // v = 1, g = 1, theta = 0.5, d = 1, n = 4: field term -theta n, rest zero
    const GridSpec g = grid_of(1, 4, 8);
    const FieldRealization ones = constant_field(1, 4, 1.0);
    const EnergyBreakdown e = energy(constant_profile(g, 1.0), ones, kW, 0.5);
    CHECK(e.gradient_term == 0.0);
    CHECK(e.potential_term == 0.0);
    CHECK(e.field_term == doctest::Approx(-2.0).epsilon(1e-13));
    CHECK(e.total == doctest::Approx(-2.0).epsilon(1e-13));
}

TEST_CASE("linear ramp against an independent fine-quadrature oracle") {
    const int n = 4;
    const double alpha = 0.1, beta = 0.35;
    const FieldRealization f = sample_field(1, n, kUniform, 17);

    // continuum oracle for v(x) = alpha + beta (x - x_lo): gradient exact,
    // potential by dense Simpson, field exact per cell (v linear)
    const double x_lo = -(n / 2) - 0.5;
    double oracle = beta * beta * n;
    {
        const int fine = 1 << 14;
        const double hq = static_cast<double>(n) / fine;
        double acc = 0.0;
        for (int i = 0; i < fine; ++i) {
            const double xm = x_lo + (i + 0.5) * hq;
            const double x0 = x_lo + i * hq, x1 = x0 + hq;
            auto val = [&](double x) { return kW.w(alpha + beta * (x - x_lo)); };
            acc += hq / 6.0 * (val(x0) + 4.0 * val(xm) + val(x1));
        }
        oracle += acc;
    }
    const double theta = 0.4;
    for (std::size_t i = 0; i < f.site_count(); ++i) {
        const Site z = f.site_at(i);
        const double mid = alpha + beta * (z[0] - x_lo);  // cell average of v
        oracle -= theta * f.value(z) * mid;
    }

    double prev_err = 0.0;
    for (int p : {4, 8, 16, 32}) {
        const GridSpec g = grid_of(1, n, p);
        DiscreteProfile v = constant_profile(g, 0.0);
        for (int k = 0; k <= n * p; ++k) v.values[static_cast<std::size_t>(k)] = alpha + beta * (k * g.h());
        const double err = std::abs(energy(v, f, kW, theta).total - oracle);
        if (p > 4) CHECK(err < 0.6 * prev_err);  // at least first order in h, expect ~4x
        prev_err = err;
    }
    CHECK(prev_err < 1e-4);
}

TEST_CASE("quadrature error decays at second order") {
    const int n = 4;
    const FieldRealization f = sample_field(2, n, kUniform, 23);
    const double theta = 0.5;

    auto profile_on = [&](const GridSpec& g) {
        DiscreteProfile v = constant_profile(g, 0.0);
        const LatticeView lat(g);
        for (int iy = 0; iy < lat.nodes[1]; ++iy)
            for (int ix = 0; ix < lat.nodes[0]; ++ix) {
                const double x = g.x_lo() + ix * g.h(), y = g.x_lo() + iy * g.h();
                v.values[lat.node_index(ix, iy, 0)] =
                    0.8 * std::cos(M_PI * x / n) * std::sin(M_PI * y / n) + 0.3;
            }
        return v;
    };

    const GridSpec gref = grid_of(2, n, 64);
    const double ref = energy(profile_on(gref), f, kW, theta).total;
    std::vector<int> ps{2, 4, 8, 16};
    std::vector<double> errs;
    for (int p : ps) errs.push_back(std::abs(energy(profile_on(grid_of(2, n, p)), f, kW, theta).total - ref));
    // slope of log err vs log h
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double lx = std::log(1.0 / ps[i]), ly = std::log(errs[i]);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    }
    const double m = static_cast<double>(ps.size());
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(slope >= 1.8);
}

TEST_CASE("residual equals the assembled energy gradient (FD oracle)") {
    for (int dim : {1, 2}) {
        const int n = dim == 1 ? 4 : 2;
        const int p = dim == 1 ? 4 : 3;
        GridSpec g = grid_of(dim, n, p);
        const FieldRealization f = sample_field(dim, n, kUniform, 71);
        const double theta = 0.5;

        SUBCASE(dim == 1 ? "neumann d1" : "neumann d2") {}

        for (BcKind bc : {BcKind::neumann, BcKind::dirichlet_plus}) {
            g.bc = bc;
            g.bc_value = 0.7;
            DiscreteProfile v = random_profile(g, 1.2, 1234 + dim);
            if (g.dirichlet())
                for (std::size_t b : boundary_nodes(g)) v.values[b] = g.trace();

            const std::vector<double> res = el_residual_field(v, f, kW, theta);

            // lumped node weights, rebuilt independently
            const LatticeView lat(g);
            std::vector<double> lump(v.values.size(), 0.0);
            const double cw = 1.0 / (1 << dim);
            double cv = 1.0;
            for (int a = 0; a < dim; ++a) cv *= g.h();
            for (int cz = 0; cz < std::max(lat.cells[2], 1); ++cz)
                for (int cy = 0; cy < std::max(lat.cells[1], 1); ++cy)
                    for (int cx = 0; cx < std::max(lat.cells[0], 1); ++cx) {
                        std::size_t corners[8];
                        int nc = 0;
                        const std::size_t k = lat.node_index(cx, cy, cz);
                        corners[nc++] = k;
                        corners[nc++] = k + lat.node_stride[0];
                        if (dim > 1) {
                            corners[nc++] = k + lat.node_stride[1];
                            corners[nc++] = k + lat.node_stride[1] + lat.node_stride[0];
                        }
                        for (int q = 0; q < nc; ++q) lump[corners[q]] += cv * cw;
                    }

            const double delta = 1e-5;
            double worst = 0.0;
            for (std::size_t k = 0; k < v.values.size(); ++k) {
                DiscreteProfile vp = v, vm = v;
                vp.values[k] += delta;
                vm.values[k] -= delta;
                const double fd = (energy(vp, f, kW, theta).total - energy(vm, f, kW, theta).total) /
                                  (2.0 * delta);
                const double expected = -fd / (2.0 * lump[k]);
                const bool pinned = g.dirichlet() && [&] {
                    for (std::size_t b : boundary_nodes(g))
                        if (b == k) return true;
                    return false;
                }();
                if (pinned) CHECK(res[k] == 0.0);
                else worst = std::max(worst, std::abs(res[k] - expected));
            }
            CHECK(worst < 1e-6);
        }
    }
}

TEST_CASE("residual closed forms") {
    const GridSpec g = grid_of(1, 8, 8);
    const FieldRealization f = sample_field(1, 8, kUniform, 2);
    CHECK(el_residual(constant_profile(g, 1.0), f, kW, 0.0) == 0.0);

    // constant 1 + c0 theta solves the quadratic-branch equation for g = 1
    const double theta = 0.2;
    const FieldRealization ones = constant_field(1, 8, 1.0);
    CHECK(el_residual(constant_profile(g, 1.0 + theta), ones, kW, theta) <= 1e-14);
}

TEST_CASE("energy is exactly affine in a single site value") {
    const GridSpec g = grid_of(2, 4, 4);
    const FieldRealization f = sample_field(2, 4, kUniform, 9);
    const DiscreteProfile v = random_profile(g, 1.1, 77);
    const double theta = 0.5;
    const double base = energy(v, f, kW, theta).total;

    double sum_fd = 0.0;
    for (std::size_t i = 0; i < f.site_count(); ++i) {
        const Site z = f.site_at(i);
        const double fd = field_derivative(v, theta, z);
        const double delta = 0.37;
        const FieldRealization fp = f.with_value(z, f.value(z) + delta);
        const double shifted = energy(v, fp, kW, theta).total;
        CHECK(std::abs((shifted - base) - delta * fd) < 1e-13);
        sum_fd += fd;
    }
    CHECK(sum_fd == doctest::Approx(-theta * profile_integral(v)).epsilon(1e-12));

    CHECK(field_derivative(constant_profile(g, 1.0), theta, Site{}) ==
          doctest::Approx(-theta).epsilon(1e-13));
    CHECK_THROWS_AS((void)field_derivative(v, theta, Site{50, 0}), std::domain_error);
}

TEST_CASE("energy is additive over a cell partition") {
    const GridSpec g = grid_of(2, 4, 4);
    const FieldRealization f = sample_field(2, 4, kUniform, 5);
    const DiscreteProfile v = random_profile(g, 1.0, 99);
    const double theta = 0.3;

    const double whole = energy(v, f, kW, theta).total;
    double parts = 0.0;
    const int lo = g.site_lo();
    for (int qx = 0; qx < 2; ++qx)
        for (int qy = 0; qy < 2; ++qy) {
            Region r;
            r.lo = Site{lo + 2 * qx, lo + 2 * qy};
            r.size = Site{2, 2, 1};
            r.size[2] = 1;
            parts += energy(v, f, kW, theta, r).total;
        }
    CHECK(parts == doctest::Approx(whole).epsilon(1e-12));
}

TEST_CASE("truncation lowers energy with the quantitative margin") {
    const double theta = 0.5;
    for (int dim : {1, 2}) {
        const int n = dim == 1 ? 8 : 4;
        const GridSpec g = grid_of(dim, n, dim == 1 ? 8 : 4);
        const FieldRealization f = sample_field(dim, n, kUniform, 13);
        const double t = 1.0 + kW.c0() * theta * kUniform.gmax + 0.5;

        // profile within bounds: exact no-op
        const DiscreteProfile tame = random_profile(g, 0.9, 5);
        CHECK(truncation_gap(tame, f, kW, theta, t) == 0.0);

        // spiked profile: strict decrease, bounded by the lumped quadrature
        DiscreteProfile spiky = random_profile(g, 1.2 * t, 6);
        spiky.values[spiky.values.size() / 2] = 3.0 * t;
        spiky.values[1] = -2.5 * t;
        const double gap = truncation_gap(spiky, f, kW, theta, t);
        const double bound = truncation_bound(spiky, kW, theta, kUniform.gmax, t);
        CHECK(gap < 0.0);
        CHECK(bound > 0.0);
        CHECK(gap <= -bound + 1e-10);

        // theta = 0 variant of the same inequality
        const double gap0 = truncation_gap(spiky, f, kW, 0.0, 1.5);
        const double bound0 = truncation_bound(spiky, kW, 0.0, kUniform.gmax, 1.5);
        CHECK(gap0 <= -bound0 + 1e-10);

        CHECK_THROWS_AS((void)truncation_gap(spiky, f, kW, theta, 1.0), std::invalid_argument);
    }
}

TEST_CASE("energy respects the field negation symmetry bit-exactly") {
    const GridSpec g = grid_of(2, 4, 4);
    const FieldRealization f = sample_field(2, 4, kUniform, 21);
    const DiscreteProfile v = random_profile(g, 1.3, 55);
    DiscreteProfile nv = v;
    for (double& x : nv.values) x = -x;
    const EnergyBreakdown a = energy(v, f, kW, 0.5);
    const EnergyBreakdown b = energy(nv, negate(f), kW, 0.5);
    CHECK(a.total == b.total);
    CHECK(a.gradient_term == b.gradient_term);
    CHECK(a.potential_term == b.potential_term);
    CHECK(a.field_term == b.field_term);
}

TEST_CASE("norms and seminorms") {
    const GridSpec g = grid_of(1, 4, 4);
    DiscreteProfile v = constant_profile(g, 0.25);
    v.values[3] = -2.0;
    CHECK(linfty_norm(v) == 2.0);
    CHECK(lipschitz_seminorm(v) == doctest::Approx((2.0 + 0.25) * 4.0));
    CHECK(profile_integral(constant_profile(g, 0.5)) == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(cell_integral(constant_profile(g, 0.5), Site{0}) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("dimension mismatch is a configuration error") {
    const GridSpec g = grid_of(2, 4, 4);
    const FieldRealization f1 = sample_field(1, 4, kUniform, 2);
    CHECK_THROWS(energy(constant_profile(g, 1.0), f1, kW, 0.0));
}
