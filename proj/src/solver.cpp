#include "rdw/solver.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "rdw/errors.hpp"

namespace rdw {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

// Shared per-grid geometry: stiffness matrix K (so that grad-term = v'Kv),
// lumped nodal volumes, boundary list.
struct GridOperators {
    SpMat K;
    Vec lump;
    std::vector<std::size_t> bnodes;
    std::vector<char> is_boundary;
};

std::shared_ptr<const GridOperators> build_operators(const GridSpec& g) {
    auto ops = std::make_shared<GridOperators>();
    const LatticeView lat(g);
    const std::size_t N = g.node_count();
    const double h = g.h();
    const double edge_scale = ipow(h, g.dim) / (h * h);
    const double cell_vol = ipow(h, g.dim);
    const double corner_w = 1.0 / (1 << g.dim);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(N * (2 * g.dim + 1));
    for (int axis = 0; axis < g.dim; ++axis)
        for (int iz = 0; iz < lat.nodes[2]; ++iz)
            for (int iy = 0; iy < lat.nodes[1]; ++iy)
                for (int ix = 0; ix < lat.nodes[0]; ++ix) {
                    const int i3[3] = {ix, iy, iz};
                    if (i3[axis] == lat.nodes[axis] - 1) continue;
                    double tw = 1.0;
                    for (int b = 0; b < g.dim; ++b) {
                        if (b == axis) continue;
                        if (i3[b] == 0 || i3[b] == lat.nodes[b] - 1) tw *= 0.5;
                    }
                    const double kij = tw * edge_scale;
                    const auto k = static_cast<int>(lat.node_index(ix, iy, iz));
                    const auto j = static_cast<int>(k + lat.node_stride[axis]);
                    trip.emplace_back(k, k, kij);
                    trip.emplace_back(j, j, kij);
                    trip.emplace_back(k, j, -kij);
                    trip.emplace_back(j, k, -kij);
                }
    ops->K.resize(static_cast<int>(N), static_cast<int>(N));
    ops->K.setFromTriplets(trip.begin(), trip.end());

    ops->lump = Vec::Zero(static_cast<Eigen::Index>(N));
    for (int cz = 0; cz < std::max(lat.cells[2], 1); ++cz)
        for (int cy = 0; cy < std::max(lat.cells[1], 1); ++cy)
            for (int cx = 0; cx < std::max(lat.cells[0], 1); ++cx) {
                const std::size_t k = lat.node_index(cx, cy, cz);
                std::size_t corners[8];
                int nc = 0;
                corners[nc++] = k;
                corners[nc++] = k + lat.node_stride[0];
                if (g.dim > 1) {
                    corners[nc++] = k + lat.node_stride[1];
                    corners[nc++] = k + lat.node_stride[1] + lat.node_stride[0];
                }
                if (g.dim > 2) {
                    const std::size_t kz = k + lat.node_stride[2];
                    corners[nc++] = kz;
                    corners[nc++] = kz + lat.node_stride[0];
                    corners[nc++] = kz + lat.node_stride[1];
                    corners[nc++] = kz + lat.node_stride[1] + lat.node_stride[0];
                }
                for (int q = 0; q < nc; ++q)
                    ops->lump[static_cast<Eigen::Index>(corners[q])] += cell_vol * corner_w;
            }

    ops->bnodes = boundary_nodes(g);
    ops->is_boundary.assign(N, 0);
    for (std::size_t b : ops->bnodes) ops->is_boundary[b] = 1;
    return ops;
}

struct FactorEntry {
    std::shared_ptr<const GridOperators> ops;
    std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> factor;
};

// System matrix:  W + 2 tau K   (semi-implicit flow)
//                 K + M W       (monotone iteration)
// with boundary rows/columns pinned to the identity for Dirichlet solves.
FactorEntry get_factor(const GridSpec& g, Scheme scheme, double scalar, bool pinned) {
    using Key = std::tuple<int, int, int, int, int, std::uint64_t>;
    static std::map<Key, FactorEntry> cache;
    static std::mutex mu;

    std::uint64_t bits;
    static_assert(sizeof bits == sizeof scalar);
    std::memcpy(&bits, &scalar, sizeof bits);
    const Key key{g.dim, g.n, g.p, static_cast<int>(scheme), pinned ? 1 : 0, bits};

    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    FactorEntry e;
    e.ops = build_operators(g);
    const auto N = static_cast<Eigen::Index>(g.node_count());

    SpMat A(N, N);
    if (scheme == Scheme::semi_implicit_flow) {
        A = 2.0 * scalar * e.ops->K;
    } else {
        A = e.ops->K;
    }
    const double diag_scale = scheme == Scheme::semi_implicit_flow ? 1.0 : scalar;
    SpMat D(N, N);
    {
        std::vector<Eigen::Triplet<double>> dt;
        dt.reserve(static_cast<std::size_t>(N));
        for (Eigen::Index i = 0; i < N; ++i)
            dt.emplace_back(static_cast<int>(i), static_cast<int>(i), diag_scale * e.ops->lump[i]);
        D.setFromTriplets(dt.begin(), dt.end());
    }
    A += D;

    if (pinned) {
        // zero boundary rows/cols, unit diagonal; keeps the matrix SPD
        std::vector<Eigen::Triplet<double>> pt;
        for (int col = 0; col < A.outerSize(); ++col)
            for (SpMat::InnerIterator iter(A, col); iter; ++iter) {
                const bool rb = e.ops->is_boundary[static_cast<std::size_t>(iter.row())];
                const bool cb = e.ops->is_boundary[static_cast<std::size_t>(iter.col())];
                if (!rb && !cb) pt.emplace_back(static_cast<int>(iter.row()), static_cast<int>(iter.col()), iter.value());
            }
        for (std::size_t b : e.ops->bnodes) pt.emplace_back(static_cast<int>(b), static_cast<int>(b), 1.0);
        SpMat P(N, N);
        P.setFromTriplets(pt.begin(), pt.end());
        A.swap(P);
    }

    e.factor = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
    e.factor->compute(A);
    if (e.factor->info() != Eigen::Success)
        throw SchemeIntegrityError("solver: factorization of the step matrix failed");
    cache.emplace(key, e);
    return e;
}

// dE_reaction/dv_k = w_k (W'(v_k) - theta ghat_k), assembled cell-wise.
void reaction_gradient(const GridSpec& g, const std::vector<double>& cell_g,
                       const PotentialSpec& pot, double theta,
                       const std::vector<double>& v, Vec& out) {
    const LatticeView lat(g);
    const double cell_vol = ipow(g.h(), g.dim);
    const double corner_w = 1.0 / (1 << g.dim);
    out.setZero();
    std::size_t ci = 0;
    for (int cz = 0; cz < std::max(lat.cells[2], 1); ++cz)
        for (int cy = 0; cy < std::max(lat.cells[1], 1); ++cy)
            for (int cx = 0; cx < std::max(lat.cells[0], 1); ++cx, ++ci) {
                const std::size_t k = lat.node_index(cx, cy, cz);
                std::size_t corners[8];
                int nc = 0;
                corners[nc++] = k;
                corners[nc++] = k + lat.node_stride[0];
                if (g.dim > 1) {
                    corners[nc++] = k + lat.node_stride[1];
                    corners[nc++] = k + lat.node_stride[1] + lat.node_stride[0];
                }
                if (g.dim > 2) {
                    const std::size_t kz = k + lat.node_stride[2];
                    corners[nc++] = kz;
                    corners[nc++] = kz + lat.node_stride[0];
                    corners[nc++] = kz + lat.node_stride[1];
                    corners[nc++] = kz + lat.node_stride[1] + lat.node_stride[0];
                }
                const double gcell = cell_g[ci];
                const double wshare = cell_vol * corner_w;
                for (int q = 0; q < nc; ++q) {
                    const auto idx = static_cast<Eigen::Index>(corners[q]);
                    out[idx] += wshare * (pot.w_prime(v[corners[q]]) - theta * gcell);
                }
            }
}

struct TraceData {
    bool pinned = false;
    Vec full;  // trace on boundary nodes, 0 elsewhere
};

SolveResult solve_core(const FieldRealization& field, const PotentialSpec& pot, double theta,
                       const GridSpec& grid, const DiscreteProfile& init,
                       const TraceData& trace, SolverOptions opts) {
    grid.validate();
    if (!grid.compatible(field)) throw ConfigError("solver: grid and field have mismatched dim or n");
    if (init.values.size() != grid.node_count()) throw ConfigError("solver: init profile size mismatch");
    opts.validate(pot);

    const double S = working_range(pot, theta, field.dist());
    const double tau0 = opts.tau > 0.0 ? opts.tau : auto_tau(pot, theta, field.dist());
    const double rtol = opts.residual_tol > 0.0 ? opts.residual_tol : auto_residual_tol(grid.dim);
    const double shift = opts.monotone_shift > 0.0
                             ? opts.monotone_shift
                             : std::max(0.5 * pot.curvature_sup(S), 1e-6);
    const bool flow = opts.scheme == Scheme::semi_implicit_flow;
    double scalar = flow ? tau0 : shift;

    DiscreteProfile cur;
    cur.grid = grid;
    cur.values = init.values;
    cur.provenance = Provenance::solver_output;
    if (trace.pinned) {
        const auto bn = boundary_nodes(grid);
        for (std::size_t b : bn) {
            if (std::abs(cur.values[b] - trace.full[static_cast<Eigen::Index>(b)]) > 1e-12)
                throw ConfigError("solver: init does not respect the Dirichlet trace");
            cur.values[b] = trace.full[static_cast<Eigen::Index>(b)];
        }
    }

    const std::vector<double> cell_g = cell_field_values(grid, field);
    const auto N = static_cast<Eigen::Index>(grid.node_count());

    FactorEntry fe = get_factor(grid, opts.scheme, scalar, trace.pinned);
    Vec coupling = Vec::Zero(N);
    auto rebuild_coupling = [&]() {
        if (!trace.pinned) return;
        const double cscale = flow ? 2.0 * scalar : 1.0;
        coupling = cscale * (fe.ops->K * trace.full);
        for (std::size_t b : fe.ops->bnodes) coupling[static_cast<Eigen::Index>(b)] = 0.0;
    };
    rebuild_coupling();

    double energy_now = energy(cur, field, pot, theta).total;
    double res = el_residual(cur, field, pot, theta);
    if (opts.diagnostics) opts.diagnostics(0, energy_now, res);

    SolveResult out;
    if (res < rtol) {
        out.profile = std::move(cur);
        out.residual = res;
        out.energy = energy(out.profile, field, pot, theta);
        out.converged = true;
        return out;
    }

    Vec R(N), rhs(N);
    std::vector<double> prev = cur.values;
    int halvings = 0;
    int plateau = 0;  // consecutive sub-tolerance decrements; a single one
                      // can be rounding noise of the energy sum

    for (int iter = 1; iter <= opts.max_iters; ++iter) {
        reaction_gradient(grid, cell_g, pot, theta, cur.values, R);
        if (flow) {
            for (Eigen::Index i = 0; i < N; ++i)
                rhs[i] = fe.ops->lump[i] * cur.values[i] - scalar * R[i] - coupling[i];
        } else {
            for (Eigen::Index i = 0; i < N; ++i)
                rhs[i] = scalar * fe.ops->lump[i] * cur.values[i] - 0.5 * R[i] - coupling[i];
        }
        if (trace.pinned)
            for (std::size_t b : fe.ops->bnodes)
                rhs[static_cast<Eigen::Index>(b)] = trace.full[static_cast<Eigen::Index>(b)];

        const Vec x = fe.factor->solve(rhs);

        if (opts.monotone_direction != 0) {
            for (Eigen::Index i = 0; i < N; ++i) {
                const double step = x[i] - cur.values[static_cast<std::size_t>(i)];
                if (opts.monotone_direction < 0 && step > 1e-10)
                    throw SchemeIntegrityError("extremal flow: node increased during a decreasing sweep");
                if (opts.monotone_direction > 0 && step < -1e-10)
                    throw SchemeIntegrityError("extremal flow: node decreased during an increasing sweep");
            }
        }

        prev = cur.values;
        for (Eigen::Index i = 0; i < N; ++i) cur.values[static_cast<std::size_t>(i)] = x[i];

        const double energy_new = energy(cur, field, pot, theta).total;
        if (energy_new > energy_now + 1e-12 * (1.0 + std::abs(energy_now))) {
            // descent safeguard; with the default step this never fires
            if (++halvings > 8)
                throw SchemeIntegrityError("solver: energy increased despite step halving");
            cur.values = prev;
            scalar *= 0.5;
            fe = get_factor(grid, opts.scheme, scalar, trace.pinned);
            rebuild_coupling();
            continue;
        }

        res = el_residual(cur, field, pot, theta);
        if (opts.diagnostics) opts.diagnostics(iter, energy_new, res);
        const double decrement = energy_now - energy_new;
        energy_now = energy_new;
        plateau = decrement < opts.energy_tol ? plateau + 1 : 0;

        if (res < rtol || plateau >= 3) {
            out.profile = std::move(cur);
            out.iterations = iter;
            out.residual = res;
            out.energy = energy(out.profile, field, pot, theta);
            out.converged = true;
            return out;
        }
    }

    throw NonConvergenceError("solver: residual tolerance not reached within max_iters",
                              cur.values, res, opts.max_iters);
}

TraceData make_trace(const GridSpec& g, std::span<const double> boundary_values) {
    TraceData t;
    t.pinned = true;
    t.full = Vec::Zero(static_cast<Eigen::Index>(g.node_count()));
    const auto bn = boundary_nodes(g);
    if (boundary_values.size() != bn.size())
        throw ConfigError("solver: trace length does not match the boundary node count");
    for (std::size_t i = 0; i < bn.size(); ++i)
        t.full[static_cast<Eigen::Index>(bn[i])] = boundary_values[i];
    return t;
}

}  // namespace

void SolverOptions::validate(const PotentialSpec& pot) const {
    if (tau < 0.0) throw ConfigError("solver: tau must be positive (or 0 for auto)");
    if (residual_tol < 0.0) throw ConfigError("solver: residual_tol must be positive (or 0 for auto)");
    if (energy_tol <= 0.0) throw ConfigError("solver: energy_tol must be positive");
    if (max_iters < 1) throw ConfigError("solver: max_iters must be >= 1");
    if (monotone_shift < 0.0) throw ConfigError("solver: monotone_shift must be positive (or 0 for auto)");
    if (monotone_shift > 0.0) {
        // must dominate half the curvature over a generous working range
        const double need = 0.5 * pot.curvature_sup(1.5);
        if (monotone_shift + 1e-12 < need)
            throw ConfigError("solver: monotone_shift below (1/2) sup w''");
    }
}

double extremal_bc_value(const PotentialSpec& pot, double theta, const DistributionSpec& dist) {
    return 1.0 + pot.c0() * theta * dist.gmax;
}

double working_range(const PotentialSpec& pot, double theta, const DistributionSpec& dist) {
    return extremal_bc_value(pot, theta, dist) + 0.5;
}

double auto_tau(const PotentialSpec& pot, double theta, const DistributionSpec& dist) {
    const double L = std::max(pot.curvature_abs_sup(working_range(pot, theta, dist)), 1e-9);
    return 0.45 / L;
}

double auto_residual_tol(int dim) { return dim == 1 ? 1e-8 : 1e-6; }

SolveResult minimize(const FieldRealization& field, const PotentialSpec& pot, double theta,
                     const GridSpec& grid, const DiscreteProfile& init, const SolverOptions& opts) {
    TraceData t;
    if (grid.dirichlet()) {
        const auto bn = boundary_nodes(grid);
        std::vector<double> tr(bn.size(), grid.trace());
        t = make_trace(grid, tr);
    }
    return solve_core(field, pot, theta, grid, init, t, opts);
}

SolveResult minimize_with_trace(const FieldRealization& field, const PotentialSpec& pot,
                                double theta, const GridSpec& grid,
                                std::span<const double> trace, const DiscreteProfile& init,
                                const SolverOptions& opts) {
    if (!grid.dirichlet()) throw ConfigError("solver: per-node traces require a Dirichlet grid");
    return solve_core(field, pot, theta, grid, init, make_trace(grid, trace), opts);
}

DiscreteProfile smoothed_sign_profile(const FieldRealization& field, const GridSpec& grid) {
    const LatticeView lat(grid);
    const std::vector<double> cg = cell_field_values(grid, field);
    DiscreteProfile v = constant_profile(grid, 0.0);

    // nodal sign of the surrounding cells
    std::vector<double> acc(grid.node_count(), 0.0);
    std::size_t ci = 0;
    for (int cz = 0; cz < std::max(lat.cells[2], 1); ++cz)
        for (int cy = 0; cy < std::max(lat.cells[1], 1); ++cy)
            for (int cx = 0; cx < std::max(lat.cells[0], 1); ++cx, ++ci) {
                const std::size_t k = lat.node_index(cx, cy, cz);
                std::size_t corners[8];
                int nc = 0;
                corners[nc++] = k;
                corners[nc++] = k + lat.node_stride[0];
                if (grid.dim > 1) {
                    corners[nc++] = k + lat.node_stride[1];
                    corners[nc++] = k + lat.node_stride[1] + lat.node_stride[0];
                }
                if (grid.dim > 2) {
                    const std::size_t kz = k + lat.node_stride[2];
                    corners[nc++] = kz;
                    corners[nc++] = kz + lat.node_stride[0];
                    corners[nc++] = kz + lat.node_stride[1];
                    corners[nc++] = kz + lat.node_stride[1] + lat.node_stride[0];
                }
                for (int q = 0; q < nc; ++q) acc[corners[q]] += cg[ci];
            }
    for (std::size_t k = 0; k < acc.size(); ++k)
        v.values[k] = acc[k] > 0.0 ? 1.0 : (acc[k] < 0.0 ? -1.0 : 0.0);

    // a few diffusive sweeps to avoid starting on a razor edge
    std::vector<double> next(v.values.size());
    for (int sweep = 0; sweep < 10; ++sweep) {
        for (int iz = 0; iz < lat.nodes[2]; ++iz)
            for (int iy = 0; iy < lat.nodes[1]; ++iy)
                for (int ix = 0; ix < lat.nodes[0]; ++ix) {
                    const std::size_t k = lat.node_index(ix, iy, iz);
                    double nb = 0.0;
                    int cnt = 0;
                    const int i3[3] = {ix, iy, iz};
                    for (int a = 0; a < grid.dim; ++a) {
                        if (i3[a] > 0) { nb += v.values[k - lat.node_stride[a]]; ++cnt; }
                        if (i3[a] < lat.nodes[a] - 1) { nb += v.values[k + lat.node_stride[a]]; ++cnt; }
                    }
                    next[k] = 0.5 * v.values[k] + 0.5 * (cnt ? nb / cnt : v.values[k]);
                }
        v.values.swap(next);
    }
    return v;
}

MultistartResult minimize_multistart(const FieldRealization& field, const PotentialSpec& pot,
                                     double theta, GridSpec grid, const SolverOptions& opts) {
    grid.bc = BcKind::neumann;
    const DiscreteProfile signy = smoothed_sign_profile(field, grid);
    DiscreteProfile neg_signy = signy;
    for (double& x : neg_signy.values) x = -x;

    std::array<DiscreteProfile, 5> starts = {
        constant_profile(grid, 1.0), constant_profile(grid, -1.0), constant_profile(grid, 0.0),
        signy, neg_signy};

    MultistartResult mr;
    double best_energy = 0.0, best_res_l2 = 0.0;
    const double tie_tol = std::max(opts.energy_tol, 1e-15);
    for (int s = 0; s < 5; ++s) {
        SolveResult r = minimize(field, pot, theta, grid, starts[static_cast<std::size_t>(s)], opts);
        const auto rf = el_residual_field(r.profile, field, pot, theta);
        double l2 = 0.0;
        for (double x : rf) l2 += x * x;
        const bool better =
            mr.chosen < 0 || r.energy.total < best_energy - tie_tol ||
            (std::abs(r.energy.total - best_energy) <= tie_tol && l2 < best_res_l2);
        if (better) {
            mr.chosen = s;
            best_energy = r.energy.total;
            best_res_l2 = l2;
        }
        mr.runs.push_back(std::move(r));
    }
    return mr;
}

SolveResult extremal_max(const FieldRealization& field, const PotentialSpec& pot, double theta,
                         GridSpec grid, const SolverOptions& opts) {
    const double B = extremal_bc_value(pot, theta, field.dist());
    grid.bc = BcKind::dirichlet_plus;
    grid.bc_value = B;
    SolverOptions o = opts;
    o.monotone_direction = -1;  // flow from a supersolution only descends
    return minimize(field, pot, theta, grid, constant_profile(grid, B), o);
}

SolveResult extremal_min(const FieldRealization& field, const PotentialSpec& pot, double theta,
                         GridSpec grid, const SolverOptions& opts) {
    const double B = extremal_bc_value(pot, theta, field.dist());
    grid.bc = BcKind::dirichlet_minus;
    grid.bc_value = B;
    SolverOptions o = opts;
    o.monotone_direction = +1;
    return minimize(field, pot, theta, grid, constant_profile(grid, -B), o);
}

ExtremalPair extremal_pair(const FieldRealization& field, const PotentialSpec& pot, double theta,
                           GridSpec grid, const SolverOptions& opts) {
    SolveResult plus = extremal_max(field, pot, theta, grid, opts);
    SolveResult minus = extremal_min(field, pot, theta, grid, opts);
    ExtremalPair pair;
    pair.energy_plus = plus.energy;
    pair.energy_minus = minus.energy;
    pair.iterations_plus = plus.iterations;
    pair.iterations_minus = minus.iterations;
    pair.residual_plus = plus.residual;
    pair.residual_minus = minus.residual;
    pair.theta = theta;
    pair.field_fingerprint = field.fingerprint();
    pair.v_plus = std::move(plus.profile);
    pair.v_minus = std::move(minus.profile);
    for (std::size_t k = 0; k < pair.v_plus.values.size(); ++k)
        if (pair.v_minus.values[k] > pair.v_plus.values[k] + 1e-8)
            throw SchemeIntegrityError("extremal pair: v- exceeds v+ beyond tolerance");
    return pair;
}

std::pair<SolveResult, SolveResult> ordered_bc_solve(const FieldRealization& field,
                                                     const PotentialSpec& pot, double theta,
                                                     GridSpec grid,
                                                     std::span<const double> bc_low,
                                                     std::span<const double> bc_high,
                                                     const SolverOptions& opts) {
    if (bc_low.size() != bc_high.size())
        throw std::invalid_argument("ordered_bc_solve: trace lengths differ");
    for (std::size_t i = 0; i < bc_low.size(); ++i)
        if (bc_low[i] > bc_high[i])
            throw std::invalid_argument("ordered_bc_solve: traces are not ordered");

    grid.bc = BcKind::dirichlet_plus;
    grid.bc_value = 0.0;

    auto run = [&](std::span<const double> tr) {
        double mean = 0.0;
        for (double x : tr) mean += x;
        mean /= static_cast<double>(tr.size());
        DiscreteProfile init = constant_profile(grid, mean);
        const auto bn = boundary_nodes(grid);
        for (std::size_t i = 0; i < bn.size(); ++i) init.values[bn[i]] = tr[i];
        return minimize_with_trace(field, pot, theta, grid, tr, init, opts);
    };
    SolveResult lo = run(bc_low);
    SolveResult hi = run(bc_high);
    return {std::move(lo), std::move(hi)};
}

}  // namespace rdw
