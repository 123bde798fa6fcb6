#ifndef RDW_GRID_HPP
#define RDW_GRID_HPP

#include <cstddef>
#include <vector>

#include "rdw/field.hpp"

namespace rdw {

enum class BcKind { neumann, dirichlet_plus, dirichlet_minus };

// Uniform tensor grid over the window domain of a side-n lattice.
//
// The continuum domain is the union of the n^d half-open unit cells
// z + [-1/2,1/2)^d over the site window {lo,...,lo+n-1}^d with
// lo = -(n/2); for odd n this is exactly [-n/2, n/2)^d and for even n the
// same box shifted by -1/2 (integer-centered cells cannot tile a
// symmetric box with an even side).  Nothing downstream depends on the
// absolute position of the window.  Each axis carries n*p + 1 nodes with
// spacing h = 1/p, so every unit cell holds exactly p^d quadrature cells.
struct GridSpec {
    int dim = 1;
    int n = 8;
    int p = 8;  // points per unit length
    BcKind bc = BcKind::neumann;
    double bc_value = 0.0;  // trace magnitude for the dirichlet kinds

    double h() const { return 1.0 / p; }
    int nodes_axis() const { return n * p + 1; }
    int cells_axis() const { return n * p; }
    int site_lo() const { return -(n / 2); }
    double x_lo() const { return site_lo() - 0.5; }

    std::size_t node_count() const;
    std::size_t cell_count() const;

    bool dirichlet() const { return bc != BcKind::neumann; }
    // Signed boundary trace implied by the kind.
    double trace() const { return bc == BcKind::dirichlet_minus ? -bc_value : bc_value; }

    void validate() const;  // throws ConfigError
    bool compatible(const FieldRealization& f) const { return f.dim() == dim && f.n() == n; }
};

enum class Provenance { initial, solver_output, truncated, blended };

// A grid function; values ordered x-fastest.
struct DiscreteProfile {
    GridSpec grid;
    std::vector<double> values;
    Provenance provenance = Provenance::initial;
};

DiscreteProfile constant_profile(const GridSpec& grid, double value,
                                 Provenance prov = Provenance::initial);

// Axis-aligned box of whole unit cells, in site coordinates.
struct Region {
    Site lo;
    Site size;  // in sites per axis; axes >= dim must be 1
};

Region full_region(const GridSpec& grid);
// Central n_inner^d sub-box of a grid window (used to restrict energies to
// the core of an enlarged working box).
Region centered_region(const GridSpec& grid, int n_inner);

// ---- iteration helpers shared by energy and solver --------------------

// Extents padded to 3 axes (unused axes have extent 1) so all loops can be
// written dimension-generically.
struct LatticeView {
    int dim = 1;
    int nodes[3] = {1, 1, 1};
    int cells[3] = {1, 1, 1};
    std::size_t node_stride[3] = {1, 1, 1};
    double h = 1.0;

    explicit LatticeView(const GridSpec& g);

    std::size_t node_index(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) * node_stride[0] +
               static_cast<std::size_t>(iy) * node_stride[1] +
               static_cast<std::size_t>(iz) * node_stride[2];
    }
    bool on_boundary(int ix, int iy, int iz) const {
        return (ix == 0 || ix == nodes[0] - 1) ||
               (dim > 1 && (iy == 0 || iy == nodes[1] - 1)) ||
               (dim > 2 && (iz == 0 || iz == nodes[2] - 1));
    }
};

std::vector<std::size_t> boundary_nodes(const GridSpec& grid);

}  // namespace rdw

#endif
