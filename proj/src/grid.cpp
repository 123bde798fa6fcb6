#include "rdw/grid.hpp"

#include "rdw/errors.hpp"

namespace rdw {

std::size_t GridSpec::node_count() const {
    std::size_t total = 1;
    for (int a = 0; a < dim; ++a) total *= static_cast<std::size_t>(nodes_axis());
    return total;
}

std::size_t GridSpec::cell_count() const {
    std::size_t total = 1;
    for (int a = 0; a < dim; ++a) total *= static_cast<std::size_t>(cells_axis());
    return total;
}

void GridSpec::validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("grid: dim must be in {1,2,3}");
    if (n < 1) throw ConfigError("grid: n must be >= 1");
    if (p < 2) throw ConfigError("grid: p must be >= 2");
}

DiscreteProfile constant_profile(const GridSpec& grid, double value, Provenance prov) {
    DiscreteProfile v;
    v.grid = grid;
    v.values.assign(grid.node_count(), value);
    v.provenance = prov;
    return v;
}

Region full_region(const GridSpec& grid) {
    Region r;
    for (int a = 0; a < 3; ++a) {
        r.lo[a] = a < grid.dim ? grid.site_lo() : 0;
        r.size[a] = a < grid.dim ? grid.n : 1;
    }
    return r;
}

Region centered_region(const GridSpec& grid, int n_inner) {
    if (n_inner < 1 || n_inner > grid.n)
        throw ConfigError("region: inner side must be in [1, n]");
    Region r;
    for (int a = 0; a < 3; ++a) {
        r.lo[a] = a < grid.dim ? -(n_inner / 2) : 0;
        r.size[a] = a < grid.dim ? n_inner : 1;
    }
    return r;
}

LatticeView::LatticeView(const GridSpec& g) {
    dim = g.dim;
    h = g.h();
    for (int a = 0; a < g.dim; ++a) {
        nodes[a] = g.nodes_axis();
        cells[a] = g.cells_axis();
    }
    node_stride[0] = 1;
    node_stride[1] = static_cast<std::size_t>(nodes[0]);
    node_stride[2] = static_cast<std::size_t>(nodes[0]) * nodes[1];
}

std::vector<std::size_t> boundary_nodes(const GridSpec& grid) {
    const LatticeView lat(grid);
    std::vector<std::size_t> out;
    for (int iz = 0; iz < lat.nodes[2]; ++iz)
        for (int iy = 0; iy < lat.nodes[1]; ++iy)
            for (int ix = 0; ix < lat.nodes[0]; ++ix)
                if (lat.on_boundary(ix, iy, iz)) out.push_back(lat.node_index(ix, iy, iz));
    return out;
}

}  // namespace rdw
