#ifndef RDW_FIELD_HPP
#define RDW_FIELD_HPP

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "rdw/rng.hpp"

namespace rdw {

// Lattice site Z^d with d <= 3; unused axes stay 0.
struct Site {
    int c[3] = {0, 0, 0};

    Site() = default;
    Site(int x, int y = 0, int z = 0) : c{x, y, z} {}

    int& operator[](int a) { return c[a]; }
    int operator[](int a) const { return c[a]; }

    friend Site operator+(Site a, Site b) { return {a.c[0] + b.c[0], a.c[1] + b.c[1], a.c[2] + b.c[2]}; }
    friend Site operator-(Site a, Site b) { return {a.c[0] - b.c[0], a.c[1] - b.c[1], a.c[2] - b.c[2]}; }
    friend Site operator-(Site a) { return {-a.c[0], -a.c[1], -a.c[2]}; }
    friend bool operator==(Site a, Site b) { return a.c[0] == b.c[0] && a.c[1] == b.c[1] && a.c[2] == b.c[2]; }
    friend bool operator!=(Site a, Site b) { return !(a == b); }
};

// Dictionary order on coordinate tuples (first axis most significant).
// The whole fluctuation machinery fixes this ordering once and for all.
inline int lex_compare(Site a, Site b, int dim) {
    for (int ax = 0; ax < dim; ++ax) {
        if (a[ax] < b[ax]) return -1;
        if (a[ax] > b[ax]) return 1;
    }
    return 0;
}

// i.i.d. symmetric uniform disorder on [-gmax, gmax).
//
// The bounded, symmetric, absolutely continuous choice keeps every
// deterministic estimate in terms of gmax = ||g||_inf while still having a
// density; the variance that goes with it (gmax^2/3) is recorded rather
// than normalized away.
struct DistributionSpec {
    double gmax = 1.0;

    double mean() const { return 0.0; }
    double variance() const { return gmax * gmax / 3.0; }
    bool valid() const { return gmax > 0.0; }
};

// One quenched realization of the lattice disorder {g(z)}.
//
// Values are a pure function of (master seed, absolute site, per-site aux
// stream), so translation acts by offsetting the coordinate key,
// sign-flips act on a flag, and resampling a site set never perturbs the
// complement.  Instances are immutable and safe to share across threads.
class FieldRealization {
public:
    static FieldRealization sample(int dim, int n, const DistributionSpec& dist, std::uint64_t seed);

    int dim() const { return dim_; }
    int n() const { return n_; }
    const DistributionSpec& dist() const { return dist_; }
    std::uint64_t seed() const { return seed_; }
    int sign() const { return sign_; }
    Site offset() const { return offset_; }

    // Lowest site of the window; the window is {lo, ..., lo + n - 1}^dim.
    Site window_lo() const;
    bool contains(Site z) const;
    std::size_t site_count() const { return values_.size(); }

    std::size_t flat_index(Site z) const;
    Site site_at(std::size_t flat) const;

    // Value at any absolute site (regenerated from the seed outside the
    // stored window).
    double value(Site z) const;
    const std::vector<double>& window_values() const { return values_; }

    // g(z, [T_y w]) = g(z + y, w).
    FieldRealization translated(Site y) const;
    // Site-wise sign flip.
    FieldRealization negated() const;
    // Redraw the listed window sites from the aux_seed stream; all other
    // sites stay bit-identical.
    FieldRealization resampled(std::span<const Site> sites, std::uint64_t aux_seed) const;
    // Same provenance on a window of side n_new (values at shared absolute
    // sites are bit-identical); the enlarged-box conditioning estimators
    // are built on this.
    FieldRealization resized(int n_new) const;
    // Pin the value at one site (perturbation tool for the w(i)-derivative
    // experiments; the pinned value may leave the sampling support).
    FieldRealization with_value(Site z, double value) const;

    // Hash of (dim, n, window values); identifies the realization in logs.
    std::uint64_t fingerprint() const;

    // Continuum domain covered by the window cells z + [-1/2, 1/2)^d.
    double domain_lo(int axis) const;
    double domain_hi(int axis) const;

private:
    FieldRealization() = default;
    void materialize();
    double raw_value(Site physical) const;
    static std::uint64_t site_key(Site z);

    int dim_ = 1;
    int n_ = 1;
    DistributionSpec dist_;
    std::uint64_t seed_ = 0;
    int sign_ = 1;
    Site offset_;  // translation accumulated so far
    std::unordered_map<std::uint64_t, std::uint64_t> aux_;       // physical site -> aux stream
    std::unordered_map<std::uint64_t, double> pinned_;           // physical site -> raw value
    std::vector<double> values_;  // dense window, x fastest
};

FieldRealization sample_field(int dim, int n, const DistributionSpec& dist, std::uint64_t seed);
FieldRealization translate(const FieldRealization& f, Site y);
FieldRealization negate(const FieldRealization& f);
FieldRealization resample_sites(const FieldRealization& f, std::span<const Site> sites, std::uint64_t aux_seed);

// Piecewise-constant extension: value of the half-open unit cell
// z + [-1/2, 1/2)^d containing x.  Faces belong to the upper cell
// (lower-closed convention); x outside the window domain is a domain error.
double eval_g1(const FieldRealization& f, const std::array<double, 3>& x);

// All window sites z with z > pivot (or >=) in dictionary order.
std::vector<Site> sites_lex_greater(const FieldRealization& f, Site pivot, bool strict = true);

}  // namespace rdw

#endif
