#include "rdw/field.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "rdw/errors.hpp"

namespace rdw {

namespace {
int window_lo_1d(int n) { return -(n / 2); }
}  // namespace

FieldRealization FieldRealization::sample(int dim, int n, const DistributionSpec& dist, std::uint64_t seed) {
    if (dim < 1 || dim > 3) throw ConfigError("field: dim must be in {1,2,3}");
    if (n < 1) throw ConfigError("field: n must be >= 1");
    if (!dist.valid()) throw ConfigError("field: gmax must be positive");
    FieldRealization f;
    f.dim_ = dim;
    f.n_ = n;
    f.dist_ = dist;
    f.seed_ = seed;
    f.materialize();
    return f;
}

Site FieldRealization::window_lo() const {
    Site lo;
    for (int a = 0; a < dim_; ++a) lo[a] = window_lo_1d(n_);
    return lo;
}

bool FieldRealization::contains(Site z) const {
    const Site lo = window_lo();
    for (int a = 0; a < dim_; ++a)
        if (z[a] < lo[a] || z[a] >= lo[a] + n_) return false;
    for (int a = dim_; a < 3; ++a)
        if (z[a] != 0) return false;
    return true;
}

std::size_t FieldRealization::flat_index(Site z) const {
    const Site lo = window_lo();
    std::size_t idx = 0, stride = 1;
    for (int a = 0; a < dim_; ++a) {
        idx += static_cast<std::size_t>(z[a] - lo[a]) * stride;
        stride *= static_cast<std::size_t>(n_);
    }
    return idx;
}

Site FieldRealization::site_at(std::size_t flat) const {
    const Site lo = window_lo();
    Site z;
    for (int a = 0; a < dim_; ++a) {
        z[a] = lo[a] + static_cast<int>(flat % static_cast<std::size_t>(n_));
        flat /= static_cast<std::size_t>(n_);
    }
    return z;
}

std::uint64_t FieldRealization::site_key(Site z) {
    // 21 bits per signed axis; lattice coordinates stay far below 2^20.
    const std::uint64_t bias = 1ull << 20;
    std::uint64_t k = 0;
    for (int a = 0; a < 3; ++a) k = (k << 21) | ((static_cast<std::uint64_t>(static_cast<std::int64_t>(z[a])) + bias) & 0x1FFFFFull);
    return k;
}

double FieldRealization::raw_value(Site physical) const {
    if (!pinned_.empty()) {
        auto it = pinned_.find(site_key(physical));
        if (it != pinned_.end()) return it->second;
    }
    std::uint64_t aux = 0;
    if (!aux_.empty()) {
        auto it = aux_.find(site_key(physical));
        if (it != aux_.end()) aux = it->second;
    }
    std::uint64_t s = rng::combine(seed_, aux);
    for (int a = 0; a < 3; ++a) s = rng::combine(s, rng::signed_bits(physical[a]));
    return rng::uniform_symmetric(rng::mix(s), dist_.gmax);
}

double FieldRealization::value(Site z) const {
    if (contains(z)) return values_[flat_index(z)];
    return sign_ * raw_value(z + offset_);
}

void FieldRealization::materialize() {
    std::size_t total = 1;
    for (int a = 0; a < dim_; ++a) total *= static_cast<std::size_t>(n_);
    values_.resize(total);
    for (std::size_t i = 0; i < total; ++i) values_[i] = sign_ * raw_value(site_at(i) + offset_);
}

FieldRealization FieldRealization::translated(Site y) const {
    FieldRealization f = *this;
    f.offset_ = offset_ + y;
    f.materialize();
    return f;
}

FieldRealization FieldRealization::negated() const {
    FieldRealization f = *this;
    f.sign_ = -sign_;
    f.materialize();
    return f;
}

FieldRealization FieldRealization::resampled(std::span<const Site> sites, std::uint64_t aux_seed) const {
    FieldRealization f = *this;
    for (const Site& z : sites) {
        if (!contains(z)) throw std::domain_error("resample_sites: site outside the lattice window");
        f.aux_[site_key(z + offset_)] = aux_seed;
        f.pinned_.erase(site_key(z + offset_));
    }
    f.materialize();
    return f;
}

FieldRealization FieldRealization::resized(int n_new) const {
    if (n_new < 1) throw ConfigError("field: resized window side must be >= 1");
    FieldRealization f = *this;
    f.n_ = n_new;
    f.materialize();
    return f;
}

FieldRealization FieldRealization::with_value(Site z, double value) const {
    FieldRealization f = *this;
    // stored pre-sign so a later negation still flips it
    f.pinned_[site_key(z + offset_)] = value / sign_;
    f.materialize();
    return f;
}

std::uint64_t FieldRealization::fingerprint() const {
    std::uint64_t h = rng::combine(0x7D7Dull, static_cast<std::uint64_t>(dim_));
    h = rng::combine(h, static_cast<std::uint64_t>(n_));
    for (double v : values_) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = rng::combine(h, bits);
    }
    return h;
}

double FieldRealization::domain_lo(int axis) const { return window_lo()[axis] - 0.5; }
double FieldRealization::domain_hi(int axis) const { return window_lo()[axis] - 0.5 + n_; }

FieldRealization sample_field(int dim, int n, const DistributionSpec& dist, std::uint64_t seed) {
    return FieldRealization::sample(dim, n, dist, seed);
}

FieldRealization translate(const FieldRealization& f, Site y) { return f.translated(y); }
FieldRealization negate(const FieldRealization& f) { return f.negated(); }
FieldRealization resample_sites(const FieldRealization& f, std::span<const Site> sites, std::uint64_t aux_seed) {
    return f.resampled(sites, aux_seed);
}

double eval_g1(const FieldRealization& f, const std::array<double, 3>& x) {
    Site z;
    for (int a = 0; a < f.dim(); ++a) {
        if (x[a] < f.domain_lo(a) || x[a] >= f.domain_hi(a))
            throw std::domain_error("eval_g1: point outside the field domain");
        z[a] = static_cast<int>(std::floor(x[a] + 0.5));
    }
    return f.value(z);
}

std::vector<Site> sites_lex_greater(const FieldRealization& f, Site pivot, bool strict) {
    std::vector<Site> out;
    for (std::size_t i = 0; i < f.site_count(); ++i) {
        const Site z = f.site_at(i);
        const int cmp = lex_compare(z, pivot, f.dim());
        if (cmp > 0 || (!strict && cmp == 0)) out.push_back(z);
    }
    return out;
}

}  // namespace rdw
