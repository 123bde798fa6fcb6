#ifndef RDW_CSV_HPP
#define RDW_CSV_HPP

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>

namespace rdw::csv {

// Locale-independent shortest round-trip formatting; CSV bytes must not
// depend on the environment.
inline std::string fmt(double x) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string fmt(std::uint64_t x) {
    char buf[24];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string fmt(int x) {
    char buf[16];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

// File-name token: '.' and '-' are awkward in generated names.
std::string slug(double x);

}  // namespace rdw::csv

#endif
