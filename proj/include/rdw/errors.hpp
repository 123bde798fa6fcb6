#ifndef RDW_ERRORS_HPP
#define RDW_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace rdw {

// Bad user-facing configuration (file contents, incompatible dims, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Iteration budget exhausted; carries the last iterate for diagnostics.
class NonConvergenceError : public std::runtime_error {
public:
    NonConvergenceError(const std::string& msg, std::vector<double> last,
                        double residual, int iterations)
        : std::runtime_error(msg),
          last_iterate(std::move(last)),
          residual(residual),
          iterations(iterations) {}

    std::vector<double> last_iterate;
    double residual;
    int iterations;
};

// An internal invariant of a numerical scheme was violated (e.g. a
// supersolution flow produced an increasing node).
class SchemeIntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rdw

#endif
