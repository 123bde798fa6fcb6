#ifndef RDW_CONFIG_HPP
#define RDW_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rdw/stats.hpp"

namespace rdw {

// Flat dotted key=value experiment configuration.
struct ExperimentConfig {
    std::string kind = "sanity";
    std::uint64_t master_seed = 1;
    int dim = 1;
    std::vector<double> thetas{0.5};
    std::vector<int> ns{8, 16, 32};
    int reps = 50;

    int p = 0;  // 0 -> per-dim default
    PotentialSpec potential;
    DistributionSpec dist;
    SolverOptions solver;

    int k_conditional = 8;
    int k_w0 = 16;
    int k_b_lower = 8;
    int m_extra = -1;  // -1 -> auto
    std::vector<double> a_list{0.05, 0.1, 0.2};

    double truncation_t = 0.0;  // 0 -> lemma threshold + 1/2
    int failure_budget = 3;

    std::string output_dir = "runs";
    int workers = 4;
    bool dump_fields = false;

    std::map<std::string, std::string> raw;  // snapshot for the manifest

    StatContext stat_context() const;
    double truncation_level(double theta) const;
    void validate() const;  // throws ConfigError naming the failing invariant
};

// Parse + cross-validate.  Unknown keys, bad values and duplicate keys are
// reported with their line number.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig validate_config(const std::string& path);

extern const char* const kKnownKinds[6];
bool known_kind(const std::string& kind);

}  // namespace rdw

#endif
