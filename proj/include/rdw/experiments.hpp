#ifndef RDW_EXPERIMENTS_HPP
#define RDW_EXPERIMENTS_HPP

#include <string>
#include <vector>

#include "rdw/config.hpp"

namespace rdw {

struct CellOutput {
    int dim = 1, n = 0;
    double theta = 0.0;
    std::string csv;  // relative to the run directory
    int count = 0;
    int failures = 0;
    bool aborted = false;
};

struct RunManifest {
    std::string kind;
    std::string run_dir;
    std::string manifest_path;
    std::vector<CellOutput> cells;
    std::string aggregate_csv;
    std::string verdict_report;
    std::vector<Verdict> verdicts;
    bool all_pass = false;  // hard (non-advisory) verdicts only
    std::string started_at, finished_at;
};

// Execute one experiment kind end to end: Monte Carlo cells, per-cell CSVs
// with the fixed record schema, an aggregate CSV, a plain-text verdict
// report, and (last, atomically) the JSON manifest.  A crashed run leaves
// no manifest behind.
RunManifest run(const ExperimentConfig& cfg);

// Write plotting scripts (python + matplotlib) consuming the run's CSVs.
// Fails up front if any referenced CSV is missing; writes nothing partial.
std::vector<std::string> emit_plots(const std::string& manifest_path);

// Audit dumps.
void write_field_csv(const FieldRealization& f, const std::string& path);
void write_profile_csv(const DiscreteProfile& v, const std::string& path);

// Seeded rough test profile: i.i.d. nodal values plus hard spikes past the
// truncation level (Dirichlet-free; provenance 'initial').
DiscreteProfile rough_profile(const GridSpec& grid, double t, std::uint64_t seed);

// Record schema shared by every per-cell CSV.
extern const char* const kRecordHeader;
std::string record_row(const StatRecord& r);

}  // namespace rdw

#endif
