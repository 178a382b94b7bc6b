#pragma once

#include <map>
#include <string>
#include <vector>

namespace seelab {

struct CsvRow {
    double t = 0.0;
    std::string quantity;
    double estimate = 0.0;
    double stderr_ = 0.0;
};

struct CheckResult {
    std::string name;
    bool pass = false;
    bool errored = false;
    std::string message;
    std::map<std::string, double> stats;
    std::vector<CsvRow> series;
};

struct ExperimentReport {
    std::string experiment;
    std::uint64_t seed = 0;
    std::map<std::string, double> config;  // fully resolved numeric configuration
    std::vector<CheckResult> checks;

    bool all_pass() const;
    // Serialized report; the timestamp field is the only run-dependent entry
    // and is omitted when with_timestamp is false.
    std::string to_json(bool with_timestamp = true) const;
};

// Writes report.json and one <check>.csv per check with series data into dir.
// Returns the report path. Throws config_error if the directory cannot be
// created or written.
std::string write_report(const ExperimentReport& report, const std::string& dir);

}  // namespace seelab
