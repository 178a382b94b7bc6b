#include "seelab/report.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "seelab/common.hpp"

namespace seelab {

bool ExperimentReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

std::string ExperimentReport::to_json(bool with_timestamp) const {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    j["config"] = config;
    j["all_pass"] = all_pass();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json cj;
        cj["name"] = c.name;
        cj["pass"] = c.pass;
        cj["errored"] = c.errored;
        if (!c.message.empty()) cj["message"] = c.message;
        cj["stats"] = c.stats;
        arr.push_back(cj);
    }
    j["checks"] = arr;
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::now();
        j["generated_at"] =
            std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    }
    return j.dump(2);
}

std::string write_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw config_error("cannot create output directory " + dir + ": " + ec.message());

    const std::string path = (fs::path(dir) / "report.json").string();
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw config_error("cannot write " + path);
        out << report.to_json() << "\n";
    }
    for (const auto& c : report.checks) {
        if (c.series.empty()) continue;
        const std::string cpath = (fs::path(dir) / (c.name + ".csv")).string();
        std::ofstream out(cpath, std::ios::binary);
        if (!out) throw config_error("cannot write " + cpath);
        out << "t,quantity,estimate,stderr\n";
        char buf[160];
        for (const auto& row : c.series) {
            std::snprintf(buf, sizeof(buf), "%.12g,%s,%.12g,%.12g\n", row.t,
                          row.quantity.c_str(), row.estimate, row.stderr_);
            out << buf;
        }
    }
    return path;
}

}  // namespace seelab
