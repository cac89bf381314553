#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlnn/csv.hpp"
#include "mlnn/grid.hpp"

namespace mlnn {

/// JSON-lines archive of field samples, one object per line:
/// {"z": [...], "level": i, "values": [...]}.
inline void save_field_samples(const std::string& path, const std::vector<FieldSample>& samples) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_field_samples: cannot open " + path);
    for (const auto& s : samples) {
        nlohmann::json line = {{"z", s.z}, {"level", s.level}, {"values", s.values}};
        f << line.dump() << "\n";
    }
}

inline std::vector<FieldSample> load_field_samples(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_field_samples: cannot open " + path);
    std::vector<FieldSample> samples;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        FieldSample s;
        s.z = j.at("z").get<std::vector<double>>();
        s.level = j.at("level").get<std::size_t>();
        s.values = j.at("values").get<std::vector<double>>();
        samples.push_back(std::move(s));
    }
    return samples;
}

/// (x, u) profile on the unit interval for external plotting.
inline void write_profile_csv(const std::string& path, const std::vector<double>& u) {
    CsvWriter csv(path);
    csv.header({"x", "u"});
    const std::size_t n = u.size() - 1;
    for (std::size_t j = 0; j < u.size(); ++j)
        csv.row({static_cast<double>(j) / static_cast<double>(n), u[j]});
}

}  // namespace mlnn
