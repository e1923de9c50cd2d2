#pragma once

// Six-metric evaluation record and the CSV conventions shared by the run
// logs. AT/AE are defined only over successful episodes and reported absent
// (empty CSV cells) when there are none.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "driqn/common.hpp"

namespace driqn {

struct MetricsRecord {
    double sr = 0.0;
    double cr = 0.0;
    double tr = 0.0;
    double fcr = 0.0;
    std::optional<double> at;  // seconds, successes only
    std::optional<double> ae;  // effort-proxy units, successes only
};

inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline constexpr const char* kMetricsHeader =
    "step,SR,CR,TR,FCR,AT,AE,mean_lambda_entropy,grad_norm";

inline std::string metrics_csv_row(std::uint64_t step, const MetricsRecord& m,
                                   double mean_lambda_entropy, double grad_norm) {
    std::string row = std::to_string(step);
    for (double v : {m.sr, m.cr, m.tr, m.fcr}) row += "," + format_g17(v);
    row += ",";
    if (m.at) row += format_g17(*m.at);
    row += ",";
    if (m.ae) row += format_g17(*m.ae);
    row += "," + format_g17(mean_lambda_entropy) + "," + format_g17(grad_norm);
    return row;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw ConfigError("missing CSV column: " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open CSV: " + path);
    CsvTable t;
    std::string line;
    if (std::getline(f, line)) t.header = split_csv_line(line);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        t.rows.push_back(split_csv_line(line));
    }
    return t;
}

inline MetricsRecord metrics_from_csv_row(const CsvTable& t, const std::vector<std::string>& row) {
    MetricsRecord m;
    m.sr = std::stod(row[t.column("SR")]);
    m.cr = std::stod(row[t.column("CR")]);
    m.tr = std::stod(row[t.column("TR")]);
    m.fcr = std::stod(row[t.column("FCR")]);
    const std::string at = row[t.column("AT")], ae = row[t.column("AE")];
    if (!at.empty()) m.at = std::stod(at);
    if (!ae.empty()) m.ae = std::stod(ae);
    return m;
}

}  // namespace driqn
