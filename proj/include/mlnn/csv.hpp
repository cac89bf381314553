#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlnn {

/// Lossless decimal formatting: 17 significant digits round-trip any double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Comma-separated table with a header row, numbers at full precision.
struct CsvWriter {
    explicit CsvWriter(const std::string& path) : file_(path) {
        if (!file_) throw std::runtime_error("CsvWriter: cannot open " + path);
    }

    void header(const std::vector<std::string>& names) { write_row_strings(names); }

    void row(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_double(v));
        write_row_strings(cells);
    }

    void row_mixed(const std::vector<std::string>& cells) { write_row_strings(cells); }

private:
    void write_row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) file_ << ',';
            file_ << cells[i];
        }
        file_ << '\n';
    }
    std::ofstream file_;
};

}  // namespace mlnn
