#include "adstm/io_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace adstm {

void write_pgm(const std::string& path, const Field& field) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int i = 0; i < field.n1(); ++i)
        for (int j = 0; j < field.n2(); ++j) {
            if (field.missing(i, j)) continue;
            const double v = field(i, j);
            if (first) {
                lo = hi = v;
                first = false;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    const double span = hi > lo ? hi - lo : 1.0;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P2\n";
    out << "# min=" << lo << " max=" << hi << " (missing rendered as 0)\n";
    out << field.n2() << " " << field.n1() << "\n255\n";
    for (int i = 0; i < field.n1(); ++i) {
        for (int j = 0; j < field.n2(); ++j) {
            int g = 0;
            if (field.observed(i, j))
                g = static_cast<int>(std::lround(255.0 * (field(i, j) - lo) / span));
            out << std::clamp(g, 0, 255) << (j + 1 == field.n2() ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    char buf[64];
    for (long i = 0; i < m.rows(); ++i) {
        for (long j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out << buf << (j + 1 == m.cols() ? "" : ",");
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_csv_table(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t j = 0; j < header.size(); ++j)
        out << header[j] << (j + 1 == header.size() ? "" : ",");
    out << "\n";
    char buf[64];
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.10g", row[j]);
            out << buf << (j + 1 == row.size() ? "" : ",");
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::map<std::string, std::string> parse_config_text(const std::string& content) {
    std::map<std::string, std::string> cfg;
    std::istringstream in(content);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const std::size_t b = s.find_first_not_of(" \t\r");
            const std::size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
        cfg[key] = val;
    }
    return cfg;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

}  // namespace adstm
