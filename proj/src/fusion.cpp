#include "adstm/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace adstm {

namespace {

[[noreturn]] void parse_fail(const std::string& what) {
    throw std::runtime_error("FGRID parse error: " + what);
}

bool days_in_month(int y, int m, int& days) {
    static const int table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m < 1 || m > 12) return false;
    days = table[m - 1];
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (m == 2 && leap) days = 29;
    return true;
}

}  // namespace

std::int64_t parse_rfc3339(const std::string& text) {
    int y, mo, d, h, mi, s;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s,
                    &consumed) != 6 || consumed != 19)
        throw std::invalid_argument("invalid RFC3339 timestamp: " + text);

    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {  // fractional seconds: accepted, dropped
        ++pos;
        std::size_t digits = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            ++pos;
            ++digits;
        }
        if (digits == 0) throw std::invalid_argument("invalid RFC3339 timestamp: " + text);
    }
    std::int64_t offset = 0;
    if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
        ++pos;
    } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
        int oh, om, n2 = 0;
        if (std::sscanf(text.c_str() + pos + 1, "%2d:%2d%n", &oh, &om, &n2) != 2 || n2 != 5)
            throw std::invalid_argument("invalid RFC3339 offset: " + text);
        offset = (text[pos] == '+' ? 1 : -1) * (oh * 3600LL + om * 60LL);
        pos += 6;
    } else {
        throw std::invalid_argument("RFC3339 timestamp missing zone: " + text);
    }
    if (pos != text.size())
        throw std::invalid_argument("trailing characters in timestamp: " + text);

    int dim;
    if (y < 1970 || !days_in_month(y, mo, dim) || d < 1 || d > dim || h > 23 || mi > 59 ||
        s > 60 || h < 0 || mi < 0 || s < 0)
        throw std::invalid_argument("timestamp out of range: " + text);

    // Days since epoch by Howard Hinnant's civil-day algorithm.
    const int yy = y - (mo <= 2 ? 1 : 0);
    const int era = (yy >= 0 ? yy : yy - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(yy - era * 400);
    const unsigned doy = (153u * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    const std::int64_t days = era * 146097LL + static_cast<std::int64_t>(doe) - 719468LL;
    return days * 86400LL + h * 3600LL + mi * 60LL + s - offset;
}

std::string format_rfc3339(std::int64_t t) {
    std::int64_t days = t / 86400;
    std::int64_t rem = t % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    const std::int64_t z = days + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(y + (m <= 2 ? 1 : 0)), m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

void SourceStream::validate() const {
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (frames[i].timestamp <= frames[i - 1].timestamp)
            throw std::invalid_argument("SourceStream " + source_id +
                                        ": timestamps must strictly increase");
}

ObservationFrame parse_fgrid(const std::string& content, const ValueBounds& bounds) {
    std::istringstream in(content);
    std::string line;

    auto next_line = [&](const char* what) {
        if (!std::getline(in, line)) parse_fail(std::string("unexpected end of input, expected ") + what);
        if (!line.empty() && line.back() == '\r') parse_fail("carriage return found; FGRID is LF-only");
        return line;
    };

    if (next_line("magic") != "#FGRID v1") parse_fail("bad magic line");

    auto header_value = [&](const char* key) {
        next_line(key);
        const std::string prefix = std::string(key) + ":";
        if (line.rfind(prefix, 0) != 0) parse_fail(std::string("expected '") + key + ":' line, got '" + line + "'");
        std::string v = line.substr(prefix.size());
        const std::size_t b = v.find_first_not_of(' ');
        return b == std::string::npos ? std::string() : v.substr(b);
    };

    ObservationFrame frame;
    frame.source_id = header_value("source");
    if (frame.source_id.empty()) parse_fail("empty source id");
    frame.timestamp = parse_rfc3339(header_value("time"));

    auto to_int = [&](const std::string& s, const char* what) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(s, &used);
        } catch (...) {
            parse_fail(std::string("bad integer for ") + what);
        }
        if (used != s.size()) parse_fail(std::string("bad integer for ") + what);
        return v;
    };

    frame.grid.n1 = to_int(header_value("n1"), "n1");
    frame.grid.n2 = to_int(header_value("n2"), "n2");
    frame.grid.validate();

    {
        std::istringstream o(header_value("origin"));
        if (!(o >> frame.grid.origin_lat >> frame.grid.origin_lon) || !(o >> std::ws).eof())
            parse_fail("bad origin line");
    }
    {
        std::istringstream o(header_value("step"));
        if (!(o >> frame.grid.step_lat >> frame.grid.step_lon) || !(o >> std::ws).eof())
            parse_fail("bad step line");
    }

    frame.values = Field(frame.grid.n1, frame.grid.n2);
    for (int i = 0; i < frame.grid.n1; ++i) {
        next_line("data row");
        std::istringstream row(line);
        std::string tok;
        for (int j = 0; j < frame.grid.n2; ++j) {
            if (!(row >> tok)) parse_fail("short data row " + std::to_string(i + 1));
            if (tok == "NaN") {
                frame.values.set_missing(i, j);
                continue;
            }
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(tok, &used);
            } catch (...) {
                parse_fail("non-numeric cell '" + tok + "' in row " + std::to_string(i + 1));
            }
            if (used != tok.size() || !std::isfinite(v))
                parse_fail("non-numeric cell '" + tok + "' in row " + std::to_string(i + 1));
            if (v < bounds.lo || v > bounds.hi) {
                if (bounds.strict)
                    throw std::runtime_error(
                        "FGRID value " + tok + " outside bounds [" + std::to_string(bounds.lo) +
                        ", " + std::to_string(bounds.hi) + "] at row " + std::to_string(i + 1));
            }
            frame.values.set(i, j, v);
        }
        if (row >> tok) parse_fail("excess cells in row " + std::to_string(i + 1));
    }
    if (std::getline(in, line)) {
        // A single trailing newline is already consumed by the last data row
        // getline; anything further is garbage.
        parse_fail("trailing garbage after data rows");
    }
    return frame;
}

ObservationFrame read_fgrid_file(const std::string& path, const ValueBounds& bounds) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_fgrid(buf.str(), bounds);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

std::string write_fgrid(const ObservationFrame& frame) {
    std::ostringstream out;
    out << "#FGRID v1\n";
    out << "source: " << frame.source_id << "\n";
    out << "time: " << format_rfc3339(frame.timestamp) << "\n";
    out << "n1: " << frame.grid.n1 << "\n";
    out << "n2: " << frame.grid.n2 << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "origin: %.10g %.10g", frame.grid.origin_lat,
                  frame.grid.origin_lon);
    out << buf << "\n";
    std::snprintf(buf, sizeof(buf), "step: %.10g %.10g", frame.grid.step_lat,
                  frame.grid.step_lon);
    out << buf << "\n";
    for (int i = 0; i < frame.grid.n1; ++i) {
        for (int j = 0; j < frame.grid.n2; ++j) {
            if (j) out << ' ';
            if (frame.values.missing(i, j)) {
                out << "NaN";
            } else {
                std::snprintf(buf, sizeof(buf), "%.17g", frame.values(i, j));
                out << buf;
            }
        }
        out << "\n";
    }
    return out.str();
}

void write_fgrid_file(const std::string& path, const ObservationFrame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << write_fgrid(frame);
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<SourceStream> load_streams(const std::string& dir, const ValueBounds& bounds,
                                       double cadence_seconds) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".fgrid")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::map<std::string, SourceStream> by_source;
    for (const fs::path& p : files) {
        ObservationFrame f = read_fgrid_file(p.string(), bounds);
        SourceStream& s = by_source[f.source_id];
        s.source_id = f.source_id;
        s.cadence_seconds = cadence_seconds;
        s.frames.push_back(std::move(f));
    }
    std::vector<SourceStream> out;
    for (auto& [id, s] : by_source) {
        std::sort(s.frames.begin(), s.frames.end(),
                  [](const ObservationFrame& a, const ObservationFrame& b) {
                      return a.timestamp < b.timestamp;
                  });
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

DownsampleMask build_downsample_mask(const GridSpec& grid, int g1, int g2) {
    grid.validate();
    if (g1 < 1 || g1 > grid.n1 || g2 < 1 || g2 > grid.n2)
        throw std::invalid_argument("build_downsample_mask: sizes must satisfy 1 <= g <= n");

    DownsampleMask m;
    m.g1 = g1;
    m.g2 = g2;
    auto axis_indices = [](int g, int n) {
        std::vector<int> idx(g);
        for (int j = 0; j < g; ++j)
            idx[j] = static_cast<int>(std::llround((j + 0.5) * n / static_cast<double>(g) - 0.5));
        return idx;
    };
    m.rows = axis_indices(g1, grid.n1);
    m.cols = axis_indices(g2, grid.n2);
    m.selected.assign(static_cast<std::size_t>(grid.n1) * grid.n2, 0);
    for (int i : m.rows)
        for (int j : m.cols) m.selected[static_cast<std::size_t>(i) * grid.n2 + j] = 1;
    return m;
}

int FusedObservation::total_rows() const {
    int n = 0;
    for (const SourceBlock& b : blocks) n += static_cast<int>(b.cells.size());
    return n;
}

Eigen::VectorXd FusedObservation::stacked() const {
    Eigen::VectorXd y(total_rows());
    for (const SourceBlock& b : blocks) y.segment(b.offset, b.y.size()) = b.y;
    return y;
}

Eigen::MatrixXd FusedObservation::selector_matrix(const SourceBlock& block, int cells) const {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(static_cast<int>(block.cells.size()), cells);
    for (std::size_t r = 0; r < block.cells.size(); ++r) K(static_cast<int>(r), block.cells[r]) = 1.0;
    return K;
}

std::vector<std::int64_t> cadence_ticks(const std::vector<SourceStream>& streams,
                                        double cadence_seconds, double tolerance_seconds,
                                        std::vector<std::string>* rejected) {
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const SourceStream& s : streams)
        for (const ObservationFrame& f : s.frames) {
            lo = std::min(lo, f.timestamp);
            hi = std::max(hi, f.timestamp);
        }
    std::vector<std::int64_t> ticks;
    if (lo > hi) return ticks;

    const std::int64_t step = static_cast<std::int64_t>(cadence_seconds);
    if (step <= 0) throw std::invalid_argument("cadence_ticks: cadence must be positive");
    for (std::int64_t t = lo; t <= hi + static_cast<std::int64_t>(tolerance_seconds); t += step)
        ticks.push_back(t);

    if (rejected) {
        for (const SourceStream& s : streams)
            for (const ObservationFrame& f : s.frames) {
                const std::int64_t d = (f.timestamp - lo) % step;
                const std::int64_t miss = std::min(d, step - d);
                if (miss > static_cast<std::int64_t>(tolerance_seconds))
                    rejected->push_back(s.source_id + "@" + format_rfc3339(f.timestamp));
            }
    }
    return ticks;
}

FusedObservation fuse(const std::vector<SourceStream>& streams, std::int64_t t,
                      const DownsampleMask* downsample, double tolerance_seconds) {
    FusedObservation out;
    out.timestamp = t;

    std::vector<const SourceStream*> ordered;
    for (const SourceStream& s : streams) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const SourceStream* a, const SourceStream* b) {
                  return a->source_id < b->source_id;
              });

    int offset = 0;
    for (const SourceStream* s : ordered) {
        const ObservationFrame* hit = nullptr;
        for (const ObservationFrame& f : s->frames) {
            if (std::llabs(f.timestamp - t) <= static_cast<std::int64_t>(tolerance_seconds)) {
                hit = &f;
                break;
            }
        }
        if (!hit) continue;

        SourceBlock block;
        block.source_id = s->source_id;
        block.offset = offset;
        const GridSpec& g = hit->grid;
        std::vector<double> vals;
        for (int i = 0; i < g.n1; ++i)
            for (int j = 0; j < g.n2; ++j) {
                if (hit->values.missing(i, j)) continue;
                const int flat = g.flat(i, j);
                if (downsample && !downsample->selected[flat]) continue;
                block.cells.push_back(flat);
                vals.push_back(hit->values(i, j));
            }
        block.y = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
        offset += static_cast<int>(block.cells.size());
        out.blocks.push_back(std::move(block));
    }
    return out;
}

}  // namespace adstm
