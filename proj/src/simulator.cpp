#include "adstm/simulator.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "adstm/rng.hpp"

namespace adstm {

namespace {

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

Eigen::MatrixXd advection_term(const Eigen::MatrixXd& f, const FlowFields& flow, int order) {
    const int n1 = static_cast<int>(f.rows()), n2 = static_cast<int>(f.cols());
    const double h1 = 1.0 / n1, h2 = 1.0 / n2;
    Eigen::MatrixXd out(n1, n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            const double vx = flow.vx(i, j);
            const double vy = flow.vy(i, j);
            double dfx, dfy;
            if (order == 1) {
                dfx = vx > 0 ? (f(i, j) - f(wrap(i - 1, n1), j)) / h1
                             : (f(wrap(i + 1, n1), j) - f(i, j)) / h1;
                dfy = vy > 0 ? (f(i, j) - f(i, wrap(j - 1, n2))) / h2
                             : (f(i, wrap(j + 1, n2)) - f(i, j)) / h2;
            } else {
                // third-order upwind-biased stencil
                dfx = vx > 0 ? (2.0 * f(wrap(i + 1, n1), j) + 3.0 * f(i, j) -
                                6.0 * f(wrap(i - 1, n1), j) + f(wrap(i - 2, n1), j)) /
                                   (6.0 * h1)
                             : (-2.0 * f(wrap(i - 1, n1), j) - 3.0 * f(i, j) +
                                6.0 * f(wrap(i + 1, n1), j) - f(wrap(i + 2, n1), j)) /
                                   (6.0 * h1);
                dfy = vy > 0 ? (2.0 * f(i, wrap(j + 1, n2)) + 3.0 * f(i, j) -
                                6.0 * f(i, wrap(j - 1, n2)) + f(i, wrap(j - 2, n2))) /
                                   (6.0 * h2)
                             : (-2.0 * f(i, wrap(j - 1, n2)) - 3.0 * f(i, j) +
                                6.0 * f(i, wrap(j + 1, n2)) - f(i, wrap(j + 2, n2))) /
                                   (6.0 * h2);
            }
            out(i, j) = -(vx * dfx + vy * dfy);
        }
    return out;
}

// Conservative form with face-averaged diffusivity: preserves the spatial
// mean exactly on the periodic grid.
Eigen::MatrixXd diffusion_term(const Eigen::MatrixXd& f, const Eigen::MatrixXd& D) {
    const int n1 = static_cast<int>(f.rows()), n2 = static_cast<int>(f.cols());
    const double h1 = 1.0 / n1, h2 = 1.0 / n2;
    Eigen::MatrixXd out(n1, n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            const double dp1 = 0.5 * (D(i, j) + D(wrap(i + 1, n1), j));
            const double dm1 = 0.5 * (D(i, j) + D(wrap(i - 1, n1), j));
            const double dp2 = 0.5 * (D(i, j) + D(i, wrap(j + 1, n2)));
            const double dm2 = 0.5 * (D(i, j) + D(i, wrap(j - 1, n2)));
            out(i, j) = (dp1 * (f(wrap(i + 1, n1), j) - f(i, j)) -
                         dm1 * (f(i, j) - f(wrap(i - 1, n1), j))) /
                            (h1 * h1) +
                        (dp2 * (f(i, wrap(j + 1, n2)) - f(i, j)) -
                         dm2 * (f(i, j) - f(i, wrap(j - 1, n2)))) /
                            (h2 * h2);
        }
    return out;
}

Eigen::MatrixXd rhs(const Eigen::MatrixXd& f, const FlowFields& flow, int order) {
    return advection_term(f, flow, order) + diffusion_term(f, flow.diffusivity);
}

}  // namespace

SimConfig SimConfig::table1_benchmark(std::uint64_t seed) {
    SimConfig c;
    c.grid.n1 = 20;
    c.grid.n2 = 20;
    c.grid.origin_lat = 36.0;
    c.grid.origin_lon = -122.0;
    c.grid.step_lat = 0.04;
    c.grid.step_lon = 0.04;
    c.initial.centers = {{0.1, 0.1}, {0.1, 0.2}, {0.2, 0.1}, {0.2, 0.2}};
    c.initial.sigma = 0.25;
    c.initial.amplitude = 3.0;
    c.speed = 0.015;
    c.direction_deg = 45.0;
    c.diffusivity = 0.0;
    c.noise_sd = 0.1;
    c.frames = 30;
    c.seed = seed;
    c.sources = {{"sim0", 0.0, 0.0, std::nullopt}};
    return c;
}

Field gaussian_bumps(const BumpSpec& spec, const GridSpec& grid) {
    grid.validate();
    if (spec.sigma <= 0.0) throw std::invalid_argument("gaussian_bumps: sigma must be positive");

    const double norm = spec.amplitude / (2.0 * std::numbers::pi * spec.sigma * spec.sigma);
    const double inv2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
    Eigen::MatrixXd vals = Eigen::MatrixXd::Zero(grid.n1, grid.n2);
    for (int i = 0; i < grid.n1; ++i) {
        const double s1 = grid.s1(i);
        for (int j = 0; j < grid.n2; ++j) {
            const double s2 = grid.s2(j);
            double v = 0.0;
            for (const auto& [c1, c2] : spec.centers)
                for (int m1 = -2; m1 <= 2; ++m1)
                    for (int m2 = -2; m2 <= 2; ++m2) {
                        const double d1 = s1 - c1 + m1;
                        const double d2 = s2 - c2 + m2;
                        v += std::exp(-(d1 * d1 + d2 * d2) * inv2s2);
                    }
            vals(i, j) = norm * v;
        }
    }
    return Field::from_values(std::move(vals));
}

Field step_pde(const Field& field, const FlowFields& flow, double dt, int substeps,
               int advection_order) {
    field.require_complete("step_pde");
    flow.validate();
    if (advection_order != 1 && advection_order != 3)
        throw std::invalid_argument("step_pde: advection order must be 1 or 3");
    if (dt <= 0.0 || substeps < 1) throw std::invalid_argument("step_pde: bad step arguments");

    const int n1 = field.n1(), n2 = field.n2();
    const double h1 = 1.0 / n1, h2 = 1.0 / n2;

    // CFL limit over the frame interval; substeps are raised when violated.
    const double vmax1 = flow.vx.cwiseAbs().maxCoeff();
    const double vmax2 = flow.vy.cwiseAbs().maxCoeff();
    const double dmax = flow.diffusivity.maxCoeff();
    const double rate = vmax1 / h1 + vmax2 / h2 + 2.0 * dmax * (1.0 / (h1 * h1) + 1.0 / (h2 * h2));
    const int needed = rate > 0 ? static_cast<int>(std::ceil(rate * dt / 0.4)) : 1;
    const int steps = std::max(substeps, needed);
    const double tau = dt / steps;

    const double initial_max = field.values().cwiseAbs().maxCoeff();
    Eigen::MatrixXd f = field.values();
    for (int s = 0; s < steps; ++s) {
        const Eigen::MatrixXd k1 = rhs(f, flow, advection_order);
        const Eigen::MatrixXd f1 = f + tau * k1;
        f = f + 0.5 * tau * (k1 + rhs(f1, flow, advection_order));
        const double cur = f.cwiseAbs().maxCoeff();
        if (!std::isfinite(cur) || (initial_max > 0.0 && cur > 10.0 * initial_max))
            throw std::runtime_error("step_pde: instability detected (max|field| grew past 10x)");
    }
    return Field::from_values(std::move(f));
}

SyntheticDataset generate_streams(const SimConfig& config) {
    config.grid.validate();
    if (config.frames < 1) throw std::invalid_argument("generate_streams: frames must be >= 1");
    if (config.noise_sd < 0.0) throw std::invalid_argument("generate_streams: negative noise sd");
    if (config.speed < 0.0) throw std::invalid_argument("generate_streams: negative speed");

    FlowFields flow = config.flow_override
                          ? *config.flow_override
                          : FlowFields::from_speed_direction(config.grid.n1, config.grid.n2,
                                                             config.speed, config.direction_deg,
                                                             config.diffusivity);
    flow.validate();

    SyntheticDataset out;
    Field current = gaussian_bumps(config.initial, config.grid);
    for (int t = 0; t < config.frames; ++t) {
        current = step_pde(current, flow, 1.0, config.substeps, config.advection_order);
        out.truth.push_back(current);
    }

    RngStream rng(config.seed);
    std::vector<SyntheticSource> sources = config.sources;
    if (sources.empty()) sources.push_back({"sim0", 0.0, 0.0, std::nullopt});

    for (const SyntheticSource& src : sources) {
        SourceStream stream;
        stream.source_id = src.id;
        stream.cadence_seconds = config.cadence_seconds;
        for (int t = 0; t < config.frames; ++t) {
            ObservationFrame frame;
            frame.source_id = src.id;
            frame.grid = config.grid;
            frame.timestamp =
                config.start_time + static_cast<std::int64_t>((t + 1) * config.cadence_seconds);
            frame.values = Field(config.grid.n1, config.grid.n2);
            for (int i = 0; i < config.grid.n1; ++i)
                for (int j = 0; j < config.grid.n2; ++j) {
                    double v = out.truth[t](i, j) + src.bias;
                    if (src.zero_rect &&
                        src.zero_rect->contains(config.grid.s1(i), config.grid.s2(j)))
                        v = 0.0;
                    v += config.noise_sd * rng.normal();
                    const bool drop = src.missing_rate > 0.0 && rng.uniform() < src.missing_rate;
                    if (drop)
                        frame.values.set_missing(i, j);
                    else
                        frame.values.set(i, j, v);
                }
            stream.frames.push_back(std::move(frame));
        }
        out.streams.push_back(std::move(stream));
    }

    std::ostringstream man;
    man << "adstm dataset manifest\n";
    man << "grid: " << config.grid.n1 << " " << config.grid.n2 << "\n";
    man << "frames: " << config.frames << "\n";
    man << "seed: " << config.seed << "\n";
    man << "speed: " << config.speed << "\n";
    man << "direction_deg: " << config.direction_deg << "\n";
    man << "diffusivity: " << config.diffusivity << "\n";
    man << "noise_sd: " << config.noise_sd << "\n";
    man << "substeps: " << config.substeps << "\n";
    man << "advection_order: " << config.advection_order << "\n";
    man << "cadence_seconds: " << config.cadence_seconds << "\n";
    man << "start_time: " << format_rfc3339(config.start_time) << "\n";
    for (const SyntheticSource& src : sources) {
        man << "source: " << src.id << " bias=" << src.bias
            << " missing_rate=" << src.missing_rate;
        if (src.zero_rect)
            man << " zero_rect=" << src.zero_rect->s1_lo << "," << src.zero_rect->s2_lo << ","
                << src.zero_rect->s1_hi << "," << src.zero_rect->s2_hi;
        man << "\n";
    }
    out.manifest = man.str();
    return out;
}

void write_dataset(const SyntheticDataset& data, const SimConfig& config,
                   const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(fs::path(dir) / "truth");

    char name[64];
    for (std::size_t t = 0; t < data.truth.size(); ++t) {
        ObservationFrame frame;
        frame.source_id = "truth";
        frame.grid = config.grid;
        frame.timestamp = config.start_time +
                          static_cast<std::int64_t>((t + 1) * config.cadence_seconds);
        frame.values = data.truth[t];
        std::snprintf(name, sizeof(name), "frame_%04zu.fgrid", t + 1);
        write_fgrid_file((fs::path(dir) / "truth" / name).string(), frame);
    }
    for (const SourceStream& s : data.streams) {
        fs::create_directories(fs::path(dir) / s.source_id);
        for (std::size_t t = 0; t < s.frames.size(); ++t) {
            std::snprintf(name, sizeof(name), "frame_%04zu.fgrid", t + 1);
            write_fgrid_file((fs::path(dir) / s.source_id / name).string(), s.frames[t]);
        }
    }
    std::ofstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw std::runtime_error("cannot write manifest in " + dir);
    man << data.manifest;
}

}  // namespace adstm
