#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adstm/flow.hpp"
#include "adstm/fusion.hpp"
#include "adstm/grid.hpp"

namespace adstm {

struct BumpSpec {
    std::vector<std::pair<double, double>> centers;
    double sigma = 0.25;
    double amplitude = 3.0;
};

/// Rectangle in unit-square coordinates, [lo, hi) per axis.
struct RectSpec {
    double s1_lo = 0.0, s1_hi = 0.0;
    double s2_lo = 0.0, s2_hi = 0.0;
    bool contains(double s1, double s2) const {
        return s1 >= s1_lo && s1 < s1_hi && s2 >= s2_lo && s2 < s2_hi;
    }
    bool empty() const { return s1_hi <= s1_lo || s2_hi <= s2_lo; }
};

struct SyntheticSource {
    std::string id;
    double bias = 0.0;                 // constant additive reading offset
    double missing_rate = 0.0;         // iid per-pixel dropout probability
    std::optional<RectSpec> zero_rect; // region reported as zero (sensor blind spot)
};

struct SimConfig {
    GridSpec grid;
    BumpSpec initial;
    double speed = 0.015;          // grid fraction per step
    double direction_deg = 45.0;   // from +s1 toward +s2
    std::optional<FlowFields> flow_override;
    double diffusivity = 0.0;
    double noise_sd = 0.1;
    int frames = 30;
    std::uint64_t seed = 0;
    int substeps = 4;
    int advection_order = 3;       // 1 = donor cell, 3 = third-order upwind biased
    std::vector<SyntheticSource> sources;
    std::int64_t start_time = 1601575380;  // 2020-10-01T18:03:00Z
    double cadence_seconds = 300.0;

    static SimConfig table1_benchmark(std::uint64_t seed);
};

/// Sum of isotropic Gaussian bumps periodised onto the unit torus (images
/// within +-2 in each axis), so the field is smooth across the seam.
Field gaussian_bumps(const BumpSpec& spec, const GridSpec& grid);

/// One frame step of the advection-diffusion equation: upwind-biased
/// advection differences plus conservative central diffusion, integrated
/// with Heun substeps. The substep count is raised automatically to satisfy
/// the CFL limit; unexplained growth of max|field| beyond 10x aborts.
Field step_pde(const Field& field, const FlowFields& flow, double dt, int substeps,
               int advection_order = 3);

struct SyntheticDataset {
    std::vector<Field> truth;               // noiseless PDE frames 1..frames
    std::vector<SourceStream> streams;
    std::string manifest;
};

/// Simulates the truth sequence and derives per-source noisy, biased, gappy
/// streams. Deterministic per seed.
SyntheticDataset generate_streams(const SimConfig& config);

/// Writes streams to <dir>/<source>/frame_NNNN.fgrid, truth to <dir>/truth/
/// and the manifest to <dir>/manifest.txt.
void write_dataset(const SyntheticDataset& data, const SimConfig& config,
                   const std::string& dir);

}  // namespace adstm
