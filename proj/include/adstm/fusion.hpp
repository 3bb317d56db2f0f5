#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adstm/grid.hpp"

namespace adstm {

/// Physical bounds applied to parsed values. Defaults follow the AOD
/// product range.
struct ValueBounds {
    double lo = -0.05;
    double hi = 5.0;
    bool strict = false;  // reject out-of-range values instead of accepting
};

/// One time-stamped gappy grid of measurements from one source.
struct ObservationFrame {
    std::string source_id;
    std::int64_t timestamp = 0;  // seconds since the Unix epoch (UTC)
    GridSpec grid;
    Field values;

    int missing_count() const { return values.missing_count(); }
};

/// Ordered frames from one source; timestamps strictly increase.
struct SourceStream {
    std::string source_id;
    double cadence_seconds = 300.0;
    std::vector<ObservationFrame> frames;

    void validate() const;
};

/// Uniformly spaced g1 x g2 sub-grid selection (the downsampling mask M_t).
struct DownsampleMask {
    int g1 = 0, g2 = 0;
    std::vector<int> rows;  // selected i indices
    std::vector<int> cols;  // selected j indices
    std::vector<std::uint8_t> selected;  // flat n1*n2 indicator
};

DownsampleMask build_downsample_mask(const GridSpec& grid, int g1, int g2);

/// One source's contribution to a fused observation: the observed (and
/// selected) cells in row order plus their values.
struct SourceBlock {
    std::string source_id;
    int offset = 0;              // first row of this block inside y
    std::vector<int> cells;      // flat grid indices, one per block row
    Eigen::VectorXd y;
};

/// All observations available at one time, stacked source by source in
/// ascending source_id order.
struct FusedObservation {
    std::int64_t timestamp = 0;
    std::vector<SourceBlock> blocks;

    int total_rows() const;
    Eigen::VectorXd stacked() const;
    /// Dense realisation of the Boolean selector (rows x N), one 1 per row.
    Eigen::MatrixXd selector_matrix(const SourceBlock& block, int cells) const;
};

/// Stacks the frames of all streams that report at time t (within tolerance
/// of the cadence tick). Sources with no frame at t are simply absent.
FusedObservation fuse(const std::vector<SourceStream>& streams, std::int64_t t,
                      const DownsampleMask* downsample = nullptr,
                      double tolerance_seconds = 30.0);

/// RFC 3339 timestamp (subset: YYYY-MM-DDTHH:MM:SS[.frac](Z|+hh:mm|-hh:mm)).
std::int64_t parse_rfc3339(const std::string& text);
std::string format_rfc3339(std::int64_t seconds_utc);

/// FGRID v1 text format.
ObservationFrame parse_fgrid(const std::string& content, const ValueBounds& bounds = {});
ObservationFrame read_fgrid_file(const std::string& path, const ValueBounds& bounds = {});
std::string write_fgrid(const ObservationFrame& frame);
void write_fgrid_file(const std::string& path, const ObservationFrame& frame);

/// Loads every *.fgrid file under `dir` and groups frames into streams by
/// source_id (frames sorted by timestamp within each stream).
std::vector<SourceStream> load_streams(const std::string& dir, const ValueBounds& bounds = {},
                                       double cadence_seconds = 300.0);

/// The shared cadence ticks spanning all streams, anchored at the earliest
/// frame. Frames more than `tolerance_seconds` off every tick are reported
/// in `rejected` (if non-null) and never fused.
std::vector<std::int64_t> cadence_ticks(const std::vector<SourceStream>& streams,
                                        double cadence_seconds, double tolerance_seconds = 30.0,
                                        std::vector<std::string>* rejected = nullptr);

}  // namespace adstm
