#pragma once

#include <Eigen/Dense>
#include <vector>

#include "adstm/grid.hpp"

namespace adstm {

/// Velocity and diffusivity fields on the grid. Velocities are in
/// grid-fraction per time step, diffusivity in grid-fraction^2 per step.
struct FlowFields {
    Eigen::MatrixXd vx;           // n1 x n2, component along s1
    Eigen::MatrixXd vy;           // n1 x n2, component along s2
    Eigen::MatrixXd diffusivity;  // n1 x n2, >= 0
    double time_tag = 0.0;

    static FlowFields constant(int n1, int n2, double cvx, double cvy, double d = 0.0);
    /// Constant flow from polar (speed, direction in degrees measured from
    /// the +s1 axis toward +s2).
    static FlowFields from_speed_direction(int n1, int n2, double speed, double direction_deg,
                                           double d = 0.0);

    void validate() const;
    double max_speed() const;
};

struct OpticalFlowParams {
    double smoothness = 100.0;  // Horn-Schunck regularisation weight (squared-intensity units)
    int iterations = 200;
};

/// Dense Horn-Schunck flow averaged over all consecutive frame pairs.
/// Missing pixels are excluded from the brightness-constancy data term.
FlowFields estimate_optical_flow(const std::vector<Field>& frames,
                                 const OpticalFlowParams& params = {});

/// D(s) = 0.28 (dx dy) sqrt((dvx/ds1 - dvy/ds2)^2 + (dvx/ds2 + dvy/ds1)^2),
/// partials by periodic central differences.
Field derive_diffusivity(const FlowFields& flow, double delta_x, double delta_y);

/// Advection-diffusion operator applied to a gridded field with periodic
/// central differences: -v.grad(f) + grad(D).grad(f) + D lap(f).
Field apply_operator(const Field& field, const FlowFields& flow);

}  // namespace adstm
