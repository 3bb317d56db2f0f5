#pragma once

#include <Eigen/Dense>

#include "adstm/flow.hpp"
#include "adstm/grid.hpp"
#include "adstm/spectral.hpp"

namespace adstm {

/// Galerkin generator P of the spectral ODE alpha' = P alpha together with
/// its matrix exponential over one time step.
struct TransitionMatrix {
    Eigen::MatrixXd p;
    Eigen::MatrixXd exp_p;
    double step = 1.0;
};

/// Scaling-and-squaring matrix exponential with a [13/13] Pade approximant.
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& m);

/// Projects the advection-diffusion operator onto the retained basis by
/// exact summation over the grid: P = Gamma^-1 Psi with
/// Psi_ij = <A phi_j, phi_i> and Gamma the diagonal basis Gram. Basis
/// gradients and Laplacians are analytic; grad(D) uses periodic central
/// differences.
TransitionMatrix galerkin_transition(const FlowFields& flow, int kappa1, int kappa2,
                                     const GridSpec& grid, double step = 1.0);

}  // namespace adstm
