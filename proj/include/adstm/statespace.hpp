#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adstm/fusion.hpp"
#include "adstm/grid.hpp"
#include "adstm/rng.hpp"
#include "adstm/spectral.hpp"

namespace adstm {

/// Thrown when a sampler trajectory leaves the finite range.
struct FilterDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PriorConfig {
    double w_scale = 0.01;   // Phi = w_scale * I
    double nu_extra = 1.0;   // nu = state_dim + 1 + nu_extra (proper prior mean)
    double a = 0.01;
    double b = 0.01;
};

struct GibbsConfig {
    int iterations = 500;
    int burn_in = 200;
    std::uint64_t seed = 0;
    PriorConfig prior;
    double init_c0 = 10.0;
    bool store_trajectories = false;
    bool store_w_draws = false;
};

struct FilterState {
    Eigen::VectorXd m_pred, m_filt;
    Eigen::MatrixXd c_pred, c_filt;
};

struct KalmanStats {
    int jitter_events = 0;
    std::vector<std::string> notes;
};

/// G = [[exp_p, I], [0, I]]: physics transition on alpha, random walk on the
/// bias coefficients that feed alpha additively each step.
Eigen::MatrixXd build_G(const Eigen::MatrixXd& exp_p);

/// One predict+update sweep in the quoted covariance form. `v_diag` is the
/// diagonal of V_t; an empty y skips the update. A numerically singular
/// innovation covariance is jittered by 1e-8 * trace/dim and logged in stats.
FilterState kalman_step(const FilterState& prev, const Eigen::MatrixXd& G,
                        const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& v_diag, const Eigen::MatrixXd& W,
                        KalmanStats* stats = nullptr);

/// Dynamic model wiring: the alpha observation basis, the fused observation
/// sequence, the transition, and whether the state carries the bias half.
struct SsmModel {
    Eigen::MatrixXd basis;                        // N x q
    std::vector<FusedObservation> observations;   // one per cadence tick
    std::vector<std::string> source_ids;          // ascending, indexes sigma2
    Eigen::MatrixXd transition;                   // state_dim x state_dim
    Eigen::VectorXd init_m0;                      // empty: zero initial mean
    bool bias_augmented = true;
    int q = 0;

    int state_dim() const { return bias_augmented ? 2 * q : q; }
    int source_index(const std::string& id) const;
};

struct FfbsResult {
    std::vector<Eigen::VectorXd> trajectory;  // theta_0 .. theta_T
    std::vector<FilterState> filter;          // filter[t] covers tick t (1-based)
    int jitter_events = 0;
};

/// Forward filter then backward sampling; the draw extends through theta_0
/// so the W update can form the t=1 residual.
FfbsResult ffbs(const SsmModel& model, const Eigen::MatrixXd& W,
                const Eigen::VectorXd& sigma2, const Eigen::VectorXd& m0,
                const Eigen::MatrixXd& C0, RngStream& rng);

/// Forward pass only (no sampling); used for filtered-field outputs.
FfbsResult forward_filter(const SsmModel& model, const Eigen::MatrixXd& W,
                          const Eigen::VectorXd& sigma2, const Eigen::VectorXd& m0,
                          const Eigen::MatrixXd& C0);

struct WPosterior {
    Eigen::MatrixXd scale;
    double dof = 0.0;
};

/// Conjugate inverse-Wishart update from transition residuals
/// r_t = theta_t - G theta_{t-1} over t in [t_begin, T].
WPosterior w_posterior_params(const std::vector<Eigen::VectorXd>& trajectory,
                              const Eigen::MatrixXd& G, const Eigen::MatrixXd& phi,
                              double nu, int t_begin = 1);
Eigen::MatrixXd gibbs_update_w(const std::vector<Eigen::VectorXd>& trajectory,
                               const Eigen::MatrixXd& G, const Eigen::MatrixXd& phi,
                               double nu, RngStream& rng, int t_begin = 1);

struct SigmaPosterior {
    double a_post = 0.0;
    double b_post = 0.0;
};

SigmaPosterior sigma2_posterior_params(double a, double b, double sse, long n_obs);
double gibbs_update_sigma2(double a, double b, double sse, long n_obs, RngStream& rng);

/// Gibbs output. Full per-iteration trajectory / W storage is optional; the
/// posterior means and the per-iteration theta_T, sigma2 and trace-of-W
/// draws are always kept.
struct PosteriorDraws {
    std::vector<Eigen::VectorXd> theta_t_draws;   // theta_T per kept iteration
    std::vector<Eigen::VectorXd> sigma2_draws;
    std::vector<double> w_trace_draws;
    std::vector<std::vector<Eigen::VectorXd>> trajectories;  // optional
    std::vector<Eigen::MatrixXd> w_draws;                    // optional

    Eigen::MatrixXd w_mean;
    Eigen::VectorXd sigma2_mean;
    std::vector<Eigen::VectorXd> theta_mean;  // posterior mean of theta_0..T
    Eigen::MatrixXd g_mean;                   // transition (mean of draws when sampled)

    int burn_in = 0;
    std::uint64_t seed = 0;
    int jitter_events = 0;
    bool rank_warning = false;  // data-driven: T-1 < K encountered
};

/// Physics-informed sampler: alternates FFBS with the conjugate W and
/// sigma2 updates under the fixed transition in `model`.
PosteriorDraws run_gibbs(const SsmModel& model, const GibbsConfig& config);

/// Pure data-driven variant: no bias half, G re-estimated each iteration by
/// least squares from the sampled trajectory (minimum-norm when T-1 < K),
/// with the W update restricted to the transitions the fit covers.
PosteriorDraws run_gibbs_data_driven(SsmModel& model, const GibbsConfig& config);

struct TransitionEstimate {
    Eigen::MatrixXd g;
    bool rank_deficient = false;
};

/// G = (Theta1 - noise) pinv(Theta2) with Theta1 = theta_2..theta_T and
/// Theta2 = theta_1..theta_{T-1} taken from `trajectory`.
TransitionEstimate estimate_transition_ls(const std::vector<Eigen::VectorXd>& trajectory,
                                          const Eigen::MatrixXd& noise);

/// m0 per the initialisation rule: analyze the first reporting frame with
/// missing pixels mean-filled; zero bias half.
Eigen::VectorXd initial_state_mean(const SsmModel& model, const GridSpec& grid, int kappa1,
                                   int kappa2);

struct Prediction {
    Field mean;  // F alpha_hat
    Field bias;  // F gamma_hat (zero field when not bias-augmented)
};

/// Iterated one-step prediction theta_{T+j} = G_{T+j} theta_{T+j-1};
/// g_supplier(j) returns the transition for forward step j (1-based).
std::vector<Prediction> predict(const Eigen::VectorXd& theta_t,
                                const std::function<Eigen::MatrixXd(int)>& g_supplier, int k,
                                const Eigen::MatrixXd& basis, const GridSpec& grid,
                                bool bias_augmented);

/// Mean squared difference over the reference's observed pixels.
double compute_mse(const Field& predicted, const Field& reference);

}  // namespace adstm
