#include "adstm/statespace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace adstm {

namespace {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

// Gather the basis rows of one source block: the observation operator on the
// alpha half.
Eigen::MatrixXd block_basis(const Eigen::MatrixXd& basis, const SourceBlock& block) {
    Eigen::MatrixXd B(static_cast<int>(block.cells.size()), basis.cols());
    for (std::size_t r = 0; r < block.cells.size(); ++r)
        B.row(static_cast<int>(r)) = basis.row(block.cells[r]);
    return B;
}

struct UpdateAccumulator {
    // J = F^T V^-1 F restricted to the alpha block, r = F^T V^-1 innovation.
    Eigen::MatrixXd j_alpha;
    Eigen::VectorXd r_alpha;
    int n_obs = 0;
};

UpdateAccumulator accumulate_information(const SsmModel& model, const FusedObservation& obs,
                                         const Eigen::VectorXd& sigma2,
                                         const Eigen::VectorXd& m_pred_alpha) {
    UpdateAccumulator acc;
    acc.j_alpha = Eigen::MatrixXd::Zero(model.q, model.q);
    acc.r_alpha = Eigen::VectorXd::Zero(model.q);
    for (const SourceBlock& block : obs.blocks) {
        if (block.cells.empty()) continue;
        const int m = model.source_index(block.source_id);
        const double inv_s2 = 1.0 / sigma2(m);
        const Eigen::MatrixXd B = block_basis(model.basis, block);
        acc.j_alpha.noalias() += inv_s2 * (B.transpose() * B);
        acc.r_alpha.noalias() += inv_s2 * (B.transpose() * (block.y - B * m_pred_alpha));
        acc.n_obs += static_cast<int>(block.cells.size());
    }
    return acc;
}

// Information-form update: C_filt = (C_pred^-1 + J)^-1. Algebraically the
// quoted innovation-form update via the matrix inversion lemma; preferred
// when the stacked observation outnumbers the state.
void information_update(const SsmModel& model, const UpdateAccumulator& acc,
                        FilterState& fs, KalmanStats* stats) {
    const int K = model.state_dim();
    Eigen::LDLT<Eigen::MatrixXd> pred_ldlt(fs.c_pred);
    Eigen::MatrixXd a = pred_ldlt.solve(Eigen::MatrixXd::Identity(K, K));
    a.topLeftCorner(model.q, model.q) += acc.j_alpha;
    a = symmetrized(a);

    Eigen::LDLT<Eigen::MatrixXd> a_ldlt(a);
    if (a_ldlt.info() != Eigen::Success || !a_ldlt.isPositive()) {
        const double jitter = 1e-8 * a.trace() / K;
        a += jitter * Eigen::MatrixXd::Identity(K, K);
        a_ldlt.compute(a);
        if (stats) {
            ++stats->jitter_events;
            stats->notes.push_back("information matrix jittered");
        }
    }
    fs.c_filt = symmetrized(a_ldlt.solve(Eigen::MatrixXd::Identity(K, K)));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
    rhs.head(model.q) = acc.r_alpha;
    fs.m_filt = fs.m_pred + fs.c_filt * rhs;
}

// The quoted covariance-form update on an explicitly stacked F.
void innovation_update(const Eigen::MatrixXd& f, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& v_diag, FilterState& fs, KalmanStats* stats) {
    const int n = static_cast<int>(y.size());
    Eigen::MatrixXd cf_t = fs.c_pred * f.transpose();  // C F^T
    Eigen::MatrixXd s = f * cf_t;
    s.diagonal() += v_diag;
    s = symmetrized(s);

    Eigen::LDLT<Eigen::MatrixXd> s_ldlt(s);
    if (s_ldlt.info() != Eigen::Success || !s_ldlt.isPositive()) {
        const double jitter = 1e-8 * s.trace() / n;
        s.diagonal().array() += jitter;
        s_ldlt.compute(s);
        if (stats) {
            ++stats->jitter_events;
            stats->notes.push_back("innovation covariance jittered");
        }
    }
    const Eigen::VectorXd innov = y - f * fs.m_pred;
    fs.m_filt = fs.m_pred + cf_t * s_ldlt.solve(innov);
    fs.c_filt = symmetrized(fs.c_pred - cf_t * s_ldlt.solve(cf_t.transpose()));
}

Eigen::MatrixXd stacked_f(const SsmModel& model, const FusedObservation& obs) {
    const int K = model.state_dim();
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(obs.total_rows(), K);
    for (const SourceBlock& block : obs.blocks)
        for (std::size_t r = 0; r < block.cells.size(); ++r)
            f.row(block.offset + static_cast<int>(r)).head(model.q) =
                model.basis.row(block.cells[r]);
    return f;
}

Eigen::VectorXd stacked_vdiag(const SsmModel& model, const FusedObservation& obs,
                              const Eigen::VectorXd& sigma2) {
    Eigen::VectorXd v(obs.total_rows());
    for (const SourceBlock& block : obs.blocks)
        v.segment(block.offset, static_cast<int>(block.cells.size()))
            .setConstant(sigma2(model.source_index(block.source_id)));
    return v;
}

void filter_sweep(const SsmModel& model, const Eigen::MatrixXd& W,
                  const Eigen::VectorXd& sigma2, const Eigen::VectorXd& m0,
                  const Eigen::MatrixXd& C0, FfbsResult& out, KalmanStats* stats) {
    const int T = static_cast<int>(model.observations.size());
    const int K = model.state_dim();
    if (model.transition.rows() != K || model.transition.cols() != K)
        throw std::invalid_argument("filter: transition does not match state dimension");
    if (m0.size() != K || C0.rows() != K)
        throw std::invalid_argument("filter: initial moments do not match state dimension");

    out.filter.clear();
    out.filter.resize(T + 1);
    out.filter[0].m_filt = m0;
    out.filter[0].c_filt = symmetrized(C0);
    out.filter[0].m_pred = m0;
    out.filter[0].c_pred = symmetrized(C0);

    for (int t = 1; t <= T; ++t) {
        const FusedObservation& obs = model.observations[t - 1];
        FilterState fs;
        fs.m_pred = model.transition * out.filter[t - 1].m_filt;
        fs.c_pred = symmetrized(model.transition * out.filter[t - 1].c_filt *
                                    model.transition.transpose() +
                                W);

        const int n_obs = obs.total_rows();
        if (n_obs == 0) {
            fs.m_filt = fs.m_pred;
            fs.c_filt = fs.c_pred;
        } else if (n_obs <= K) {
            innovation_update(stacked_f(model, obs), obs.stacked(),
                              stacked_vdiag(model, obs, sigma2), fs, stats);
        } else {
            const UpdateAccumulator acc =
                accumulate_information(model, obs, sigma2, fs.m_pred.head(model.q));
            information_update(model, acc, fs, stats);
        }
        if (!fs.m_filt.allFinite())
            throw FilterDivergence("filter mean diverged at tick " + std::to_string(t));
        out.filter[t] = std::move(fs);
    }
}

}  // namespace

int SsmModel::source_index(const std::string& id) const {
    for (std::size_t i = 0; i < source_ids.size(); ++i)
        if (source_ids[i] == id) return static_cast<int>(i);
    throw std::invalid_argument("unknown source id: " + id);
}

Eigen::MatrixXd build_G(const Eigen::MatrixXd& exp_p) {
    const int g = static_cast<int>(exp_p.rows());
    if (exp_p.cols() != g) throw std::invalid_argument("build_G: exp_p must be square");
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * g, 2 * g);
    G.topLeftCorner(g, g) = exp_p;
    G.topRightCorner(g, g) = Eigen::MatrixXd::Identity(g, g);
    G.bottomRightCorner(g, g) = Eigen::MatrixXd::Identity(g, g);
    return G;
}

FilterState kalman_step(const FilterState& prev, const Eigen::MatrixXd& G,
                        const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& v_diag, const Eigen::MatrixXd& W,
                        KalmanStats* stats) {
    FilterState fs;
    fs.m_pred = G * prev.m_filt;
    fs.c_pred = symmetrized(G * prev.c_filt * G.transpose() + W);
    if (y.size() == 0) {
        fs.m_filt = fs.m_pred;
        fs.c_filt = fs.c_pred;
        return fs;
    }
    if (F.rows() != y.size() || v_diag.size() != y.size())
        throw std::invalid_argument("kalman_step: observation dimensions inconsistent");
    innovation_update(F, y, v_diag, fs, stats);
    return fs;
}

FfbsResult forward_filter(const SsmModel& model, const Eigen::MatrixXd& W,
                          const Eigen::VectorXd& sigma2, const Eigen::VectorXd& m0,
                          const Eigen::MatrixXd& C0) {
    FfbsResult out;
    KalmanStats stats;
    filter_sweep(model, W, sigma2, m0, C0, out, &stats);
    out.jitter_events = stats.jitter_events;
    return out;
}

FfbsResult ffbs(const SsmModel& model, const Eigen::MatrixXd& W,
                const Eigen::VectorXd& sigma2, const Eigen::VectorXd& m0,
                const Eigen::MatrixXd& C0, RngStream& rng) {
    FfbsResult out;
    KalmanStats stats;
    filter_sweep(model, W, sigma2, m0, C0, out, &stats);
    out.jitter_events = stats.jitter_events;

    const int T = static_cast<int>(model.observations.size());
    out.trajectory.resize(T + 1);
    out.trajectory[T] = sample_gaussian_psd(out.filter[T].m_filt, out.filter[T].c_filt, rng);

    const Eigen::MatrixXd& G = model.transition;
    for (int t = T - 1; t >= 0; --t) {
        const FilterState& cur = out.filter[t];
        const FilterState& nxt = out.filter[t + 1];
        // h_t = m_t|t + C_t|t G^T C_{t+1|t}^-1 (theta_{t+1} - m_{t+1|t})
        Eigen::LDLT<Eigen::MatrixXd> pred_ldlt(nxt.c_pred);
        const Eigen::MatrixXd gain =
            pred_ldlt.solve(G * cur.c_filt).transpose();  // C_t|t G^T C_pred^-1
        const Eigen::VectorXd h =
            cur.m_filt + gain * (out.trajectory[t + 1] - nxt.m_pred);
        const Eigen::MatrixXd H = symmetrized(cur.c_filt - gain * G * cur.c_filt);
        out.trajectory[t] = sample_gaussian_psd(h, H, rng);
        if (!out.trajectory[t].allFinite())
            throw FilterDivergence("backward sample diverged at tick " + std::to_string(t));
    }
    return out;
}

WPosterior w_posterior_params(const std::vector<Eigen::VectorXd>& trajectory,
                              const Eigen::MatrixXd& G, const Eigen::MatrixXd& phi,
                              double nu, int t_begin) {
    if (trajectory.empty()) throw std::invalid_argument("w_posterior_params: empty trajectory");
    const int T = static_cast<int>(trajectory.size()) - 1;
    WPosterior post;
    post.scale = phi;
    post.dof = nu;
    for (int t = std::max(t_begin, 1); t <= T; ++t) {
        const Eigen::VectorXd r = trajectory[t] - G * trajectory[t - 1];
        post.scale.noalias() += r * r.transpose();
        post.dof += 1.0;
    }
    post.scale = symmetrized(post.scale);
    return post;
}

Eigen::MatrixXd gibbs_update_w(const std::vector<Eigen::VectorXd>& trajectory,
                               const Eigen::MatrixXd& G, const Eigen::MatrixXd& phi,
                               double nu, RngStream& rng, int t_begin) {
    const WPosterior post = w_posterior_params(trajectory, G, phi, nu, t_begin);
    return sample_inverse_wishart(post.scale, post.dof, rng);
}

SigmaPosterior sigma2_posterior_params(double a, double b, double sse, long n_obs) {
    return {a + 0.5 * static_cast<double>(n_obs), b + 0.5 * sse};
}

double gibbs_update_sigma2(double a, double b, double sse, long n_obs, RngStream& rng) {
    const SigmaPosterior post = sigma2_posterior_params(a, b, sse, n_obs);
    return sample_inverse_gamma(post.a_post, post.b_post, rng);
}

Eigen::VectorXd initial_state_mean(const SsmModel& model, const GridSpec& grid, int kappa1,
                                   int kappa2) {
    Field first(grid.n1, grid.n2);
    for (int i = 0; i < grid.n1; ++i)
        for (int j = 0; j < grid.n2; ++j) first.set_missing(i, j);

    for (const FusedObservation& obs : model.observations) {
        if (obs.total_rows() == 0) continue;
        // Scatter the first reporting tick back onto the grid; cells seen by
        // several sources keep the average.
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(grid.cells());
        Eigen::VectorXi cnt = Eigen::VectorXi::Zero(grid.cells());
        for (const SourceBlock& b : obs.blocks)
            for (std::size_t r = 0; r < b.cells.size(); ++r) {
                sum(b.cells[r]) += b.y(static_cast<long>(r));
                cnt(b.cells[r]) += 1;
            }
        for (int i = 0; i < grid.n1; ++i)
            for (int j = 0; j < grid.n2; ++j) {
                const int c = grid.flat(i, j);
                if (cnt(c) > 0) first.set(i, j, sum(c) / cnt(c));
            }
        break;
    }

    const SpectralCoeffs alpha0 = analyze(first.filled_with_mean(), kappa1, kappa2);
    Eigen::VectorXd m0 = Eigen::VectorXd::Zero(model.state_dim());
    m0.head(model.q) = alpha0.values;
    return m0;
}

namespace {

struct GibbsAccumulators {
    Eigen::MatrixXd w_sum;
    Eigen::VectorXd sigma2_sum;
    std::vector<Eigen::VectorXd> theta_sum;
    Eigen::MatrixXd g_sum;
    int count = 0;
};

void accumulate(GibbsAccumulators& acc, const std::vector<Eigen::VectorXd>& traj,
                const Eigen::MatrixXd& W, const Eigen::VectorXd& sigma2,
                const Eigen::MatrixXd& G) {
    if (acc.count == 0) {
        acc.w_sum = W;
        acc.sigma2_sum = sigma2;
        acc.theta_sum = traj;
        acc.g_sum = G;
    } else {
        acc.w_sum += W;
        acc.sigma2_sum += sigma2;
        for (std::size_t t = 0; t < traj.size(); ++t) acc.theta_sum[t] += traj[t];
        acc.g_sum += G;
    }
    ++acc.count;
}

void finalize(const GibbsAccumulators& acc, PosteriorDraws& out) {
    if (acc.count == 0) throw std::invalid_argument("run_gibbs: no post-burn-in iterations");
    const double inv = 1.0 / acc.count;
    out.w_mean = acc.w_sum * inv;
    out.sigma2_mean = acc.sigma2_sum * inv;
    out.g_mean = acc.g_sum * inv;
    out.theta_mean.clear();
    for (const Eigen::VectorXd& s : acc.theta_sum) out.theta_mean.push_back(s * inv);
}

double source_sse(const SsmModel& model, const std::vector<Eigen::VectorXd>& traj,
                  const std::string& source_id, long& n_obs) {
    double sse = 0.0;
    n_obs = 0;
    const int T = static_cast<int>(model.observations.size());
    for (int t = 1; t <= T; ++t)
        for (const SourceBlock& block : model.observations[t - 1].blocks) {
            if (block.source_id != source_id || block.cells.empty()) continue;
            const Eigen::MatrixXd B = block_basis(model.basis, block);
            const Eigen::VectorXd e = block.y - B * traj[t].head(model.q);
            sse += e.squaredNorm();
            n_obs += static_cast<long>(block.cells.size());
        }
    return sse;
}

void check_gibbs_config(const SsmModel& model, const GibbsConfig& config) {
    if (config.iterations <= config.burn_in || config.burn_in < 0)
        throw std::invalid_argument("run_gibbs: need iterations > burn_in >= 0");
    if (model.observations.empty()) throw std::invalid_argument("run_gibbs: no observations");
    if (model.q <= 0 || model.basis.cols() != model.q)
        throw std::invalid_argument("run_gibbs: basis/state dimensions inconsistent");
}

}  // namespace

PosteriorDraws run_gibbs(const SsmModel& model, const GibbsConfig& config) {
    check_gibbs_config(model, config);
    const int K = model.state_dim();
    const int n_src = static_cast<int>(model.source_ids.size());
    RngStream rng(config.seed);

    const Eigen::MatrixXd phi = config.prior.w_scale * Eigen::MatrixXd::Identity(K, K);
    const double nu = K + 1 + config.prior.nu_extra;

    const Eigen::VectorXd m0 =
        model.init_m0.size() == K ? model.init_m0 : Eigen::VectorXd::Zero(K);
    const Eigen::MatrixXd C0 = config.init_c0 * Eigen::MatrixXd::Identity(K, K);

    Eigen::MatrixXd W = config.prior.w_scale * Eigen::MatrixXd::Identity(K, K);
    Eigen::VectorXd sigma2 = Eigen::VectorXd::Ones(n_src);

    PosteriorDraws out;
    out.burn_in = config.burn_in;
    out.seed = config.seed;
    GibbsAccumulators acc;

    for (int it = 0; it < config.iterations; ++it) {
        FfbsResult draw = ffbs(model, W, sigma2, m0, C0, rng);
        out.jitter_events += draw.jitter_events;

        W = gibbs_update_w(draw.trajectory, model.transition, phi, nu, rng, 1);
        for (int m = 0; m < n_src; ++m) {
            long n_m = 0;
            const double sse = source_sse(model, draw.trajectory, model.source_ids[m], n_m);
            sigma2(m) = gibbs_update_sigma2(config.prior.a, config.prior.b, sse, n_m, rng);
        }

        if (it >= config.burn_in) {
            out.theta_t_draws.push_back(draw.trajectory.back());
            out.sigma2_draws.push_back(sigma2);
            out.w_trace_draws.push_back(W.trace());
            if (config.store_trajectories) out.trajectories.push_back(draw.trajectory);
            if (config.store_w_draws) out.w_draws.push_back(W);
            accumulate(acc, draw.trajectory, W, sigma2, model.transition);
        }
    }
    finalize(acc, out);
    return out;
}

PosteriorDraws run_gibbs_data_driven(SsmModel& model, const GibbsConfig& config) {
    model.bias_augmented = false;
    check_gibbs_config(model, config);
    const int K = model.state_dim();
    const int T = static_cast<int>(model.observations.size());
    const int n_src = static_cast<int>(model.source_ids.size());
    RngStream rng(config.seed);

    const Eigen::MatrixXd phi = config.prior.w_scale * Eigen::MatrixXd::Identity(K, K);
    const double nu = K + 1 + config.prior.nu_extra;

    Eigen::VectorXd m0 = model.init_m0.size() == K ? model.init_m0 : Eigen::VectorXd::Zero(K);
    const Eigen::MatrixXd C0 = config.init_c0 * Eigen::MatrixXd::Identity(K, K);

    Eigen::MatrixXd W = config.prior.w_scale * Eigen::MatrixXd::Identity(K, K);
    Eigen::VectorXd sigma2 = Eigen::VectorXd::Ones(n_src);
    model.transition = Eigen::MatrixXd::Identity(K, K);

    PosteriorDraws out;
    out.burn_in = config.burn_in;
    out.seed = config.seed;
    GibbsAccumulators acc;

    for (int it = 0; it < config.iterations; ++it) {
        FfbsResult draw = ffbs(model, W, sigma2, m0, C0, rng);
        out.jitter_events += draw.jitter_events;

        // G | theta, W: the least-squares sample with fresh transition noise.
        Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(K, T - 1);
        if (T >= 2) {
            Eigen::LLT<Eigen::MatrixXd> llt(W);
            Eigen::MatrixXd L;
            if (llt.info() == Eigen::Success) {
                L = llt.matrixL();
            } else {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W);
                L = es.eigenvectors() *
                    es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
            }
            noise = L * rng.normal_matrix(K, T - 1);
        }
        const TransitionEstimate est = estimate_transition_ls(draw.trajectory, noise);
        model.transition = est.g;
        out.rank_warning = out.rank_warning || est.rank_deficient;

        // W from the transitions the fit covers (t = 2..T): the t = 1
        // residual is not constrained by the estimate and would feed back
        // explosively in the rank-deficient regime.
        W = gibbs_update_w(draw.trajectory, model.transition, phi, nu, rng, 2);
        for (int m = 0; m < n_src; ++m) {
            long n_m = 0;
            const double sse = source_sse(model, draw.trajectory, model.source_ids[m], n_m);
            sigma2(m) = gibbs_update_sigma2(config.prior.a, config.prior.b, sse, n_m, rng);
        }
        if (!model.transition.allFinite() || !W.allFinite())
            throw FilterDivergence("data-driven chain diverged at iteration " +
                                   std::to_string(it));

        if (it >= config.burn_in) {
            out.theta_t_draws.push_back(draw.trajectory.back());
            out.sigma2_draws.push_back(sigma2);
            out.w_trace_draws.push_back(W.trace());
            if (config.store_trajectories) out.trajectories.push_back(draw.trajectory);
            if (config.store_w_draws) out.w_draws.push_back(W);
            accumulate(acc, draw.trajectory, W, sigma2, model.transition);
        }
    }
    finalize(acc, out);
    model.transition = out.g_mean;
    return out;
}

TransitionEstimate estimate_transition_ls(const std::vector<Eigen::VectorXd>& trajectory,
                                          const Eigen::MatrixXd& noise) {
    if (trajectory.size() < 3)
        throw std::invalid_argument("estimate_transition_ls: trajectory must cover T >= 2");
    const int T = static_cast<int>(trajectory.size()) - 1;  // trajectory is theta_0..theta_T
    const int K = static_cast<int>(trajectory[0].size());

    Eigen::MatrixXd theta1(K, T - 1), theta2(K, T - 1);
    for (int t = 0; t < T - 1; ++t) {
        theta1.col(t) = trajectory[t + 2];  // theta_2 .. theta_T
        theta2.col(t) = trajectory[t + 1];  // theta_1 .. theta_{T-1}
    }
    if (noise.rows() != K || noise.cols() != T - 1)
        throw std::invalid_argument("estimate_transition_ls: noise shape mismatch");

    // G Theta2 = Theta1 - noise in the least-squares sense; the pseudo-inverse
    // gives the minimum-norm solution when Theta2 is rank-deficient.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(theta2.transpose());
    TransitionEstimate est;
    est.g = cod.solve((theta1 - noise).transpose()).transpose();
    est.rank_deficient = cod.rank() < K;
    return est;
}

std::vector<Prediction> predict(const Eigen::VectorXd& theta_t,
                                const std::function<Eigen::MatrixXd(int)>& g_supplier, int k,
                                const Eigen::MatrixXd& basis, const GridSpec& grid,
                                bool bias_augmented) {
    if (k < 0) throw std::invalid_argument("predict: horizon must be >= 0");
    const int q = static_cast<int>(basis.cols());
    const int K = bias_augmented ? 2 * q : q;
    if (theta_t.size() != K) throw std::invalid_argument("predict: state dimension mismatch");

    auto to_field = [&](const Eigen::VectorXd& coeffs) {
        const Eigen::VectorXd flat = basis * coeffs;
        Eigen::MatrixXd vals(grid.n1, grid.n2);
        for (int i = 0; i < grid.n1; ++i)
            for (int j = 0; j < grid.n2; ++j) vals(i, j) = flat(grid.flat(i, j));
        return Field::from_values(std::move(vals));
    };

    std::vector<Prediction> out;
    Eigen::VectorXd theta = theta_t;
    for (int j = 1; j <= k; ++j) {
        theta = g_supplier(j) * theta;
        Prediction p;
        p.mean = to_field(theta.head(q));
        p.bias = bias_augmented ? to_field(theta.tail(q)) : Field(grid.n1, grid.n2, 0.0);
        out.push_back(std::move(p));
    }
    return out;
}

double compute_mse(const Field& predicted, const Field& reference) {
    if (predicted.n1() != reference.n1() || predicted.n2() != reference.n2())
        throw std::invalid_argument("compute_mse: shape mismatch");
    double sum = 0.0;
    long n = 0;
    for (int i = 0; i < reference.n1(); ++i)
        for (int j = 0; j < reference.n2(); ++j) {
            if (reference.missing(i, j)) continue;
            const double d = predicted(i, j) - reference(i, j);
            sum += d * d;
            ++n;
        }
    if (n == 0) throw std::invalid_argument("compute_mse: no overlapping observed pixels");
    return sum / static_cast<double>(n);
}

}  // namespace adstm
