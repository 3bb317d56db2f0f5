#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace adstm {

/// Deterministic random stream. Distribution objects are constructed per
/// draw so no hidden state survives between calls; a fixed seed therefore
/// fixes the whole draw sequence.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    double normal() {
        return std::normal_distribution<double>(0.0, 1.0)(engine_);
    }

    double gamma(double shape, double scale) {
        return std::gamma_distribution<double>(shape, scale)(engine_);
    }

    double chi_squared(double dof) { return gamma(0.5 * dof, 2.0); }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    Eigen::VectorXd normal_vector(int n) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    Eigen::MatrixXd normal_matrix(int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// sigma2 ~ InvGamma(a, b): reciprocal of a Gamma(a, rate = b) draw.
inline double sample_inverse_gamma(double a, double b, RngStream& rng) {
    if (a <= 0.0 || b <= 0.0)
        throw std::invalid_argument("sample_inverse_gamma: a, b must be positive");
    return 1.0 / rng.gamma(a, 1.0 / b);
}

/// W ~ InvWishart(scale S, dof nu) via the Bartlett decomposition:
/// with S = L L^T and A the Bartlett factor of a Wishart(I, nu) draw,
/// W = (L A^-T)(L A^-T)^T.
inline Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& scale, double dof,
                                              RngStream& rng) {
    const int p = static_cast<int>(scale.rows());
    if (scale.cols() != p) throw std::invalid_argument("sample_inverse_wishart: scale not square");
    if (dof <= p - 1)
        throw std::invalid_argument("sample_inverse_wishart: dof must exceed dim - 1");

    Eigen::LLT<Eigen::MatrixXd> llt(scale);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("sample_inverse_wishart: scale matrix not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i) {
        A(i, i) = std::sqrt(rng.chi_squared(dof - i));
        for (int j = 0; j < i; ++j) A(i, j) = rng.normal();
    }

    // B = L A^-T = (A^-1 L^T)^T, so W = B B^T = L (A A^T)^-1 L^T.
    const Eigen::MatrixXd B =
        A.triangularView<Eigen::Lower>().solve(L.transpose()).transpose();
    Eigen::MatrixXd W = B * B.transpose();
    return 0.5 * (W + W.transpose());
}

/// Draw from N(mean, cov) where cov may be positive semi-definite; tiny
/// negative eigenvalues from roundoff are clamped to zero.
inline Eigen::VectorXd sample_gaussian_psd(const Eigen::VectorXd& mean,
                                           const Eigen::MatrixXd& cov, RngStream& rng) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("sample_gaussian_psd: eigendecomposition failed");
    const Eigen::VectorXd sd = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return mean + es.eigenvectors() * (sd.asDiagonal() * rng.normal_vector(mean.size()));
}

}  // namespace adstm
