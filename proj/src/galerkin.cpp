#include "adstm/galerkin.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "adstm/util.hpp"

namespace adstm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Pade coefficients for the degree-13 approximant (Higham 2005).
constexpr double kPade13[] = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};

Eigen::MatrixXd pade13(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd a2 = a * a;
    const Eigen::MatrixXd a4 = a2 * a2;
    const Eigen::MatrixXd a6 = a2 * a4;

    const Eigen::MatrixXd u =
        a * (a6 * (kPade13[13] * a6 + kPade13[11] * a4 + kPade13[9] * a2) +
             kPade13[7] * a6 + kPade13[5] * a4 + kPade13[3] * a2 + kPade13[1] * ident);
    const Eigen::MatrixXd v =
        a6 * (kPade13[12] * a6 + kPade13[10] * a4 + kPade13[8] * a2) +
        kPade13[6] * a6 + kPade13[4] * a4 + kPade13[2] * a2 + kPade13[0] * ident;

    // exp(a) ~ (v - u)^-1 (v + u)
    return (v - u).partialPivLu().solve(v + u);
}

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

}  // namespace

Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols())
        throw std::invalid_argument("matrix_exponential: matrix must be square");
    if (!m.allFinite())
        throw std::invalid_argument("matrix_exponential: non-finite entries");
    if (m.rows() == 0) return m;

    const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();  // induced inf-norm
    // theta_13 from the backward-error analysis of the [13/13] approximant.
    constexpr double theta13 = 5.371920351148152;
    int squarings = 0;
    if (norm > theta13)
        squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));

    Eigen::MatrixXd scaled = m / std::pow(2.0, squarings);
    Eigen::MatrixXd e = pade13(scaled);
    for (int s = 0; s < squarings; ++s) e = e * e;
    return e;
}

TransitionMatrix galerkin_transition(const FlowFields& flow, int kappa1, int kappa2,
                                     const GridSpec& grid, double step) {
    grid.validate();
    flow.validate();
    if (flow.vx.rows() != grid.n1 || flow.vx.cols() != grid.n2)
        throw std::invalid_argument("galerkin_transition: flow does not match grid");

    const int n1 = grid.n1, n2 = grid.n2;
    const int N = n1 * n2;
    const WavenumberSets ks = build_wavenumber_sets(kappa1, kappa2);
    const int q = kappa1 * kappa2;

    // grad(D) by periodic central differences; the basis derivatives below
    // are analytic.
    Eigen::MatrixXd Dd1(n1, n2), Dd2(n1, n2);
    const Eigen::MatrixXd& D = flow.diffusivity;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            Dd1(i, j) = (D(wrap(i + 1, n1), j) - D(wrap(i - 1, n1), j)) * n1 / 2.0;
            Dd2(i, j) = (D(i, wrap(j + 1, n2)) - D(i, wrap(j - 1, n2))) * n2 / 2.0;
        }

    struct BasisEntry {
        Wavenumber k;
        BasisKind kind;
        double weight;
    };
    std::vector<BasisEntry> basis;
    basis.reserve(q);
    for (const Wavenumber& k : ks.k1_set) basis.push_back({k, BasisKind::Cos, 1.0});
    for (const Wavenumber& k : ks.k2_set) basis.push_back({k, BasisKind::Cos, 2.0});
    for (const Wavenumber& k : ks.k2_set) basis.push_back({k, BasisKind::Sin, 2.0});

    Eigen::MatrixXd phi(N, q);    // phi_j at every grid cell
    Eigen::MatrixXd a_phi(N, q);  // (A phi_j) at every grid cell

    parallel_for(q, [&](int c) {
        const BasisEntry& b = basis[c];
        const double kx = kTwoPi * b.k.k1;
        const double ky = kTwoPi * b.k.k2;
        const double lap_factor = -(kx * kx + ky * ky);
        for (int i = 0; i < n1; ++i) {
            const double s1 = static_cast<double>(i) / n1;
            for (int j = 0; j < n2; ++j) {
                const double s2 = static_cast<double>(j) / n2;
                const double arg = kx * s1 + ky * s2;
                double val, dval;  // trig value and its derivative w.r.t. arg
                if (b.kind == BasisKind::Cos) {
                    val = std::cos(arg);
                    dval = -std::sin(arg);
                } else {
                    val = std::sin(arg);
                    dval = std::cos(arg);
                }
                const int row = i * n2 + j;
                const double g1 = b.weight * kx * dval;
                const double g2 = b.weight * ky * dval;
                phi(row, c) = b.weight * val;
                a_phi(row, c) = -(flow.vx(i, j) * g1 + flow.vy(i, j) * g2) +
                                Dd1(i, j) * g1 + Dd2(i, j) * g2 +
                                D(i, j) * lap_factor * b.weight * val;
            }
        }
    });

    const Eigen::MatrixXd psi = phi.transpose() * a_phi;
    const Eigen::VectorXd gram = phi.colwise().squaredNorm();
    if ((gram.array() <= 0.0).any())
        throw std::runtime_error("galerkin_transition: singular basis Gram");

    TransitionMatrix t;
    t.step = step;
    t.p = gram.cwiseInverse().asDiagonal() * psi;
    t.exp_p = matrix_exponential(t.p * step);
    return t;
}

}  // namespace adstm
