#include "adstm/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>

namespace adstm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_truncation(int n1, int n2, int kappa1, int kappa2) {
    if (kappa1 < 2 || kappa2 < 2 || kappa1 % 2 != 0 || kappa2 % 2 != 0)
        throw std::invalid_argument("truncation orders must be even and >= 2");
    if (kappa1 > n1 || kappa2 > n2)
        throw std::invalid_argument("truncation exceeds grid size");
}

// Whether frequency k is self-conjugate at truncation kappa, i.e. a member
// of K1(kappa1, kappa2).
bool self_conjugate(Wavenumber k, int kappa1, int kappa2) {
    return (k.k1 == 0 || k.k1 == kappa1 / 2) && (k.k2 == 0 || k.k2 == kappa2 / 2);
}

}  // namespace

WavenumberSets build_wavenumber_sets(int n1, int n2) {
    if (n1 < 2 || n2 < 2 || n1 % 2 != 0 || n2 % 2 != 0)
        throw std::invalid_argument("build_wavenumber_sets: dimensions must be even and >= 2");

    WavenumberSets s;
    s.k1_set = {{0, 0}, {0, n2 / 2}, {n1 / 2, 0}, {n1 / 2, n2 / 2}};
    // One representative per conjugate pair. The printed subsets in the source
    // material double-count K1 members; this canonicalisation is validated by
    // the cardinality identity |K1| + 2 |K2| = n1 n2.
    for (int a = 1; a <= n1 / 2 - 1; ++a)
        for (int b = -n2 / 2 + 1; b <= n2 / 2; ++b) s.k2_set.push_back({a, b});
    for (int b = 1; b <= n2 / 2 - 1; ++b) s.k2_set.push_back({0, b});
    for (int b = 1; b <= n2 / 2 - 1; ++b) s.k2_set.push_back({n1 / 2, b});

    if (s.real_dof() != n1 * n2)
        throw std::logic_error("wavenumber cardinality identity violated");
    return s;
}

double basis_eval(Wavenumber k, BasisKind kind, double s1, double s2) {
    const double arg = kTwoPi * (k.k1 * s1 + k.k2 * s2);
    return kind == BasisKind::Cos ? std::cos(arg) : std::sin(arg);
}

Eigen::MatrixXd basis_matrix(int n1, int n2, int kappa1, int kappa2) {
    check_truncation(n1, n2, kappa1, kappa2);
    const WavenumberSets ks = build_wavenumber_sets(kappa1, kappa2);
    const int q = kappa1 * kappa2;
    const int nk1 = static_cast<int>(ks.k1_set.size());
    const int nk2 = static_cast<int>(ks.k2_set.size());

    Eigen::MatrixXd F(n1 * n2, q);
    for (int i = 0; i < n1; ++i) {
        const double s1 = static_cast<double>(i) / n1;
        for (int j = 0; j < n2; ++j) {
            const double s2 = static_cast<double>(j) / n2;
            const int row = i * n2 + j;
            for (int c = 0; c < nk1; ++c)
                F(row, c) = basis_eval(ks.k1_set[c], BasisKind::Cos, s1, s2);
            for (int c = 0; c < nk2; ++c)
                F(row, nk1 + c) = 2.0 * basis_eval(ks.k2_set[c], BasisKind::Cos, s1, s2);
            for (int c = 0; c < nk2; ++c)
                F(row, nk1 + nk2 + c) = 2.0 * basis_eval(ks.k2_set[c], BasisKind::Sin, s1, s2);
        }
    }
    return F;
}

Eigen::VectorXd basis_gram_diagonal(int n1, int n2, int kappa1, int kappa2) {
    const Eigen::MatrixXd F = basis_matrix(n1, n2, kappa1, kappa2);
    return F.colwise().squaredNorm();
}

SpectralCoeffs analyze_direct(const Field& field, int kappa1, int kappa2) {
    field.require_complete("analyze");
    const int n1 = field.n1(), n2 = field.n2();
    check_truncation(n1, n2, kappa1, kappa2);

    const Eigen::MatrixXd F = basis_matrix(n1, n2, kappa1, kappa2);
    Eigen::VectorXd flat(n1 * n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) flat(i * n2 + j) = field(i, j);

    const Eigen::VectorXd proj = F.transpose() * flat;
    const Eigen::VectorXd gram = F.colwise().squaredNorm();
    SpectralCoeffs out;
    out.kappa1 = kappa1;
    out.kappa2 = kappa2;
    out.values = proj.array() / gram.array();
    return out;
}

namespace {

// FFTW planning is not thread-safe; transforms at desk scale are cheap enough
// to serialize entirely.
std::mutex fft_mutex;

// Full-grid projection through a real-to-complex DFT. With X_k the standard
// DFT, the least-squares coefficients are Re(X_k)/N for cos and -Im(X_k)/N
// for sin, identically for both frequency classes.
SpectralCoeffs analyze_full_fft(const Field& field) {
    const int n1 = field.n1(), n2 = field.n2();
    const int nc = n2 / 2 + 1;
    const double N = static_cast<double>(n1) * n2;

    std::lock_guard<std::mutex> lock(fft_mutex);
    double* in = fftw_alloc_real(static_cast<std::size_t>(n1) * n2);
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n1) * nc);
    fftw_plan plan = fftw_plan_dft_r2c_2d(n1, n2, in, out, FFTW_ESTIMATE);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) in[i * n2 + j] = field(i, j);
    fftw_execute(plan);

    auto bin = [&](int k1, int k2) -> std::complex<double> {
        // Map a signed frequency onto the r2c half-spectrum.
        bool conj = false;
        if (k2 < 0 || (k2 == 0 && k1 > n1 / 2) || k2 > n2 / 2) {
            k1 = (n1 - k1) % n1;
            k2 = -k2;
            conj = true;
        }
        k1 = ((k1 % n1) + n1) % n1;
        const std::complex<double> v(out[k1 * nc + k2][0], out[k1 * nc + k2][1]);
        return conj ? std::conj(v) : v;
    };

    const WavenumberSets ks = build_wavenumber_sets(n1, n2);
    const int nk1 = static_cast<int>(ks.k1_set.size());
    const int nk2 = static_cast<int>(ks.k2_set.size());
    SpectralCoeffs c;
    c.kappa1 = n1;
    c.kappa2 = n2;
    c.values.resize(n1 * n2);
    for (int i = 0; i < nk1; ++i)
        c.values(i) = bin(ks.k1_set[i].k1, ks.k1_set[i].k2).real() / N;
    for (int i = 0; i < nk2; ++i) {
        const std::complex<double> x = bin(ks.k2_set[i].k1, ks.k2_set[i].k2);
        c.values(nk1 + i) = x.real() / N;
        c.values(nk1 + nk2 + i) = -x.imag() / N;
    }

    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
    return c;
}

}  // namespace

SpectralCoeffs analyze(const Field& field, int kappa1, int kappa2) {
    field.require_complete("analyze");
    check_truncation(field.n1(), field.n2(), kappa1, kappa2);
    if (kappa1 == field.n1() && kappa2 == field.n2()) return analyze_full_fft(field);
    return analyze_direct(field, kappa1, kappa2);
}

Field synthesize(const SpectralCoeffs& coeffs, int n1, int n2) {
    check_truncation(n1, n2, coeffs.kappa1, coeffs.kappa2);
    if (coeffs.size() != coeffs.kappa1 * coeffs.kappa2)
        throw std::invalid_argument("synthesize: coefficient length mismatch");
    const Eigen::MatrixXd F = basis_matrix(n1, n2, coeffs.kappa1, coeffs.kappa2);
    const Eigen::VectorXd flat = F * coeffs.values;
    Eigen::MatrixXd vals(n1, n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) vals(i, j) = flat(i * n2 + j);
    return Field::from_values(std::move(vals));
}

Field synthesize(const SpectralCoeffs& coeffs, const GridSpec& grid) {
    grid.validate();
    return synthesize(coeffs, grid.n1, grid.n2);
}

SpectralCoeffs truncate(const SpectralCoeffs& coeffs, int kappa1, int kappa2) {
    if (kappa1 > coeffs.kappa1 || kappa2 > coeffs.kappa2)
        throw std::invalid_argument("truncate: target order exceeds current order");
    check_truncation(coeffs.kappa1, coeffs.kappa2, kappa1, kappa2);
    if (kappa1 == coeffs.kappa1 && kappa2 == coeffs.kappa2) return coeffs;

    const WavenumberSets src = build_wavenumber_sets(coeffs.kappa1, coeffs.kappa2);
    const int sk1 = static_cast<int>(src.k1_set.size());
    const int sk2 = static_cast<int>(src.k2_set.size());

    std::map<std::tuple<int, int, int>, int> pos;  // (k1, k2, kind) -> index
    for (int i = 0; i < sk1; ++i)
        pos[{src.k1_set[i].k1, src.k1_set[i].k2, 0}] = i;
    for (int i = 0; i < sk2; ++i) {
        pos[{src.k2_set[i].k1, src.k2_set[i].k2, 0}] = sk1 + i;
        pos[{src.k2_set[i].k1, src.k2_set[i].k2, 1}] = sk1 + sk2 + i;
    }

    const WavenumberSets dst = build_wavenumber_sets(kappa1, kappa2);
    const int dk1 = static_cast<int>(dst.k1_set.size());
    const int dk2 = static_cast<int>(dst.k2_set.size());

    SpectralCoeffs out;
    out.kappa1 = kappa1;
    out.kappa2 = kappa2;
    out.values.resize(kappa1 * kappa2);

    auto lookup = [&](Wavenumber k, int kind) {
        auto it = pos.find({k.k1, k.k2, kind});
        if (it == pos.end())
            throw std::logic_error("truncate: retained frequency missing from source set");
        return it->second;
    };

    for (int i = 0; i < dk1; ++i) {
        const Wavenumber k = dst.k1_set[i];
        // A frequency that is self-conjugate at the coarse order may be a
        // conjugate-pair member at the fine order; its expansion weight drops
        // from 2 to 1, so the projection coefficient doubles.
        const double scale = self_conjugate(k, coeffs.kappa1, coeffs.kappa2) ? 1.0 : 2.0;
        out.values(i) = scale * coeffs.values(lookup(k, 0));
    }
    for (int i = 0; i < dk2; ++i) {
        const Wavenumber k = dst.k2_set[i];
        out.values(dk1 + i) = coeffs.values(lookup(k, 0));
        out.values(dk1 + dk2 + i) = coeffs.values(lookup(k, 1));
    }
    return out;
}

}  // namespace adstm
