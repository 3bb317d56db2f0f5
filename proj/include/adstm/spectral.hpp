#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "adstm/grid.hpp"

namespace adstm {

struct Wavenumber {
    int k1 = 0;
    int k2 = 0;
    friend bool operator==(const Wavenumber&, const Wavenumber&) = default;
};

enum class BasisKind { Cos, Sin };

/// The two disjoint frequency sets of the real Fourier basis on an n1 x n2
/// grid: k1_set holds the self-conjugate frequencies, k2_set one canonical
/// representative per complex-conjugate pair. |k1_set| + 2 |k2_set| = n1 n2.
struct WavenumberSets {
    std::vector<Wavenumber> k1_set;
    std::vector<Wavenumber> k2_set;

    int real_dof() const {
        return static_cast<int>(k1_set.size() + 2 * k2_set.size());
    }
};

WavenumberSets build_wavenumber_sets(int n1, int n2);
inline WavenumberSets build_wavenumber_sets(const GridSpec& g) {
    g.validate();
    return build_wavenumber_sets(g.n1, g.n2);
}

/// cos(2 pi k.s) or sin(2 pi k.s). Sin is rejected for self-conjugate
/// frequencies of the truncation the wavenumber was drawn from.
double basis_eval(Wavenumber k, BasisKind kind, double s1, double s2);

/// Truncated real Fourier coefficients, laid out [cos K1 | cos K2 | sin K2]
/// for the index sets of a virtual kappa1 x kappa2 grid.
struct SpectralCoeffs {
    int kappa1 = 0;
    int kappa2 = 0;
    Eigen::VectorXd values;

    int size() const { return static_cast<int>(values.size()); }
};

/// Basis-function matrix evaluated at every grid cell (row index i*n2+j).
/// Column weights follow the expansion: 1 on K1 columns, 2 on K2 columns,
/// so synthesize(c) == basis_matrix * c.values.
Eigen::MatrixXd basis_matrix(int n1, int n2, int kappa1, int kappa2);

/// Least-squares projection of a complete field onto the retained basis.
/// Exact at truncation (n1, n2).
SpectralCoeffs analyze(const Field& field, int kappa1, int kappa2);

/// Same projection computed by direct per-column inner products; the FFT
/// fast path (used by analyze for full truncation) must agree to 1e-10.
SpectralCoeffs analyze_direct(const Field& field, int kappa1, int kappa2);

Field synthesize(const SpectralCoeffs& coeffs, const GridSpec& grid);
Field synthesize(const SpectralCoeffs& coeffs, int n1, int n2);

/// Keep only the coefficients indexed by the kappa1 x kappa2 sets. Equals
/// analyze(field, kappa1, kappa2) when applied to finer analyze output.
SpectralCoeffs truncate(const SpectralCoeffs& coeffs, int kappa1, int kappa2);

/// Diagonal of the discrete Gram matrix of the weighted basis over the grid.
Eigen::VectorXd basis_gram_diagonal(int n1, int n2, int kappa1, int kappa2);

}  // namespace adstm
