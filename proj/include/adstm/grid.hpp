#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace adstm {

/// Uniform N1 x N2 periodic grid on the unit square. Cell (i, j) sits at
/// s = (i/n1, j/n2); geographic metadata maps cells to lat/lon.
struct GridSpec {
    int n1 = 0;
    int n2 = 0;
    double origin_lat = 0.0;
    double origin_lon = 0.0;
    double step_lat = 0.0;
    double step_lon = 0.0;

    void validate() const {
        if (n1 < 2 || n2 < 2 || n1 % 2 != 0 || n2 % 2 != 0)
            throw std::invalid_argument("GridSpec: n1, n2 must be even and >= 2 (got " +
                                        std::to_string(n1) + "x" + std::to_string(n2) + ")");
    }

    int cells() const { return n1 * n2; }
    double s1(int i) const { return static_cast<double>(i) / n1; }
    double s2(int j) const { return static_cast<double>(j) / n2; }
    int flat(int i, int j) const { return i * n2 + j; }

    bool same_shape(const GridSpec& o) const { return n1 == o.n1 && n2 == o.n2; }
};

/// Real n1 x n2 field with an explicit missing-value mask. Values are only
/// meaningful where observed; masked cells hold 0 internally.
class Field {
public:
    Field() = default;
    Field(int n1, int n2, double fill = 0.0)
        : values_(Eigen::MatrixXd::Constant(n1, n2, fill)),
          observed_(Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Constant(n1, n2, 1)) {}

    static Field from_values(Eigen::MatrixXd v) {
        Field f;
        f.observed_ = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Constant(
            v.rows(), v.cols(), 1);
        f.values_ = std::move(v);
        return f;
    }

    int n1() const { return static_cast<int>(values_.rows()); }
    int n2() const { return static_cast<int>(values_.cols()); }
    int cells() const { return n1() * n2(); }

    double operator()(int i, int j) const { return values_(i, j); }
    void set(int i, int j, double v) {
        values_(i, j) = v;
        observed_(i, j) = 1;
    }
    void set_missing(int i, int j) {
        values_(i, j) = 0.0;
        observed_(i, j) = 0;
    }

    bool observed(int i, int j) const { return observed_(i, j) != 0; }
    bool missing(int i, int j) const { return observed_(i, j) == 0; }

    int missing_count() const {
        return cells() - static_cast<int>(observed_.cast<int>().sum());
    }
    bool complete() const { return missing_count() == 0; }

    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::MatrixXd& values() { return values_; }

    /// Mean over observed cells; throws if nothing observed.
    double observed_mean() const {
        double sum = 0.0;
        long cnt = 0;
        for (int i = 0; i < n1(); ++i)
            for (int j = 0; j < n2(); ++j)
                if (observed(i, j)) { sum += values_(i, j); ++cnt; }
        if (cnt == 0) throw std::runtime_error("Field::observed_mean: all cells missing");
        return sum / static_cast<double>(cnt);
    }

    /// Copy with missing cells replaced by the observed mean (0 if empty).
    Field filled_with_mean() const {
        Field out = *this;
        if (complete()) return out;
        double m = 0.0;
        try { m = observed_mean(); } catch (const std::runtime_error&) {}
        for (int i = 0; i < n1(); ++i)
            for (int j = 0; j < n2(); ++j)
                if (missing(i, j)) out.set(i, j, m);
        return out;
    }

    void require_complete(const char* what) const {
        if (!complete())
            throw std::invalid_argument(std::string(what) + ": field has " +
                                        std::to_string(missing_count()) + " missing cells");
    }

    void require_finite(const char* what) const {
        for (int i = 0; i < n1(); ++i)
            for (int j = 0; j < n2(); ++j)
                if (observed(i, j) && !std::isfinite(values_(i, j)))
                    throw std::runtime_error(std::string(what) + ": non-finite value at (" +
                                             std::to_string(i) + "," + std::to_string(j) + ")");
    }

private:
    Eigen::MatrixXd values_;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> observed_;
};

}  // namespace adstm
