#include "adstm/flow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace adstm {

namespace {

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

// Periodic central difference along rows (axis==0, ds1) or columns (axis==1).
Eigen::MatrixXd central_diff(const Eigen::MatrixXd& f, int axis) {
    const int n1 = static_cast<int>(f.rows()), n2 = static_cast<int>(f.cols());
    const double h = axis == 0 ? 1.0 / n1 : 1.0 / n2;
    Eigen::MatrixXd out(n1, n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            const double fp = axis == 0 ? f(wrap(i + 1, n1), j) : f(i, wrap(j + 1, n2));
            const double fm = axis == 0 ? f(wrap(i - 1, n1), j) : f(i, wrap(j - 1, n2));
            out(i, j) = (fp - fm) / (2.0 * h);
        }
    return out;
}

Eigen::MatrixXd laplacian(const Eigen::MatrixXd& f) {
    const int n1 = static_cast<int>(f.rows()), n2 = static_cast<int>(f.cols());
    const double h1 = 1.0 / n1, h2 = 1.0 / n2;
    Eigen::MatrixXd out(n1, n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            const double d1 = (f(wrap(i + 1, n1), j) - 2.0 * f(i, j) + f(wrap(i - 1, n1), j)) / (h1 * h1);
            const double d2 = (f(i, wrap(j + 1, n2)) - 2.0 * f(i, j) + f(i, wrap(j - 1, n2))) / (h2 * h2);
            out(i, j) = d1 + d2;
        }
    return out;
}

}  // namespace

FlowFields FlowFields::constant(int n1, int n2, double cvx, double cvy, double d) {
    FlowFields f;
    f.vx = Eigen::MatrixXd::Constant(n1, n2, cvx);
    f.vy = Eigen::MatrixXd::Constant(n1, n2, cvy);
    f.diffusivity = Eigen::MatrixXd::Constant(n1, n2, d);
    return f;
}

FlowFields FlowFields::from_speed_direction(int n1, int n2, double speed, double direction_deg,
                                            double d) {
    const double rad = direction_deg * std::numbers::pi / 180.0;
    return constant(n1, n2, speed * std::cos(rad), speed * std::sin(rad), d);
}

void FlowFields::validate() const {
    if (vx.rows() != vy.rows() || vx.cols() != vy.cols() ||
        vx.rows() != diffusivity.rows() || vx.cols() != diffusivity.cols())
        throw std::invalid_argument("FlowFields: component shapes differ");
    if ((diffusivity.array() < 0.0).any())
        throw std::invalid_argument("FlowFields: negative diffusivity");
}

double FlowFields::max_speed() const {
    return std::sqrt((vx.array().square() + vy.array().square()).maxCoeff());
}

FlowFields estimate_optical_flow(const std::vector<Field>& frames,
                                 const OpticalFlowParams& params) {
    if (frames.size() < 2)
        throw std::invalid_argument("estimate_optical_flow: need at least 2 frames");
    const int n1 = frames.front().n1(), n2 = frames.front().n2();
    for (const Field& f : frames)
        if (f.n1() != n1 || f.n2() != n2)
            throw std::invalid_argument("estimate_optical_flow: frame shapes differ");

    Eigen::MatrixXd u_sum = Eigen::MatrixXd::Zero(n1, n2);
    Eigen::MatrixXd v_sum = Eigen::MatrixXd::Zero(n1, n2);
    const double alpha2 = params.smoothness;

    for (std::size_t p = 0; p + 1 < frames.size(); ++p) {
        const Field& f0 = frames[p];
        const Field& f1 = frames[p + 1];

        // Gradients of the pair average, in intensity per grid fraction, so
        // the recovered velocities come out in grid fractions per step.
        Eigen::MatrixXd avg = 0.5 * (f0.values() + f1.values());
        Eigen::MatrixXd Ix = central_diff(avg, 0);
        Eigen::MatrixXd Iy = central_diff(avg, 1);
        Eigen::MatrixXd It = f1.values() - f0.values();

        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> data_ok(n1, n2);
        for (int i = 0; i < n1; ++i)
            for (int j = 0; j < n2; ++j) {
                // The data term needs valid intensities at the pixel and its
                // stencil neighbours in both frames.
                bool ok = f0.observed(i, j) && f1.observed(i, j);
                for (int d = -1; d <= 1 && ok; d += 2) {
                    ok = ok && f0.observed(wrap(i + d, n1), j) && f1.observed(wrap(i + d, n1), j);
                    ok = ok && f0.observed(i, wrap(j + d, n2)) && f1.observed(i, wrap(j + d, n2));
                }
                data_ok(i, j) = ok ? 1 : 0;
            }

        Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n1, n2);
        Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n1, n2);
        for (int it = 0; it < params.iterations; ++it) {
            Eigen::MatrixXd ubar(n1, n2), vbar(n1, n2);
            for (int i = 0; i < n1; ++i)
                for (int j = 0; j < n2; ++j) {
                    ubar(i, j) = 0.25 * (u(wrap(i + 1, n1), j) + u(wrap(i - 1, n1), j) +
                                         u(i, wrap(j + 1, n2)) + u(i, wrap(j - 1, n2)));
                    vbar(i, j) = 0.25 * (v(wrap(i + 1, n1), j) + v(wrap(i - 1, n1), j) +
                                         v(i, wrap(j + 1, n2)) + v(i, wrap(j - 1, n2)));
                }
            for (int i = 0; i < n1; ++i)
                for (int j = 0; j < n2; ++j) {
                    if (!data_ok(i, j)) {
                        u(i, j) = ubar(i, j);
                        v(i, j) = vbar(i, j);
                        continue;
                    }
                    const double gx = Ix(i, j), gy = Iy(i, j);
                    const double resid = (gx * ubar(i, j) + gy * vbar(i, j) + It(i, j)) /
                                         (alpha2 + gx * gx + gy * gy);
                    u(i, j) = ubar(i, j) - gx * resid;
                    v(i, j) = vbar(i, j) - gy * resid;
                }
        }
        u_sum += u;
        v_sum += v;
    }

    const double npairs = static_cast<double>(frames.size() - 1);
    FlowFields flow;
    flow.vx = u_sum / npairs;
    flow.vy = v_sum / npairs;
    flow.diffusivity = Eigen::MatrixXd::Zero(n1, n2);
    return flow;
}

Field derive_diffusivity(const FlowFields& flow, double delta_x, double delta_y) {
    flow.validate();
    const Eigen::MatrixXd dvx_ds1 = central_diff(flow.vx, 0);
    const Eigen::MatrixXd dvx_ds2 = central_diff(flow.vx, 1);
    const Eigen::MatrixXd dvy_ds1 = central_diff(flow.vy, 0);
    const Eigen::MatrixXd dvy_ds2 = central_diff(flow.vy, 1);

    const Eigen::ArrayXXd shear =
        ((dvx_ds1 - dvy_ds2).array().square() + (dvx_ds2 + dvy_ds1).array().square()).sqrt();
    return Field::from_values(0.28 * delta_x * delta_y * shear.matrix());
}

Field apply_operator(const Field& field, const FlowFields& flow) {
    field.require_complete("apply_operator");
    flow.validate();
    if (field.n1() != flow.vx.rows() || field.n2() != flow.vx.cols())
        throw std::invalid_argument("apply_operator: shape mismatch");

    const Eigen::MatrixXd& f = field.values();
    const Eigen::MatrixXd fx = central_diff(f, 0);
    const Eigen::MatrixXd fy = central_diff(f, 1);
    const Eigen::MatrixXd lap = laplacian(f);
    const Eigen::MatrixXd Dx = central_diff(flow.diffusivity, 0);
    const Eigen::MatrixXd Dy = central_diff(flow.diffusivity, 1);

    Eigen::MatrixXd out =
        (-flow.vx.array() * fx.array() - flow.vy.array() * fy.array() +
         Dx.array() * fx.array() + Dy.array() * fy.array() +
         flow.diffusivity.array() * lap.array())
            .matrix();
    return Field::from_values(std::move(out));
}

}  // namespace adstm
