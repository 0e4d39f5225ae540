#include "quadshade/grid_ops.hpp"

#include <cmath>
#include <vector>

namespace quadshade {

void depth_gradients(const Eigen::ArrayXXd& z, Eigen::ArrayXXd& gx, Eigen::ArrayXXd& gy) {
    const Eigen::Index rows = z.rows(), cols = z.cols();
    gx.resize(rows, cols);
    gy.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        gx(r, 0) = z(r, 1) - z(r, 0);
        for (Eigen::Index c = 1; c + 1 < cols; ++c) gx(r, c) = 0.5 * (z(r, c + 1) - z(r, c - 1));
        gx(r, cols - 1) = z(r, cols - 1) - z(r, cols - 2);
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
        gy(0, c) = z(1, c) - z(0, c);
        for (Eigen::Index r = 1; r + 1 < rows; ++r) gy(r, c) = 0.5 * (z(r + 1, c) - z(r - 1, c));
        gy(rows - 1, c) = z(rows - 1, c) - z(rows - 2, c);
    }
}

void add_gradient_x_adjoint(const Eigen::ArrayXXd& v, Eigen::ArrayXXd& out) {
    const Eigen::Index rows = v.rows(), cols = v.cols();
    for (Eigen::Index r = 0; r < rows; ++r) {
        out(r, 0) -= v(r, 0);
        out(r, 1) += v(r, 0);
        for (Eigen::Index c = 1; c + 1 < cols; ++c) {
            out(r, c - 1) -= 0.5 * v(r, c);
            out(r, c + 1) += 0.5 * v(r, c);
        }
        out(r, cols - 1) += v(r, cols - 1);
        out(r, cols - 2) -= v(r, cols - 1);
    }
}

void add_gradient_y_adjoint(const Eigen::ArrayXXd& v, Eigen::ArrayXXd& out) {
    const Eigen::Index rows = v.rows(), cols = v.cols();
    for (Eigen::Index c = 0; c < cols; ++c) {
        out(0, c) -= v(0, c);
        out(1, c) += v(0, c);
        for (Eigen::Index r = 1; r + 1 < rows; ++r) {
            out(r - 1, c) -= 0.5 * v(r, c);
            out(r + 1, c) += 0.5 * v(r, c);
        }
        out(rows - 1, c) += v(rows - 1, c);
        out(rows - 2, c) -= v(rows - 1, c);
    }
}

namespace {

inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

} // namespace

Eigen::ArrayXXd gaussian_blur(const Eigen::ArrayXXd& z, double sigma) {
    if (sigma <= 0.0) return z;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    const Eigen::Index rows = z.rows(), cols = z.cols();
    Eigen::ArrayXXd tmp(rows, cols), out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * z(r, reflect_index(c + i, cols));
            tmp(r, c) = acc;
        }
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp(reflect_index(r + i, rows), c);
            out(r, c) = acc;
        }
    return out;
}

} // namespace quadshade
