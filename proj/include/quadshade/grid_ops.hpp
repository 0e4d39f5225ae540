#pragma once

#include <Eigen/Dense>

namespace quadshade {

// Discrete gradient of a depth map: central differences in the interior,
// one-sided at borders. gx is the derivative along columns (x), gy along
// rows (y). Every consumer of depth gradients shares this operator.
void depth_gradients(const Eigen::ArrayXXd& z, Eigen::ArrayXXd& gx, Eigen::ArrayXXd& gy);

// Adjoint (transpose) of the gradient operators, used by the conjugate-
// gradient depth solver: out += Dx^T v and out += Dy^T v respectively.
void add_gradient_x_adjoint(const Eigen::ArrayXXd& v, Eigen::ArrayXXd& out);
void add_gradient_y_adjoint(const Eigen::ArrayXXd& v, Eigen::ArrayXXd& out);

// Separable Gaussian blur, kernel truncated at radius ceil(3 sigma),
// symmetric (reflected) boundary handling.
Eigen::ArrayXXd gaussian_blur(const Eigen::ArrayXXd& z, double sigma);

} // namespace quadshade
