#pragma once

#include <optional>

#include "quadshade/types.hpp"

namespace quadshade {

// Synthetic scene generation: random smooth surfaces, Lambertian rendering
// with Gaussian noise, Beckmann specular highlights and saturation masking.

struct SurfaceSpec {
    uint64_t seed = 1;
    int height = 128, width = 128;
    double amplitude = 8.0; // control depths drawn uniform in [-amplitude, amplitude]
    std::optional<Eigen::Matrix<double, 5, 5>> control_values; // overrides the seed
};

struct RenderSpec {
    LightVector light = LightVector::from_angles(M_PI / 3.0, 0.0, 1.0); // elevation 60 deg
    double noise_sigma = 0.0;
    std::optional<double> beckmann_roughness;
    double specular_strength = 0.0;
    double saturation_level = 1.0;
};

struct Scene {
    Eigen::ArrayXXd image;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask; // false = saturated
};

// Natural bicubic spline through a 5x5 control grid spanning the unit square,
// sampled on an output_rows x output_cols pixel grid. Optionally returns the
// analytic partial derivatives in pixel units.
Eigen::ArrayXXd spline_surface(const Eigen::Matrix<double, 5, 5>& control, int output_rows,
                               int output_cols, Eigen::ArrayXXd* dz_dx = nullptr,
                               Eigen::ArrayXXd* dz_dy = nullptr);

// Evaluate the same spline at arbitrary normalized coordinates (u = row
// fraction, v = column fraction in [0, 1]).
double spline_surface_eval(const Eigen::Matrix<double, 5, 5>& control, double u, double v);

// Random smooth surface: seeded 5x5 control grid, spline-interpolated.
DepthMap random_surface(const SurfaceSpec& spec);

// Ground-truth normals (-dz/dx, -dz/dy, 1), central differences interior,
// one-sided at borders.
NormalField normals_from_depth(const DepthMap& z);

// Diffuse shading plus optional Beckmann specular term, additive Gaussian
// noise, saturation clamp and mask.
Scene render_scene(const DepthMap& z, const RenderSpec& rs, uint64_t seed);

} // namespace quadshade
