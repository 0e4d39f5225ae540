#pragma once

#include <utility>
#include <vector>

#include "quadshade/types.hpp"

namespace quadshade {

// Quadratic-patch geometry and Lambertian shading. All functions are pure.

enum class ShadowPolicy { Error, ClampZero };

// Un-normalized normals (n_x, n_y, 1) at every grid point, in grid order.
std::vector<Eigen::Vector3d> normals(const QuadShape& a, const PatchGrid& grid);

// Lambertian rendering I = l.n / |n| per grid point. Under ClampZero, points
// with l.n < 0 render as 0 and are masked out; under Error any l.n <= 0 throws.
IntensityPatch render(const QuadShape& a, const LightVector& l,
                      const std::shared_ptr<const PatchGrid>& grid,
                      ShadowPolicy policy = ShadowPolicy::Error);

// n^T (l l^T - I^2 Id) n with n = n(x, y; a). Zero iff the intensity is
// consistent with the shape/light pair up to the sign ambiguity.
double quad_constraint_residual(const QuadShape& a, const LightVector& l, double intensity,
                                double x, double y);

// Azimuthal angle of a normal's direction on its intensity cone, measured
// about the light point on the projective plane. Range (-pi, pi].
double theta_of_normal(double nx, double ny, const LightVector& l);

// theta of the patch's first-order orientation: the angle of the center normal.
double theta_of_shape(const QuadShape& a, const LightVector& l);

// The constant-theta ray on the projective plane: points n0 + r * dir, r >= 0,
// where n0 is the light point (lx, ly) / lz. theta_of_normal is exactly theta
// along the ray for r > 0.
void theta_ray(const LightVector& l, double theta, Eigen::Vector2d& n0, Eigen::Vector2d& dir);

// All r >= 0 placing the ray point at Lambertian intensity `intensity`
// (ascending; empty when the intensity is unreachable along this theta).
std::vector<double> theta_ray_intensity_roots(const LightVector& l, double theta,
                                              double intensity);

// The four surface/lighting pairs that render identically (first entry is the
// input pair; duplicates removed). Requires Hessian eigenvalues of unequal
// magnitude.
std::vector<std::pair<QuadShape, LightVector>> four_solutions(const QuadShape& a,
                                                              const LightVector& l);

// 1D light family for a cylinder a = (a1, 0, 0, a4, a5): for a member shape
// a_tilde of the four-way set, returns
//   diag(sign(a1~ a1), sign(a5~ a5), 1) (l + c [0, 1, a5]^T).
// When shadow_check is given, the produced pair must be shadow-free on it.
LightVector cylinder_light_family(const QuadShape& a, const LightVector& l,
                                  const QuadShape& a_tilde, double c,
                                  const PatchGrid* shadow_check = nullptr);

// Continuous family of shapes with equal-magnitude Hessian eigenvalues that
// render identically for fixed (r, p, q, base_l). Theta branch:
//   a = [r cos t, -r cos t, 2 r sin t, p cos t - q sin t, p sin t + q cos t]
//   l = [lx cos t - ly sin t, lx sin t + ly cos t, lz].
std::pair<QuadShape, LightVector> equal_magnitude_family(double r, double p, double q,
                                                         const LightVector& base_l,
                                                         double theta);

// Lambda branch (lambda in {-1, +1}):
//   a = [L r, L r, 0, L p, -L q],  l = [L lx, -L ly, lz].
std::pair<QuadShape, LightVector> equal_magnitude_family_lambda(double r, double p, double q,
                                                                const LightVector& base_l,
                                                                int lambda);

// Numerical rank of the N x 15 matrix of monomials x^p y^q, p + q <= 4
// (singular values above 1e-10 of the largest count).
int vandermonde_rank(const PatchGrid& grid);

// =============================================================================
// AmbiguityFamily: sampled members of one of the known ambiguity classes;
// every member renders the same image on a shadow-free grid.
// =============================================================================
enum class AmbiguityKind { FourWay, CylinderLightLine, EqualMagnitudeContinuum, PlanarCone };

struct AmbiguityFamily {
    AmbiguityKind kind;
    std::vector<std::pair<QuadShape, LightVector>> members;

    static AmbiguityFamily four_way(const QuadShape& a, const LightVector& l);

    static AmbiguityFamily cylinder_light_line(const QuadShape& a, const LightVector& l,
                                               const std::vector<double>& c_values,
                                               const PatchGrid* shadow_check = nullptr);

    static AmbiguityFamily equal_magnitude_continuum(double r, double p, double q,
                                                     const LightVector& base_l,
                                                     const std::vector<double>& thetas,
                                                     bool include_lambda_branch = true);

    // One-parameter family of planar surfaces rendering the constant image
    // `intensity` under light l; thetas with no cone intersection are skipped.
    static AmbiguityFamily planar_cone(const LightVector& l, double intensity,
                                       const std::vector<double>& thetas);
};

} // namespace quadshade
