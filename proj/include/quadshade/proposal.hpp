#pragma once

#include <optional>
#include <vector>

#include "quadshade/patch_model.hpp"
#include "quadshade/types.hpp"

namespace quadshade {

// Per-patch inference: sweep the 1D theta manifold, fit the best quadratic
// shape at each sample by damped least squares, and score each proposal with
// the intensity + shape-deviation likelihood.

// =============================================================================
// Types
// =============================================================================

struct ThetaGrid {
    std::vector<double> values; // strictly increasing, uniformly spaced
    bool full_circle = true;    // true when values span (-pi, pi]
    double lo = -M_PI, hi = M_PI;
};

struct NoiseModel {
    double sigma_i = 0.01;       // additive intensity noise std
    double sigma_n0_sq = 1e-6;   // normal-deviation variance
};

struct Proposal {
    double theta = 0.0;
    QuadShape shape;
    double residual_sse = 0.0; // sum of squared intensity errors over masked-in pixels
    double cost = 0.0;         // negative log-likelihood D
};

struct ProposalSet {
    std::vector<Proposal> proposals;   // sorted by theta
    std::optional<double> dummy_cost;  // D_phi; the dummy carries no shape
    int row = 0, col = 0;              // patch center in the image
    int size = 0;                      // patch side length
};

// Damped least-squares settings; all constants surface in output metadata.
struct FitOptions {
    int max_iterations = 200;
    double step_tol = 1e-10;          // stop when the step norm falls below
    double rel_decrease_tol = 1e-12;  // or the relative SSE decrease does
    double lm_lambda_init = 1e-3;
    double lm_up = 10.0;
    double lm_down = 0.1;
    double lm_min = 1e-12;
    double lm_max = 1e12;
    // The objective at fixed theta is multimodal for roughly a fifth of
    // patches. When the default start converges above this per-pixel residual,
    // curvature-seeded restarts run and the best result wins.
    double rescue_sse_per_pixel = 1e-10;
    double rescue_curvature = 0.3;
};

// One scale of per-patch proposal sets over a dense grid of patch centers.
// Centers are (row0 + i, col0 + j); sets[i * cols + j] is absent for patches
// skipped because too few pixels were masked-in.
struct ScaleDistributions {
    int patch_size = 0;
    int row0 = 0, col0 = 0;
    int rows = 0, cols = 0;
    std::vector<std::optional<ProposalSet>> sets;

    const std::optional<ProposalSet>& at(int i, int j) const {
        return sets[static_cast<size_t>(i) * cols + j];
    }
};

struct InferOptions {
    std::vector<int> patch_sizes{3, 5, 9, 17};
    int J = 21;
    int workers = 0;                 // 0 = hardware concurrency
    double min_valid_fraction = 0.6; // patches below this masked-in share are skipped
    FitOptions fit;
};

// =============================================================================
// Operations
// =============================================================================

// All r >= 0 with the center normal of the (theta, r) re-parametrization at
// Lambertian intensity i_center; empty = theta infeasible for this intensity.
std::vector<double> solve_center_r(double theta, double i_center, const LightVector& l);

// J samples over (-pi, pi] when every theta is feasible for the patch center
// intensity, otherwise over the largest contiguous feasible interval.
ThetaGrid theta_grid_for_patch(const IntensityPatch& patch, const LightVector& l, int J);

// a4, a5 at (theta, r):
//   a4 = -lx/lz - r (-(lx/lz) cos t + ly sin t)
//   a5 = -ly/lz - r (-(ly/lz) cos t - lx sin t)
std::pair<double, double> reparam_a45(double theta, double r, const LightVector& l);

// d I(x, y; a) / d (a1, a2, a3, r) for every grid point, rows in grid order.
// Rows of shadowed model points (l.n <= 0) are zero.
Eigen::MatrixX4d lm_jacobian(const Eigen::Vector4d& params, const IntensityPatch& patch,
                             const LightVector& l, double theta);

// Best shape at fixed theta by Levenberg-Marquardt over (a1, a2, a3, r),
// r clamped to >= 0. The returned proposal has no cost assigned.
Proposal fit_proposal(const IntensityPatch& patch, const LightVector& l, double theta,
                      const std::optional<Eigen::Vector4d>& init = std::nullopt,
                      const FitOptions& opts = {});

// sigma_z^2(x, y; a) ~= (lx^2 + ly^2) sigma_n0^2 / (n_x^2 + n_y^2 + 1).
double sigma_z_sq(const QuadShape& a, double x, double y, const LightVector& l,
                  const NoiseModel& nm);

// D = sum over masked-in pixels of
//     1/2 [ log(sigma_i^2 + sigma_z^2) + (I_o - I)^2 / (sigma_i^2 + sigma_z^2) ].
double likelihood_cost(const IntensityPatch& patch, const QuadShape& a, const LightVector& l,
                       const NoiseModel& nm);

// Full sweep for one patch: theta grid, fit, cost. dummy_cost is left unset.
ProposalSet infer_patch(const IntensityPatch& patch, const LightVector& l,
                        const NoiseModel& nm, int J, const FitOptions& opts = {});

// Dense multi-scale inference over all fully-interior patch centers, stride 1.
// Output is independent of the worker count.
std::vector<ScaleDistributions> infer_image(
    const Eigen::ArrayXXd& image, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask,
    const LightVector& l, const NoiseModel& nm, const InferOptions& opts = {});

} // namespace quadshade
