#pragma once

#include <optional>
#include <vector>

#include "quadshade/proposal.hpp"
#include "quadshade/types.hpp"

namespace quadshade {

// Global depth recovery: alternate per-patch proposal labeling with surface
// fitting (FFT integration plus exact weighted CG refinement), with a
// dummy-outlier label and a coarse-to-fine smoothing schedule.

// Per-scale labels aligned with ScaleDistributions::sets. A label in
// [0, J-1] picks a proposal, label == proposals.size() is the dummy,
// -1 marks an absent patch.
struct Labeling {
    std::vector<std::vector<int>> per_scale;
};

struct AggregateNormals {
    Eigen::ArrayXXd w;      // number of covering non-dummy patches
    Eigen::ArrayXXd nx, ny; // mean target normal components; 0 where w == 0
};

struct ReconConfig {
    double lambda = 0.0;          // <= 0: auto, 1/4 of the reciprocal mean (median - min) cost gap
    double d_phi = 0.0;           // <= 0: auto, 10 / lambda
    double sigma0 = 8.0;          // initial smoothing std
    double sigma_factor = 0.5;    // per-round decay; smoothing stops at sigma <= 1
    int cg_iters = 100;
    double convergence_tol = 1e-6;
    int max_rounds_per_stage = 100;
    bool use_dummy = true;
    int workers = 0;              // 0 = hardware concurrency
};

struct TraceEntry {
    int stage = 0;           // one stage per sigma level, then fixed-point, dummy, CG stages
    int round = 0;
    double sigma = 0.0;      // 0 when smoothing is off
    double lambda_eff = 0.0;
    double cost_labels = 0.0; // global cost after the label update
    double cost_depth = 0.0;  // global cost after the depth update
};

struct CgResult {
    DepthMap z;
    bool converged = false;       // residual reduced below 1e-12 of the initial
    bool grad_decreased = false;  // final residual norm below the initial
    int iterations = 0;
};

struct ReconResult {
    DepthMap z;
    Labeling labels;
    std::vector<TraceEntry> trace;
    double lambda = 0.0;
    double d_phi = 0.0;
    bool cg_converged = false;
    bool cg_grad_decreased = false;
    std::vector<int> rounds_per_stage;
};

// ||(-dZ/dx - n_x, -dZ/dy - n_y)||^2 at pixel (x, y) = (col, row), with the
// proposal normal evaluated in patch-centered coordinates. Central differences
// in the interior, one-sided at image borders.
double delta(const DepthMap& z, const QuadShape& a, int x, int y, int patch_row, int patch_col);

// Per-patch argmin of lambda D + sum delta; ties break toward the smallest
// label index; the dummy label is available only when allow_dummy is set.
Labeling update_labels(const DepthMap& z, const std::vector<ScaleDistributions>& dists,
                       double lambda, bool allow_dummy, int workers = 0);

// Pixel-wise count and mean of labeled non-dummy proposal normals.
AggregateNormals aggregate_normals(const Labeling& labels,
                                   const std::vector<ScaleDistributions>& dists, int height,
                                   int width);

// Least-squares integrable surface whose negated discrete gradient matches
// (nx, ny) under periodic assumptions; FFT-based, zero-mean output.
DepthMap frankot_chellappa(const Eigen::ArrayXXd& nx, const Eigen::ArrayXXd& ny);

// Conjugate gradient on the weighted normal equations
//   min_Z sum w (-grad Z - n*)^2, warm-started at z_init, zero-mean output.
CgResult weighted_integrate_cg(const AggregateNormals& agg, const DepthMap& z_init, int iters);

// Exact evaluation of C(Z, L, lambda) = sum_p (lambda D_p^L + sum delta).
double global_cost(const DepthMap& z, const Labeling& labels,
                   const std::vector<ScaleDistributions>& dists, double lambda);

// Full alternation with the annealing schedule; the dummy label is introduced
// after the first convergence, FFT integration runs during the alternation and
// CG refinement at the end.
ReconResult reconstruct(const std::vector<ScaleDistributions>& dists, int height, int width,
                        const ReconConfig& cfg = {});

} // namespace quadshade
