#pragma once

#include <string>
#include <vector>

#include "quadshade/proposal.hpp"
#include "quadshade/types.hpp"

namespace quadshade {

// Error metrics and evaluation protocols: per-patch best-of-N angular error
// curves and whole-surface angular-error quantiles.

struct ErrorReport {
    Eigen::ArrayXXd errors; // per-pixel angular error, degrees
    double q25 = 0, q50 = 0, q75 = 0;
};

// Angle between two (possibly un-normalized) 3-vectors, in degrees.
double angular_error(const Eigen::Vector3d& n_est, const Eigen::Vector3d& n_true);

// For each present patch, the mean angular error of every proposal against the
// ground-truth normals, sorted by likelihood cost ascending. Pixels masked out
// in `mask` (when given) are excluded from the means.
std::vector<std::vector<double>> per_patch_error_series(
    const ScaleDistributions& dist, const NormalField& truth,
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* mask = nullptr);

struct NBestCurve {
    std::vector<double> q25, q50, q75; // index N-1
};

// Pool patch series and compute best-of-N quantiles for N = 1..n_max.
NBestCurve n_best_curve(const std::vector<std::vector<double>>& series, int n_max);
NBestCurve n_best_curve(const ScaleDistributions& dist, const NormalField& truth, int n_max);

// Per-pixel angular errors between the normals of two depth maps; depth-shift
// invariant by construction.
ErrorReport surface_report(const DepthMap& z_est, const DepthMap& z_true);

// CSV emission of N-best curves (one row per N: N, q25, q50, q75 per curve).
std::string n_best_csv(const std::vector<std::pair<std::string, NBestCurve>>& curves);

} // namespace quadshade
