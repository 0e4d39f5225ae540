#pragma once

#include <cmath>
#include <memory>

#include "quadshade/patch_model.hpp"
#include "quadshade/rng.hpp"
#include "quadshade/types.hpp"

namespace quadshade::testing {

inline std::shared_ptr<const PatchGrid> square_grid(int k) {
    return std::make_shared<const PatchGrid>(PatchGrid::square(k));
}

inline std::shared_ptr<const PatchGrid> scaled_square_grid(int k, double spacing) {
    auto base = PatchGrid::square(k);
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(base.size());
    for (const auto& p : base.pts) pts.push_back(p * spacing);
    return std::make_shared<const PatchGrid>(PatchGrid(std::move(pts)));
}

inline LightVector random_light(Rng& rng, double min_elev_deg = 35.0,
                                double max_elev_deg = 75.0) {
    double elev = rng.uniform(min_elev_deg, max_elev_deg) * M_PI / 180.0;
    double az = rng.uniform(-M_PI, M_PI);
    double strength = rng.uniform(0.8, 1.2);
    return LightVector::from_angles(elev, az, strength);
}

inline QuadShape random_shape(Rng& rng, double curv = 0.6, double slope = 0.3) {
    return QuadShape(rng.uniform(-curv, curv), rng.uniform(-curv, curv), rng.uniform(-curv, curv),
                     rng.uniform(-slope, slope), rng.uniform(-slope, slope));
}

inline bool shadow_free(const QuadShape& a, const LightVector& l, const PatchGrid& grid,
                        double margin = 1e-3) {
    for (const auto& p : grid.pts) {
        Eigen::Vector3d n = a.normal_at(p.x(), p.y());
        if (l.dot(n) <= margin * n.norm()) return false;
    }
    return true;
}

// Hessian eigenvalue magnitudes differ by at least `gap`.
inline bool unequal_magnitudes(const QuadShape& a, double gap = 0.05) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(a.hessian());
    double l1 = std::abs(es.eigenvalues()(0)), l2 = std::abs(es.eigenvalues()(1));
    return std::abs(l1 - l2) > gap;
}

// Random pair certified shadow-free on the grid with unequal Hessian magnitudes.
inline std::pair<QuadShape, LightVector> random_generic_pair(Rng& rng, const PatchGrid& grid) {
    for (int tries = 0; tries < 10000; ++tries) {
        QuadShape a = random_shape(rng, 0.4, 0.25);
        LightVector l = random_light(rng);
        if (!unequal_magnitudes(a)) continue;
        if (std::abs(a.hessian().determinant()) < 0.01) continue;
        if (!shadow_free(a, l, grid, 1e-2)) continue;
        return {a, l};
    }
    throw std::runtime_error("random_generic_pair: sampling failed");
}

inline double render_rms_diff(const QuadShape& a1, const LightVector& l1, const QuadShape& a2,
                              const LightVector& l2,
                              const std::shared_ptr<const PatchGrid>& grid) {
    IntensityPatch p1 = render(a1, l1, grid, ShadowPolicy::Error);
    IntensityPatch p2 = render(a2, l2, grid, ShadowPolicy::Error);
    double sum = 0.0;
    for (size_t i = 0; i < p1.size(); ++i) {
        double d = p1.intensities[i] - p2.intensities[i];
        sum += d * d;
    }
    return std::sqrt(sum / p1.size());
}

} // namespace quadshade::testing
