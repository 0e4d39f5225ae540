#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "quadshade/errors.hpp"

namespace quadshade {

// Image convention used throughout: x is the column offset (rightward),
// y is the row offset (downward). Depth maps are indexed Z(row, col),
// so Z(r, c) samples the surface at (x, y) = (c, r).

// =============================================================================
// QuadShape: the 5-vector of quadratic depth coefficients,
// z(x, y) = a1 x^2 + a2 y^2 + a3 xy + a4 x + a5 y, up to a constant offset.
// =============================================================================
struct QuadShape {
    double a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0;

    QuadShape() = default;
    QuadShape(double a1_, double a2_, double a3_, double a4_, double a5_)
        : a1(a1_), a2(a2_), a3(a3_), a4(a4_), a5(a5_) {
        if (!std::isfinite(a1) || !std::isfinite(a2) || !std::isfinite(a3) ||
            !std::isfinite(a4) || !std::isfinite(a5))
            throw InvalidArgument("QuadShape: coefficients must be finite");
    }

    Eigen::Matrix2d hessian() const {
        Eigen::Matrix2d h;
        h << a1, a3 / 2.0, a3 / 2.0, a2;
        return h;
    }

    Eigen::Vector2d jacobian() const { return {a4, a5}; }

    // Shape matrix A with n(x, y) = A [x, y, 1]^T; last row [0, 0, 1].
    Eigen::Matrix3d shape_matrix() const {
        Eigen::Matrix3d a;
        a << -2.0 * a1, -a3, -a4,
             -a3, -2.0 * a2, -a5,
              0.0, 0.0, 1.0;
        return a;
    }

    // Un-normalized surface normal (n_x, n_y, 1) at (x, y).
    Eigen::Vector3d normal_at(double x, double y) const {
        return {-2.0 * a1 * x - a3 * y - a4,
                -a3 * x - 2.0 * a2 * y - a5,
                1.0};
    }

    double depth_at(double x, double y) const {
        return a1 * x * x + a2 * y * y + a3 * x * y + a4 * x + a5 * y;
    }

    bool operator==(const QuadShape& o) const {
        return a1 == o.a1 && a2 == o.a2 && a3 == o.a3 && a4 == o.a4 && a5 == o.a5;
    }
};

// =============================================================================
// LightVector: directional light; |l| carries albedo x light strength.
// The light must be in the visible hemisphere (lz > 0).
// =============================================================================
struct LightVector {
    double lx = 0, ly = 0, lz = 1;

    LightVector() = default;
    LightVector(double lx_, double ly_, double lz_) : lx(lx_), ly(ly_), lz(lz_) {
        if (!std::isfinite(lx) || !std::isfinite(ly) || !std::isfinite(lz))
            throw InvalidArgument("LightVector: components must be finite");
        if (lz <= 0.0)
            throw InvalidArgument("LightVector: lz must be positive");
    }

    Eigen::Vector3d vec() const { return {lx, ly, lz}; }
    double norm() const { return std::sqrt(lx * lx + ly * ly + lz * lz); }
    double squared_norm() const { return lx * lx + ly * ly + lz * lz; }
    double planar_squared_norm() const { return lx * lx + ly * ly; }

    double dot(const Eigen::Vector3d& n) const { return lx * n.x() + ly * n.y() + lz * n.z(); }

    // Light from elevation above the image plane (radians) and azimuth in the
    // plane, scaled by strength. Elevation pi/2 means light along the view.
    static LightVector from_angles(double elevation, double azimuth, double strength) {
        double c = std::cos(elevation);
        return LightVector(strength * c * std::cos(azimuth),
                           strength * c * std::sin(azimuth),
                           strength * std::sin(elevation));
    }
};

// =============================================================================
// PatchGrid: ordered pixel coordinates relative to the patch center.
// (0, 0) must be a member and coordinates must be unique.
// =============================================================================
struct PatchGrid {
    std::vector<Eigen::Vector2d> pts;
    int center_index = -1;

    PatchGrid() = default;

    explicit PatchGrid(std::vector<Eigen::Vector2d> points) : pts(std::move(points)) {
        for (size_t i = 0; i < pts.size(); ++i) {
            if (pts[i].x() == 0.0 && pts[i].y() == 0.0) center_index = static_cast<int>(i);
            for (size_t j = i + 1; j < pts.size(); ++j)
                if (pts[i] == pts[j])
                    throw InvalidArgument("PatchGrid: duplicate coordinate");
        }
        if (center_index < 0)
            throw InvalidArgument("PatchGrid: center (0,0) must be a member");
    }

    // Square k x k grid of integer offsets, row-major (y outer, x inner).
    static PatchGrid square(int k) {
        if (k < 1 || k % 2 == 0)
            throw InvalidArgument("PatchGrid::square: size must be odd and positive");
        int h = k / 2;
        std::vector<Eigen::Vector2d> p;
        p.reserve(static_cast<size_t>(k) * k);
        for (int dy = -h; dy <= h; ++dy)
            for (int dx = -h; dx <= h; ++dx)
                p.emplace_back(static_cast<double>(dx), static_cast<double>(dy));
        PatchGrid g;
        g.pts = std::move(p);
        g.center_index = (h * k) + h;
        return g;
    }

    size_t size() const { return pts.size(); }
};

// =============================================================================
// IntensityPatch: observed intensities on a grid with a validity mask.
// =============================================================================
struct IntensityPatch {
    std::shared_ptr<const PatchGrid> grid;
    std::vector<double> intensities;
    std::vector<uint8_t> mask; // 1 = usable

    IntensityPatch() = default;
    IntensityPatch(std::shared_ptr<const PatchGrid> g, std::vector<double> vals,
                   std::vector<uint8_t> m)
        : grid(std::move(g)), intensities(std::move(vals)), mask(std::move(m)) {
        if (!grid || intensities.size() != grid->size() || mask.size() != grid->size())
            throw InvalidArgument("IntensityPatch: size mismatch");
        for (size_t i = 0; i < intensities.size(); ++i)
            if (mask[i] && (!std::isfinite(intensities[i]) || intensities[i] < 0.0))
                throw InvalidArgument("IntensityPatch: masked-in intensities must be finite and >= 0");
    }

    size_t size() const { return intensities.size(); }
    size_t valid_count() const {
        size_t n = 0;
        for (uint8_t m : mask) n += (m != 0);
        return n;
    }
};

// =============================================================================
// Image-scale fields
// =============================================================================

// Per-pixel (n_x, n_y) components of un-normalized normals (n_z == 1).
struct NormalField {
    Eigen::ArrayXXd nx, ny;

    NormalField() = default;
    NormalField(Eigen::Index rows, Eigen::Index cols)
        : nx(Eigen::ArrayXXd::Zero(rows, cols)), ny(Eigen::ArrayXXd::Zero(rows, cols)) {}

    Eigen::Index rows() const { return nx.rows(); }
    Eigen::Index cols() const { return nx.cols(); }
};

// Depth map, defined up to an additive constant.
struct DepthMap {
    Eigen::ArrayXXd z;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;

    DepthMap() = default;
    explicit DepthMap(Eigen::ArrayXXd zz)
        : z(std::move(zz)),
          valid(Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(z.rows(), z.cols(), true)) {}
    DepthMap(Eigen::Index rows, Eigen::Index cols)
        : z(Eigen::ArrayXXd::Zero(rows, cols)),
          valid(Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, true)) {}

    Eigen::Index rows() const { return z.rows(); }
    Eigen::Index cols() const { return z.cols(); }
};

} // namespace quadshade
