#include "quadshade/patch_model.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace quadshade {

namespace {

constexpr double kDegenerateTol = 1e-14;

// Relative tolerance used when classifying Hessians and deduplicating members.
constexpr double kClassifyTol = 1e-9;

bool near_equal_pair(const std::pair<QuadShape, LightVector>& u,
                     const std::pair<QuadShape, LightVector>& v) {
    auto close = [](double a, double b) {
        return std::abs(a - b) <= kClassifyTol * (1.0 + std::max(std::abs(a), std::abs(b)));
    };
    return close(u.first.a1, v.first.a1) && close(u.first.a2, v.first.a2) &&
           close(u.first.a3, v.first.a3) && close(u.first.a4, v.first.a4) &&
           close(u.first.a5, v.first.a5) && close(u.second.lx, v.second.lx) &&
           close(u.second.ly, v.second.ly) && close(u.second.lz, v.second.lz);
}

QuadShape shape_from_matrix(const Eigen::Matrix3d& at) {
    // Off-diagonal symmetry holds by construction of the four B matrices;
    // average to absorb rounding.
    double a3 = -(at(0, 1) + at(1, 0)) / 2.0;
    return QuadShape(-at(0, 0) / 2.0, -at(1, 1) / 2.0, a3, -at(0, 2), -at(1, 2));
}

} // namespace

std::vector<Eigen::Vector3d> normals(const QuadShape& a, const PatchGrid& grid) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(grid.size());
    for (const auto& p : grid.pts) out.push_back(a.normal_at(p.x(), p.y()));
    return out;
}

IntensityPatch render(const QuadShape& a, const LightVector& l,
                      const std::shared_ptr<const PatchGrid>& grid, ShadowPolicy policy) {
    if (!grid || grid->size() == 0) throw InvalidArgument("render: empty grid");
    std::vector<double> vals(grid->size());
    std::vector<uint8_t> mask(grid->size(), 1);
    for (size_t i = 0; i < grid->size(); ++i) {
        Eigen::Vector3d n = a.normal_at(grid->pts[i].x(), grid->pts[i].y());
        double ln = l.dot(n);
        if (ln <= 0.0) {
            if (policy == ShadowPolicy::Error)
                throw ShadowedPoint("render: point in shadow");
            if (ln < 0.0) {
                vals[i] = 0.0;
                mask[i] = 0;
                continue;
            }
        }
        vals[i] = ln / n.norm();
    }
    return IntensityPatch(grid, std::move(vals), std::move(mask));
}

double quad_constraint_residual(const QuadShape& a, const LightVector& l, double intensity,
                                double x, double y) {
    Eigen::Vector3d n = a.normal_at(x, y);
    double ln = l.dot(n);
    return ln * ln - intensity * intensity * n.squaredNorm();
}

double theta_of_normal(double nx, double ny, const LightVector& l) {
    if (l.planar_squared_norm() == 0.0)
        throw DegenerateLight("theta_of_normal: (lx, ly) == (0, 0)");
    double num = nx * l.ly - ny * l.lx;
    double den = l.lx * l.lx + l.ly * l.ly - l.lz * (nx * l.lx + ny * l.ly);
    if (std::abs(num) < kDegenerateTol && std::abs(den) < kDegenerateTol)
        throw DegenerateNormal("theta_of_normal: normal at the light point");
    return std::atan2(num, den);
}

double theta_of_shape(const QuadShape& a, const LightVector& l) {
    return theta_of_normal(-a.a4, -a.a5, l);
}

void theta_ray(const LightVector& l, double theta, Eigen::Vector2d& n0, Eigen::Vector2d& dir) {
    if (l.planar_squared_norm() == 0.0)
        throw DegenerateLight("theta_ray: (lx, ly) == (0, 0)");
    double ct = std::cos(theta), st = std::sin(theta);
    n0 = {l.lx / l.lz, l.ly / l.lz};
    dir = {-(l.lx / l.lz) * ct + l.ly * st,
           -(l.ly / l.lz) * ct - l.lx * st};
}

std::vector<double> theta_ray_intensity_roots(const LightVector& l, double theta,
                                              double intensity) {
    Eigen::Vector2d n0, dir;
    theta_ray(l, theta, n0, dir);

    // l.n along the ray is alpha + beta r; |n|^2 is a0 + 2 b0 r + c0 r^2.
    double alpha = l.squared_norm() / l.lz;
    double beta = l.lx * dir.x() + l.ly * dir.y();
    double a0 = n0.squaredNorm() + 1.0;
    double b0 = n0.dot(dir);
    double c0 = dir.squaredNorm();
    double i2 = intensity * intensity;

    double qa = beta * beta - i2 * c0;
    double qb = 2.0 * (alpha * beta - i2 * b0);
    double qc = alpha * alpha - i2 * a0;

    std::vector<double> roots;
    double scale = std::max({std::abs(qa), std::abs(qb), std::abs(qc)});
    if (scale == 0.0) return roots;
    if (std::abs(qa) < 1e-14 * scale) {
        if (std::abs(qb) > 1e-14 * scale) roots.push_back(-qc / qb);
    } else {
        double disc = qb * qb - 4.0 * qa * qc;
        if (disc < 0.0) return roots;
        double sq = std::sqrt(disc);
        double q = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
        if (qa != 0.0) roots.push_back(q / qa);
        if (q != 0.0) roots.push_back(qc / q);
        else roots.push_back(0.0);
    }

    std::vector<double> out;
    for (double r : roots) {
        if (r < 0.0) {
            if (r > -1e-12) r = 0.0;
            else continue;
        }
        if (!std::isfinite(r)) continue;
        if (alpha + beta * r <= 0.0) continue; // squared-equation artifact: shadowed branch
        out.push_back(r);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double u, double v) { return std::abs(u - v) < 1e-12 * (1.0 + std::abs(u)); }),
              out.end());
    return out;
}

std::vector<std::pair<QuadShape, LightVector>> four_solutions(const QuadShape& a,
                                                              const LightVector& l) {
    double hscale = std::max({std::abs(a.a1), std::abs(a.a2), std::abs(a.a3)});
    if (hscale == 0.0)
        throw PlanarShape("four_solutions: zero Hessian");
    // Eigenvalue magnitudes are equal iff trace == 0, or the Hessian is a
    // multiple of the identity (a1 == a2, a3 == 0).
    if (std::abs(a.a1 + a.a2) <= kClassifyTol * hscale ||
        (std::abs(a.a1 - a.a2) <= kClassifyTol * hscale && std::abs(a.a3) <= kClassifyTol * hscale))
        throw EqualMagnitudeHessian("four_solutions: |lambda1| == |lambda2|");

    double phi0 = std::atan2(a.a3, a.a1 - a.a2);
    double c = std::cos(phi0), s = std::sin(phi0);

    Eigen::Matrix3d b_arot; // anti-rotation by phi0
    b_arot << c, s, 0, s, -c, 0, 0, 0, 1;
    Eigen::Matrix3d b_neg = Eigen::Matrix3d::Identity();
    b_neg(0, 0) = -1;
    b_neg(1, 1) = -1;

    const Eigen::Matrix3d bs[4] = {Eigen::Matrix3d::Identity(), b_neg, b_arot, b_neg * b_arot};

    Eigen::Matrix3d am = a.shape_matrix();
    Eigen::Vector3d lv = l.vec();
    std::vector<std::pair<QuadShape, LightVector>> out;
    for (const auto& b : bs) {
        Eigen::Matrix3d at = b * am;
        Eigen::Vector3d lt = b * lv;
        std::pair<QuadShape, LightVector> cand{shape_from_matrix(at),
                                               LightVector(lt.x(), lt.y(), lt.z())};
        bool dup = false;
        for (const auto& m : out)
            if (near_equal_pair(m, cand)) { dup = true; break; }
        if (!dup) out.push_back(std::move(cand));
    }
    return out;
}

LightVector cylinder_light_family(const QuadShape& a, const LightVector& l,
                                  const QuadShape& a_tilde, double c,
                                  const PatchGrid* shadow_check) {
    double scale = std::max({std::abs(a.a1), std::abs(a.a2), std::abs(a.a3), 1e-300});
    if (a.a1 == 0.0 || std::abs(a.a2) > kClassifyTol * scale || std::abs(a.a3) > kClassifyTol * scale)
        throw NotCylinder("cylinder_light_family: requires a2 = a3 = 0, a1 != 0");

    auto sign_or_one = [](double v) { return v < 0.0 ? -1.0 : 1.0; };
    double s1 = sign_or_one(a_tilde.a1 * a.a1);
    double s2 = sign_or_one(a_tilde.a5 * a.a5);

    Eigen::Vector3d shifted = l.vec() + c * Eigen::Vector3d(0.0, 1.0, a.a5);
    LightVector lt(s1 * shifted.x(), s2 * shifted.y(), shifted.z());

    if (shadow_check) {
        for (const auto& p : shadow_check->pts)
            if (lt.dot(a_tilde.normal_at(p.x(), p.y())) <= 0.0)
                throw ShadowViolation("cylinder_light_family: generated light shadows the grid");
    }
    return lt;
}

std::pair<QuadShape, LightVector> equal_magnitude_family(double r, double p, double q,
                                                         const LightVector& base_l,
                                                         double theta) {
    if (r <= 0.0) throw InvalidArgument("equal_magnitude_family: r must be positive");
    double ct = std::cos(theta), st = std::sin(theta);
    QuadShape a(r * ct, -r * ct, 2.0 * r * st, p * ct - q * st, p * st + q * ct);
    LightVector l(base_l.lx * ct - base_l.ly * st, base_l.lx * st + base_l.ly * ct, base_l.lz);
    return {a, l};
}

std::pair<QuadShape, LightVector> equal_magnitude_family_lambda(double r, double p, double q,
                                                                const LightVector& base_l,
                                                                int lambda) {
    if (r <= 0.0) throw InvalidArgument("equal_magnitude_family_lambda: r must be positive");
    if (lambda != 1 && lambda != -1)
        throw InvalidArgument("equal_magnitude_family_lambda: lambda must be +1 or -1");
    double lam = lambda;
    QuadShape a(lam * r, lam * r, 0.0, lam * p, -lam * q);
    LightVector l(lam * base_l.lx, -lam * base_l.ly, base_l.lz);
    return {a, l};
}

int vandermonde_rank(const PatchGrid& grid) {
    if (grid.size() == 0) throw InvalidArgument("vandermonde_rank: empty grid");
    const int n = static_cast<int>(grid.size());
    Eigen::MatrixXd v(n, 15);
    for (int i = 0; i < n; ++i) {
        double x = grid.pts[i].x(), y = grid.pts[i].y();
        int col = 0;
        for (int deg = 4; deg >= 0; --deg)
            for (int px = deg; px >= 0; --px)
                v(i, col++) = std::pow(x, px) * std::pow(y, deg - px);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(v);
    const auto& sv = svd.singularValues();
    double tol = 1e-10 * sv(0);
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol) ++rank;
    return rank;
}

AmbiguityFamily AmbiguityFamily::four_way(const QuadShape& a, const LightVector& l) {
    return {AmbiguityKind::FourWay, four_solutions(a, l)};
}

AmbiguityFamily AmbiguityFamily::cylinder_light_line(const QuadShape& a, const LightVector& l,
                                                     const std::vector<double>& c_values,
                                                     const PatchGrid* shadow_check) {
    AmbiguityFamily fam{AmbiguityKind::CylinderLightLine, {}};
    auto base = four_solutions(a, l);
    for (const auto& [at, lt] : base) {
        (void)lt;
        for (double c : c_values)
            fam.members.emplace_back(at, cylinder_light_family(a, l, at, c, shadow_check));
    }
    return fam;
}

AmbiguityFamily AmbiguityFamily::equal_magnitude_continuum(double r, double p, double q,
                                                           const LightVector& base_l,
                                                           const std::vector<double>& thetas,
                                                           bool include_lambda_branch) {
    AmbiguityFamily fam{AmbiguityKind::EqualMagnitudeContinuum, {}};
    for (double t : thetas) fam.members.push_back(equal_magnitude_family(r, p, q, base_l, t));
    if (include_lambda_branch) {
        fam.members.push_back(equal_magnitude_family_lambda(r, p, q, base_l, +1));
        fam.members.push_back(equal_magnitude_family_lambda(r, p, q, base_l, -1));
    }
    return fam;
}

AmbiguityFamily AmbiguityFamily::planar_cone(const LightVector& l, double intensity,
                                             const std::vector<double>& thetas) {
    if (intensity <= 0.0)
        throw InvalidArgument("planar_cone: intensity must be positive");
    AmbiguityFamily fam{AmbiguityKind::PlanarCone, {}};
    for (double t : thetas) {
        auto roots = theta_ray_intensity_roots(l, t, intensity);
        if (roots.empty()) continue;
        Eigen::Vector2d n0, dir;
        theta_ray(l, t, n0, dir);
        Eigen::Vector2d n = n0 + roots.front() * dir;
        fam.members.emplace_back(QuadShape(0, 0, 0, -n.x(), -n.y()), l);
    }
    return fam;
}

} // namespace quadshade
