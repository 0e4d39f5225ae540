#include "quadshade/proposal.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace quadshade {

namespace {

// Anchor intensity for the theta grid: the center pixel when usable, the
// median of masked-in pixels otherwise; clamped into (0, ||l||].
double center_anchor_intensity(const IntensityPatch& patch, const LightVector& l) {
    const double lnorm = l.norm();
    double val;
    int ci = patch.grid->center_index;
    if (patch.mask[ci]) {
        val = patch.intensities[ci];
    } else {
        std::vector<double> vals;
        for (size_t i = 0; i < patch.size(); ++i)
            if (patch.mask[i]) vals.push_back(patch.intensities[i]);
        if (vals.empty()) throw TooFewPixels("theta grid: no masked-in pixels");
        size_t mid = vals.size() / 2;
        std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
        val = vals[mid];
    }
    if (val > lnorm + 1e-6)
        throw NoFeasibleTheta("center intensity exceeds ||l||");
    return std::clamp(val, 1e-4 * lnorm, lnorm);
}

// Dense masked view of a patch, extracted once per fit.
struct MaskedPatch {
    std::vector<double> xs, ys, obs;
    explicit MaskedPatch(const IntensityPatch& p) {
        xs.reserve(p.size());
        ys.reserve(p.size());
        obs.reserve(p.size());
        for (size_t i = 0; i < p.size(); ++i) {
            if (!p.mask[i]) continue;
            xs.push_back(p.grid->pts[i].x());
            ys.push_back(p.grid->pts[i].y());
            obs.push_back(p.intensities[i]);
        }
    }
    size_t size() const { return xs.size(); }
};

// Model intensity and its derivative w.r.t. (a1, a2, a3, r) at one point.
// Shadowed model points clamp to zero intensity with zero derivative.
inline void model_point(double x, double y, double a1, double a2, double a3, double a4,
                        double a5, const LightVector& l, const Eigen::Vector2d& dir,
                        double& intensity, double deriv[4]) {
    double nx = -2.0 * a1 * x - a3 * y - a4;
    double ny = -a3 * x - 2.0 * a2 * y - a5;
    double ln = l.lx * nx + l.ly * ny + l.lz;
    if (ln <= 0.0) {
        intensity = 0.0;
        deriv[0] = deriv[1] = deriv[2] = deriv[3] = 0.0;
        return;
    }
    double nn = nx * nx + ny * ny + 1.0;
    double s = 1.0 / std::sqrt(nn);
    intensity = ln * s;
    double s3ln = intensity / nn; // ln * s^3
    double di_dnx = l.lx * s - s3ln * nx;
    double di_dny = l.ly * s - s3ln * ny;
    deriv[0] = di_dnx * (-2.0 * x);
    deriv[1] = di_dny * (-2.0 * y);
    deriv[2] = di_dnx * (-y) + di_dny * (-x);
    deriv[3] = di_dnx * dir.x() + di_dny * dir.y();
}

double sse_at(const MaskedPatch& mp, const Eigen::Vector4d& p, const LightVector& l,
              const Eigen::Vector2d& n0, const Eigen::Vector2d& dir) {
    double a4 = -(n0.x() + p[3] * dir.x());
    double a5 = -(n0.y() + p[3] * dir.y());
    double sse = 0.0;
    double deriv[4];
    for (size_t i = 0; i < mp.size(); ++i) {
        double im;
        model_point(mp.xs[i], mp.ys[i], p[0], p[1], p[2], a4, a5, l, dir, im, deriv);
        double e = mp.obs[i] - im;
        sse += e * e;
    }
    return sse;
}

void normal_equations(const MaskedPatch& mp, const Eigen::Vector4d& p, const LightVector& l,
                      const Eigen::Vector2d& n0, const Eigen::Vector2d& dir,
                      Eigen::Matrix4d& jtj, Eigen::Vector4d& jte, double& sse) {
    double a4 = -(n0.x() + p[3] * dir.x());
    double a5 = -(n0.y() + p[3] * dir.y());
    jtj.setZero();
    jte.setZero();
    sse = 0.0;
    double d[4];
    for (size_t i = 0; i < mp.size(); ++i) {
        double im;
        model_point(mp.xs[i], mp.ys[i], p[0], p[1], p[2], a4, a5, l, dir, im, d);
        double e = mp.obs[i] - im;
        sse += e * e;
        for (int a = 0; a < 4; ++a) {
            jte[a] += d[a] * e;
            for (int b = a; b < 4; ++b) jtj(a, b) += d[a] * d[b];
        }
    }
    for (int a = 1; a < 4; ++a)
        for (int b = 0; b < a; ++b) jtj(a, b) = jtj(b, a);
}

} // namespace

std::vector<double> solve_center_r(double theta, double i_center, const LightVector& l) {
    if (l.planar_squared_norm() == 0.0)
        throw DegenerateLight("solve_center_r: (lx, ly) == (0, 0)");
    if (i_center <= 0.0)
        throw InvalidArgument("solve_center_r: center intensity must be positive");
    return theta_ray_intensity_roots(l, theta, i_center);
}

ThetaGrid theta_grid_for_patch(const IntensityPatch& patch, const LightVector& l, int J) {
    if (J < 3) throw InvalidArgument("theta_grid_for_patch: J must be >= 3");
    const double anchor = center_anchor_intensity(patch, l);

    auto feasible = [&](double t) { return !solve_center_r(t, anchor, l).empty(); };

    constexpr int kProbes = 128; // probe k lands exactly on theta = 0 and pi
    std::vector<uint8_t> ok(kProbes);
    std::vector<double> probes(kProbes);
    bool all = true;
    for (int k = 0; k < kProbes; ++k) {
        probes[k] = -M_PI + 2.0 * M_PI * (k + 1) / kProbes;
        ok[k] = feasible(probes[k]);
        all = all && ok[k];
    }

    ThetaGrid grid;
    if (all) {
        grid.full_circle = true;
        grid.lo = -M_PI;
        grid.hi = M_PI;
        for (int j = 1; j <= J; ++j) grid.values.push_back(-M_PI + 2.0 * M_PI * j / J);
        return grid;
    }

    // Largest run of consecutive feasible probes.
    int best_start = -1, best_len = 0, start = -1;
    for (int k = 0; k <= kProbes; ++k) {
        if (k < kProbes && ok[k]) {
            if (start < 0) start = k;
        } else if (start >= 0) {
            if (k - start > best_len) {
                best_len = k - start;
                best_start = start;
            }
            start = -1;
        }
    }
    if (best_len == 0) throw NoFeasibleTheta("no feasible theta found for the patch center");

    auto bisect = [&](double bad, double good) {
        for (int it = 0; it < 40; ++it) {
            double mid = 0.5 * (bad + good);
            if (feasible(mid)) good = mid;
            else bad = mid;
        }
        return good;
    };

    double lo = probes[best_start];
    if (best_start > 0) lo = bisect(probes[best_start - 1], lo);
    double hi = probes[best_start + best_len - 1];
    if (best_start + best_len < kProbes) hi = bisect(probes[best_start + best_len], hi);
    if (hi - lo < 1e-9) hi = std::min(lo + 1e-9, M_PI); // degenerate sliver

    grid.full_circle = false;
    grid.lo = lo;
    grid.hi = hi;
    for (int j = 1; j <= J; ++j) grid.values.push_back(lo + (hi - lo) * j / J);
    return grid;
}

std::pair<double, double> reparam_a45(double theta, double r, const LightVector& l) {
    Eigen::Vector2d n0, dir;
    theta_ray(l, theta, n0, dir);
    return {-(n0.x() + r * dir.x()), -(n0.y() + r * dir.y())};
}

Eigen::MatrixX4d lm_jacobian(const Eigen::Vector4d& params, const IntensityPatch& patch,
                             const LightVector& l, double theta) {
    Eigen::Vector2d n0, dir;
    theta_ray(l, theta, n0, dir);
    double a4 = -(n0.x() + params[3] * dir.x());
    double a5 = -(n0.y() + params[3] * dir.y());
    Eigen::MatrixX4d jac(patch.size(), 4);
    double d[4];
    for (size_t i = 0; i < patch.size(); ++i) {
        double im;
        model_point(patch.grid->pts[i].x(), patch.grid->pts[i].y(), params[0], params[1],
                    params[2], a4, a5, l, dir, im, d);
        jac(static_cast<Eigen::Index>(i), 0) = d[0];
        jac(static_cast<Eigen::Index>(i), 1) = d[1];
        jac(static_cast<Eigen::Index>(i), 2) = d[2];
        jac(static_cast<Eigen::Index>(i), 3) = d[3];
    }
    return jac;
}

namespace {

// One Levenberg-Marquardt run; returns the final SSE, params in place.
double run_lm(const MaskedPatch& mp, const LightVector& l, const Eigen::Vector2d& n0,
              const Eigen::Vector2d& dir, Eigen::Vector4d& p, const FitOptions& opts) {
    Eigen::Matrix4d jtj;
    Eigen::Vector4d jte;
    double sse;
    normal_equations(mp, p, l, n0, dir, jtj, jte, sse);

    double lm = opts.lm_lambda_init;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        // Marquardt scaling: damp relative to each parameter's own curvature.
        double floor = 1e-12 * (jtj.diagonal().maxCoeff() + 1e-300);
        Eigen::Matrix4d damped = jtj;
        for (int k = 0; k < 4; ++k) damped(k, k) += lm * std::max(jtj(k, k), floor);
        Eigen::Vector4d step = damped.ldlt().solve(jte);
        if (!step.allFinite()) {
            lm = std::min(lm * opts.lm_up, opts.lm_max);
            continue;
        }
        Eigen::Vector4d cand = p + step;
        bool clamped = cand[3] < 0.0;
        cand[3] = std::max(cand[3], 0.0);
        double cand_sse = sse_at(mp, cand, l, n0, dir);
        if (cand_sse >= sse && clamped) {
            // The step wanted r < 0 and the projection spoiled it; retry in the
            // curvature parameters alone with r held at the boundary.
            Eigen::Matrix3d d3 = damped.topLeftCorner<3, 3>();
            Eigen::Vector3d s3 = d3.ldlt().solve(jte.head<3>());
            if (s3.allFinite()) {
                Eigen::Vector4d cand2 = p;
                cand2.head<3>() += s3;
                cand2[3] = 0.0;
                double sse2 = sse_at(mp, cand2, l, n0, dir);
                if (sse2 < cand_sse) {
                    cand = cand2;
                    cand_sse = sse2;
                }
            }
        }
        if (cand_sse < sse) {
            double decrease = sse - cand_sse;
            double step_norm = (cand - p).norm();
            p = cand;
            lm = std::max(lm * opts.lm_down, opts.lm_min);
            normal_equations(mp, p, l, n0, dir, jtj, jte, sse);
            if (step_norm < opts.step_tol) break;
            if (decrease < opts.rel_decrease_tol * std::max(sse, 1e-300)) break;
        } else {
            lm *= opts.lm_up;
            if (lm > opts.lm_max) break;
        }
    }
    return sse;
}

} // namespace

Proposal fit_proposal(const IntensityPatch& patch, const LightVector& l, double theta,
                      const std::optional<Eigen::Vector4d>& init, const FitOptions& opts) {
    MaskedPatch mp(patch);
    if (mp.size() < 5) throw TooFewPixels("fit_proposal: needs >= 5 masked-in pixels");

    Eigen::Vector2d n0, dir;
    theta_ray(l, theta, n0, dir);

    Eigen::Vector4d p;
    std::vector<double> roots;
    if (init) {
        p = *init;
        p[3] = std::max(p[3], 0.0);
    } else {
        double anchor = center_anchor_intensity(patch, l);
        roots = solve_center_r(theta, anchor, l);
        if (roots.empty()) throw InfeasibleTheta("fit_proposal: theta infeasible for the center");
        p = {0.0, 0.0, 0.0, roots.front()};
    }

    double sse = run_lm(mp, l, n0, dir, p, opts);

    // Restart from the convex/concave/saddle seeds (and the other conic root)
    // when the first basin is clearly above the expected residual floor.
    if (!init && sse > opts.rescue_sse_per_pixel * static_cast<double>(mp.size())) {
        double r0 = roots.front();
        const double c = opts.rescue_curvature;
        std::vector<Eigen::Vector4d> starts = {{c, c, 0, r0},
                                               {-c, -c, 0, r0},
                                               {c, -c, 0, r0},
                                               {-c, c, 0, r0}};
        if (roots.size() > 1) starts.push_back({0, 0, 0, roots.back()});
        for (const auto& s : starts) {
            Eigen::Vector4d q = s;
            double alt = run_lm(mp, l, n0, dir, q, opts);
            if (alt < sse) {
                sse = alt;
                p = q;
            }
        }
    }

    auto [a4, a5] = reparam_a45(theta, p[3], l);
    Proposal prop;
    prop.theta = theta;
    prop.shape = QuadShape(p[0], p[1], p[2], a4, a5);
    prop.residual_sse = sse;
    prop.cost = 0.0;
    return prop;
}

double sigma_z_sq(const QuadShape& a, double x, double y, const LightVector& l,
                  const NoiseModel& nm) {
    double planar = l.planar_squared_norm();
    if (planar <= 1e-18 * l.squared_norm())
        throw ViewAlignedLight("sigma_z_sq: approximation invalid for view-aligned light");
    Eigen::Vector3d n = a.normal_at(x, y);
    return planar * nm.sigma_n0_sq / n.squaredNorm();
}

double likelihood_cost(const IntensityPatch& patch, const QuadShape& a, const LightVector& l,
                       const NoiseModel& nm) {
    double cost = 0.0;
    for (size_t i = 0; i < patch.size(); ++i) {
        if (!patch.mask[i]) continue;
        double x = patch.grid->pts[i].x(), y = patch.grid->pts[i].y();
        Eigen::Vector3d n = a.normal_at(x, y);
        double ln = l.dot(n);
        double model = ln > 0.0 ? ln / n.norm() : 0.0;
        double var = nm.sigma_i * nm.sigma_i + sigma_z_sq(a, x, y, l, nm);
        if (var <= 0.0) throw ZeroVariance("likelihood_cost: zero variance at a masked-in pixel");
        double e = patch.intensities[i] - model;
        cost += 0.5 * (std::log(var) + e * e / var);
    }
    return cost;
}

ProposalSet infer_patch(const IntensityPatch& patch, const LightVector& l, const NoiseModel& nm,
                        int J, const FitOptions& fit_opts) {
    ThetaGrid grid = theta_grid_for_patch(patch, l, J);
    // On noisy data the residual floor is the noise floor; restarts below it
    // would burn time without changing the ranking.
    FitOptions opts = fit_opts;
    opts.rescue_sse_per_pixel =
        std::max(opts.rescue_sse_per_pixel, 3.0 * nm.sigma_i * nm.sigma_i);
    ProposalSet set;
    set.proposals.reserve(grid.values.size());
    for (double theta : grid.values) {
        Proposal prop;
        try {
            prop = fit_proposal(patch, l, theta, std::nullopt, opts);
        } catch (const InfeasibleTheta&) {
            // Interval endpoints are certified feasible, but an interior sample
            // of a ragged feasible set can still miss; fall back to a fixed start.
            prop = fit_proposal(patch, l, theta, Eigen::Vector4d(0, 0, 0, 1), opts);
        }
        prop.cost = likelihood_cost(patch, prop.shape, l, nm);
        set.proposals.push_back(prop);
    }
    return set;
}

std::vector<ScaleDistributions> infer_image(
    const Eigen::ArrayXXd& image, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask,
    const LightVector& l, const NoiseModel& nm, const InferOptions& opts) {
    const int h = static_cast<int>(image.rows());
    const int w = static_cast<int>(image.cols());
    if (mask.rows() != h || mask.cols() != w)
        throw InvalidArgument("infer_image: image and mask sizes differ");

    std::vector<ScaleDistributions> out;
    for (int size : opts.patch_sizes) {
        if (size < 3 || size % 2 == 0 || size > std::min(h, w))
            throw InvalidArgument("infer_image: patch sizes must be odd, >= 3 and fit the image");

        auto grid = std::make_shared<const PatchGrid>(PatchGrid::square(size));
        ScaleDistributions sd;
        sd.patch_size = size;
        sd.row0 = sd.col0 = size / 2;
        sd.rows = h - size + 1;
        sd.cols = w - size + 1;
        sd.sets.assign(static_cast<size_t>(sd.rows) * sd.cols, std::nullopt);

        const int half = size / 2;
        const size_t total = sd.sets.size();
        const double min_valid = opts.min_valid_fraction * size * size;

        auto work = [&](size_t idx) {
            int pr = sd.row0 + static_cast<int>(idx) / sd.cols;
            int pc = sd.col0 + static_cast<int>(idx) % sd.cols;
            std::vector<double> vals;
            std::vector<uint8_t> pm;
            vals.reserve(grid->size());
            pm.reserve(grid->size());
            size_t valid = 0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    bool ok = mask(pr + dy, pc + dx);
                    pm.push_back(ok ? 1 : 0);
                    vals.push_back(ok ? std::max(image(pr + dy, pc + dx), 0.0) : 0.0);
                    valid += ok;
                }
            if (static_cast<double>(valid) < min_valid) return;
            IntensityPatch patch(grid, std::move(vals), std::move(pm));
            try {
                ProposalSet set = infer_patch(patch, l, nm, opts.J, opts.fit);
                set.row = pr;
                set.col = pc;
                set.size = size;
                sd.sets[idx] = std::move(set);
            } catch (const NoFeasibleTheta&) {
                // recorded as absent
            } catch (const TooFewPixels&) {
            }
        };

        unsigned workers = opts.workers > 0 ? static_cast<unsigned>(opts.workers)
                                            : std::max(1u, std::thread::hardware_concurrency());
        if (workers <= 1) {
            for (size_t i = 0; i < total; ++i) work(i);
        } else {
            std::atomic<size_t> next{0};
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (unsigned t = 0; t < workers; ++t)
                pool.emplace_back([&]() {
                    for (size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) work(i);
                });
            for (auto& th : pool) th.join();
        }
        out.push_back(std::move(sd));
    }
    return out;
}

} // namespace quadshade
