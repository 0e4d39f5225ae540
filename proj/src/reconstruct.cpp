#include "quadshade/reconstruct.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>

#include "quadshade/grid_ops.hpp"
#include "quadshade/util.hpp"

namespace quadshade {

namespace {

// Static second-order moments of patch pixel offsets (same for every patch of
// one scale). Offsets run row-major over the square grid.
struct OffsetMoments {
    double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;

    static OffsetMoments square(int size) {
        OffsetMoments m;
        int h = size / 2;
        for (int dy = -h; dy <= h; ++dy)
            for (int dx = -h; dx <= h; ++dx) {
                m.n += 1;
                m.sx += dx;
                m.sy += dy;
                m.sxx += double(dx) * dx;
                m.syy += double(dy) * dy;
                m.sxy += double(dx) * dy;
            }
        return m;
    }
};

// First-order data moments of a field over one patch footprint.
struct DataMoments {
    double s = 0, sdx = 0, sdy = 0, ss = 0;
};

DataMoments field_moments(const Eigen::ArrayXXd& f, int row, int col, int half) {
    DataMoments m;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
            double v = f(row + dy, col + dx);
            m.s += v;
            m.sdx += v * dx;
            m.sdy += v * dy;
            m.ss += v * v;
        }
    return m;
}

// sum over the patch of (f - (c1 dx + c2 dy + c0))^2 from precomputed moments.
inline double quadratic_mismatch(const DataMoments& d, const OffsetMoments& o, double c1,
                                 double c2, double c0) {
    double cross = c1 * d.sdx + c2 * d.sdy + c0 * d.s;
    double model = c1 * c1 * o.sxx + c2 * c2 * o.syy + c0 * c0 * o.n + 2.0 * c1 * c2 * o.sxy +
                   2.0 * c1 * c0 * o.sx + 2.0 * c2 * c0 * o.sy;
    return d.ss - 2.0 * cross + model;
}

double weighted_objective(const Eigen::ArrayXXd& z, const AggregateNormals& agg) {
    Eigen::ArrayXXd gx, gy;
    depth_gradients(z, gx, gy);
    return (agg.w * ((-gx - agg.nx).square() + (-gy - agg.ny).square())).sum();
}

void fft2(const Eigen::ArrayXXcd& in, Eigen::ArrayXXcd& out, bool inverse) {
    const Eigen::Index rows = in.rows(), cols = in.cols();
    out.resize(rows, cols);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> line, spec;
    // rows (transform along x = columns)
    Eigen::ArrayXXcd tmp(rows, cols);
    line.resize(cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) line[c] = in(r, c);
        if (inverse) fft.inv(spec, line);
        else fft.fwd(spec, line);
        for (Eigen::Index c = 0; c < cols; ++c) tmp(r, c) = spec[c];
    }
    // columns (transform along y = rows)
    line.resize(rows);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) line[r] = tmp(r, c);
        if (inverse) fft.inv(spec, line);
        else fft.fwd(spec, line);
        for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = spec[r];
    }
}

// A(Z) = Dx^T (w . Dx Z) + Dy^T (w . Dy Z)
void apply_normal_operator(const Eigen::ArrayXXd& z, const Eigen::ArrayXXd& w,
                           Eigen::ArrayXXd& out, Eigen::ArrayXXd& gx, Eigen::ArrayXXd& gy) {
    depth_gradients(z, gx, gy);
    gx *= w;
    gy *= w;
    out.setZero(z.rows(), z.cols());
    add_gradient_x_adjoint(gx, out);
    add_gradient_y_adjoint(gy, out);
}

} // namespace

double delta(const DepthMap& z, const QuadShape& a, int x, int y, int patch_row, int patch_col) {
    const int rows = static_cast<int>(z.rows());
    const int cols = static_cast<int>(z.cols());
    if (x < 0 || x >= cols || y < 0 || y >= rows)
        throw BoundaryPixel("delta: pixel outside the depth map");

    double gx = x == 0            ? z.z(y, 1) - z.z(y, 0)
                : x == cols - 1   ? z.z(y, cols - 1) - z.z(y, cols - 2)
                                  : 0.5 * (z.z(y, x + 1) - z.z(y, x - 1));
    double gy = y == 0            ? z.z(1, x) - z.z(0, x)
                : y == rows - 1   ? z.z(rows - 1, x) - z.z(rows - 2, x)
                                  : 0.5 * (z.z(y + 1, x) - z.z(y - 1, x));

    Eigen::Vector3d n = a.normal_at(x - patch_col, y - patch_row);
    double ex = -gx - n.x();
    double ey = -gy - n.y();
    return ex * ex + ey * ey;
}

Labeling update_labels(const DepthMap& z, const std::vector<ScaleDistributions>& dists,
                       double lambda, bool allow_dummy, int workers) {
    Eigen::ArrayXXd gx, gy;
    depth_gradients(z.z, gx, gy);
    Eigen::ArrayXXd p = -gx, q = -gy;

    Labeling out;
    out.per_scale.resize(dists.size());
    for (size_t s = 0; s < dists.size(); ++s) {
        const auto& sd = dists[s];
        auto& labels = out.per_scale[s];
        labels.assign(sd.sets.size(), -1);
        const OffsetMoments om = OffsetMoments::square(sd.patch_size);
        const int half = sd.patch_size / 2;

        parallel_for(sd.sets.size(), workers, [&](size_t idx) {
            const auto& set = sd.sets[idx];
            if (!set) return;
            DataMoments mp = field_moments(p, set->row, set->col, half);
            DataMoments mq = field_moments(q, set->row, set->col, half);
            int best = -1;
            double best_cost = 0.0;
            for (size_t j = 0; j < set->proposals.size(); ++j) {
                const QuadShape& a = set->proposals[j].shape;
                double agree = quadratic_mismatch(mp, om, -2.0 * a.a1, -a.a3, -a.a4) +
                               quadratic_mismatch(mq, om, -a.a3, -2.0 * a.a2, -a.a5);
                double cost = lambda * set->proposals[j].cost + agree;
                if (best < 0 || cost < best_cost) {
                    best = static_cast<int>(j);
                    best_cost = cost;
                }
            }
            if (allow_dummy && set->dummy_cost) {
                double cost = lambda * *set->dummy_cost;
                if (best < 0 || cost < best_cost) {
                    best = static_cast<int>(set->proposals.size());
                    best_cost = cost;
                }
            }
            labels[idx] = best;
        });
    }
    return out;
}

AggregateNormals aggregate_normals(const Labeling& labels,
                                   const std::vector<ScaleDistributions>& dists, int height,
                                   int width) {
    AggregateNormals agg;
    agg.w = Eigen::ArrayXXd::Zero(height, width);
    agg.nx = Eigen::ArrayXXd::Zero(height, width);
    agg.ny = Eigen::ArrayXXd::Zero(height, width);

    // Accumulation runs in scale order then patch index order so results do
    // not depend on how the preceding label update was scheduled.
    for (size_t s = 0; s < dists.size(); ++s) {
        const auto& sd = dists[s];
        const int half = sd.patch_size / 2;
        for (size_t idx = 0; idx < sd.sets.size(); ++idx) {
            const auto& set = sd.sets[idx];
            if (!set) continue;
            int label = labels.per_scale[s][idx];
            if (label < 0 || label >= static_cast<int>(set->proposals.size())) continue; // dummy/absent
            const QuadShape& a = set->proposals[label].shape;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    int r = set->row + dy, c = set->col + dx;
                    agg.w(r, c) += 1.0;
                    agg.nx(r, c) += -2.0 * a.a1 * dx - a.a3 * dy - a.a4;
                    agg.ny(r, c) += -a.a3 * dx - 2.0 * a.a2 * dy - a.a5;
                }
        }
    }
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            if (agg.w(r, c) > 0.0) {
                agg.nx(r, c) /= agg.w(r, c);
                agg.ny(r, c) /= agg.w(r, c);
            } else {
                agg.nx(r, c) = 0.0;
                agg.ny(r, c) = 0.0;
            }
        }
    return agg;
}

DepthMap frankot_chellappa(const Eigen::ArrayXXd& nx, const Eigen::ArrayXXd& ny) {
    if (nx.rows() != ny.rows() || nx.cols() != ny.cols())
        throw ShapeMismatch("frankot_chellappa: field shapes differ");
    if (!nx.allFinite() || !ny.allFinite())
        throw InvalidArgument("frankot_chellappa: fields must be finite");
    const Eigen::Index rows = nx.rows(), cols = nx.cols();

    // Target gradient of Z is the negated normal field.
    Eigen::ArrayXXcd gx = (-nx).cast<std::complex<double>>();
    Eigen::ArrayXXcd gy = (-ny).cast<std::complex<double>>();
    Eigen::ArrayXXcd gxf, gyf;
    fft2(gx, gxf, false);
    fft2(gy, gyf, false);

    // Periodic central differences diagonalize to i sin(omega); divide by the
    // squared response. Unobservable modes (DC and Nyquist combinations) are
    // zeroed.
    Eigen::ArrayXXcd zf(rows, cols);
    const std::complex<double> neg_i(0.0, -1.0);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double sy = std::sin(2.0 * M_PI * r / rows);
        for (Eigen::Index c = 0; c < cols; ++c) {
            double sx = std::sin(2.0 * M_PI * c / cols);
            double denom = sx * sx + sy * sy;
            zf(r, c) = denom < 1e-12 ? std::complex<double>(0.0, 0.0)
                                     : neg_i * (sx * gxf(r, c) + sy * gyf(r, c)) / denom;
        }
    }

    Eigen::ArrayXXcd zc;
    fft2(zf, zc, true);
    DepthMap out(rows, cols);
    out.z = zc.real();
    out.z -= out.z.mean();
    return out;
}

CgResult weighted_integrate_cg(const AggregateNormals& agg, const DepthMap& z_init, int iters) {
    if (iters < 1) throw InvalidArgument("weighted_integrate_cg: iters must be >= 1");
    const Eigen::Index rows = agg.w.rows(), cols = agg.w.cols();

    // Right-hand side: -Dx^T(w nx) - Dy^T(w ny).
    Eigen::ArrayXXd b = Eigen::ArrayXXd::Zero(rows, cols);
    Eigen::ArrayXXd wx = agg.w * agg.nx, wy = agg.w * agg.ny;
    add_gradient_x_adjoint(wx, b);
    add_gradient_y_adjoint(wy, b);
    b = -b;

    Eigen::ArrayXXd x = z_init.z;
    x -= x.mean();

    Eigen::ArrayXXd gx, gy, ax;
    apply_normal_operator(x, agg.w, ax, gx, gy);
    Eigen::ArrayXXd r = b - ax;
    Eigen::ArrayXXd p = r;
    double rr = (r * r).sum();
    const double rr0 = rr;
    const double target = rr0 * 1e-24; // |r| reduced by 1e-12

    CgResult res;
    int it = 0;
    for (; it < iters && rr > target && rr > 0.0; ++it) {
        apply_normal_operator(p, agg.w, ax, gx, gy);
        double pap = (p * ax).sum();
        if (pap <= 0.0) break; // numerically singular direction
        double alpha = rr / pap;
        x += alpha * p;
        r -= alpha * ax;
        double rr_new = (r * r).sum();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    res.iterations = it;
    res.converged = rr <= target;
    res.grad_decreased = rr < rr0 || rr0 == 0.0;
    x -= x.mean();
    res.z = DepthMap(std::move(x));
    return res;
}

double global_cost(const DepthMap& z, const Labeling& labels,
                   const std::vector<ScaleDistributions>& dists, double lambda) {
    Eigen::ArrayXXd gx, gy;
    depth_gradients(z.z, gx, gy);
    Eigen::ArrayXXd p = -gx, q = -gy;

    double cost = 0.0;
    for (size_t s = 0; s < dists.size(); ++s) {
        const auto& sd = dists[s];
        const OffsetMoments om = OffsetMoments::square(sd.patch_size);
        const int half = sd.patch_size / 2;
        for (size_t idx = 0; idx < sd.sets.size(); ++idx) {
            const auto& set = sd.sets[idx];
            if (!set) continue;
            int label = labels.per_scale[s][idx];
            if (label < 0) continue;
            if (label >= static_cast<int>(set->proposals.size())) {
                cost += lambda * set->dummy_cost.value_or(0.0);
                continue;
            }
            const QuadShape& a = set->proposals[label].shape;
            DataMoments mp = field_moments(p, set->row, set->col, half);
            DataMoments mq = field_moments(q, set->row, set->col, half);
            cost += lambda * set->proposals[label].cost +
                    quadratic_mismatch(mp, om, -2.0 * a.a1, -a.a3, -a.a4) +
                    quadratic_mismatch(mq, om, -a.a3, -2.0 * a.a2, -a.a5);
        }
    }
    return cost;
}

namespace {

struct AutoParams {
    double lambda;
    double d_phi;
};

AutoParams resolve_params(const std::vector<ScaleDistributions>& dists, const ReconConfig& cfg) {
    AutoParams ap{cfg.lambda, cfg.d_phi};
    if (ap.lambda <= 0.0) {
        // Mean (median - min) likelihood-cost gap at the smallest scale.
        const ScaleDistributions* smallest = nullptr;
        for (const auto& sd : dists) {
            bool any = false;
            for (const auto& s : sd.sets)
                if (s) { any = true; break; }
            if (any && (!smallest || sd.patch_size < smallest->patch_size)) smallest = &sd;
        }
        if (!smallest) throw InvalidArgument("reconstruct: no proposal sets present");
        double gap_sum = 0.0;
        size_t count = 0;
        for (const auto& s : smallest->sets) {
            if (!s || s->proposals.empty()) continue;
            std::vector<double> costs;
            costs.reserve(s->proposals.size());
            for (const auto& pr : s->proposals) costs.push_back(pr.cost);
            double mn = *std::min_element(costs.begin(), costs.end());
            double med = interpolated_quantile(costs, 0.5);
            gap_sum += med - mn;
            ++count;
        }
        double mean_gap = count ? gap_sum / count : 0.0;
        ap.lambda = 0.25 / std::max(mean_gap, 1e-12);
    }
    if (ap.d_phi <= 0.0) ap.d_phi = 10.0 / ap.lambda;
    return ap;
}

} // namespace

ReconResult reconstruct(const std::vector<ScaleDistributions>& dists, int height, int width,
                        const ReconConfig& cfg) {
    AutoParams ap = resolve_params(dists, cfg);

    // The reconstructor owns the dummy cost; copy the input and stamp it.
    std::vector<ScaleDistributions> work = dists;
    for (auto& sd : work)
        for (auto& s : sd.sets)
            if (s) s->dummy_cost = ap.d_phi;

    ReconResult res;
    res.lambda = ap.lambda;
    res.d_phi = ap.d_phi;
    res.z = DepthMap(height, width);

    int stage = 0;
    auto run_round = [&](double lambda_eff, bool allow_dummy, double sigma, int round) {
        res.labels = update_labels(res.z, work, lambda_eff, allow_dummy, cfg.workers);
        double c1 = global_cost(res.z, res.labels, work, lambda_eff);
        AggregateNormals agg = aggregate_normals(res.labels, work, height, width);
        DepthMap cand = frankot_chellappa(agg.nx, agg.ny);
        // The FFT solution assumes uniform weights; keep the current estimate
        // when it already scores better on the exact weighted objective.
        if (weighted_objective(cand.z, agg) <= weighted_objective(res.z.z, agg)) res.z = cand;
        double c2 = global_cost(res.z, res.labels, work, lambda_eff);
        res.trace.push_back({stage, round, sigma, lambda_eff, c1, c2});
        return c2;
    };

    // Annealing: one round per smoothing level, each its own stage.
    for (double sigma = cfg.sigma0; sigma > 1.0; sigma *= cfg.sigma_factor) {
        run_round(sigma * sigma * ap.lambda, false, sigma, 0);
        res.z.z = gaussian_blur(res.z.z, sigma);
        res.z.z -= res.z.z.mean();
        res.rounds_per_stage.push_back(1);
        ++stage;
    }

    // Alternation to convergence, first without the dummy label, then with it.
    auto run_stage = [&](bool allow_dummy) {
        double prev = 0.0;
        int round = 0;
        for (; round < cfg.max_rounds_per_stage; ++round) {
            double c = run_round(ap.lambda, allow_dummy, 0.0, round);
            if (round > 0 && std::abs(prev - c) <= cfg.convergence_tol * std::max(1.0, std::abs(prev)))
                { ++round; break; }
            prev = c;
        }
        res.rounds_per_stage.push_back(round);
        ++stage;
    };
    run_stage(false);
    if (cfg.use_dummy) run_stage(true);

    // Final stage: exact depth update by conjugate gradient.
    res.labels = update_labels(res.z, work, ap.lambda, cfg.use_dummy, cfg.workers);
    double c1 = global_cost(res.z, res.labels, work, ap.lambda);
    AggregateNormals agg = aggregate_normals(res.labels, work, height, width);
    CgResult cg = weighted_integrate_cg(agg, res.z, cfg.cg_iters);
    res.cg_converged = cg.converged;
    res.cg_grad_decreased = cg.grad_decreased;
    if (weighted_objective(cg.z.z, agg) <= weighted_objective(res.z.z, agg)) res.z = cg.z;
    double c2 = global_cost(res.z, res.labels, work, ap.lambda);
    res.trace.push_back({stage, 0, 0.0, ap.lambda, c1, c2});
    res.rounds_per_stage.push_back(1);

    return res;
}

} // namespace quadshade
