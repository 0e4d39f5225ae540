#include "quadshade/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "quadshade/synth.hpp"
#include "quadshade/util.hpp"

namespace quadshade {

double angular_error(const Eigen::Vector3d& n_est, const Eigen::Vector3d& n_true) {
    double ne = n_est.norm(), nt = n_true.norm();
    if (ne == 0.0 || nt == 0.0) throw ZeroVector("angular_error: zero normal");
    double c = n_est.dot(n_true) / (ne * nt);
    return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / M_PI;
}

std::vector<std::vector<double>> per_patch_error_series(
    const ScaleDistributions& dist, const NormalField& truth,
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* mask) {
    std::vector<std::vector<double>> series;
    const int half = dist.patch_size / 2;
    for (const auto& set : dist.sets) {
        if (!set) continue;
        // proposals ranked by cost; stable so theta order breaks ties
        std::vector<size_t> order(set->proposals.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) {
            return set->proposals[i].cost < set->proposals[j].cost;
        });
        std::vector<double> errs;
        errs.reserve(order.size());
        for (size_t k : order) {
            const QuadShape& a = set->proposals[k].shape;
            double sum = 0.0;
            int count = 0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    int r = set->row + dy, c = set->col + dx;
                    if (mask && !(*mask)(r, c)) continue;
                    Eigen::Vector3d nt(truth.nx(r, c), truth.ny(r, c), 1.0);
                    sum += angular_error(a.normal_at(dx, dy), nt);
                    ++count;
                }
            errs.push_back(count ? sum / count : 0.0);
        }
        series.push_back(std::move(errs));
    }
    return series;
}

NBestCurve n_best_curve(const std::vector<std::vector<double>>& series, int n_max) {
    NBestCurve curve;
    for (int n = 1; n <= n_max; ++n) {
        std::vector<double> best;
        best.reserve(series.size());
        for (const auto& s : series) {
            if (s.empty()) continue;
            int take = std::min<int>(n, static_cast<int>(s.size()));
            best.push_back(*std::min_element(s.begin(), s.begin() + take));
        }
        curve.q25.push_back(interpolated_quantile(best, 0.25));
        curve.q50.push_back(interpolated_quantile(best, 0.50));
        curve.q75.push_back(interpolated_quantile(best, 0.75));
    }
    return curve;
}

NBestCurve n_best_curve(const ScaleDistributions& dist, const NormalField& truth, int n_max) {
    return n_best_curve(per_patch_error_series(dist, truth), n_max);
}

ErrorReport surface_report(const DepthMap& z_est, const DepthMap& z_true) {
    if (z_est.rows() != z_true.rows() || z_est.cols() != z_true.cols())
        throw ShapeMismatch("surface_report: depth map shapes differ");
    NormalField ne = normals_from_depth(z_est);
    NormalField nt = normals_from_depth(z_true);

    ErrorReport rep;
    rep.errors.resize(z_est.rows(), z_est.cols());
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(z_est.rows()) * z_est.cols());
    for (Eigen::Index r = 0; r < z_est.rows(); ++r)
        for (Eigen::Index c = 0; c < z_est.cols(); ++c) {
            double e = angular_error({ne.nx(r, c), ne.ny(r, c), 1.0},
                                     {nt.nx(r, c), nt.ny(r, c), 1.0});
            rep.errors(r, c) = e;
            flat.push_back(e);
        }
    rep.q25 = interpolated_quantile(flat, 0.25);
    rep.q50 = interpolated_quantile(flat, 0.50);
    rep.q75 = interpolated_quantile(flat, 0.75);
    return rep;
}

std::string n_best_csv(const std::vector<std::pair<std::string, NBestCurve>>& curves) {
    std::ostringstream os;
    os << "N";
    for (const auto& [name, c] : curves) {
        (void)c;
        os << "," << name << "_q25," << name << "_q50," << name << "_q75";
    }
    os << "\n";
    size_t n_max = 0;
    for (const auto& [name, c] : curves) n_max = std::max(n_max, c.q50.size());
    os.precision(17);
    for (size_t n = 0; n < n_max; ++n) {
        os << (n + 1);
        for (const auto& [name, c] : curves) {
            (void)name;
            if (n < c.q50.size())
                os << "," << c.q25[n] << "," << c.q50[n] << "," << c.q75[n];
            else
                os << ",,,";
        }
        os << "\n";
    }
    return os.str();
}

} // namespace quadshade
