#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "quadshade/io.hpp"
#include "quadshade/proposal.hpp"
#include "test_support.hpp"

using namespace quadshade;
using namespace quadshade::testing;

namespace {

IntensityPatch constant_patch(const std::shared_ptr<const PatchGrid>& grid, double value) {
    return IntensityPatch(grid, std::vector<double>(grid->size(), value),
                          std::vector<uint8_t>(grid->size(), 1));
}

double center_value(const IntensityPatch& p) { return p.intensities[p.grid->center_index]; }

// Monte-Carlo estimate of E || I(n) - I(n~) ||^2 with n~ ~ N(n, sigma^2 I2).
double sigma_z_monte_carlo(const QuadShape& a, double x, double y, const LightVector& l,
                           double sigma_n0_sq, int samples, uint64_t seed) {
    Eigen::Vector3d n = a.normal_at(x, y);
    double base = l.dot(n) / n.norm();
    double sd = std::sqrt(sigma_n0_sq);
    Rng rng(seed);
    double acc = 0.0;
    for (int i = 0; i < samples; ++i) {
        double nx = n.x() + sd * rng.normal();
        double ny = n.y() + sd * rng.normal();
        double nn = std::sqrt(nx * nx + ny * ny + 1.0);
        double val = (l.lx * nx + l.ly * ny + l.lz) / nn;
        double d = base - val;
        acc += d * d;
    }
    return acc / samples;
}

} // namespace

TEST_CASE("solve_center_r: closed forms") {
    LightVector l(0.6, 0.0, 0.8);

    auto at_norm = solve_center_r(0.7, l.norm(), l);
    REQUIRE(!at_norm.empty());
    CHECK(std::abs(at_norm.front()) < 1e-9);

    auto roots = solve_center_r(0.0, 0.8, l);
    bool has_one = false;
    for (double r : roots) has_one = has_one || std::abs(r - 1.0) < 1e-9;
    CHECK(has_one);

    CHECK(solve_center_r(0.3, 1.5, l).empty());
    CHECK_THROWS_AS(solve_center_r(0.0, 0.5, LightVector(0, 0, 1)), DegenerateLight);

    // returned roots really place the center normal on the intensity cone
    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        LightVector lr = random_light(rng);
        double theta = rng.uniform(-M_PI, M_PI);
        double intensity = rng.uniform(0.1, 1.0) * lr.norm();
        for (double r : solve_center_r(theta, intensity, lr)) {
            auto [a4, a5] = reparam_a45(theta, r, lr);
            Eigen::Vector3d n(-a4, -a5, 1.0);
            CHECK(lr.dot(n) / n.norm() == doctest::Approx(intensity).epsilon(1e-7));
        }
    }
}

TEST_CASE("reparam_a45: closed forms and theta consistency") {
    LightVector l(0.6, 0.0, 0.8);
    auto [a4, a5] = reparam_a45(0.3, 0.0, l);
    CHECK(a4 == doctest::Approx(-0.75));
    CHECK(a5 == doctest::Approx(0.0));

    auto [b4, b5] = reparam_a45(0.0, 1.0, l);
    CHECK(std::abs(b4) < 1e-12);
    CHECK(std::abs(b5) < 1e-12);

    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        LightVector lr = random_light(rng);
        double theta = rng.uniform(-M_PI, M_PI);
        double r = rng.uniform(0.01, 3.0);
        auto [c4, c5] = reparam_a45(theta, r, lr);
        CHECK(theta_of_shape(QuadShape(0, 0, 0, c4, c5), lr) ==
              doctest::Approx(theta).epsilon(1e-9));
    }
}

TEST_CASE("theta_grid_for_patch: conventions and feasibility") {
    LightVector l(0.6, 0.0, 0.8);
    auto grid = square_grid(5);

    ThetaGrid g3 = theta_grid_for_patch(constant_patch(grid, 0.9), l, 3);
    REQUIRE(g3.values.size() == 3);
    CHECK(g3.full_circle);
    CHECK(g3.values[0] == doctest::Approx(-M_PI / 3));
    CHECK(g3.values[1] == doctest::Approx(M_PI / 3));
    CHECK(g3.values[2] == doctest::Approx(M_PI));

    ThetaGrid g21 = theta_grid_for_patch(constant_patch(grid, 0.9), l, 21);
    CHECK(g21.values.size() == 21);
    CHECK(g21.full_circle);
    for (size_t i = 1; i < g21.values.size(); ++i) CHECK(g21.values[i] > g21.values[i - 1]);

    // center at full brightness: r = 0 everywhere on the circle
    ThetaGrid bright = theta_grid_for_patch(constant_patch(grid, 1.0), l, 7);
    CHECK(bright.full_circle);
    for (double t : bright.values) {
        auto roots = solve_center_r(t, 1.0, l);
        REQUIRE(!roots.empty());
        CHECK(std::abs(roots.front()) < 1e-6);
    }

    // dim center: thetas near +-pi become infeasible and the interval shrinks
    ThetaGrid dim = theta_grid_for_patch(constant_patch(grid, 0.45), l, 21);
    CHECK(!dim.full_circle);
    CHECK(dim.hi < M_PI - 0.1);
    CHECK(dim.lo > -M_PI + 0.1);
    CHECK(dim.values.size() == 21);
    for (double t : dim.values) CHECK(!solve_center_r(t, 0.45, l).empty());
    // uniform spacing within the restricted interval
    double step = dim.values[1] - dim.values[0];
    for (size_t i = 2; i < dim.values.size(); ++i)
        CHECK(dim.values[i] - dim.values[i - 1] == doctest::Approx(step).epsilon(1e-9));

    CHECK_THROWS_AS(theta_grid_for_patch(constant_patch(grid, 1.2), l, 21), NoFeasibleTheta);
}

TEST_CASE("lm_jacobian: stationary where the normal meets the light") {
    auto grid = square_grid(3);
    // nearly view-aligned light keeps theta_ray defined while the center
    // normal sits on the light direction
    LightVector l(1e-7, 0.0, 1.0);
    IntensityPatch patch = constant_patch(grid, 1.0);
    Eigen::MatrixX4d jac = lm_jacobian(Eigen::Vector4d(0, 0, 0, 0), patch, l, 0.0);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(jac(grid->center_index, k)) < 1e-6);
}

TEST_CASE("lm_jacobian agrees with central finite differences") {
    Rng rng(13);
    auto grid = square_grid(5);
    int checked = 0;
    while (checked < 50) {
        LightVector l = random_light(rng);
        double theta = rng.uniform(-M_PI, M_PI);
        Eigen::Vector4d p(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                          rng.uniform(0.05, 1.5));
        auto [a4, a5] = reparam_a45(theta, p[3], l);
        QuadShape a(p[0], p[1], p[2], a4, a5);
        if (!shadow_free(a, l, *grid, 1e-2)) continue; // keep clear of the clamp kink
        ++checked;

        IntensityPatch patch = render(a, l, grid, ShadowPolicy::ClampZero);
        Eigen::MatrixX4d jac = lm_jacobian(p, patch, l, theta);

        const double h = 1e-6;
        auto model = [&](const Eigen::Vector4d& q, size_t i) {
            auto [q4, q5] = reparam_a45(theta, q[3], l);
            QuadShape qa(q[0], q[1], q[2], q4, q5);
            Eigen::Vector3d n = qa.normal_at(grid->pts[i].x(), grid->pts[i].y());
            double ln = l.dot(n);
            return ln > 0.0 ? ln / n.norm() : 0.0;
        };
        for (int k = 0; k < 4; ++k) {
            Eigen::Vector4d pp = p, pm = p;
            pp[k] += h;
            pm[k] -= h;
            for (size_t i = 0; i < grid->size(); ++i) {
                double fd = (model(pp, i) - model(pm, i)) / (2.0 * h);
                double an = jac(static_cast<Eigen::Index>(i), k);
                CHECK(std::abs(an - fd) / std::max(1.0, std::abs(an)) < 1e-5);
            }
        }
    }
}

TEST_CASE("fit_proposal: render-then-fit round trip") {
    Rng rng(29);
    auto grid = square_grid(5);
    int done = 0;
    while (done < 20) {
        auto [a, l] = random_generic_pair(rng, *grid);
        double theta;
        try {
            theta = theta_of_shape(a, l);
        } catch (const DegenerateNormal&) {
            continue;
        }
        ++done;
        IntensityPatch patch = render(a, l, grid);
        Proposal prop = fit_proposal(patch, l, theta);
        CHECK(prop.residual_sse < 1e-12);
        CHECK(std::abs(prop.shape.a1 - a.a1) < 1e-4);
        CHECK(std::abs(prop.shape.a2 - a.a2) < 1e-4);
        CHECK(std::abs(prop.shape.a3 - a.a3) < 1e-4);
        CHECK(std::abs(prop.shape.a4 - a.a4) < 1e-4);
        CHECK(std::abs(prop.shape.a5 - a.a5) < 1e-4);
        CHECK(std::abs(theta_of_shape(prop.shape, l) - theta) < 1e-6);
    }
}

TEST_CASE("fit_proposal: planar ambiguity fits at every feasible theta") {
    auto grid = square_grid(5);
    LightVector l(0.6, 0.0, 0.8);
    IntensityPatch planar = constant_patch(grid, 0.8); // a = 0 renders exactly l_z
    ThetaGrid tg = theta_grid_for_patch(planar, l, 11);
    for (double theta : tg.values) {
        Proposal prop = fit_proposal(planar, l, theta);
        CHECK(prop.residual_sse < 1e-10);
    }
}

TEST_CASE("fit_proposal: wrong theta leaves residual, few pixels rejected") {
    Rng rng(37);
    auto grid = square_grid(5);
    int done = 0;
    while (done < 10) {
        auto [a, l] = random_generic_pair(rng, *grid);
        double theta;
        try {
            theta = theta_of_shape(a, l);
        } catch (const DegenerateNormal&) {
            continue;
        }
        IntensityPatch patch = render(a, l, grid);
        double off = std::remainder(theta + M_PI / 2, 2.0 * M_PI);
        if (solve_center_r(off, center_value(patch), l).empty()) continue;
        ++done;
        Proposal prop = fit_proposal(patch, l, off);
        CHECK(prop.residual_sse > 1e-10);
    }

    auto tiny = square_grid(3);
    std::vector<uint8_t> mask(tiny->size(), 0);
    mask[0] = mask[1] = mask[2] = mask[4] = 1; // only 4 valid pixels
    IntensityPatch sparse(tiny, std::vector<double>(tiny->size(), 0.8), mask);
    CHECK_THROWS_AS(fit_proposal(sparse, LightVector(0.6, 0, 0.8), 0.0), TooFewPixels);
}

TEST_CASE("fit optimality: +-1e-3 perturbations never improve beyond 1e-9") {
    Rng rng(43);
    auto grid = square_grid(5);
    int done = 0;
    while (done < 6) {
        auto [a, l] = random_generic_pair(rng, *grid);
        IntensityPatch patch = render(a, l, grid);
        ThetaGrid tg = theta_grid_for_patch(patch, l, 5);
        ++done;
        for (double theta : tg.values) {
            Proposal prop = fit_proposal(patch, l, theta);
            Eigen::Vector2d n0, dir;
            theta_ray(l, theta, n0, dir);
            double r_fit = ((-prop.shape.a4 - n0.x()) * dir.x() +
                            (-prop.shape.a5 - n0.y()) * dir.y()) /
                           dir.squaredNorm();
            Eigen::Vector4d p(prop.shape.a1, prop.shape.a2, prop.shape.a3, std::max(r_fit, 0.0));
            auto sse_of = [&](const Eigen::Vector4d& q) {
                auto [q4, q5] = reparam_a45(theta, q[3], l);
                QuadShape qa(q[0], q[1], q[2], q4, q5);
                double s = 0.0;
                for (size_t i = 0; i < grid->size(); ++i) {
                    Eigen::Vector3d n = qa.normal_at(grid->pts[i].x(), grid->pts[i].y());
                    double ln = l.dot(n);
                    double model = ln > 0.0 ? ln / n.norm() : 0.0;
                    double e = patch.intensities[i] - model;
                    s += e * e;
                }
                return s;
            };
            double base = sse_of(p);
            for (int k = 0; k < 4; ++k)
                for (double sgn : {-1.0, 1.0}) {
                    Eigen::Vector4d q = p;
                    q[k] += sgn * 1e-3;
                    if (k == 3 && q[3] < 0.0) continue;
                    CHECK(sse_of(q) > base - 1e-9);
                }
        }
    }
}

TEST_CASE("sigma_z_sq: closed forms and Monte-Carlo agreement near the view axis") {
    NoiseModel nm;
    LightVector l(0.6, 0.0, 0.8);
    CHECK(sigma_z_sq(QuadShape(), 0, 0, l, nm) == doctest::Approx(0.36e-6));

    NoiseModel quiet{0.01, 0.0};
    CHECK(sigma_z_sq(QuadShape(), 0, 0, l, quiet) == 0.0);

    CHECK_THROWS_AS(sigma_z_sq(QuadShape(), 0, 0, LightVector(0, 0, 1), nm), ViewAlignedLight);

    double approx = sigma_z_sq(QuadShape(), 0, 0, l, nm);
    double mc = sigma_z_monte_carlo(QuadShape(), 0, 0, l, nm.sigma_n0_sq, 400000, 99);
    CHECK(mc == doctest::Approx(approx).epsilon(0.02));
}

TEST_CASE("likelihood_cost: closed forms") {
    auto grid = square_grid(5);
    LightVector l(0.6, 0.0, 0.8);
    NoiseModel nm{0.01, 1e-6};

    IntensityPatch patch = constant_patch(grid, 0.8);
    double expected = 12.5 * std::log(1.0036e-4);
    CHECK(likelihood_cost(patch, QuadShape(), l, nm) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(likelihood_cost(patch, QuadShape(), l, nm) == doctest::Approx(-115.0843).epsilon(1e-4));

    std::vector<uint8_t> mask(grid->size(), 1);
    mask[7] = 0;
    IntensityPatch masked(grid, std::vector<double>(grid->size(), 0.8), mask);
    CHECK(likelihood_cost(masked, QuadShape(), l, nm) ==
          doctest::Approx(24.0 / 25.0 * expected).epsilon(1e-9));

    // removing a zero-residual pixel with variance v changes D by -log(v)/2
    double v = nm.sigma_i * nm.sigma_i +
               sigma_z_sq(QuadShape(), grid->pts[7].x(), grid->pts[7].y(), l, nm);
    CHECK(likelihood_cost(patch, QuadShape(), l, nm) -
              likelihood_cost(masked, QuadShape(), l, nm) ==
          doctest::Approx(0.5 * std::log(v)).epsilon(1e-9));

    auto vals = patch.intensities;
    vals[3] = 0.9;
    IntensityPatch bumped(grid, vals, std::vector<uint8_t>(grid->size(), 1));
    CHECK(likelihood_cost(bumped, QuadShape(), l, nm) >
          likelihood_cost(patch, QuadShape(), l, nm));

    NoiseModel zero{0.0, 0.0};
    CHECK_THROWS_AS(likelihood_cost(patch, QuadShape(), l, zero), ZeroVariance);
}

TEST_CASE("infer_patch: minimum near the true orientation, planar near-uniform") {
    Rng rng(53);
    auto grid = square_grid(5);
    NoiseModel nm;

    int done = 0;
    while (done < 10) {
        auto [a, lr] = random_generic_pair(rng, *grid);
        double theta_true;
        try {
            theta_true = theta_of_shape(a, lr);
        } catch (const DegenerateNormal&) {
            continue;
        }
        ++done;
        ProposalSet set = infer_patch(render(a, lr, grid), lr, nm, 21);
        REQUIRE(set.proposals.size() == 21);
        for (size_t i = 1; i < set.proposals.size(); ++i)
            CHECK(set.proposals[i].theta > set.proposals[i - 1].theta);

        size_t best = 0;
        for (size_t i = 1; i < set.proposals.size(); ++i)
            if (set.proposals[i].cost < set.proposals[best].cost) best = i;
        double step = set.proposals[1].theta - set.proposals[0].theta;
        double diff = std::remainder(set.proposals[best].theta - theta_true, 2.0 * M_PI);
        CHECK(std::abs(diff) <= step * 1.5);
    }

    LightVector l = LightVector::from_angles(M_PI / 3, 0.0, 1.0);
    ProposalSet planar = infer_patch(constant_patch(grid, l.lz), l, nm, 21);
    double mn = planar.proposals[0].cost, mx = planar.proposals[0].cost, mean = 0.0;
    for (const auto& p : planar.proposals) {
        mn = std::min(mn, p.cost);
        mx = std::max(mx, p.cost);
        mean += p.cost;
    }
    mean /= static_cast<double>(planar.proposals.size());
    CHECK(mx - mn < 0.01 * std::abs(mean));
}

TEST_CASE("infer_image: geometry, skipping, worker determinism") {
    Eigen::ArrayXXd img(24, 24);
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 24; ++c)
            img(r, c) = 0.55 + 0.3 * std::sin(0.3 * r) * std::cos(0.25 * c);
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
        Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(24, 24, true);
    for (int r = 4; r < 12; ++r)
        for (int c = 4; c < 12; ++c) mask(r, c) = false;

    LightVector l = LightVector::from_angles(M_PI / 3, 0.0, 1.0);
    NoiseModel nm;
    InferOptions opts;
    opts.patch_sizes = {5};
    opts.J = 7;
    opts.workers = 1;

    auto scales = infer_image(img, mask, l, nm, opts);
    REQUIRE(scales.size() == 1);
    CHECK(scales[0].rows == 20);
    CHECK(scales[0].cols == 20);
    CHECK(!scales[0].at(6 - scales[0].row0, 6 - scales[0].col0).has_value()); // fully masked out
    CHECK(scales[0].at(18 - scales[0].row0, 18 - scales[0].col0).has_value());

    InferOptions opts3 = opts;
    opts3.workers = 3;
    auto scales3 = infer_image(img, mask, l, nm, opts3);

    ImageProposals p1{24, 24, l, nm, opts.J, opts.fit, scales, nlohmann::json::object()};
    ImageProposals p3{24, 24, l, nm, opts3.J, opts3.fit, scales3, nlohmann::json::object()};
    CHECK(proposals_to_json(p1).dump() == proposals_to_json(p3).dump());
}
