#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "quadshade/patch_model.hpp"
#include "quadshade/synth.hpp"
#include "test_support.hpp"

using namespace quadshade;
using namespace quadshade::testing;

TEST_CASE("random_surface: constant and planar control grids") {
    SurfaceSpec spec;
    spec.height = spec.width = 32;
    spec.control_values = Eigen::Matrix<double, 5, 5>::Zero();
    DepthMap z = random_surface(spec);
    CHECK(z.z.abs().maxCoeff() < 1e-12);

    // spline reproduces linear data exactly
    Eigen::Matrix<double, 5, 5> plane;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) plane(i, j) = 1.5 * i - 0.7 * j;
    spec.control_values = plane;
    DepthMap zp = random_surface(spec);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
            double u = r / 31.0, v = c / 31.0;
            CHECK(zp.z(r, c) == doctest::Approx(1.5 * 4 * u - 0.7 * 4 * v).epsilon(1e-9));
        }
}

TEST_CASE("spline interpolates the control values exactly") {
    Rng rng(17);
    Eigen::Matrix<double, 5, 5> control;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) control(i, j) = rng.uniform(-8, 8);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(spline_surface_eval(control, i / 4.0, j / 4.0) ==
                  doctest::Approx(control(i, j)).epsilon(1e-12));
}

TEST_CASE("random_surface: seeded determinism") {
    SurfaceSpec spec;
    spec.seed = 42;
    spec.height = spec.width = 64;
    DepthMap a = random_surface(spec);
    DepthMap b = random_surface(spec);
    CHECK((a.z == b.z).all());

    spec.seed = 43;
    DepthMap c = random_surface(spec);
    CHECK(!(a.z == c.z).all());
}

TEST_CASE("normals_from_depth: closed forms") {
    DepthMap flat(8, 8);
    NormalField n0 = normals_from_depth(flat);
    CHECK(n0.nx.abs().maxCoeff() == 0.0);
    CHECK(n0.ny.abs().maxCoeff() == 0.0);

    DepthMap ramp(8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) ramp.z(r, c) = -0.3 * c;
    NormalField nr = normals_from_depth(ramp);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            CHECK(nr.nx(r, c) == doctest::Approx(0.3).epsilon(1e-12));
            CHECK(nr.ny(r, c) == doctest::Approx(0.0));
        }
}

TEST_CASE("discrete normals converge to the analytic spline gradient at O(h^2)") {
    Rng rng(7);
    Eigen::Matrix<double, 5, 5> control;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) control(i, j) = rng.uniform(-8, 8);

    auto interior_error = [&](int n) {
        Eigen::ArrayXXd dzdx, dzdy;
        Eigen::ArrayXXd z = spline_surface(control, n, n, &dzdx, &dzdy);
        NormalField nf = normals_from_depth(DepthMap(z));
        double worst = 0.0;
        for (int r = 2; r < n - 2; ++r)
            for (int c = 2; c < n - 2; ++c) {
                worst = std::max(worst, std::abs(-nf.nx(r, c) - dzdx(r, c)) * (n - 1));
                worst = std::max(worst, std::abs(-nf.ny(r, c) - dzdy(r, c)) * (n - 1));
            }
        return worst; // scaled to the normalized parametrization
    };
    double coarse = interior_error(65);
    double fine = interior_error(129);
    CHECK(fine < coarse / 3.0); // halving h shrinks the error about 4x
}

TEST_CASE("render_scene: flat surface gives the light z component") {
    DepthMap flat(16, 16);
    RenderSpec rs;
    rs.light = LightVector(0.5, 0.1, 0.7);
    Scene s = render_scene(flat, rs, 1);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            CHECK(s.image(r, c) == doctest::Approx(0.7));
            CHECK(s.mask(r, c));
        }
}

TEST_CASE("render_scene: seeded noise reproduces exactly and has the right scale") {
    SurfaceSpec spec;
    spec.seed = 11;
    spec.height = spec.width = 128;
    spec.amplitude = 4.0;
    DepthMap z = random_surface(spec);

    RenderSpec clean;
    clean.saturation_level = 2.0;
    Scene base = render_scene(z, clean, 5);
    REQUIRE(base.image.minCoeff() > 0.2); // no clipping to distort noise stats

    RenderSpec noisy = clean;
    noisy.noise_sigma = 0.05;
    Scene n1 = render_scene(z, noisy, 5);
    Scene n2 = render_scene(z, noisy, 5);
    CHECK((n1.image == n2.image).all());

    Eigen::ArrayXXd diff = n1.image - base.image;
    double mean = diff.mean();
    double sd = std::sqrt((diff - mean).square().mean());
    CHECK(sd == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("render_scene: saturation masks exactly the pre-clamp overflows") {
    SurfaceSpec spec;
    spec.seed = 3;
    spec.height = spec.width = 64;
    spec.amplitude = 4.0;
    DepthMap z = random_surface(spec);

    RenderSpec open; // effectively unclamped
    open.beckmann_roughness = 0.4;
    open.specular_strength = 0.4;
    open.noise_sigma = 0.02;
    open.saturation_level = 1e9;
    Scene pre = render_scene(z, open, 9);

    RenderSpec clamped = open;
    clamped.saturation_level = 1.0;
    Scene post = render_scene(z, clamped, 9);

    int saturated = 0;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            bool overflow = pre.image(r, c) > 1.0;
            CHECK(post.mask(r, c) == !overflow);
            if (overflow) {
                CHECK(post.image(r, c) == 1.0);
                ++saturated;
            } else {
                CHECK(post.image(r, c) == doctest::Approx(pre.image(r, c)));
            }
        }
    CHECK(saturated > 0);
}

TEST_CASE("lower Beckmann roughness does not reduce the saturated count") {
    SurfaceSpec spec;
    spec.seed = 3;
    spec.height = spec.width = 64;
    spec.amplitude = 4.0;
    DepthMap z = random_surface(spec);

    auto count_saturated = [&](double roughness) {
        RenderSpec rs;
        rs.beckmann_roughness = roughness;
        rs.specular_strength = 0.4;
        rs.saturation_level = 1.0;
        Scene s = render_scene(z, rs, 1);
        return (s.mask == false).count();
    };
    long prev = count_saturated(1.8);
    for (double m : {1.4, 1.1, 0.9}) {
        long cur = count_saturated(m);
        CHECK(cur >= prev);
        prev = cur;
    }
    CHECK(prev > 0);
}

TEST_CASE("diffuse render of a quadratic depth map matches the patch model") {
    QuadShape a(0.01, -0.008, 0.004, 0.12, -0.2);
    const int n = 33, mid = n / 2;
    DepthMap z(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) z.z(r, c) = a.depth_at(c - mid, r - mid);

    RenderSpec rs;
    rs.light = LightVector::from_angles(M_PI / 3, 0.4, 1.0);
    Scene s = render_scene(z, rs, 1);

    auto grid = square_grid(5);
    IntensityPatch patch = render(a, rs.light, grid, ShadowPolicy::ClampZero);
    // central differences are exact on quadratics: interior pixels agree to
    // rounding
    for (size_t i = 0; i < grid->size(); ++i) {
        int r = mid + static_cast<int>(grid->pts[i].y());
        int c = mid + static_cast<int>(grid->pts[i].x());
        CHECK(s.image(r, c) == doctest::Approx(patch.intensities[i]).epsilon(1e-12));
    }
}
