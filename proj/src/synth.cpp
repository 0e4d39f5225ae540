#include "quadshade/synth.hpp"

#include <cmath>

#include "quadshade/grid_ops.hpp"
#include "quadshade/rng.hpp"

namespace quadshade {

namespace {

// Natural cubic spline through 5 equispaced knots on [0, 1].
struct Spline5 {
    double v[5];  // knot values
    double m[5];  // second derivatives, m[0] = m[4] = 0

    explicit Spline5(const double vals[5]) {
        for (int i = 0; i < 5; ++i) v[i] = vals[i];
        // Tridiagonal system for the three interior second derivatives,
        // knot spacing h = 1/4: (h/6)(m[i-1] + 4 m[i] + m[i+1]) = d2 v.
        const double h = 0.25;
        double rhs[3];
        for (int i = 0; i < 3; ++i)
            rhs[i] = (v[i + 2] - 2.0 * v[i + 1] + v[i]) / h;
        // Thomas algorithm on [[4h/6, h/6, 0], [h/6, 4h/6, h/6], [0, h/6, 4h/6]].
        double diag[3] = {4.0 * h / 6.0, 4.0 * h / 6.0, 4.0 * h / 6.0};
        const double off = h / 6.0;
        double w1 = off / diag[0];
        diag[1] -= w1 * off;
        rhs[1] -= w1 * rhs[0];
        double w2 = off / diag[1];
        diag[2] -= w2 * off;
        rhs[2] -= w2 * rhs[1];
        double m3 = rhs[2] / diag[2];
        double m2 = (rhs[1] - off * m3) / diag[1];
        double m1 = (rhs[0] - off * m2) / diag[0];
        m[0] = 0.0;
        m[1] = m1;
        m[2] = m2;
        m[3] = m3;
        m[4] = 0.0;
    }

    // Value and derivative with respect to the normalized coordinate t in [0, 1].
    void eval(double t, double& value, double& deriv) const {
        const double h = 0.25;
        int seg = std::clamp(static_cast<int>(t * 4.0), 0, 3);
        double t0 = seg * h;
        double a = (t0 + h - t) / h;
        double b = (t - t0) / h;
        value = a * v[seg] + b * v[seg + 1] +
                ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * h * h / 6.0;
        deriv = (v[seg + 1] - v[seg]) / h +
                (-(3.0 * a * a - 1.0) * m[seg] + (3.0 * b * b - 1.0) * m[seg + 1]) * h / 6.0;
    }
};

} // namespace

Eigen::ArrayXXd spline_surface(const Eigen::Matrix<double, 5, 5>& control, int output_rows,
                               int output_cols, Eigen::ArrayXXd* dz_dx, Eigen::ArrayXXd* dz_dy) {
    if (output_rows < 2 || output_cols < 2)
        throw InvalidArgument("spline_surface: output must be at least 2x2");

    // Column-direction splines through each control column (index j), in u.
    std::vector<Spline5> col_splines;
    col_splines.reserve(5);
    for (int j = 0; j < 5; ++j) {
        double vals[5];
        for (int i = 0; i < 5; ++i) vals[i] = control(i, j);
        col_splines.emplace_back(vals);
    }

    Eigen::ArrayXXd z(output_rows, output_cols);
    if (dz_dx) dz_dx->resize(output_rows, output_cols);
    if (dz_dy) dz_dy->resize(output_rows, output_cols);

    const double du = 1.0 / (output_rows - 1);
    const double dv = 1.0 / (output_cols - 1);
    for (int r = 0; r < output_rows; ++r) {
        double u = r * du;
        double fu[5], fu_du[5];
        for (int j = 0; j < 5; ++j) col_splines[j].eval(u, fu[j], fu_du[j]);
        Spline5 row_spline(fu);
        Spline5 row_deriv_spline(fu_du); // spline construction is linear in the data
        for (int c = 0; c < output_cols; ++c) {
            double v = c * dv;
            double val, ddv;
            row_spline.eval(v, val, ddv);
            z(r, c) = val;
            if (dz_dx) (*dz_dx)(r, c) = ddv * dv; // pixel units
            if (dz_dy) {
                double val_u, unused;
                row_deriv_spline.eval(v, val_u, unused);
                (*dz_dy)(r, c) = val_u * du;
            }
        }
    }
    return z;
}

double spline_surface_eval(const Eigen::Matrix<double, 5, 5>& control, double u, double v) {
    std::vector<Spline5> col_splines;
    col_splines.reserve(5);
    for (int j = 0; j < 5; ++j) {
        double vals[5];
        for (int i = 0; i < 5; ++i) vals[i] = control(i, j);
        col_splines.emplace_back(vals);
    }
    double fu[5];
    for (int j = 0; j < 5; ++j) {
        double d;
        col_splines[j].eval(u, fu[j], d);
    }
    Spline5 row(fu);
    double val, d;
    row.eval(v, val, d);
    return val;
}

DepthMap random_surface(const SurfaceSpec& spec) {
    if (spec.height < 16 || spec.width < 16)
        throw InvalidArgument("random_surface: output must be at least 16x16");
    Eigen::Matrix<double, 5, 5> control;
    if (spec.control_values) {
        control = *spec.control_values;
    } else {
        Rng rng(spec.seed);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j)
                control(i, j) = rng.uniform(-spec.amplitude, spec.amplitude);
    }
    return DepthMap(spline_surface(control, spec.height, spec.width));
}

NormalField normals_from_depth(const DepthMap& z) {
    if (z.rows() < 3 || z.cols() < 3)
        throw InvalidArgument("normals_from_depth: needs at least 3x3");
    Eigen::ArrayXXd gx, gy;
    depth_gradients(z.z, gx, gy);
    NormalField n(z.rows(), z.cols());
    n.nx = -gx;
    n.ny = -gy;
    return n;
}

Scene render_scene(const DepthMap& z, const RenderSpec& rs, uint64_t seed) {
    NormalField n = normals_from_depth(z);
    const int rows = static_cast<int>(z.rows());
    const int cols = static_cast<int>(z.cols());

    Scene scene;
    scene.image.resize(rows, cols);
    scene.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, true);

    Eigen::Vector3d lhat = rs.light.vec().normalized();
    Eigen::Vector3d half = (lhat + Eigen::Vector3d(0, 0, 1)).normalized();

    Rng rng(seed);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            Eigen::Vector3d nv(n.nx(r, c), n.ny(r, c), 1.0);
            double nn = nv.norm();
            double diffuse = std::max(rs.light.dot(nv), 0.0) / nn;
            double val = diffuse;
            if (rs.beckmann_roughness && rs.specular_strength > 0.0) {
                double m = *rs.beckmann_roughness;
                double cos_a = nv.dot(half) / nn;
                if (cos_a > 1e-9) {
                    double c2 = cos_a * cos_a;
                    double tan2 = (1.0 - c2) / c2;
                    double d = std::exp(-tan2 / (m * m)) / (M_PI * m * m * c2 * c2);
                    val += rs.specular_strength * d;
                }
            }
            if (rs.noise_sigma > 0.0) val += rs.noise_sigma * rng.normal();
            if (val > rs.saturation_level) {
                val = rs.saturation_level;
                scene.mask(r, c) = false;
            }
            scene.image(r, c) = std::max(val, 0.0);
        }
    }
    return scene;
}

} // namespace quadshade
