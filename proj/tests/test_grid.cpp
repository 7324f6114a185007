#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "moco/grid.hpp"
#include "moco/rng.hpp"

using namespace moco;

namespace {

// affine scalar: interpolation on a multilinear stencil must reproduce it
double affine(double x, double y, double z = 0.0) { return 0.7 + 1.3 * x - 0.4 * y + 0.25 * z; }

RealField affine_field(const Grid& g) {
    RealField f(g);
    for (std::size_t i = 0; i < g.n_points(); ++i) {
        auto p = g.point(i);
        f.values[i] = affine(p[0], p[1], p[2]);
    }
    return f;
}

}  // namespace

TEST_CASE("flat index and point round trip") {
    Grid g = make_grid_2d(5, 7, 2.0, -4.0, -6.0);
    CHECK(g.n_points() == 35);
    for (int j = 0; j < 7; ++j)
        for (int i = 0; i < 5; ++i) {
            auto p = g.point(g.flat(i, j));
            CHECK(p[0] == doctest::Approx(-4.0 + 2.0 * i));
            CHECK(p[1] == doctest::Approx(-6.0 + 2.0 * j));
            CHECK(p[2] == 0.0);
        }
    CHECK(g.extent(0) == doctest::Approx(8.0));
    CHECK(g.extent(1) == doctest::Approx(12.0));
}

TEST_CASE("layout and extent comparisons") {
    Grid a = make_grid_2d(8, 8, 1.0, 0.0, 0.0);
    Grid b = make_grid_2d(8, 8, 1.0, 0.0, 0.0);
    Grid c = make_grid_2d(4, 4, 1.0, 0.0, 0.0);
    CHECK(a.same_layout(b));
    CHECK(!a.same_layout(c));
    // 15 nodes at half the spacing span the same physical box as 8 nodes
    Grid fine = make_grid_2d(15, 15, 0.5, 0.0, 0.0);
    CHECK(a.same_extent(fine));
    CHECK(!a.same_extent(c));
}

TEST_CASE("stencil weights form a partition of unity") {
    Grid g = make_grid_2d(6, 5, 1.5, -2.0, 1.0);
    Rng rng(11);
    InterpStencil st;
    for (int k = 0; k < 200; ++k) {
        double p[2] = {rng.uniform(-5.0, 9.0), rng.uniform(-2.0, 10.0)};  // may leave the hull
        make_stencil(g, p, st);
        double s = 0.0;
        for (int c = 0; c < st.n_corners; ++c) s += st.w[c];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bilinear interpolation reproduces affine functions exactly") {
    Grid g = make_grid_2d(9, 9, 1.0, -4.0, -4.0);
    RealField f = affine_field(g);
    Rng rng(5);
    std::vector<double> pts;
    for (int k = 0; k < 50; ++k) {
        pts.push_back(rng.uniform(-4.0, 4.0));
        pts.push_back(rng.uniform(-4.0, 4.0));
    }
    auto vals = interpolate(f, pts);
    for (int k = 0; k < 50; ++k)
        CHECK(vals[std::size_t(k)] == doctest::Approx(affine(pts[2 * k], pts[2 * k + 1])).epsilon(1e-12));
}

TEST_CASE("trilinear interpolation reproduces affine functions exactly") {
    Grid g = make_grid_3d(5, 6, 4, 1.0, 0.0, 0.0, 0.0);
    RealField f = affine_field(g);
    Rng rng(7);
    std::vector<double> pts;
    for (int k = 0; k < 30; ++k) {
        pts.push_back(rng.uniform(0.0, 4.0));
        pts.push_back(rng.uniform(0.0, 5.0));
        pts.push_back(rng.uniform(0.0, 3.0));
    }
    auto vals = interpolate(f, pts);
    for (int k = 0; k < 30; ++k)
        CHECK(vals[std::size_t(k)] ==
              doctest::Approx(affine(pts[3 * k], pts[3 * k + 1], pts[3 * k + 2])).epsilon(1e-12));
}

TEST_CASE("queries outside the hull clamp to the boundary value") {
    Grid g = make_grid_2d(4, 4, 1.0, 0.0, 0.0);
    RealField f = affine_field(g);
    std::vector<double> pts = {-3.0, 1.5, 10.0, 1.5, 1.5, -2.0, 1.5, 99.0};
    auto vals = interpolate(f, pts);
    CHECK(vals[0] == doctest::Approx(affine(0.0, 1.5)));
    CHECK(vals[1] == doctest::Approx(affine(3.0, 1.5)));
    CHECK(vals[2] == doctest::Approx(affine(1.5, 0.0)));
    CHECK(vals[3] == doctest::Approx(affine(1.5, 3.0)));
}

TEST_CASE("complex and vector interpolation match the scalar path per component") {
    Grid g = make_grid_2d(6, 6, 1.0, 0.0, 0.0);
    Rng rng(3);
    RealField re(g), im(g);
    for (std::size_t i = 0; i < g.n_points(); ++i) {
        re.values[i] = rng.gauss();
        im.values[i] = rng.gauss();
    }
    ComplexField cf(g);
    VectorField vf(g);
    for (std::size_t i = 0; i < g.n_points(); ++i) {
        cf.values[i] = {re.values[i], im.values[i]};
        vf.comp(i, 0) = re.values[i];
        vf.comp(i, 1) = im.values[i];
    }
    std::vector<double> pts;
    for (int k = 0; k < 40; ++k) {
        pts.push_back(rng.uniform(0.0, 5.0));
        pts.push_back(rng.uniform(0.0, 5.0));
    }
    auto sr = interpolate(re, pts);
    auto si = interpolate(im, pts);
    auto c = interpolate(cf, pts);
    auto v = interpolate(vf, pts);
    for (int k = 0; k < 40; ++k) {
        CHECK(c[std::size_t(k)].real() == doctest::Approx(sr[std::size_t(k)]).epsilon(1e-14));
        CHECK(c[std::size_t(k)].imag() == doctest::Approx(si[std::size_t(k)]).epsilon(1e-14));
        CHECK(v[std::size_t(2 * k)] == doctest::Approx(sr[std::size_t(k)]).epsilon(1e-14));
        CHECK(v[std::size_t(2 * k + 1)] == doctest::Approx(si[std::size_t(k)]).epsilon(1e-14));
    }
}

TEST_CASE("resample preserves affine fields and rejects extent mismatch") {
    Grid coarse = make_grid_2d(5, 5, 2.0, -4.0, -4.0);
    Grid fine = make_grid_2d(9, 9, 1.0, -4.0, -4.0);
    RealField f = affine_field(coarse);
    RealField r = resample(f, fine);
    for (std::size_t i = 0; i < fine.n_points(); ++i) {
        auto p = fine.point(i);
        CHECK(r.values[i] == doctest::Approx(affine(p[0], p[1])).epsilon(1e-12));
    }
    Grid shifted = make_grid_2d(9, 9, 1.0, -3.0, -4.0);
    CHECK_THROWS_AS((void)resample(f, shifted), std::invalid_argument);
}

TEST_CASE("spatial gradient of an affine field is its slope everywhere") {
    Grid g = make_grid_2d(7, 6, 0.5, 0.0, 0.0);
    VectorField grad = spatial_gradient(affine_field(g));
    for (std::size_t i = 0; i < g.n_points(); ++i) {
        CHECK(grad.comp(i, 0) == doctest::Approx(1.3).epsilon(1e-12));
        CHECK(grad.comp(i, 1) == doctest::Approx(-0.4).epsilon(1e-12));
    }
}

TEST_CASE("gradient_adjoint_apply is the exact transpose of gradient_apply") {
    Grid g = make_grid_2d(6, 5, 0.7, -1.0, 2.0);
    const int ncomp = 2;
    std::size_t n = g.n_points() * ncomp;
    std::size_t m = g.n_points() * std::size_t(g.dim) * ncomp;
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> x(n), y(m), gx(m, 0.0), gty(n, 0.0);
        for (auto& v : x) v = rng.gauss();
        for (auto& v : y) v = rng.gauss();
        gradient_apply(g, x.data(), ncomp, gx.data());
        gradient_adjoint_apply(g, y.data(), ncomp, gty.data());
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < m; ++i) lhs += gx[i] * y[i];
        for (std::size_t i = 0; i < n; ++i) rhs += x[i] * gty[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
    }
}
