#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "moco/grid.hpp"
#include "moco/metrics.hpp"
#include "moco/phantom.hpp"
#include "moco/phase.hpp"

using namespace moco;

TEST_CASE("raised cosine ramp endpoints and midpoint") {
    CHECK(raised_cosine(0.0) == doctest::Approx(0.0));
    CHECK(raised_cosine(0.5) == doctest::Approx(1.0));
    CHECK(raised_cosine(0.25) == doctest::Approx(0.5));
    CHECK(raised_cosine(1.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("periodic phase wraps into [0,1)") {
    CHECK(periodic_phase(0.0, 1.0) == doctest::Approx(0.0));
    CHECK(periodic_phase(2.25, 1.0) == doctest::Approx(0.25));
    CHECK(periodic_phase(7.0, 5.0) == doctest::Approx(0.4));
    for (double t = 0.0; t < 20.0; t += 0.37) {
        double p = periodic_phase(t, 5.0);
        CHECK(p >= 0.0);
        CHECK(p < 1.0);
    }
}

TEST_CASE("motion law values at the phase extremes") {
    AnnulusSpec spec;
    // full contraction removes 0.10 of the 240 mm field of view from the radius
    CHECK(spec.outer_radius(0.0) == doctest::Approx(54.0));
    CHECK(spec.outer_radius(0.5) == doctest::Approx(54.0 - 0.10 * 240.0));
    CHECK(spec.inner_radius(0.0) == doctest::Approx(38.4));
    CHECK(spec.inner_radius(0.5) == doctest::Approx(38.4 - 0.14 * 240.0));
    CHECK(spec.liver_shift(0.0) == doctest::Approx(0.0));
    CHECK(spec.liver_shift(0.5) == doctest::Approx(0.24 * 240.0));
    spec.validate();
    AnnulusSpec bad = spec;
    bad.inner_contraction = 0.0;  // inner wall would cross the contracted outer wall
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("rendered intensities hit the region values") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 96);
    RealField tmpl = render_annulus(spec, {0.0, 0.0}, g);

    auto value_at = [&](double x, double y) {
        std::vector<double> p = {x, y};
        return interpolate(tmpl, p)[0];
    };
    double mid_wall = 0.5 * (spec.inner_radius0_mm + spec.outer_radius0_mm);
    CHECK(value_at(mid_wall, 0.0) == doctest::Approx(spec.intensity_wall));
    CHECK(value_at(0.0, 0.0) == doctest::Approx(spec.intensity_blood));
    CHECK(value_at(spec.liver_center_x_mm, spec.liver_center_y_mm) ==
          doctest::Approx(spec.intensity_liver));
    // far corner is plain background
    CHECK(value_at(100.0, 80.0) == doctest::Approx(spec.intensity_background));
    for (double v : tmpl.values) {
        CHECK(v >= spec.intensity_background - 1e-12);
        CHECK(v <= spec.intensity_wall + 1e-12);
    }
}

TEST_CASE("full contraction moves the outer wall inward by the advertised amount") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 128);
    RealField systole = render_annulus(spec, {0.5, 0.0}, g);
    // the wall midline at c = 0.5 sits between the contracted radii
    double r_mid = 0.5 * (spec.outer_radius(0.5) + spec.inner_radius(0.5));
    std::vector<double> p = {r_mid, 0.0};
    CHECK(interpolate(systole, p)[0] == doctest::Approx(spec.intensity_wall));
    // the wall has pulled inward past the rest-state midline, leaving exterior
    double r_rest = 0.5 * (spec.outer_radius0_mm + spec.inner_radius0_mm);
    std::vector<double> q = {0.0, -r_rest};
    CHECK(interpolate(systole, q)[0] == doctest::Approx(spec.intensity_background));
}

TEST_CASE("liver disc translates vertically with the respiratory drive") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 128);
    RealField exhale = render_annulus(spec, {0.0, 0.0}, g);
    RealField inhale = render_annulus(spec, {0.0, 0.5}, g);
    double shift = spec.liver_shift(0.5);
    std::vector<double> at_rest = {spec.liver_center_x_mm, spec.liver_center_y_mm};
    std::vector<double> at_peak = {spec.liver_center_x_mm, spec.liver_center_y_mm + shift};
    CHECK(interpolate(exhale, at_rest)[0] == doctest::Approx(spec.intensity_liver));
    CHECK(interpolate(inhale, at_peak)[0] == doctest::Approx(spec.intensity_liver));
    // the rest-state centre is vacated once the disc has moved a full diameter
    CHECK(shift > 2.0 * spec.liver_radius_mm);
    CHECK(interpolate(inhale, at_rest)[0] == doctest::Approx(spec.intensity_background));
}

TEST_CASE("analytic deformation pulls each frame back to the template") {
    AnnulusSpec spec;
    const int n = 128;
    Grid g = default_phantom_grid(spec, n);
    RealField tmpl = render_annulus(spec, {0.0, 0.0}, g);
    const PhaseSample taus[3] = {{0.5, 0.0}, {0.0, 0.5}, {0.3, 0.25}};
    for (const auto& tau : taus) {
        RealField frame = render_annulus(spec, tau, g);
        VectorField u = ground_truth_deformation(spec, tau, g);
        // warped(x) = template(x + u(x)) should reproduce the frame
        std::vector<double> q;
        q.reserve(g.n_points() * 2);
        for (std::size_t i = 0; i < g.n_points(); ++i) {
            auto p = g.point(i);
            q.push_back(p[0] + u.comp(i, 0));
            q.push_back(p[1] + u.comp(i, 1));
        }
        RealField warped(g, interpolate(tmpl, q));

        // keep only pixels at least two samples away from any intensity edge
        // of the frame, where the anti-aliasing ramps live
        std::vector<char> edge(g.n_points(), 0);
        auto at = [&](int ix, int iy) { return frame.values[std::size_t(iy) * n + ix]; };
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix)
                for (int dy = -1; dy <= 1 && !edge[std::size_t(iy) * n + ix]; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int jx = std::clamp(ix + dx, 0, n - 1);
                        int jy = std::clamp(iy + dy, 0, n - 1);
                        if (std::abs(at(jx, jy) - at(ix, iy)) > 0.02) {
                            edge[std::size_t(iy) * n + ix] = 1;
                            break;
                        }
                    }
        double num = 0.0, den = 0.0;
        std::size_t kept = 0;
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                bool near_edge = false;
                for (int dy = -2; dy <= 2 && !near_edge; ++dy)
                    for (int dx = -2; dx <= 2; ++dx) {
                        int jx = std::clamp(ix + dx, 0, n - 1);
                        int jy = std::clamp(iy + dy, 0, n - 1);
                        if (edge[std::size_t(jy) * n + jx]) {
                            near_edge = true;
                            break;
                        }
                    }
                if (near_edge) continue;
                std::size_t i = std::size_t(iy) * n + ix;
                num += (warped.values[i] - frame.values[i]) * (warped.values[i] - frame.values[i]);
                den += frame.values[i] * frame.values[i];
                ++kept;
            }
        CAPTURE(tau.c);
        CAPTURE(tau.r);
        CHECK(kept > g.n_points() / 2);  // the band must not eat the image
        CHECK(100.0 * num / den < 2.0);  // percent NMSE away from the ramps
    }
}

TEST_CASE("deformation is identity at the template phase") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 48);
    VectorField u = ground_truth_deformation(spec, {0.0, 0.0}, g);
    for (double v : u.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("ground truth stores one frame and phase per readout group") {
    AnnulusSpec spec;
    MotionSchedule sched;
    sched.n_groups = 25;
    Grid g = default_phantom_grid(spec, 32);
    GroundTruth gt = generate_ground_truth(spec, sched, g);
    CHECK(gt.frames.size() == 25);
    CHECK(gt.phases.size() == 25);
    CHECK(gt.resp_signal.size() == 25);
    CHECK(gt.deformations.empty());
    for (int i = 0; i < 25; ++i) {
        double t = sched.sample_time(i);
        CHECK(gt.phases[std::size_t(i)].c ==
              doctest::Approx(periodic_phase(t, sched.cardiac_period_s)));
        CHECK(gt.phases[std::size_t(i)].r ==
              doctest::Approx(periodic_phase(t, sched.resp_period_s)));
        CHECK(gt.resp_signal[std::size_t(i)] ==
              doctest::Approx(raised_cosine(gt.phases[std::size_t(i)].r)));
    }
    GroundTruthOptions with;
    with.with_deformations = true;
    GroundTruth gtd = generate_ground_truth(spec, sched, g, with);
    CHECK(gtd.deformations.size() == 25);
}

namespace {

// first principal component scores of the time-centred navigator stack,
// via power iteration on the small Gram matrix
std::vector<double> pca_scores(const std::vector<std::vector<double>>& nav) {
    const std::size_t nt = nav.size(), d = nav[0].size();
    std::vector<double> mean(d, 0.0);
    for (const auto& v : nav)
        for (std::size_t j = 0; j < d; ++j) mean[j] += v[j] / double(nt);
    std::vector<double> gram(nt * nt, 0.0);
    for (std::size_t a = 0; a < nt; ++a)
        for (std::size_t b = a; b < nt; ++b) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                s += (nav[a][j] - mean[j]) * (nav[b][j] - mean[j]);
            gram[a * nt + b] = gram[b * nt + a] = s;
        }
    std::vector<double> v(nt), w(nt);
    for (std::size_t i = 0; i < nt; ++i) v[i] = 1.0 + 0.01 * double(i);
    for (int it = 0; it < 300; ++it) {
        double norm = 0.0;
        for (std::size_t a = 0; a < nt; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < nt; ++b) s += gram[a * nt + b] * v[b];
            w[a] = s;
            norm += s * s;
        }
        norm = std::sqrt(norm);
        for (std::size_t a = 0; a < nt; ++a) v[a] = w[a] / norm;
    }
    return v;
}

}  // namespace

TEST_CASE("navigator of a static phantom is constant over time") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 48);
    GroundTruth gt;
    gt.spec = spec;
    gt.grid = g;
    RealField frame = render_annulus(spec, {0.0, 0.0}, g);
    for (int i = 0; i < 6; ++i) {
        gt.frames.push_back(frame);
        gt.phases.push_back({0.0, 0.0});
        gt.resp_signal.push_back(0.0);
    }
    auto nav = simulate_navigator(gt, 3, 0.0, 5);
    for (std::size_t i = 1; i < nav.size(); ++i) CHECK(nav[i] == nav[0]);
}

TEST_CASE("navigator first principal component follows pure breathing") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 48);
    GroundTruth gt;
    gt.spec = spec;
    gt.grid = g;
    const int nt = 48;
    for (int i = 0; i < nt; ++i) {
        double r = double(i) / double(nt);
        gt.frames.push_back(render_annulus(spec, {0.0, r}, g));
        gt.phases.push_back({0.0, r});
        gt.resp_signal.push_back(raised_cosine(r));
    }
    auto nav = simulate_navigator(gt, 3, 0.0, 5);
    CHECK(nav.size() == std::size_t(nt));
    CHECK(nav[0].size() == std::size_t(48 * 3));
    auto scores = pca_scores(nav);
    double c = pearson_correlation(scores, gt.resp_signal);
    CHECK(std::abs(c) > 0.95);

    auto a = simulate_navigator(gt, 3, 0.02, 9);
    auto b = simulate_navigator(gt, 3, 0.02, 9);
    auto d = simulate_navigator(gt, 3, 0.02, 10);
    CHECK(a == b);
    CHECK(a != d);
    CHECK_THROWS_AS((void)simulate_navigator(gt, 0, 0.0, 1), std::invalid_argument);
}

TEST_CASE("3d phantom renders the revolved shell") {
    AnnulusSpec spec;
    const int n = 48;
    Grid g3 = default_phantom_grid_3d(spec, n);
    RealField f = render_annulus(spec, {0.3, 0.2}, g3);
    CHECK(f.values.size() == g3.n_points());
    double mx = 0.0;
    for (double v : f.values) mx = std::max(mx, v);
    CHECK(mx == doctest::Approx(spec.intensity_wall));

    // the central z slice of the revolved shell is the flat phantom
    Grid g2 = default_phantom_grid(spec, n);
    RealField flat = render_annulus(spec, {0.3, 0.2}, g2);
    std::size_t slice = std::size_t(n / 2) * std::size_t(n) * std::size_t(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < flat.values.size(); ++i) {
        double d = f.values[slice + i] - flat.values[i];
        num += d * d;
        den += flat.values[i] * flat.values[i];
    }
    CHECK(100.0 * num / den < 3.0);

    // intensity drift across cardiac phases is reported, not enforced
    RealField rest = render_annulus(spec, {0.0, 0.0}, g3);
    double s0 = 0.0, s1 = 0.0;
    for (double v : rest.values) s0 += v;
    RealField peak = render_annulus(spec, {0.5, 0.0}, g3);
    for (double v : peak.values) s1 += v;
    MESSAGE("cardiac intensity drift percent: " << 100.0 * (s1 - s0) / s0);
}
