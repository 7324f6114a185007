#include "moco/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "moco/parallel.hpp"
#include "moco/rng.hpp"

namespace moco {

std::vector<double> MotionSchedule::sample_times() const {
    std::vector<double> t(static_cast<std::size_t>(n_groups));
    for (int g = 0; g < n_groups; ++g) t[std::size_t(g)] = sample_time(g);
    return t;
}

double periodic_phase(double t, double period_s) {
    if (!(period_s > 0.0)) throw std::invalid_argument("periodic_phase: period must be positive");
    double p = std::fmod(t / period_s, 1.0);
    return p < 0.0 ? p + 1.0 : p;
}

double AnnulusSpec::outer_radius(double c) const {
    return outer_radius0_mm - outer_contraction * fov_mm * raised_cosine(c);
}

double AnnulusSpec::inner_radius(double c) const {
    return inner_radius0_mm - inner_contraction * fov_mm * raised_cosine(c);
}

double AnnulusSpec::liver_shift(double r) const {
    return liver_displacement * fov_mm * raised_cosine(r);
}

void AnnulusSpec::validate() const {
    if (!(fov_mm > 0.0)) throw std::invalid_argument("AnnulusSpec: fov must be positive");
    if (!(liver_radius_mm > 0.0)) throw std::invalid_argument("AnnulusSpec: liver radius must be positive");
    // the radii laws are monotone in s, so the extremes bound every phase
    for (double s : {0.0, 1.0}) {
        double out = outer_radius0_mm - outer_contraction * fov_mm * s;
        double inn = inner_radius0_mm - inner_contraction * fov_mm * s;
        if (!(inn > 0.0) || !(inn < out))
            throw std::invalid_argument("AnnulusSpec: radii ordering 0 < inner < outer violated at some phase");
    }
}

Grid default_phantom_grid(const AnnulusSpec& spec, int n) {
    double sp = spec.fov_mm / double(n);
    // x centred on the annulus, y shifted so the liver stays in frame
    double oy = -0.6875 * spec.fov_mm;
    return make_grid_2d(n, n, sp, -0.5 * spec.fov_mm, oy);
}

Grid default_phantom_grid_3d(const AnnulusSpec& spec, int n) {
    double sp = spec.fov_mm / double(n);
    double oy = -0.6875 * spec.fov_mm;
    return make_grid_3d(n, n, n, sp, -0.5 * spec.fov_mm, oy, -0.5 * spec.fov_mm);
}

namespace {

inline double coverage(double dist, double radius, double aa_width) {
    double v = (radius - dist) / aa_width + 0.5;
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace

RealField render_annulus(const AnnulusSpec& spec, const PhaseSample& tau, const Grid& grid) {
    spec.validate();
    RealField out(grid);
    const double outer = spec.outer_radius(tau.c);
    const double inner = spec.inner_radius(tau.c);
    const double shift = spec.liver_shift(tau.r);
    const double lx = spec.liver_center_x_mm;
    const double ly = spec.liver_center_y_mm + shift;
    double aa = 2.0 * std::min(grid.spacing[0], grid.spacing[1]);
    if (grid.dim == 3) aa = std::min(aa, 2.0 * grid.spacing[2]);

    parallel_for(grid.n_points(), [&](std::size_t b, std::size_t e) {
        for (std::size_t f = b; f < e; ++f) {
            auto p = grid.point(f);
            double d, dl;
            if (grid.dim == 2) {
                d = std::hypot(p[0], p[1]);
                dl = std::hypot(p[0] - lx, p[1] - ly);
            } else {
                d = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                double dx = p[0] - lx, dy = p[1] - ly, dz = p[2];
                dl = std::sqrt(dx * dx + dy * dy + dz * dz);
            }
            double cov_out = coverage(d, outer, aa);
            double cov_in = coverage(d, inner, aa);
            double v = spec.intensity_background;
            v += (spec.intensity_wall - spec.intensity_background) * (cov_out - cov_in);
            v += (spec.intensity_blood - spec.intensity_background) * cov_in;
            double cov_liv = coverage(dl, spec.liver_radius_mm, aa);
            v = v * (1.0 - cov_liv) + spec.intensity_liver * cov_liv;
            out.values[f] = v;
        }
    });
    return out;
}

VectorField ground_truth_deformation(const AnnulusSpec& spec, const PhaseSample& tau,
                                     const Grid& grid) {
    spec.validate();
    VectorField out(grid);
    const int d = grid.dim;
    const double out0 = spec.outer_radius0_mm;
    const double in0 = spec.inner_radius0_mm;
    const double outc = spec.outer_radius(tau.c);
    const double innc = spec.inner_radius(tau.c);
    const double margin = spec.support_margin_mm;
    const double shift = spec.liver_shift(tau.r);
    const double lx = spec.liver_center_x_mm;
    const double ly = spec.liver_center_y_mm + shift;  // translated liver position

    parallel_for(grid.n_points(), [&](std::size_t b, std::size_t e) {
        for (std::size_t f = b; f < e; ++f) {
            auto p = grid.point(f);
            double q = (d == 2) ? std::hypot(p[0], p[1])
                                : std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
            // template radius of the material point observed at radius q
            double T;
            if (q <= innc) {
                T = q * (in0 / innc);
            } else if (q <= outc) {
                T = in0 + (q - innc) * (out0 - in0) / (outc - innc);
            } else if (q <= out0 + margin) {
                double disp_at_wall = out0 - outc;
                double t = (out0 + margin - q) / (out0 + margin - outc);
                T = q + disp_at_wall * t;
            } else {
                T = q;
            }
            double ur[3] = {0.0, 0.0, 0.0};
            if (q > 1e-12) {
                double s = (T - q) / q;
                for (int a = 0; a < d; ++a) ur[a] = s * p[a];
            }
            // rigid liver override over the whole swept track, not just the
            // translated disc: the vacated region must pull its intensity
            // from below the rest position or the warp leaves a ghost disc
            double ly0 = spec.liver_center_y_mm;
            double ynear = std::clamp(p[1], std::min(ly0, ly), std::max(ly0, ly));
            double dl;
            if (d == 2) {
                dl = std::hypot(p[0] - lx, p[1] - ynear);
            } else {
                double dx = p[0] - lx, dy = p[1] - ynear, dz = p[2];
                dl = std::sqrt(dx * dx + dy * dy + dz * dz);
            }
            if (dl <= spec.liver_radius_mm) {
                for (int a = 0; a < d; ++a) ur[a] = 0.0;
                ur[1] = -shift;
            }
            for (int a = 0; a < d; ++a) out.values[f * std::size_t(d) + a] = ur[a];
        }
    });
    return out;
}

GroundTruth generate_ground_truth(const AnnulusSpec& spec, const MotionSchedule& schedule,
                                  const Grid& grid, const GroundTruthOptions& opts) {
    spec.validate();
    if (schedule.n_groups < 1) throw std::invalid_argument("generate_ground_truth: need n_groups >= 1");
    GroundTruth gt;
    gt.spec = spec;
    gt.schedule = schedule;
    gt.grid = grid;
    gt.phases.resize(std::size_t(schedule.n_groups));
    gt.resp_signal.resize(std::size_t(schedule.n_groups));
    for (int g = 0; g < schedule.n_groups; ++g) {
        gt.phases[std::size_t(g)] = phase_at(schedule, schedule.sample_time(g));
        gt.resp_signal[std::size_t(g)] = raised_cosine(gt.phases[std::size_t(g)].r);
    }
    gt.frames.resize(std::size_t(schedule.n_groups));
    for (int g = 0; g < schedule.n_groups; ++g)
        gt.frames[std::size_t(g)] = render_annulus(spec, gt.phases[std::size_t(g)], grid);
    if (opts.with_deformations) {
        gt.deformations.resize(std::size_t(schedule.n_groups));
        for (int g = 0; g < schedule.n_groups; ++g)
            gt.deformations[std::size_t(g)] =
                ground_truth_deformation(spec, gt.phases[std::size_t(g)], grid);
    }
    return gt;
}

std::vector<std::vector<double>> simulate_navigator(const GroundTruth& gt, int n_channels,
                                                    double noise_sigma, std::uint64_t seed) {
    if (n_channels < 1) throw std::invalid_argument("simulate_navigator: need n_channels >= 1");
    const Grid& g = gt.grid;
    const int rows = g.dims[1];
    const int d = g.dim;
    // smooth receive profiles centred around the frame
    std::vector<std::array<double, 3>> centers(static_cast<std::size_t>(n_channels));
    double cx = g.origin[0] + 0.5 * g.extent(0);
    double cy = g.origin[1] + 0.5 * g.extent(1);
    double cz = (d == 3) ? g.origin[2] + 0.5 * g.extent(2) : 0.0;
    double ring = 0.5 * std::max(g.extent(0), g.extent(1));
    for (int ch = 0; ch < n_channels; ++ch) {
        double a = 6.283185307179586 * (double(ch) + 0.25) / double(n_channels);
        centers[std::size_t(ch)] = {cx + ring * std::cos(a), cy + ring * std::sin(a), cz};
    }
    double sigma = 0.5 * std::max(g.extent(0), g.extent(1));

    std::vector<std::vector<double>> nav(gt.frames.size());
    double sumsq = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < gt.frames.size(); ++f) {
        std::vector<double>& v = nav[f];
        v.assign(std::size_t(rows) * std::size_t(n_channels), 0.0);
        const RealField& img = gt.frames[f];
        for (std::size_t idx = 0; idx < g.n_points(); ++idx) {
            auto p = g.point(idx);
            std::size_t j = (idx / std::size_t(g.dims[0])) % std::size_t(g.dims[1]);
            for (int ch = 0; ch < n_channels; ++ch) {
                const auto& c = centers[std::size_t(ch)];
                double r2 = (p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]);
                if (d == 3) r2 += (p[2] - c[2]) * (p[2] - c[2]);
                double w = std::exp(-r2 / (2.0 * sigma * sigma));
                v[std::size_t(ch) * std::size_t(rows) + j] += w * img.values[idx];
            }
        }
        for (double x : v) sumsq += x * x;
        count += v.size();
    }
    // noise level is relative to the clean ensemble RMS
    double rms = count ? std::sqrt(sumsq / double(count)) : 0.0;
    Rng rng(seed);
    for (auto& v : nav)
        for (auto& x : v) x += noise_sigma * rms * rng.gauss();
    return nav;
}

}  // namespace moco
