#pragma once

#include <cstdint>
#include <vector>

#include "moco/grid.hpp"
#include "moco/phase.hpp"

namespace moco {

/// Timing of the simulated scan: one sample time per readout group.
struct MotionSchedule {
    double cardiac_period_s = 1.0;
    double resp_period_s = 5.0;
    double group_dt_s = 0.07;
    int n_groups = 600;

    double sample_time(int g) const { return group_dt_s * double(g); }
    std::vector<double> sample_times() const;
};

/// Phase in [0,1) of a periodic process at time t.
double periodic_phase(double t, double period_s);

inline PhaseSample phase_at(const MotionSchedule& s, double t) {
    return {periodic_phase(t, s.cardiac_period_s), periodic_phase(t, s.resp_period_s)};
}

/// Contracting-annulus phantom with a vertically translating liver disc.
/// The annulus is centred at the physical origin; radii are in mm, the
/// contraction amounts and the liver travel are fractions of the field of
/// view. Both motion laws follow the raised cosine s(x) = (1 - cos 2 pi x)/2.
struct AnnulusSpec {
    double fov_mm = 240.0;
    double outer_radius0_mm = 54.0;
    double inner_radius0_mm = 38.4;
    double outer_contraction = 0.10;  // radius shrink at s=1 as fraction of fov
    double inner_contraction = 0.14;
    double liver_center_x_mm = 0.0;
    double liver_center_y_mm = -136.0;
    double liver_radius_mm = 18.0;
    double liver_displacement = 0.24;  // peak-to-peak travel as fraction of fov
    double intensity_background = 0.05;
    double intensity_wall = 1.0;
    double intensity_blood = 0.45;
    double intensity_liver = 0.7;
    double support_margin_mm = 24.0;  // deformation taper band outside the outer wall

    double outer_radius(double c) const;
    double inner_radius(double c) const;
    double liver_shift(double r) const;  // vertical translation at respiratory coordinate r
    /// Throws std::invalid_argument when the radii ordering (0 < inner < outer)
    /// is violated at any phase.
    void validate() const;
};

/// Default image grid for a spec: n x n nodes, spacing fov/n, x centred on
/// the annulus and y placed so the liver travel stays inside the frame.
Grid default_phantom_grid(const AnnulusSpec& spec, int n);
Grid default_phantom_grid_3d(const AnnulusSpec& spec, int n);

/// Render the phantom at one motion phase. Edges are anti-aliased with a
/// linear ramp two samples wide. Works for 2D and 3D grids; the 3D phantom
/// is the annulus revolved about the vertical axis (a spherical shell) with
/// the liver revolved to a sphere.
RealField render_annulus(const AnnulusSpec& spec, const PhaseSample& tau, const Grid& grid);

/// Analytic displacement that pulls the phase-tau frame back to the template
/// frame (tau = 0): warped(x) = template(x + u(x)). Piecewise linear in
/// radius between the walls, tapering to zero over the support margin, plus
/// the rigid vertical translation applied over the swept liver track so the
/// vacated region resolves to background.
VectorField ground_truth_deformation(const AnnulusSpec& spec, const PhaseSample& tau,
                                     const Grid& grid);

struct GroundTruth {
    AnnulusSpec spec;
    MotionSchedule schedule;
    Grid grid;
    std::vector<PhaseSample> phases;       // one per group
    std::vector<double> resp_signal;       // s(r) per group, the liver drive
    std::vector<RealField> frames;         // one per group
    std::vector<VectorField> deformations; // optional, empty when not requested
};

struct GroundTruthOptions {
    bool with_deformations = false;
};

GroundTruth generate_ground_truth(const AnnulusSpec& spec, const MotionSchedule& schedule,
                                  const Grid& grid, const GroundTruthOptions& opts = {});

/// Surrogate multichannel breathing navigator: the vertical projection
/// profile of each frame weighted by smooth per-channel receive profiles,
/// plus white Gaussian noise. Returns one vector of n_rows * n_channels
/// samples per group. Throws std::invalid_argument for n_channels < 1.
std::vector<std::vector<double>> simulate_navigator(const GroundTruth& gt, int n_channels,
                                                    double noise_sigma, std::uint64_t seed);

}  // namespace moco
