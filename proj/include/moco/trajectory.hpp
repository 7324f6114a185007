#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "moco/grid.hpp"

namespace moco {

/// Radial sampling trajectory in k-space (cycles/mm), grouped into readout
/// groups of consecutive spokes sharing one motion state. Every spoke passes
/// through k = 0 and spans +-0.5/spacing (the grid Nyquist limit).
struct Trajectory {
    int dim = 2;
    int n_groups = 0;
    int spokes_per_group = 0;
    int samples_per_spoke = 0;  // forced odd so the centre sample exists

    std::vector<double> points;  // n_groups*spokes*samples queries, dim each

    std::size_t points_per_group() const {
        return std::size_t(spokes_per_group) * std::size_t(samples_per_spoke);
    }
    std::size_t n_points() const { return std::size_t(n_groups) * points_per_group(); }
    const double* group_points(int g) const {
        return points.data() + std::size_t(g) * points_per_group() * std::size_t(dim);
    }
};

/// 2D golden-angle radial trajectory: spoke i (global index across groups)
/// has azimuth i * pi/phi, phi the golden ratio (111.2461... degrees).
Trajectory golden_angle_trajectory(const Grid& grid, int n_groups, int spokes_per_group,
                                   int samples_per_spoke);

/// 3D radial trajectory with spoke directions on a spiral-phyllotaxis point
/// set (golden-angle azimuth, uniform polar sweep).
Trajectory phyllotaxis_trajectory_3d(const Grid& grid, int n_groups, int spokes_per_group,
                                     int samples_per_spoke);

/// Highest usable |k| per axis for a grid, 0.5/spacing.
std::array<double, 3> nyquist_limit(const Grid& grid);

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kGoldenRatio = 1.618033988749894848204586834365638118;
constexpr double golden_angle_rad = kPi / kGoldenRatio;  // 111.2461... degrees

}  // namespace moco
