#include "moco/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace moco {

std::array<double, 3> nyquist_limit(const Grid& grid) {
    std::array<double, 3> k{0.0, 0.0, 0.0};
    for (int a = 0; a < grid.dim; ++a) k[a] = 0.5 / grid.spacing[a];
    return k;
}

namespace {

void check_counts(int n_groups, int spokes_per_group, int samples_per_spoke) {
    if (n_groups < 1 || spokes_per_group < 1 || samples_per_spoke < 3)
        throw std::invalid_argument("trajectory: need n_groups, spokes >= 1 and samples >= 3");
}

// samples t_j in [-1, 1] with the centre sample included
int odd_samples(int samples_per_spoke) { return samples_per_spoke | 1; }

}  // namespace

Trajectory golden_angle_trajectory(const Grid& grid, int n_groups, int spokes_per_group,
                                   int samples_per_spoke) {
    if (grid.dim != 2) throw std::invalid_argument("golden_angle_trajectory: 2D grids only");
    check_counts(n_groups, spokes_per_group, samples_per_spoke);
    int S = odd_samples(samples_per_spoke);
    Trajectory tr;
    tr.dim = 2;
    tr.n_groups = n_groups;
    tr.spokes_per_group = spokes_per_group;
    tr.samples_per_spoke = S;
    // the spoke radius is limited by the tighter per-axis Nyquist bound so
    // every sample satisfies |k_a| <= 0.5/spacing_a
    auto nyq = nyquist_limit(grid);
    double kr = std::min(nyq[0], nyq[1]);
    tr.points.resize(tr.n_points() * 2);
    std::size_t w = 0;
    for (int g = 0; g < n_groups; ++g) {
        for (int s = 0; s < spokes_per_group; ++s) {
            long long spoke = (long long)g * spokes_per_group + s;
            double theta = std::fmod(double(spoke) * golden_angle_rad, 2.0 * kPi);
            double ux = std::cos(theta), uy = std::sin(theta);
            for (int j = 0; j < S; ++j) {
                double t = kr * (double(j) - double(S - 1) / 2.0) / (double(S - 1) / 2.0);
                tr.points[w++] = t * ux;
                tr.points[w++] = t * uy;
            }
        }
    }
    return tr;
}

Trajectory phyllotaxis_trajectory_3d(const Grid& grid, int n_groups, int spokes_per_group,
                                     int samples_per_spoke) {
    if (grid.dim != 3) throw std::invalid_argument("phyllotaxis_trajectory_3d: 3D grids only");
    check_counts(n_groups, spokes_per_group, samples_per_spoke);
    int S = odd_samples(samples_per_spoke);
    Trajectory tr;
    tr.dim = 3;
    tr.n_groups = n_groups;
    tr.spokes_per_group = spokes_per_group;
    tr.samples_per_spoke = S;
    auto nyq = nyquist_limit(grid);
    double kr = std::min(std::min(nyq[0], nyq[1]), nyq[2]);
    tr.points.resize(tr.n_points() * 3);
    long long total_spokes = (long long)n_groups * spokes_per_group;
    std::size_t w = 0;
    for (long long spoke = 0; spoke < total_spokes; ++spoke) {
        // spiral phyllotaxis: golden-angle azimuth, polar angle sweeping the
        // upper hemisphere so spokes (which cover +-k) tile the sphere
        double az = std::fmod(double(spoke) * golden_angle_rad, 2.0 * kPi);
        double z = 1.0 - (2.0 * double(spoke) + 1.0) / double(2 * total_spokes);
        double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        double ux = rho * std::cos(az), uy = rho * std::sin(az), uz = z;
        for (int j = 0; j < S; ++j) {
            double t = kr * (double(j) - double(S - 1) / 2.0) / (double(S - 1) / 2.0);
            tr.points[w++] = t * ux;
            tr.points[w++] = t * uy;
            tr.points[w++] = t * uz;
        }
    }
    return tr;
}

}  // namespace moco
