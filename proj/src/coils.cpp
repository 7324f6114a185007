#include "moco/coils.hpp"

#include <cmath>
#include <stdexcept>

#include "moco/trajectory.hpp"

namespace moco {

CoilMaps make_birdcage_coils(const Grid& grid, int n_coils, double sigma_frac) {
    if (n_coils < 1) throw std::invalid_argument("make_birdcage_coils: need n_coils >= 1");
    CoilMaps cm;
    cm.grid = grid;
    cm.n_coils = n_coils;
    cm.maps.reserve(std::size_t(n_coils));
    double fov = std::max(grid.extent(0), grid.extent(1));
    if (grid.dim == 3) fov = std::max(fov, grid.extent(2));
    double sigma = sigma_frac * fov;
    double cx = grid.origin[0] + 0.5 * grid.extent(0);
    double cy = grid.origin[1] + 0.5 * grid.extent(1);
    double cz = grid.dim == 3 ? grid.origin[2] + 0.5 * grid.extent(2) : 0.0;
    double ring = 0.55 * fov;
    for (int c = 0; c < n_coils; ++c) {
        ComplexField f(grid);
        double az = 2.0 * kPi * double(c) / double(n_coils);
        double el = grid.dim == 3 ? kPi * (0.25 + 0.5 * double(c % 3) / 2.0) : kPi / 2.0;
        double px = cx + ring * std::sin(el) * std::cos(az);
        double py = cy + ring * std::sin(el) * std::sin(az);
        double pz = cz + (grid.dim == 3 ? ring * std::cos(el) : 0.0);
        // gentle linear phase along the coil direction keeps the maps complex
        double gx = std::cos(az) / fov, gy = std::sin(az) / fov;
        for (std::size_t i = 0; i < grid.n_points(); ++i) {
            auto p = grid.point(i);
            double r2 = (p[0] - px) * (p[0] - px) + (p[1] - py) * (p[1] - py);
            if (grid.dim == 3) r2 += (p[2] - pz) * (p[2] - pz);
            double mag = std::exp(-r2 / (2.0 * sigma * sigma));
            double ph = 0.7 * kPi * (gx * (p[0] - cx) + gy * (p[1] - cy)) + az;
            f.values[i] = cplx(mag * std::cos(ph), mag * std::sin(ph));
        }
        cm.maps.push_back(std::move(f));
    }
    return cm;
}

RealField coil_sos(const CoilMaps& coils) {
    if (coils.maps.empty()) throw std::invalid_argument("coil_sos: empty coil set");
    RealField out(coils.grid);
    for (const auto& m : coils.maps)
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += std::norm(m.values[i]);
    for (auto& v : out.values) v = std::sqrt(v);
    return out;
}

}  // namespace moco
