#pragma once

#include <cstdint>
#include <vector>

#include "moco/grid.hpp"

namespace moco {

/// Receive coil sensitivity maps: one complex field per channel.
struct CoilMaps {
    Grid grid;
    int n_coils = 0;
    std::vector<ComplexField> maps;
};

/// Smooth synthetic sensitivities: complex Gaussians centred on a circle
/// (2D) or sphere (3D) around the frame with a gentle linear phase. The
/// sum-of-squares magnitude is strictly positive everywhere.
CoilMaps make_birdcage_coils(const Grid& grid, int n_coils, double sigma_frac = 0.45);

/// Sum-of-squares magnitude image of a coil set.
RealField coil_sos(const CoilMaps& coils);

}  // namespace moco
