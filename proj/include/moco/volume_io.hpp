#pragma once

#include <string>

#include "moco/grid.hpp"

namespace moco {

/// Volume container: raw little-endian float32 samples in storage order
/// (axis 0 fastest), components interleaved per sample, complex volumes
/// interleave (re, im). A sidecar text header `<path>.hdr` records dims,
/// spacing, origin, component count and the real/complex flag.
void write_volume(const std::string& path, const RealField& f);
void write_volume(const std::string& path, const ComplexField& f);
void write_volume(const std::string& path, const VectorField& f);

enum class VolumeKind { real_scalar, complex_scalar, vector };

VolumeKind peek_volume_kind(const std::string& path);
RealField read_real_volume(const std::string& path);
ComplexField read_complex_volume(const std::string& path);
VectorField read_vector_volume(const std::string& path);

}  // namespace moco
