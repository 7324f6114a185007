#pragma once

#include "moco/grid.hpp"

namespace moco {

/// Unnormalised complex DFT on a dense array, any rank up to 3.
/// dims are in storage order (dims[0] fastest). sign -1 is the forward
/// transform exp(-2 pi i j n / N); sign +1 is its unnormalised conjugate.
/// in and out may alias. Plans are cached per (dims, sign) and execution is
/// safe from multiple threads on distinct buffers.
void fft(int rank, const int* dims, const cplx* in, cplx* out, int sign);

}  // namespace moco
