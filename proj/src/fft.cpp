#include "moco/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace moco {

namespace {

std::mutex g_plan_mutex;
std::map<std::tuple<int, int, int, int, int>, fftw_plan> g_plans;

fftw_plan get_plan(int rank, const int* dims, int sign) {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto key = std::make_tuple(rank, dims[0], rank > 1 ? dims[1] : 1, rank > 2 ? dims[2] : 1, sign);
    auto it = g_plans.find(key);
    if (it != g_plans.end()) return it->second;
    // fftw wants the fastest axis last; our dims are fastest first
    int n[3];
    for (int a = 0; a < rank; ++a) n[a] = dims[rank - 1 - a];
    std::vector<fftw_complex> scratch(std::size_t(dims[0]) * (rank > 1 ? dims[1] : 1) *
                                      (rank > 2 ? dims[2] : 1));
    // FFTW_UNALIGNED lets the cached plan execute on ordinary vector storage
    fftw_plan p = fftw_plan_dft(rank, n, scratch.data(), scratch.data(),
                                sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw std::runtime_error("fft: planning failed");
    g_plans.emplace(key, p);
    return p;
}

}  // namespace

void fft(int rank, const int* dims, const cplx* in, cplx* out, int sign) {
    if (rank < 1 || rank > 3) throw std::invalid_argument("fft: rank must be 1..3");
    fftw_plan p = get_plan(rank, dims, sign);
    // the cached plan is in-place, so stage through out
    std::size_t n = std::size_t(dims[0]);
    for (int a = 1; a < rank; ++a) n *= std::size_t(dims[a]);
    if (out != in) std::memcpy(out, in, n * sizeof(cplx));
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(out), reinterpret_cast<fftw_complex*>(out));
}

}  // namespace moco
