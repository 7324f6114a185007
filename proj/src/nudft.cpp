#include "moco/nudft.hpp"

#include <cmath>
#include <stdexcept>

#include "moco/fft.hpp"
#include "moco/parallel.hpp"
#include "moco/trajectory.hpp"

namespace moco {

namespace {

constexpr double kTwoPi = 2.0 * kPi;

// Beatty choice for width 6, oversampling 2
const double kKbBeta = kPi * std::sqrt((kNufftWidth * kNufftWidth / 4.0) * 2.25 - 0.8);

double kb_i0_beta() {
    static const double v = std::cyl_bessel_i(0.0, kKbBeta);
    return v;
}

double kb_window(double xi) {
    double t = 2.0 * xi / double(kNufftWidth);
    double s = 1.0 - t * t;
    if (s <= 0.0) return 0.0;
    return std::cyl_bessel_i(0.0, kKbBeta * std::sqrt(s)) / kb_i0_beta();
}

// continuous Fourier transform of kb_window
double kb_hat(double t) {
    double p = kPi * double(kNufftWidth) * t;
    double a = kKbBeta * kKbBeta - p * p;
    double scale = double(kNufftWidth) / kb_i0_beta();
    if (a > 1e-12) {
        double g = std::sqrt(a);
        return scale * std::sinh(g) / g;
    }
    if (a < -1e-12) {
        double g = std::sqrt(-a);
        return scale * std::sin(g) / g;
    }
    return scale;
}

inline int wrap(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

}  // namespace

std::shared_ptr<const CoilMaps> make_uniform_coils(const Grid& grid) {
    auto cm = std::make_shared<CoilMaps>();
    cm->grid = grid;
    cm->n_coils = 1;
    ComplexField f(grid);
    for (auto& v : f.values) v = cplx(1.0, 0.0);
    cm->maps.push_back(std::move(f));
    return cm;
}

MulticoilNudft::MulticoilNudft(const Grid& grid, std::shared_ptr<const CoilMaps> coils,
                               std::vector<double> kpoints, Mode mode)
    : grid_(grid), coils_(std::move(coils)), kpts_(std::move(kpoints)), mode_(mode) {
    if (!coils_ || coils_->maps.empty())
        throw std::invalid_argument("MulticoilNudft: missing coil maps");
    if (!coils_->grid.same_layout(grid_))
        throw std::invalid_argument("MulticoilNudft: coil maps live on a different grid");
    if (kpts_.size() % std::size_t(grid_.dim) != 0)
        throw std::invalid_argument("MulticoilNudft: k-point array size not a multiple of dim");
    n_k_ = kpts_.size() / std::size_t(grid_.dim);
    if (n_k_ == 0) throw std::invalid_argument("MulticoilNudft: empty k-point set");
    auto nyq = nyquist_limit(grid_);
    for (std::size_t i = 0; i < n_k_; ++i) {
        for (int a = 0; a < grid_.dim; ++a) {
            double k = kpts_[i * grid_.dim + a];
            if (!std::isfinite(k))
                throw std::invalid_argument("MulticoilNudft: non-finite k-space coordinate");
            if (std::abs(k) > nyq[a] * (1.0 + 1e-9))
                throw std::invalid_argument(
                    "MulticoilNudft: k-space sample beyond the grid Nyquist limit 0.5/spacing");
        }
    }
    inv_sqrt_n_ = 1.0 / std::sqrt(double(grid_.n_points()));
    if (mode_ == Mode::fast) build_fast_tables();
}

std::size_t MulticoilNudft::count(const Ranges& sel) {
    std::size_t m = 0;
    for (const auto& r : sel) {
        if (r[1] < r[0]) throw std::invalid_argument("MulticoilNudft: bad range");
        m += r[1] - r[0];
    }
    return m;
}

std::vector<std::size_t> MulticoilNudft::flatten(const Ranges& sel) const {
    std::vector<std::size_t> idx;
    idx.reserve(count(sel));
    for (const auto& r : sel) {
        if (r[1] > n_k_) throw std::invalid_argument("MulticoilNudft: range beyond stored k-points");
        for (std::size_t i = r[0]; i < r[1]; ++i) idx.push_back(i);
    }
    if (idx.empty()) throw std::invalid_argument("MulticoilNudft: empty selection");
    return idx;
}

std::vector<cplx> MulticoilNudft::forward(const std::vector<cplx>& image) const {
    return forward(image, all());
}

std::vector<cplx> MulticoilNudft::adjoint(const std::vector<cplx>& samples) const {
    return adjoint(samples, all());
}

std::vector<cplx> MulticoilNudft::forward(const std::vector<cplx>& image, const Ranges& sel) const {
    if (image.size() != grid_.n_points())
        throw std::invalid_argument("MulticoilNudft::forward: image size mismatch");
    std::vector<cplx> out(count(sel) * std::size_t(coils_->n_coils));
    forward(image.data(), sel, out.data());
    return out;
}

std::vector<cplx> MulticoilNudft::adjoint(const std::vector<cplx>& samples, const Ranges& sel) const {
    if (samples.size() != count(sel) * std::size_t(coils_->n_coils))
        throw std::invalid_argument("MulticoilNudft::adjoint: sample size mismatch");
    std::vector<cplx> out(grid_.n_points());
    adjoint(samples.data(), sel, out.data());
    return out;
}

void MulticoilNudft::forward(const cplx* image, const Ranges& sel, cplx* samples) const {
    auto idx = flatten(sel);
    if (mode_ == Mode::direct)
        forward_direct(image, idx, samples);
    else
        forward_fast(image, idx, samples);
}

void MulticoilNudft::adjoint(const cplx* samples, const Ranges& sel, cplx* image) const {
    auto idx = flatten(sel);
    if (mode_ == Mode::direct)
        adjoint_direct(samples, idx, image);
    else
        adjoint_fast(samples, idx, image);
}

void MulticoilNudft::forward_direct(const cplx* image, const std::vector<std::size_t>& idx,
                                    cplx* samples) const {
    const int d = grid_.dim;
    const int nc = coils_->n_coils;
    const std::size_t np = grid_.n_points();
    const std::size_t m = idx.size();
    std::vector<cplx> weighted(std::size_t(nc) * np);
    for (int c = 0; c < nc; ++c) {
        const cplx* cm = coils_->maps[std::size_t(c)].values.data();
        cplx* w = weighted.data() + std::size_t(c) * np;
        for (std::size_t i = 0; i < np; ++i) w[i] = cm[i] * image[i];
    }
    const int nx = grid_.dims[0], ny = grid_.dims[1], nz = grid_.dims[2];
    parallel_for(m, [&](std::size_t qb, std::size_t qe) {
        std::vector<cplx> tx(static_cast<std::size_t>(nx)), ty(static_cast<std::size_t>(ny)), tz(static_cast<std::size_t>(nz));
        for (std::size_t q = qb; q < qe; ++q) {
            const double* kp = kpts_.data() + idx[q] * d;
            for (int i = 0; i < nx; ++i)
                tx[std::size_t(i)] = std::polar(1.0, -kTwoPi * kp[0] * (grid_.origin[0] + grid_.spacing[0] * i));
            for (int j = 0; j < ny; ++j)
                ty[std::size_t(j)] = std::polar(1.0, -kTwoPi * kp[1] * (grid_.origin[1] + grid_.spacing[1] * j));
            if (d == 3)
                for (int l = 0; l < nz; ++l)
                    tz[std::size_t(l)] = std::polar(1.0, -kTwoPi * kp[2] * (grid_.origin[2] + grid_.spacing[2] * l));
            else
                tz[0] = cplx(1.0, 0.0);
            for (int c = 0; c < nc; ++c) {
                const cplx* w = weighted.data() + std::size_t(c) * np;
                cplx acc(0.0, 0.0);
                for (int l = 0; l < nz; ++l) {
                    cplx accz(0.0, 0.0);
                    for (int j = 0; j < ny; ++j) {
                        cplx accy(0.0, 0.0);
                        const cplx* row = w + (std::size_t(l) * ny + std::size_t(j)) * std::size_t(nx);
                        for (int i = 0; i < nx; ++i) accy += tx[std::size_t(i)] * row[i];
                        accz += ty[std::size_t(j)] * accy;
                    }
                    acc += tz[std::size_t(l)] * accz;
                }
                samples[std::size_t(c) * m + q] = acc * inv_sqrt_n_;
            }
        }
    });
}

void MulticoilNudft::adjoint_direct(const cplx* samples, const std::vector<std::size_t>& idx,
                                    cplx* image) const {
    const int d = grid_.dim;
    const int nc = coils_->n_coils;
    const std::size_t np = grid_.n_points();
    const std::size_t m = idx.size();
    const int nx = grid_.dims[0], ny = grid_.dims[1], nz = grid_.dims[2];
    for (std::size_t i = 0; i < np; ++i) image[i] = cplx(0.0, 0.0);
    std::vector<cplx> acc(std::size_t(nc) * np, cplx(0.0, 0.0));
    parallel_for(std::size_t(nc), [&](std::size_t cb, std::size_t ce) {
        std::vector<cplx> tx(static_cast<std::size_t>(nx)), ty(static_cast<std::size_t>(ny)), tz(static_cast<std::size_t>(nz));
        for (std::size_t c = cb; c < ce; ++c) {
            cplx* a = acc.data() + c * np;
            for (std::size_t q = 0; q < m; ++q) {
                const double* kp = kpts_.data() + idx[q] * d;
                for (int i = 0; i < nx; ++i)
                    tx[std::size_t(i)] = std::polar(1.0, kTwoPi * kp[0] * (grid_.origin[0] + grid_.spacing[0] * i));
                for (int j = 0; j < ny; ++j)
                    ty[std::size_t(j)] = std::polar(1.0, kTwoPi * kp[1] * (grid_.origin[1] + grid_.spacing[1] * j));
                if (d == 3)
                    for (int l = 0; l < nz; ++l)
                        tz[std::size_t(l)] = std::polar(1.0, kTwoPi * kp[2] * (grid_.origin[2] + grid_.spacing[2] * l));
                else
                    tz[0] = cplx(1.0, 0.0);
                cplx s = samples[c * m + q];
                for (int l = 0; l < nz; ++l) {
                    cplx sz = s * tz[std::size_t(l)];
                    for (int j = 0; j < ny; ++j) {
                        cplx sy = sz * ty[std::size_t(j)];
                        cplx* row = a + (std::size_t(l) * ny + std::size_t(j)) * std::size_t(nx);
                        for (int i = 0; i < nx; ++i) row[i] += sy * tx[std::size_t(i)];
                    }
                }
            }
        }
    });
    for (int c = 0; c < nc; ++c) {
        const cplx* cm = coils_->maps[std::size_t(c)].values.data();
        const cplx* a = acc.data() + std::size_t(c) * np;
        for (std::size_t i = 0; i < np; ++i) image[i] += std::conj(cm[i]) * a[i];
    }
    for (std::size_t i = 0; i < np; ++i) image[i] *= inv_sqrt_n_;
}

void MulticoilNudft::build_fast_tables() {
    const int d = grid_.dim;
    for (int a = 0; a < d; ++a) os_dims_[a] = kNufftOversample * grid_.dims[a];
    std::array<std::vector<double>, 3> axis;
    for (int a = 0; a < d; ++a) {
        int n = grid_.dims[a], c = n / 2, G = os_dims_[a];
        axis[std::size_t(a)].resize(std::size_t(n));
        for (int i = 0; i < n; ++i)
            axis[std::size_t(a)][std::size_t(i)] = 1.0 / kb_hat(double(i - c) / double(G));
    }
    const int G0 = os_dims_[0], G1 = os_dims_[1], G2 = d == 3 ? os_dims_[2] : 1;
    deapod_.resize(grid_.n_points());
    embed_.resize(grid_.n_points());
    for (std::size_t f = 0; f < grid_.n_points(); ++f) {
        std::size_t i = f % std::size_t(grid_.dims[0]);
        std::size_t rest = f / std::size_t(grid_.dims[0]);
        std::size_t j = rest % std::size_t(grid_.dims[1]);
        std::size_t l = rest / std::size_t(grid_.dims[1]);
        double v = axis[0][i] * axis[1][j];
        if (d == 3) v *= axis[2][l];
        deapod_[f] = v;
        int mi = wrap(int(i) - grid_.dims[0] / 2, G0);
        int mj = wrap(int(j) - grid_.dims[1] / 2, G1);
        int ml = d == 3 ? wrap(int(l) - grid_.dims[2] / 2, G2) : 0;
        embed_[f] = std::size_t(mi) + std::size_t(G0) * (std::size_t(mj) + std::size_t(G1) * std::size_t(ml));
    }
    spread_base_.resize(n_k_ * std::size_t(d));
    spread_w_.resize(n_k_ * std::size_t(d) * kNufftWidth);
    sample_phase_.resize(n_k_);
    parallel_for(n_k_, [&](std::size_t kb, std::size_t ke) {
        for (std::size_t k = kb; k < ke; ++k) {
            double phase = 0.0;
            for (int a = 0; a < d; ++a) {
                double ka = kpts_[k * d + a];
                double f = ka * grid_.spacing[a];  // normalised frequency in [-1/2, 1/2]
                double x = f * double(os_dims_[a]);
                int base = int(std::floor(x)) - kNufftWidth / 2 + 1;
                spread_base_[k * d + a] = base;
                for (int t = 0; t < kNufftWidth; ++t)
                    spread_w_[(k * d + a) * kNufftWidth + t] = kb_window(x - double(base + t));
                phase += f * double(grid_.dims[a] / 2) + ka * grid_.origin[a];
            }
            sample_phase_[k] = std::polar(inv_sqrt_n_, -kTwoPi * phase);
        }
    });
}

void MulticoilNudft::forward_fast(const cplx* image, const std::vector<std::size_t>& idx,
                                  cplx* samples) const {
    const int d = grid_.dim;
    const int nc = coils_->n_coils;
    const std::size_t np = grid_.n_points();
    const std::size_t m = idx.size();
    const int G0 = os_dims_[0], G1 = os_dims_[1], G2 = d == 3 ? os_dims_[2] : 1;
    std::vector<cplx> u(std::size_t(G0) * G1 * G2);
    for (int c = 0; c < nc; ++c) {
        std::fill(u.begin(), u.end(), cplx(0.0, 0.0));
        const cplx* cm = coils_->maps[std::size_t(c)].values.data();
        for (std::size_t f = 0; f < np; ++f) u[embed_[f]] = image[f] * cm[f] * deapod_[f];
        fft(d, os_dims_, u.data(), u.data(), -1);
        cplx* out = samples + std::size_t(c) * m;
        parallel_for(m, [&](std::size_t qb, std::size_t qe) {
            for (std::size_t q = qb; q < qe; ++q) {
                std::size_t k = idx[q];
                const int* base = spread_base_.data() + k * d;
                const double* w = spread_w_.data() + k * d * kNufftWidth;
                cplx acc(0.0, 0.0);
                if (d == 2) {
                    for (int t1 = 0; t1 < kNufftWidth; ++t1) {
                        int row = wrap(base[1] + t1, G1);
                        const cplx* vrow = u.data() + std::size_t(row) * std::size_t(G0);
                        cplx inner(0.0, 0.0);
                        for (int t0 = 0; t0 < kNufftWidth; ++t0)
                            inner += w[t0] * vrow[wrap(base[0] + t0, G0)];
                        acc += w[kNufftWidth + t1] * inner;
                    }
                } else {
                    for (int t2 = 0; t2 < kNufftWidth; ++t2) {
                        int pl = wrap(base[2] + t2, G2);
                        cplx mid(0.0, 0.0);
                        for (int t1 = 0; t1 < kNufftWidth; ++t1) {
                            int row = wrap(base[1] + t1, G1);
                            const cplx* vrow =
                                u.data() + (std::size_t(pl) * std::size_t(G1) + std::size_t(row)) * std::size_t(G0);
                            cplx inner(0.0, 0.0);
                            for (int t0 = 0; t0 < kNufftWidth; ++t0)
                                inner += w[t0] * vrow[wrap(base[0] + t0, G0)];
                            mid += w[kNufftWidth + t1] * inner;
                        }
                        acc += w[2 * kNufftWidth + t2] * mid;
                    }
                }
                out[q] = acc * sample_phase_[k];
            }
        });
    }
}

void MulticoilNudft::adjoint_fast(const cplx* samples, const std::vector<std::size_t>& idx,
                                  cplx* image) const {
    const int d = grid_.dim;
    const int nc = coils_->n_coils;
    const std::size_t np = grid_.n_points();
    const std::size_t m = idx.size();
    const int G0 = os_dims_[0], G1 = os_dims_[1], G2 = d == 3 ? os_dims_[2] : 1;
    for (std::size_t i = 0; i < np; ++i) image[i] = cplx(0.0, 0.0);
    std::vector<cplx> acc(std::size_t(nc) * np, cplx(0.0, 0.0));
    parallel_for(std::size_t(nc), [&](std::size_t cb, std::size_t ce) {
        std::vector<cplx> u;
        for (std::size_t c = cb; c < ce; ++c) {
            u.assign(std::size_t(G0) * G1 * G2, cplx(0.0, 0.0));
            const cplx* in = samples + c * m;
            for (std::size_t q = 0; q < m; ++q) {
                std::size_t k = idx[q];
                const int* base = spread_base_.data() + k * d;
                const double* w = spread_w_.data() + k * d * kNufftWidth;
                cplx s = in[q] * std::conj(sample_phase_[k]);
                if (d == 2) {
                    for (int t1 = 0; t1 < kNufftWidth; ++t1) {
                        int row = wrap(base[1] + t1, G1);
                        cplx* vrow = u.data() + std::size_t(row) * std::size_t(G0);
                        cplx sy = s * w[kNufftWidth + t1];
                        for (int t0 = 0; t0 < kNufftWidth; ++t0)
                            vrow[wrap(base[0] + t0, G0)] += w[t0] * sy;
                    }
                } else {
                    for (int t2 = 0; t2 < kNufftWidth; ++t2) {
                        int pl = wrap(base[2] + t2, G2);
                        cplx sz = s * w[2 * kNufftWidth + t2];
                        for (int t1 = 0; t1 < kNufftWidth; ++t1) {
                            int row = wrap(base[1] + t1, G1);
                            cplx* vrow =
                                u.data() + (std::size_t(pl) * std::size_t(G1) + std::size_t(row)) * std::size_t(G0);
                            cplx sy = sz * w[kNufftWidth + t1];
                            for (int t0 = 0; t0 < kNufftWidth; ++t0)
                                vrow[wrap(base[0] + t0, G0)] += w[t0] * sy;
                        }
                    }
                }
            }
            fft(d, os_dims_, u.data(), u.data(), +1);
            const cplx* cm = coils_->maps[c].values.data();
            cplx* a = acc.data() + c * np;
            for (std::size_t f = 0; f < np; ++f)
                a[f] = std::conj(cm[f]) * (u[embed_[f]] * deapod_[f]);
        }
    });
    for (int c = 0; c < nc; ++c) {
        const cplx* a = acc.data() + std::size_t(c) * np;
        for (std::size_t i = 0; i < np; ++i) image[i] += a[i];
    }
}

}  // namespace moco
