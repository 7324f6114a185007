#include "moco/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace moco {

Grid::Grid(int dim_, std::array<int, 3> dims_, std::array<double, 3> spacing_,
           std::array<double, 3> origin_)
    : dim(dim_), dims(dims_), spacing(spacing_), origin(origin_) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("Grid: dim must be 2 or 3");
    for (int a = 0; a < dim; ++a) {
        if (dims[a] < 2) throw std::invalid_argument("Grid: dims must be >= 2 on axis " + std::to_string(a));
        if (!(spacing[a] > 0.0)) throw std::invalid_argument("Grid: spacing must be positive");
    }
    if (dim == 2) {
        dims[2] = 1;
        spacing[2] = 1.0;
    }
}

std::array<double, 3> Grid::point(std::size_t f) const {
    std::size_t i = f % std::size_t(dims[0]);
    std::size_t rest = f / std::size_t(dims[0]);
    std::size_t j = rest % std::size_t(dims[1]);
    std::size_t k = rest / std::size_t(dims[1]);
    return {origin[0] + spacing[0] * double(i), origin[1] + spacing[1] * double(j),
            origin[2] + spacing[2] * double(k)};
}

bool Grid::same_layout(const Grid& o) const {
    if (dim != o.dim) return false;
    for (int a = 0; a < 3; ++a) {
        if (dims[a] != o.dims[a]) return false;
        if (spacing[a] != o.spacing[a]) return false;
        if (origin[a] != o.origin[a]) return false;
    }
    return true;
}

bool Grid::same_extent(const Grid& o, double tol) const {
    if (dim != o.dim) return false;
    for (int a = 0; a < dim; ++a) {
        if (std::abs(origin[a] - o.origin[a]) > tol) return false;
        double hi_a = origin[a] + extent(a);
        double hi_b = o.origin[a] + o.extent(a);
        if (std::abs(hi_a - hi_b) > tol) return false;
    }
    return true;
}

Grid make_grid_2d(int nx, int ny, double spacing, double ox, double oy) {
    return Grid(2, {nx, ny, 1}, {spacing, spacing, 1.0}, {ox, oy, 0.0});
}

Grid make_grid_3d(int nx, int ny, int nz, double spacing, double ox, double oy, double oz) {
    return Grid(3, {nx, ny, nz}, {spacing, spacing, spacing}, {ox, oy, oz});
}

RealField::RealField(const Grid& g) : grid(g), values(g.n_points(), 0.0) {}
RealField::RealField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.n_points()) throw std::invalid_argument("RealField: value count mismatch");
}

ComplexField::ComplexField(const Grid& g) : grid(g), values(g.n_points(), cplx(0.0, 0.0)) {}
ComplexField::ComplexField(const Grid& g, std::vector<cplx> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.n_points()) throw std::invalid_argument("ComplexField: value count mismatch");
}

VectorField::VectorField(const Grid& g) : grid(g), values(g.n_points() * g.dim, 0.0) {}
VectorField::VectorField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.n_points() * std::size_t(grid.dim))
        throw std::invalid_argument("VectorField: value count mismatch");
}

void make_stencil(const Grid& g, const double* p, InterpStencil& out) {
    const int d = g.dim;
    int cell[3] = {0, 0, 0};
    double frac[3] = {0.0, 0.0, 0.0};
    // dfrac is d(frac)/d(coordinate); zero when the query is strictly outside
    // the hull on that axis because the clamped value saturates there.
    double dfrac[3] = {0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) {
        double u = (p[a] - g.origin[a]) / g.spacing[a];
        double nmax = double(g.dims[a] - 1);
        if (u <= 0.0) {
            cell[a] = 0;
            frac[a] = 0.0;
            dfrac[a] = (u == 0.0) ? 1.0 / g.spacing[a] : 0.0;
        } else if (u >= nmax) {
            cell[a] = g.dims[a] - 2;
            frac[a] = 1.0;
            dfrac[a] = (u == nmax) ? 1.0 / g.spacing[a] : 0.0;
        } else {
            int c = int(std::floor(u));
            if (c > g.dims[a] - 2) c = g.dims[a] - 2;
            cell[a] = c;
            frac[a] = u - double(c);
            dfrac[a] = 1.0 / g.spacing[a];
        }
    }
    out.n_corners = 1 << d;
    for (int m = 0; m < out.n_corners; ++m) {
        int idx[3] = {cell[0], cell[1], cell[2]};
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            bool hi = (m >> a) & 1;
            if (hi) idx[a] += 1;
            w *= hi ? frac[a] : (1.0 - frac[a]);
        }
        out.corner[m] = g.flat(idx[0], idx[1], d == 3 ? idx[2] : 0);
        out.w[m] = w;
        for (int a = 0; a < d; ++a) {
            double dw = 1.0;
            for (int b = 0; b < d; ++b) {
                bool hi = (m >> b) & 1;
                if (b == a) {
                    dw *= hi ? dfrac[a] : -dfrac[a];
                } else {
                    dw *= hi ? frac[b] : (1.0 - frac[b]);
                }
            }
            out.dw[m][a] = dw;
        }
        if (d == 2) out.dw[m][2] = 0.0;
    }
}

void interp_apply(const double* values, int ncomp, const InterpStencil& st, double* out) {
    for (int c = 0; c < ncomp; ++c) out[c] = 0.0;
    for (int m = 0; m < st.n_corners; ++m) {
        const double* v = values + st.corner[m] * ncomp;
        for (int c = 0; c < ncomp; ++c) out[c] += st.w[m] * v[c];
    }
}

namespace {

std::size_t check_points(const Grid& g, const std::vector<double>& points) {
    if (points.size() % std::size_t(g.dim) != 0)
        throw std::invalid_argument("interpolate: point array size not a multiple of grid dim");
    return points.size() / std::size_t(g.dim);
}

}  // namespace

std::vector<double> interpolate(const RealField& f, const std::vector<double>& points) {
    std::size_t n = check_points(f.grid, points);
    std::vector<double> out(n);
    InterpStencil st;
    for (std::size_t i = 0; i < n; ++i) {
        make_stencil(f.grid, points.data() + i * f.grid.dim, st);
        interp_apply(f.values.data(), 1, st, &out[i]);
    }
    return out;
}

std::vector<cplx> interpolate(const ComplexField& f, const std::vector<double>& points) {
    std::size_t n = check_points(f.grid, points);
    std::vector<cplx> out(n);
    InterpStencil st;
    for (std::size_t i = 0; i < n; ++i) {
        make_stencil(f.grid, points.data() + i * f.grid.dim, st);
        double v[2];
        interp_apply(reinterpret_cast<const double*>(f.values.data()), 2, st, v);
        out[i] = cplx(v[0], v[1]);
    }
    return out;
}

std::vector<double> interpolate(const VectorField& f, const std::vector<double>& points) {
    std::size_t n = check_points(f.grid, points);
    const int d = f.grid.dim;
    std::vector<double> out(n * d);
    InterpStencil st;
    for (std::size_t i = 0; i < n; ++i) {
        make_stencil(f.grid, points.data() + i * d, st);
        interp_apply(f.values.data(), d, st, out.data() + i * d);
    }
    return out;
}

namespace {

void require_same_extent(const Grid& a, const Grid& b) {
    // resampling is only defined between grids spanning the same physical
    // region; a looser tolerance here hides registration bugs.
    double tol = 1e-6 * (std::abs(a.extent(0)) + 1.0);
    if (!a.same_extent(b, tol))
        throw std::invalid_argument("resample: source and target grids span different extents");
}

template <class FieldT>
FieldT resample_impl(const FieldT& f, const Grid& target, int ncomp) {
    require_same_extent(f.grid, target);
    FieldT out(target);
    InterpStencil st;
    const double* src = reinterpret_cast<const double*>(f.values.data());
    double* dst = reinterpret_cast<double*>(out.values.data());
    for (std::size_t i = 0; i < target.n_points(); ++i) {
        auto p = target.point(i);
        make_stencil(f.grid, p.data(), st);
        interp_apply(src, ncomp, st, dst + i * ncomp);
    }
    return out;
}

}  // namespace

RealField resample(const RealField& f, const Grid& target) { return resample_impl(f, target, 1); }
ComplexField resample(const ComplexField& f, const Grid& target) { return resample_impl(f, target, 2); }
VectorField resample(const VectorField& f, const Grid& target) {
    if (f.grid.dim != target.dim) throw std::invalid_argument("resample: dim mismatch");
    return resample_impl(f, target, f.grid.dim);
}

void gradient_apply(const Grid& g, const double* values, int ncomp, double* out) {
    const int d = g.dim;
    const std::size_t n = g.n_points();
    std::array<std::size_t, 3> stride = {1, std::size_t(g.dims[0]),
                                         std::size_t(g.dims[0]) * std::size_t(g.dims[1])};
    for (std::size_t f = 0; f < n; ++f) {
        std::size_t i = f % std::size_t(g.dims[0]);
        std::size_t rest = f / std::size_t(g.dims[0]);
        std::size_t j = rest % std::size_t(g.dims[1]);
        std::size_t k = rest / std::size_t(g.dims[1]);
        std::size_t idx[3] = {i, j, k};
        for (int a = 0; a < d; ++a) {
            std::size_t lo, hi;
            double scale;
            if (idx[a] == 0) {
                lo = f;
                hi = f + stride[a];
                scale = 1.0 / g.spacing[a];
            } else if (idx[a] == std::size_t(g.dims[a] - 1)) {
                lo = f - stride[a];
                hi = f;
                scale = 1.0 / g.spacing[a];
            } else {
                lo = f - stride[a];
                hi = f + stride[a];
                scale = 0.5 / g.spacing[a];
            }
            for (int c = 0; c < ncomp; ++c) {
                out[(f * d + a) * ncomp + c] =
                    scale * (values[hi * ncomp + c] - values[lo * ncomp + c]);
            }
        }
    }
}

void gradient_adjoint_apply(const Grid& g, const double* gvalues, int ncomp, double* out) {
    const int d = g.dim;
    const std::size_t n = g.n_points();
    std::array<std::size_t, 3> stride = {1, std::size_t(g.dims[0]),
                                         std::size_t(g.dims[0]) * std::size_t(g.dims[1])};
    for (std::size_t f = 0; f < n; ++f) {
        std::size_t i = f % std::size_t(g.dims[0]);
        std::size_t rest = f / std::size_t(g.dims[0]);
        std::size_t j = rest % std::size_t(g.dims[1]);
        std::size_t k = rest / std::size_t(g.dims[1]);
        std::size_t idx[3] = {i, j, k};
        for (int a = 0; a < d; ++a) {
            std::size_t lo, hi;
            double scale;
            if (idx[a] == 0) {
                lo = f;
                hi = f + stride[a];
                scale = 1.0 / g.spacing[a];
            } else if (idx[a] == std::size_t(g.dims[a] - 1)) {
                lo = f - stride[a];
                hi = f;
                scale = 1.0 / g.spacing[a];
            } else {
                lo = f - stride[a];
                hi = f + stride[a];
                scale = 0.5 / g.spacing[a];
            }
            for (int c = 0; c < ncomp; ++c) {
                double gv = scale * gvalues[(f * d + a) * ncomp + c];
                out[hi * ncomp + c] += gv;
                out[lo * ncomp + c] -= gv;
            }
        }
    }
}

VectorField spatial_gradient(const RealField& f) {
    VectorField out(f.grid);
    gradient_apply(f.grid, f.values.data(), 1, out.values.data());
    return out;
}

}  // namespace moco
