#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

namespace moco {

using cplx = std::complex<double>;

/// Regular sampling grid in physical coordinates (millimetres).
/// Axis 0 is the fastest-varying storage axis. 2D grids keep dims[2] == 1.
struct Grid {
    int dim = 2;
    std::array<int, 3> dims{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    Grid() = default;
    Grid(int dim_, std::array<int, 3> dims_, std::array<double, 3> spacing_,
         std::array<double, 3> origin_);

    std::size_t n_points() const {
        return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
    }
    std::size_t flat(int i, int j, int k = 0) const {
        return std::size_t(i) + std::size_t(dims[0]) * (std::size_t(j) + std::size_t(dims[1]) * std::size_t(k));
    }
    /// Physical coordinates of the node with the given flat index.
    std::array<double, 3> point(std::size_t flat_index) const;
    /// Physical extent along an axis, origin .. origin + (n-1) * spacing.
    double extent(int axis) const { return spacing[axis] * (dims[axis] - 1); }

    bool same_layout(const Grid& o) const;
    /// True when the two grids span the same physical extent on every axis.
    bool same_extent(const Grid& o, double tol = 1e-9) const;
};

/// Convenience constructors for the common isotropic centred case.
Grid make_grid_2d(int nx, int ny, double spacing, double ox, double oy);
Grid make_grid_3d(int nx, int ny, int nz, double spacing, double ox, double oy, double oz);

struct RealField {
    Grid grid;
    std::vector<double> values;
    RealField() = default;
    explicit RealField(const Grid& g);
    RealField(const Grid& g, std::vector<double> v);
};

struct ComplexField {
    Grid grid;
    std::vector<cplx> values;
    ComplexField() = default;
    explicit ComplexField(const Grid& g);
    ComplexField(const Grid& g, std::vector<cplx> v);
};

/// Vector-valued samples, grid.dim components per node, component fastest.
struct VectorField {
    Grid grid;
    std::vector<double> values;
    VectorField() = default;
    explicit VectorField(const Grid& g);
    VectorField(const Grid& g, std::vector<double> v);
    double comp(std::size_t node, int c) const { return values[node * grid.dim + c]; }
    double& comp(std::size_t node, int c) { return values[node * grid.dim + c]; }
};

/// Multilinear interpolation stencil at one query point. Queries outside the
/// grid hull are clamped to it. dw holds the derivative of each corner weight
/// with respect to the physical query coordinate; on an axis where the query
/// lies strictly outside the hull the clamped value no longer changes with
/// the query, so dw is zero along that axis. Exactly on the hull the
/// boundary-cell one-sided derivative is used.
struct InterpStencil {
    int n_corners = 0;
    std::array<std::size_t, 8> corner{};
    std::array<double, 8> w{};
    std::array<std::array<double, 3>, 8> dw{};
};

void make_stencil(const Grid& g, const double* point, InterpStencil& out);

/// Interpolate a field with `ncomp` interleaved components per node at one
/// clamped query point. `out` must hold ncomp values.
void interp_apply(const double* values, int ncomp, const InterpStencil& st, double* out);

/// Scalar/complex/vector interpolation at a list of physical points
/// (points packed x,y[,z] per query, grid.dim entries each).
std::vector<double> interpolate(const RealField& f, const std::vector<double>& points);
std::vector<cplx> interpolate(const ComplexField& f, const std::vector<double>& points);
std::vector<double> interpolate(const VectorField& f, const std::vector<double>& points);

/// Resample a field onto a finer (or coarser) grid covering the same
/// physical extent. Throws std::invalid_argument on extent mismatch.
RealField resample(const RealField& f, const Grid& target);
ComplexField resample(const ComplexField& f, const Grid& target);
VectorField resample(const VectorField& f, const Grid& target);

/// Central differences inside, one-sided at the boundary, scaled by spacing.
VectorField spatial_gradient(const RealField& f);

/// Apply the gradient stencil to an ncomp-interleaved array; out has
/// n_points * dim * ncomp entries laid out (node, axis, comp) with comp fastest.
void gradient_apply(const Grid& g, const double* values, int ncomp, double* out);
/// Exact transpose of gradient_apply; accumulates into out (same layouts).
void gradient_adjoint_apply(const Grid& g, const double* gvalues, int ncomp, double* out);

}  // namespace moco
