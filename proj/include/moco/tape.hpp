#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "moco/grid.hpp"
#include "moco/nudft.hpp"

namespace moco {

/// Reverse-mode automatic differentiation over flat real tensors. Complex
/// quantities are stored interleaved (re, im). Values are computed eagerly
/// when an op is recorded and every output is checked for non-finite
/// entries, so a diverging optimisation reports the primitive that produced
/// the first bad number. A tape is built once per loss evaluation, swept
/// backward, then discarded; it is not copyable or movable because backward
/// closures keep a pointer to it.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Constant or trainable input tensor.
    int leaf(std::vector<double> v, bool requires_grad = false);

    /// Batched affine map y = x W^T + b. x is [batch][in], w [out][in]
    /// row-major, b [out]; result [batch][out].
    int linear(int x, int w, int b, std::size_t batch, std::size_t in_dim, std::size_t out_dim);

    /// Elementwise tanh.
    int tanh_op(int x);

    /// Linear combination of basis tensors with weights taken from one row
    /// of a weight matrix: out = sum_b weights[row][b] * mult[b] * basis_b.
    /// basis is [n_basis][field], weights [rows][n_basis], n_basis = mult.size().
    int combine_basis(int basis, int weights, std::size_t row, std::vector<double> mult);

    /// Multilinear interpolation of an ncomp-interleaved field at a list of
    /// physical points ([n][grid.dim]); result [n][ncomp]. Differentiates
    /// with respect to both field values and query coordinates (queries are
    /// clamped to the hull; the coordinate derivative is zero on axes where
    /// the query lies strictly outside it).
    int interp(int field, int coords, const Grid& g, int ncomp);

    /// Multicoil k-space forward model applied to an interleaved complex
    /// image; result [coil][subset point] interleaved. The pullback applies
    /// the operator adjoint.
    int nudft_fwd(int image, std::shared_ptr<const MulticoilNudft> op, MulticoilNudft::Ranges sel);

    int add(int a, int b);
    int sub(int a, int b);
    int scale(int a, double c);
    /// a + c * b.
    int add_scaled(int a, int b, double c);

    /// scale * sum(x^2) and scale * sum((x - target)^2); scalar results.
    int mean_sq(int x, double scale);
    int mean_sq_diff(int x, std::vector<double> target, double scale);

    /// scale * sum over nodes/axes/components of the squared finite-difference
    /// spatial gradient of an ncomp-interleaved field on grid g; scalar result.
    int smoothness(int field, const Grid& g, int ncomp, double scale);

    std::size_t n_nodes() const { return nodes_.size(); }
    std::size_t size(int id) const { return nodes_[check(id)].value.size(); }
    const std::vector<double>& value(int id) const { return nodes_[check(id)].value; }
    bool requires_grad(int id) const { return nodes_[check(id)].requires_grad; }

    /// Reverse sweep from a scalar root. Gradients of earlier backward calls
    /// are discarded.
    void backward(int root);
    /// Gradient of the last backward root with respect to node `id` (empty
    /// when the node was not reached).
    const std::vector<double>& grad(int id) const;

  private:
    struct Node {
        const char* op = "";
        std::vector<double> value;
        bool requires_grad = false;
        std::function<void()> backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;

    int check(int id) const;
    int push(const char* op, std::vector<double> value, bool requires_grad);
    bool any_grad(std::initializer_list<int> ids) const;
    /// Gradient accumulator of a node, allocated zero on first use; null for
    /// nodes that do not require gradients.
    double* acc(int id);
    const std::vector<double>& out_grad(int id) const { return grads_[std::size_t(id)]; }
};

}  // namespace moco
