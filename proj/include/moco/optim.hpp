#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "moco/grid.hpp"
#include "moco/tape.hpp"

namespace moco {

/// One named flat tensor of optimisation variables.
struct Param {
    std::string name;
    std::vector<double> value;
    bool trainable = true;
    double lr_scale = 1.0;  // per-tensor learning-rate multiplier
};

/// Ordered collection of named parameters. Order is the contract: gradient
/// vectors, Adam state and checkpoints all follow registration order.
class ParamSet {
  public:
    int add(std::string name, std::vector<double> value, bool trainable = true,
            double lr_scale = 1.0);
    int index(const std::string& name) const;  // throws if missing
    bool has(const std::string& name) const;
    std::size_t count() const { return params_.size(); }
    Param& at(int i) { return params_[std::size_t(i)]; }
    const Param& at(int i) const { return params_[std::size_t(i)]; }
    Param& at(const std::string& name) { return params_[std::size_t(index(name))]; }
    const Param& at(const std::string& name) const { return params_[std::size_t(index(name))]; }

    /// Total number of trainable scalars.
    std::size_t n_trainable() const;

  private:
    std::vector<Param> params_;
};

/// Copy values from `src` into `dst` for every name they share; sizes must
/// match. Throws when `require_all` and a dst param is missing from src.
void copy_values_by_name(const ParamSet& src, ParamSet& dst, bool require_all = true);

/// Builds a scalar loss on the tape. `leaves` holds one tape node per
/// parameter, in ParamSet order.
using LossBuilder = std::function<int(Tape&, const std::vector<int>& leaves)>;

/// Forward evaluation only.
double eval_loss(const ParamSet& ps, const LossBuilder& build);

/// Forward + reverse sweep. `grads` gets one vector per parameter in order
/// (zeros for untouched or non-trainable parameters). Returns the loss.
double eval_grad(const ParamSet& ps, const LossBuilder& build,
                 std::vector<std::vector<double>>& grads);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction; the effective step for parameter p is
/// lr * p.lr_scale.
class Adam {
  public:
    Adam(const ParamSet& ps, AdamConfig cfg);
    void step(ParamSet& ps, const std::vector<std::vector<double>>& grads);
    long t() const { return t_; }

  private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct CgResult {
    std::vector<cplx> x;
    std::vector<double> resnorm;  // ||r|| after each iteration, [0] is initial
    int iters = 0;
};

/// Conjugate gradients for a Hermitian positive (semi)definite system
/// A x = b. `apply_a` writes A*in into out. Stops at max_iters or when
/// ||r|| <= tol * ||b||.
CgResult conjugate_gradient(const std::function<void(const cplx*, cplx*)>& apply_a,
                            const std::vector<cplx>& b, int max_iters, double tol,
                            const std::vector<cplx>* x0 = nullptr);

/// Central-difference directional-derivative check of a loss against its
/// tape gradient, over `n_probes` random unit directions in the trainable
/// subspace. Returns the maximum relative error.
double fd_check(ParamSet& ps, const LossBuilder& build, int n_probes, double step,
                std::uint64_t seed);

}  // namespace moco
