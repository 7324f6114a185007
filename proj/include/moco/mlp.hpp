#pragma once

#include <string>
#include <vector>

#include "moco/optim.hpp"
#include "moco/rng.hpp"
#include "moco/tape.hpp"

namespace moco {

/// Fully connected network with tanh hidden activations and a linear output
/// layer.
struct MlpSpec {
    int in_dim = 0;
    std::vector<int> hidden;
    int out_dim = 0;
    double out_weight_scale = 1e-2;  // shrink factor on the output layer init

    std::vector<int> layer_sizes() const;  // in, hidden..., out
    int n_layers() const { return int(hidden.size()) + 1; }
};

/// Parameter indices (into a ParamSet) of one network's layers.
struct MlpParams {
    MlpSpec spec;
    std::vector<int> w;  // weight matrices, [out][in] row-major
    std::vector<int> b;  // bias vectors
};

/// Register weights and biases for a network under `prefix`. Weights get a
/// scaled Gaussian init, std sqrt(2 / (fan_in + fan_out)); biases start at
/// zero; the output layer is additionally shrunk by out_weight_scale so the
/// initial map is near zero.
MlpParams register_mlp(ParamSet& ps, const std::string& prefix, const MlpSpec& spec, Rng& rng,
                       double lr_scale = 1.0);

/// Record the network on a tape for a [batch][in_dim] input node; returns
/// the [batch][out_dim] output node. `leaves` maps ParamSet index to tape
/// node (as produced by eval_grad / eval_loss drivers).
int mlp_apply(Tape& t, const MlpParams& mp, const std::vector<int>& leaves, int x,
              std::size_t batch);

/// Plain forward evaluation without a tape.
std::vector<double> mlp_eval(const ParamSet& ps, const MlpParams& mp,
                             const std::vector<double>& x, std::size_t batch);

}  // namespace moco
