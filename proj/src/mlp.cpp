#include "moco/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace moco {

std::vector<int> MlpSpec::layer_sizes() const {
    std::vector<int> s;
    s.push_back(in_dim);
    for (int h : hidden) s.push_back(h);
    s.push_back(out_dim);
    return s;
}

MlpParams register_mlp(ParamSet& ps, const std::string& prefix, const MlpSpec& spec, Rng& rng,
                       double lr_scale) {
    if (spec.in_dim < 1 || spec.out_dim < 1)
        throw std::invalid_argument("register_mlp: bad layer sizes");
    for (int h : spec.hidden)
        if (h < 1) throw std::invalid_argument("register_mlp: bad hidden size");
    MlpParams mp;
    mp.spec = spec;
    auto sizes = spec.layer_sizes();
    for (int l = 0; l < spec.n_layers(); ++l) {
        std::size_t fan_in = std::size_t(sizes[std::size_t(l)]);
        std::size_t fan_out = std::size_t(sizes[std::size_t(l) + 1]);
        double std_w = std::sqrt(2.0 / double(fan_in + fan_out));
        if (l == spec.n_layers() - 1) std_w *= spec.out_weight_scale;
        std::vector<double> w(fan_out * fan_in);
        for (double& v : w) v = std_w * rng.gauss();
        mp.w.push_back(ps.add(prefix + ".w" + std::to_string(l), std::move(w), true, lr_scale));
        mp.b.push_back(ps.add(prefix + ".b" + std::to_string(l),
                              std::vector<double>(fan_out, 0.0), true, lr_scale));
    }
    return mp;
}

int mlp_apply(Tape& t, const MlpParams& mp, const std::vector<int>& leaves, int x,
              std::size_t batch) {
    auto sizes = mp.spec.layer_sizes();
    int h = x;
    for (int l = 0; l < mp.spec.n_layers(); ++l) {
        h = t.linear(h, leaves[std::size_t(mp.w[std::size_t(l)])],
                     leaves[std::size_t(mp.b[std::size_t(l)])], batch,
                     std::size_t(sizes[std::size_t(l)]), std::size_t(sizes[std::size_t(l) + 1]));
        if (l + 1 < mp.spec.n_layers()) h = t.tanh_op(h);
    }
    return h;
}

std::vector<double> mlp_eval(const ParamSet& ps, const MlpParams& mp, const std::vector<double>& x,
                             std::size_t batch) {
    Tape t;
    std::vector<int> leaves(ps.count());
    for (std::size_t i = 0; i < ps.count(); ++i) leaves[i] = t.leaf(ps.at(int(i)).value, false);
    int in = t.leaf(x, false);
    int out = mlp_apply(t, mp, leaves, in, batch);
    return t.value(out);
}

}  // namespace moco
