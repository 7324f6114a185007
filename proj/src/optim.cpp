#include "moco/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "moco/rng.hpp"

namespace moco {

int ParamSet::add(std::string name, std::vector<double> value, bool trainable, double lr_scale) {
    if (has(name)) throw std::invalid_argument("param '" + name + "' registered twice");
    params_.push_back({std::move(name), std::move(value), trainable, lr_scale});
    return int(params_.size()) - 1;
}

int ParamSet::index(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return int(i);
    throw std::invalid_argument("unknown param '" + name + "'");
}

bool ParamSet::has(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return true;
    return false;
}

std::size_t ParamSet::n_trainable() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.trainable) n += p.value.size();
    return n;
}

void copy_values_by_name(const ParamSet& src, ParamSet& dst, bool require_all) {
    for (std::size_t i = 0; i < dst.count(); ++i) {
        Param& d = dst.at(int(i));
        if (!src.has(d.name)) {
            if (require_all) throw std::invalid_argument("param '" + d.name + "' missing");
            continue;
        }
        const Param& s = src.at(d.name);
        if (s.value.size() != d.value.size())
            throw std::invalid_argument("param '" + d.name + "' size mismatch");
        d.value = s.value;
    }
}

namespace {

int build_with_leaves(const ParamSet& ps, const LossBuilder& build, Tape& t,
                      std::vector<int>& leaves) {
    leaves.resize(ps.count());
    for (std::size_t i = 0; i < ps.count(); ++i)
        leaves[i] = t.leaf(ps.at(int(i)).value, ps.at(int(i)).trainable);
    int root = build(t, leaves);
    if (t.size(root) != 1) throw std::logic_error("loss builder must return a scalar node");
    return root;
}

}  // namespace

double eval_loss(const ParamSet& ps, const LossBuilder& build) {
    Tape t;
    std::vector<int> leaves;
    int root = build_with_leaves(ps, build, t, leaves);
    return t.value(root)[0];
}

double eval_grad(const ParamSet& ps, const LossBuilder& build,
                 std::vector<std::vector<double>>& grads) {
    Tape t;
    std::vector<int> leaves;
    int root = build_with_leaves(ps, build, t, leaves);
    t.backward(root);
    grads.resize(ps.count());
    for (std::size_t i = 0; i < ps.count(); ++i) {
        const auto& g = t.grad(leaves[i]);
        if (g.empty())
            grads[i].assign(ps.at(int(i)).value.size(), 0.0);
        else
            grads[i] = g;
    }
    return t.value(root)[0];
}

Adam::Adam(const ParamSet& ps, AdamConfig cfg) : cfg_(cfg) {
    m_.resize(ps.count());
    v_.resize(ps.count());
    for (std::size_t i = 0; i < ps.count(); ++i) {
        m_[i].assign(ps.at(int(i)).value.size(), 0.0);
        v_[i].assign(ps.at(int(i)).value.size(), 0.0);
    }
}

void Adam::step(ParamSet& ps, const std::vector<std::vector<double>>& grads) {
    if (grads.size() != m_.size()) throw std::invalid_argument("adam: gradient count mismatch");
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        Param& p = ps.at(int(i));
        if (!p.trainable) continue;
        if (grads[i].size() != p.value.size()) throw std::invalid_argument("adam: size mismatch");
        double lr = cfg_.lr * p.lr_scale;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            double g = grads[i][j];
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
            double mh = m_[i][j] / bc1;
            double vh = v_[i][j] / bc2;
            p.value[j] -= lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

namespace {

double dot_re(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    return s;
}

}  // namespace

CgResult conjugate_gradient(const std::function<void(const cplx*, cplx*)>& apply_a,
                            const std::vector<cplx>& b, int max_iters, double tol,
                            const std::vector<cplx>* x0) {
    const std::size_t n = b.size();
    CgResult res;
    res.x.assign(n, cplx(0.0, 0.0));
    std::vector<cplx> r = b;
    std::vector<cplx> ap(n);
    if (x0) {
        if (x0->size() != n) throw std::invalid_argument("cg: x0 size mismatch");
        res.x = *x0;
        apply_a(res.x.data(), ap.data());
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    }
    double bnorm = std::sqrt(dot_re(b, b));
    double rs = dot_re(r, r);
    res.resnorm.push_back(std::sqrt(rs));
    if (bnorm == 0.0) return res;
    std::vector<cplx> p = r;
    for (int it = 0; it < max_iters; ++it) {
        if (std::sqrt(rs) <= tol * bnorm) break;
        apply_a(p.data(), ap.data());
        double pap = dot_re(p, ap);
        if (pap <= 0.0) break;  // lost positive definiteness to roundoff
        double alpha = rs / pap;
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        double rs_new = dot_re(r, r);
        double beta = rs_new / rs;
        rs = rs_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        res.resnorm.push_back(std::sqrt(rs));
        ++res.iters;
    }
    return res;
}

double fd_check(ParamSet& ps, const LossBuilder& build, int n_probes, double step,
                std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> grads;
    eval_grad(ps, build, grads);
    double max_rel = 0.0;
    for (int probe = 0; probe < n_probes; ++probe) {
        // random unit direction over the trainable subspace
        std::vector<std::vector<double>> dir(ps.count());
        double norm2 = 0.0;
        for (std::size_t i = 0; i < ps.count(); ++i) {
            dir[i].assign(ps.at(int(i)).value.size(), 0.0);
            if (!ps.at(int(i)).trainable) continue;
            for (double& d : dir[i]) {
                d = rng.gauss();
                norm2 += d * d;
            }
        }
        if (norm2 == 0.0) throw std::invalid_argument("fd_check: no trainable parameters");
        double inv = 1.0 / std::sqrt(norm2);
        double analytic = 0.0;
        for (std::size_t i = 0; i < ps.count(); ++i)
            for (std::size_t j = 0; j < dir[i].size(); ++j) {
                dir[i][j] *= inv;
                analytic += dir[i][j] * grads[i][j];
            }
        auto shift = [&](double h) {
            for (std::size_t i = 0; i < ps.count(); ++i)
                for (std::size_t j = 0; j < dir[i].size(); ++j)
                    ps.at(int(i)).value[j] += h * dir[i][j];
        };
        shift(step);
        double lp = eval_loss(ps, build);
        shift(-2.0 * step);
        double lm = eval_loss(ps, build);
        shift(step);  // restore
        double numeric = (lp - lm) / (2.0 * step);
        double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    }
    return max_rel;
}

}  // namespace moco
