#include "moco/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "moco/parallel.hpp"

namespace moco {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("tape: ") + what);
}

}  // namespace

int Tape::check(int id) const {
    if (id < 0 || std::size_t(id) >= nodes_.size()) throw std::logic_error("tape: bad node id");
    return id;
}

int Tape::push(const char* op, std::vector<double> value, bool requires_grad) {
    for (double v : value)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("tape: op '") + op +
                                     "' produced a non-finite value");
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

bool Tape::any_grad(std::initializer_list<int> ids) const {
    for (int id : ids)
        if (nodes_[std::size_t(check(id))].requires_grad) return true;
    return false;
}

double* Tape::acc(int id) {
    if (!nodes_[std::size_t(id)].requires_grad) return nullptr;
    auto& g = grads_[std::size_t(id)];
    if (g.empty()) g.assign(nodes_[std::size_t(id)].value.size(), 0.0);
    return g.data();
}

const std::vector<double>& Tape::grad(int id) const {
    check(id);
    if (grads_.size() != nodes_.size()) throw std::logic_error("tape: backward has not run");
    return grads_[std::size_t(id)];
}

void Tape::backward(int root) {
    check(root);
    require(size(root) == 1, "backward root must be a scalar");
    grads_.clear();
    grads_.resize(nodes_.size());
    grads_[std::size_t(root)] = {1.0};
    for (int i = root; i >= 0; --i) {
        if (grads_[std::size_t(i)].empty()) continue;
        if (nodes_[std::size_t(i)].backward) nodes_[std::size_t(i)].backward();
    }
}

int Tape::leaf(std::vector<double> v, bool requires_grad) {
    return push("leaf", std::move(v), requires_grad);
}

int Tape::linear(int x, int w, int b, std::size_t batch, std::size_t in_dim, std::size_t out_dim) {
    require(size(x) == batch * in_dim, "linear: input size mismatch");
    require(size(w) == out_dim * in_dim, "linear: weight size mismatch");
    require(size(b) == out_dim, "linear: bias size mismatch");
    const auto& xv = value(x);
    const auto& wv = value(w);
    const auto& bv = value(b);
    std::vector<double> y(batch * out_dim);
    for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t o = 0; o < out_dim; ++o) {
            double s = bv[o];
            const double* xr = xv.data() + bi * in_dim;
            const double* wr = wv.data() + o * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) s += xr[i] * wr[i];
            y[bi * out_dim + o] = s;
        }
    int id = push("linear", std::move(y), any_grad({x, w, b}));
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, x, w, b, batch, in_dim, out_dim] {
            const auto& dy = out_grad(id);
            const auto& xv2 = value(x);
            const auto& wv2 = value(w);
            double* dx = acc(x);
            double* dw = acc(w);
            double* db = acc(b);
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t o = 0; o < out_dim; ++o) {
                    double d = dy[bi * out_dim + o];
                    if (d == 0.0) continue;
                    if (dx)
                        for (std::size_t i = 0; i < in_dim; ++i)
                            dx[bi * in_dim + i] += d * wv2[o * in_dim + i];
                    if (dw)
                        for (std::size_t i = 0; i < in_dim; ++i)
                            dw[o * in_dim + i] += d * xv2[bi * in_dim + i];
                    if (db) db[o] += d;
                }
        };
    return id;
}

int Tape::tanh_op(int x) {
    std::vector<double> y(size(x));
    const auto& xv = value(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
    int id = push("tanh", std::move(y), nodes_[std::size_t(x)].requires_grad);
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, x] {
            const auto& dy = out_grad(id);
            const auto& yv = value(id);
            double* dx = acc(x);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (1.0 - yv[i] * yv[i]);
        };
    return id;
}

int Tape::combine_basis(int basis, int weights, std::size_t row, std::vector<double> mult) {
    const std::size_t nb = mult.size();
    require(nb > 0, "combine_basis: empty multiplier list");
    require(size(basis) % nb == 0, "combine_basis: basis size not divisible by basis count");
    require(size(weights) % nb == 0, "combine_basis: weight rows not divisible by basis count");
    const std::size_t fs = size(basis) / nb;
    require(row < size(weights) / nb, "combine_basis: row out of range");
    const auto& pv = value(basis);
    const auto& mv = value(weights);
    std::vector<double> y(fs, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        double c = mv[row * nb + b] * mult[b];
        if (c == 0.0) continue;
        const double* p = pv.data() + b * fs;
        for (std::size_t j = 0; j < fs; ++j) y[j] += c * p[j];
    }
    int id = push("combine_basis", std::move(y), any_grad({basis, weights}));
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, basis, weights, row, mult = std::move(mult),
                                            nb, fs] {
            const auto& dy = out_grad(id);
            const auto& pv2 = value(basis);
            const auto& mv2 = value(weights);
            double* dp = acc(basis);
            double* dm = acc(weights);
            for (std::size_t b = 0; b < nb; ++b) {
                const double* p = pv2.data() + b * fs;
                if (dp) {
                    double c = mv2[row * nb + b] * mult[b];
                    if (c != 0.0)
                        for (std::size_t j = 0; j < fs; ++j) dp[b * fs + j] += c * dy[j];
                }
                if (dm && mult[b] != 0.0) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < fs; ++j) s += dy[j] * p[j];
                    dm[row * nb + b] += mult[b] * s;
                }
            }
        };
    return id;
}

int Tape::interp(int field, int coords, const Grid& g, int ncomp) {
    require(ncomp >= 1, "interp: ncomp must be positive");
    require(size(field) == g.n_points() * std::size_t(ncomp), "interp: field size mismatch");
    require(size(coords) % std::size_t(g.dim) == 0, "interp: coords size mismatch");
    const std::size_t n = size(coords) / std::size_t(g.dim);
    const auto& fv = value(field);
    const auto& cv = value(coords);
    std::vector<double> y(n * std::size_t(ncomp));
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        InterpStencil st;
        for (std::size_t p = lo; p < hi; ++p) {
            make_stencil(g, cv.data() + p * std::size_t(g.dim), st);
            interp_apply(fv.data(), ncomp, st, y.data() + p * std::size_t(ncomp));
        }
    });
    int id = push("interp", std::move(y), any_grad({field, coords}));
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, field, coords, g, ncomp, n] {
            const auto& dy = out_grad(id);
            const auto& fv2 = value(field);
            const auto& cv2 = value(coords);
            double* df = acc(field);
            double* dc = acc(coords);
            const std::size_t nc = std::size_t(ncomp);
            if (dc)
                parallel_for(n, [&](std::size_t lo, std::size_t hi) {
                    InterpStencil st;
                    for (std::size_t p = lo; p < hi; ++p) {
                        make_stencil(g, cv2.data() + p * std::size_t(g.dim), st);
                        for (int ax = 0; ax < g.dim; ++ax) {
                            double s = 0.0;
                            for (int c = 0; c < st.n_corners; ++c) {
                                double dwc = st.dw[std::size_t(c)][std::size_t(ax)];
                                if (dwc == 0.0) continue;
                                const double* fr = fv2.data() + st.corner[std::size_t(c)] * nc;
                                for (std::size_t k = 0; k < nc; ++k)
                                    s += dy[p * nc + k] * dwc * fr[k];
                            }
                            dc[p * std::size_t(g.dim) + std::size_t(ax)] += s;
                        }
                    }
                });
            if (df)  // serial scatter keeps the accumulation order fixed
                for (std::size_t p = 0; p < n; ++p) {
                    InterpStencil st;
                    make_stencil(g, cv2.data() + p * std::size_t(g.dim), st);
                    for (int c = 0; c < st.n_corners; ++c) {
                        double wc = st.w[std::size_t(c)];
                        if (wc == 0.0) continue;
                        double* fr = df + st.corner[std::size_t(c)] * nc;
                        for (std::size_t k = 0; k < nc; ++k) fr[k] += wc * dy[p * nc + k];
                    }
                }
        };
    return id;
}

int Tape::nudft_fwd(int image, std::shared_ptr<const MulticoilNudft> op,
                    MulticoilNudft::Ranges sel) {
    require(op != nullptr, "nudft_fwd: null operator");
    require(size(image) == op->grid().n_points() * 2, "nudft_fwd: image size mismatch");
    const std::size_t m = MulticoilNudft::count(sel);
    std::vector<cplx> img(op->grid().n_points());
    const auto& iv = value(image);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = cplx(iv[2 * i], iv[2 * i + 1]);
    std::vector<cplx> out(m * std::size_t(op->n_coils()));
    op->forward(img.data(), sel, out.data());
    std::vector<double> y(out.size() * 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        y[2 * i] = out[i].real();
        y[2 * i + 1] = out[i].imag();
    }
    int id = push("nudft_fwd", std::move(y), nodes_[std::size_t(image)].requires_grad);
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, image, op = std::move(op),
                                            sel = std::move(sel)] {
            const auto& dy = out_grad(id);
            std::vector<cplx> ds(dy.size() / 2);
            for (std::size_t i = 0; i < ds.size(); ++i) ds[i] = cplx(dy[2 * i], dy[2 * i + 1]);
            std::vector<cplx> di(op->grid().n_points(), cplx(0.0, 0.0));
            op->adjoint(ds.data(), sel, di.data());
            double* dimg = acc(image);
            for (std::size_t i = 0; i < di.size(); ++i) {
                dimg[2 * i] += di[i].real();
                dimg[2 * i + 1] += di[i].imag();
            }
        };
    return id;
}

int Tape::add(int a, int b) { return add_scaled(a, b, 1.0); }

int Tape::sub(int a, int b) { return add_scaled(a, b, -1.0); }

int Tape::add_scaled(int a, int b, double c) {
    require(size(a) == size(b), "add_scaled: size mismatch");
    const auto& av = value(a);
    const auto& bv = value(b);
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + c * bv[i];
    int id = push("add_scaled", std::move(y), any_grad({a, b}));
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, a, b, c] {
            const auto& dy = out_grad(id);
            double* da = acc(a);
            double* db = acc(b);
            for (std::size_t i = 0; i < dy.size(); ++i) {
                if (da) da[i] += dy[i];
                if (db) db[i] += c * dy[i];
            }
        };
    return id;
}

int Tape::scale(int a, double c) {
    const auto& av = value(a);
    std::vector<double> y(av.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = c * av[i];
    int id = push("scale", std::move(y), nodes_[std::size_t(a)].requires_grad);
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, a, c] {
            const auto& dy = out_grad(id);
            double* da = acc(a);
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += c * dy[i];
        };
    return id;
}

int Tape::mean_sq(int x, double sc) {
    const auto& xv = value(x);
    double s = 0.0;
    for (double v : xv) s += v * v;
    int id = push("mean_sq", {sc * s}, nodes_[std::size_t(x)].requires_grad);
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, x, sc] {
            double d = out_grad(id)[0] * 2.0 * sc;
            const auto& xv2 = value(x);
            double* dx = acc(x);
            for (std::size_t i = 0; i < xv2.size(); ++i) dx[i] += d * xv2[i];
        };
    return id;
}

int Tape::mean_sq_diff(int x, std::vector<double> target, double sc) {
    require(size(x) == target.size(), "mean_sq_diff: size mismatch");
    const auto& xv = value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        double d = xv[i] - target[i];
        s += d * d;
    }
    int id = push("mean_sq_diff", {sc * s}, nodes_[std::size_t(x)].requires_grad);
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, x, target = std::move(target), sc] {
            double d = out_grad(id)[0] * 2.0 * sc;
            const auto& xv2 = value(x);
            double* dx = acc(x);
            for (std::size_t i = 0; i < xv2.size(); ++i) dx[i] += d * (xv2[i] - target[i]);
        };
    return id;
}

int Tape::smoothness(int field, const Grid& g, int ncomp, double sc) {
    require(size(field) == g.n_points() * std::size_t(ncomp), "smoothness: field size mismatch");
    const auto& fv = value(field);
    std::vector<double> gv(g.n_points() * std::size_t(g.dim) * std::size_t(ncomp));
    gradient_apply(g, fv.data(), ncomp, gv.data());
    double s = 0.0;
    for (double v : gv) s += v * v;
    int id = push("smoothness", {sc * s}, nodes_[std::size_t(field)].requires_grad);
    if (nodes_[std::size_t(id)].requires_grad)
        nodes_[std::size_t(id)].backward = [this, id, field, g, ncomp, sc] {
            double d = out_grad(id)[0] * 2.0 * sc;
            const auto& fv2 = value(field);
            std::vector<double> gv2(g.n_points() * std::size_t(g.dim) * std::size_t(ncomp));
            gradient_apply(g, fv2.data(), ncomp, gv2.data());
            for (double& v : gv2) v *= d;
            gradient_adjoint_apply(g, gv2.data(), ncomp, acc(field));
        };
    return id;
}

}  // namespace moco
