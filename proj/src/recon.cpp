#include "moco/recon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace moco {

RealField magnitude(const ComplexField& f) {
    RealField m(f.grid);
    for (std::size_t i = 0; i < f.values.size(); ++i) m.values[i] = std::abs(f.values[i]);
    return m;
}

ComplexField warp_image(const ComplexField& f, const std::vector<double>& positions,
                        const Grid& out_grid) {
    if (positions.size() != out_grid.n_points() * std::size_t(f.grid.dim))
        throw std::invalid_argument("warp_image: position count mismatch");
    ComplexField out(out_grid);
    auto vals = interpolate(f, positions);
    out.values = std::move(vals);
    return out;
}

namespace {

std::vector<int> all_group_indices(const AcquisitionRecord& rec) {
    std::vector<int> g(std::size_t(rec.traj.n_groups));
    std::iota(g.begin(), g.end(), 0);
    return g;
}

/// data-consistency normal-operator term x -> (1/M) A^H A x over a subset
void normal_apply(const MulticoilNudft& op, const MulticoilNudft::Ranges& sel, double inv_m,
                  const cplx* x, cplx* y) {
    std::vector<cplx> s(MulticoilNudft::count(sel) * std::size_t(op.n_coils()));
    op.forward(x, sel, s.data());
    op.adjoint(s.data(), sel, y);  // overwrites y
    const std::size_t n = op.grid().n_points();
    for (std::size_t i = 0; i < n; ++i) y[i] *= inv_m;
}

/// y += lambda_over_n * G^T G x for an interleaved complex field
void smooth_normal_accumulate(const Grid& g, double lambda_over_n, const cplx* x, cplx* y) {
    std::vector<double> gv(g.n_points() * std::size_t(g.dim) * 2);
    gradient_apply(g, reinterpret_cast<const double*>(x), 2, gv.data());
    for (double& v : gv) v *= lambda_over_n;
    gradient_adjoint_apply(g, gv.data(), 2, reinterpret_cast<double*>(y));
}

std::vector<double> interleave(const std::vector<cplx>& v) {
    std::vector<double> d(v.size() * 2);
    for (std::size_t i = 0; i < v.size(); ++i) {
        d[2 * i] = v[i].real();
        d[2 * i + 1] = v[i].imag();
    }
    return d;
}

ComplexField field_from_interleaved(const Grid& g, const std::vector<double>& v) {
    ComplexField f(g);
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = cplx(v[2 * i], v[2 * i + 1]);
    return f;
}

}  // namespace

ComplexField tikhonov_bin_recon(const AcquisitionRecord& rec,
                                std::shared_ptr<const MulticoilNudft> op,
                                const std::vector<int>& groups, double lambda, int cg_iters,
                                double cg_tol) {
    const Grid& g = rec.grid;
    const std::size_t n = g.n_points();
    ComplexField out(g);
    if (groups.empty()) return out;
    auto sel = group_ranges(rec, groups);
    auto data = gather_group_data(rec, groups);
    const double inv_m = 1.0 / double(data.size());
    std::vector<cplx> rhs(n);
    op->adjoint(data.data(), sel, rhs.data());
    for (auto& v : rhs) v *= inv_m;
    const double lam_n = lambda / double(n);
    auto apply = [&](const cplx* x, cplx* y) {
        normal_apply(*op, sel, inv_m, x, y);
        smooth_normal_accumulate(g, lam_n, x, y);
    };
    auto cg = conjugate_gradient(apply, rhs, cg_iters, cg_tol);
    out.values = std::move(cg.x);
    return out;
}

BinnedRecon binned_tikhonov(const AcquisitionRecord& rec, std::shared_ptr<const MulticoilNudft> op,
                            int n_cardiac, int n_resp, double lambda, int cg_iters) {
    BinnedRecon res;
    res.bins = bin_phases(rec.phases, n_cardiac, n_resp);
    res.template_bin = 0;  // the bin whose range starts at phase (0,0)
    for (const auto& groups : res.bins.groups_in_bin)
        res.images.push_back(tikhonov_bin_recon(rec, op, groups, lambda, cg_iters));
    return res;
}

namespace {

std::vector<double> init_template(const AcquisitionRecord& rec, const MulticoilNudft& op,
                                  const ComplexField* eta0) {
    const Grid& g = rec.grid;
    const std::size_t n = g.n_points();
    if (eta0) {
        if (!eta0->grid.same_layout(g))
            throw std::invalid_argument("fit: template grid does not match the record grid");
        return interleave(eta0->values);
    }
    // adjoint image of the whole record, scaled by the least-squares fit of
    // its forward projection to the data
    auto all = all_group_indices(rec);
    auto sel = group_ranges(rec, all);
    auto data = gather_group_data(rec, all);
    std::vector<cplx> x(n);
    op.adjoint(data.data(), sel, x.data());
    std::vector<cplx> y(data.size());
    op.forward(x.data(), sel, y.data());
    cplx num(0.0, 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += std::conj(y[i]) * data[i];
        den += std::norm(y[i]);
    }
    cplx alpha = den > 0.0 ? num / den : cplx(0.0, 0.0);
    for (auto& v : x) v *= alpha;
    return interleave(x);
}

struct TermLog {
    double dc = 0.0, path = 0.0, smooth = 0.0;
};

void log_row(std::vector<LossRow>& history, std::ofstream* csv, int it, double total,
             const TermLog& terms, int log_every, int iters) {
    history.push_back({double(it), total, terms.dc, terms.path, terms.smooth});
    if (csv && (it % log_every == 0 || it == iters - 1))
        *csv << it << ',' << total << ',' << terms.dc << ',' << terms.path << ','
             << terms.smooth << '\n';
}

void check_divergence(double loss, double& ref, int it, double factor, const char* what) {
    if (it < 10) ref = std::max(ref, loss);
    else if (loss > factor * std::max(ref, 1e-300))
        throw std::runtime_error(std::string(what) + ": loss diverged at iteration " +
                                 std::to_string(it));
}

}  // namespace

ComplexField DmocoResult::template_image() const {
    return field_from_interleaved(grid, params.at(eta).value);
}

ComplexField StormResult::template_image() const {
    return field_from_interleaved(grid, params.at(eta).value);
}

DmocoResult fit_dmoco(const AcquisitionRecord& rec, const ComplexField* eta0,
                      const DmocoOptions& opt, const ParamSet* init) {
    const Grid& g = rec.grid;
    const std::size_t n = g.n_points();
    auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);
    Rng rng(opt.seed);

    DmocoResult res;
    res.grid = g;
    res.eta = res.params.add("eta", init_template(rec, *op, eta0), true, opt.lr_template);
    res.model = make_velocity_model(res.params, g, opt.coarse_n, opt.rank, opt.hidden, rng);
    res.params.at(res.model.basis).lr_scale = opt.lr_basis;
    for (int id : res.model.net.w) res.params.at(id).lr_scale = opt.lr_net;
    for (int id : res.model.net.b) res.params.at(id).lr_scale = opt.lr_net;
    res.model.n_steps_fit = opt.n_steps;
    if (init) {
        // the template is governed by eta0 above, not by the init set
        auto eta_val = res.params.at(res.eta).value;
        copy_values_by_name(*init, res.params, false);
        res.params.at(res.eta).value = std::move(eta_val);
    }

    Adam adam(res.params, {1.0, 0.9, 0.999, 1e-8});
    auto x0 = grid_node_coords(g);
    std::ofstream csv;
    if (!opt.log_csv.empty()) {
        csv.open(opt.log_csv);
        if (!csv) throw std::runtime_error("fit_dmoco: cannot open log " + opt.log_csv);
        csv << "iter,total,data,path,smooth\n";
    }
    const bool use_path = opt.lambda_path != 0.0;
    std::vector<std::vector<double>> grads;
    double ref_loss = 0.0;
    for (int it = 0; it < opt.iters; ++it) {
        PhaseSample tau{rng.uniform(), rng.uniform()};
        auto groups = nearest_groups(rec.phases, tau, opt.k_nearest);
        auto sel = group_ranges(rec, groups);
        auto target = interleave(gather_group_data(rec, groups));
        const double inv_mc = 2.0 / double(target.size());
        PathSpec sp = straight_path(tau, opt.n_steps);
        PathSpec pp;
        if (use_path) pp = perturb_path(sp, opt.path_jitter, rng);
        TermLog terms;
        auto build = [&](Tape& t, const std::vector<int>& leaves) {
            int x0n = t.leaf(x0);
            int phi = build_flow_positions(t, res.model, leaves, sp, x0n);
            int warped = t.interp(leaves[std::size_t(res.eta)], phi, g, 2);
            int samples = t.nudft_fwd(warped, op, sel);
            int dc = t.mean_sq_diff(samples, target, inv_mc);
            int sm = t.smoothness(leaves[std::size_t(res.eta)], g, 2, 1.0 / double(n));
            int total = t.add_scaled(dc, sm, opt.lambda_smooth);
            terms.dc = t.value(dc)[0];
            terms.smooth = t.value(sm)[0];
            if (use_path) {
                int phi_p = build_flow_positions(t, res.model, leaves, pp, x0n);
                int pen = t.mean_sq(t.sub(phi, phi_p), 1.0 / double(n));
                terms.path = t.value(pen)[0];
                total = t.add_scaled(total, pen, opt.lambda_path);
            }
            return total;
        };
        double loss = eval_grad(res.params, build, grads);
        check_divergence(loss, ref_loss, it, opt.divergence_factor, "fit_dmoco");
        adam.step(res.params, grads);
        log_row(res.history, csv.is_open() ? &csv : nullptr, it, loss, terms, opt.log_every,
                opt.iters);
    }
    return res;
}

DmocoResult fit_dmoco_images(const std::vector<ComplexField>& targets,
                             const std::vector<PhaseSample>& phases, const ComplexField& eta,
                             const ImageFitOptions& opt) {
    if (targets.empty() || targets.size() != phases.size())
        throw std::invalid_argument("fit_dmoco_images: targets and phases must match");
    const Grid& g = eta.grid;
    const std::size_t n = g.n_points();
    for (const auto& f : targets)
        if (!f.grid.same_layout(g))
            throw std::invalid_argument("fit_dmoco_images: target grid mismatch");
    Rng rng(opt.seed);

    DmocoResult res;
    res.grid = g;
    res.eta = res.params.add("eta", interleave(eta.values), false);  // frozen template
    res.model = make_velocity_model(res.params, g, opt.coarse_n, opt.rank, opt.hidden, rng);
    res.params.at(res.model.basis).lr_scale = opt.lr_basis;
    for (int id : res.model.net.w) res.params.at(id).lr_scale = opt.lr_net;
    for (int id : res.model.net.b) res.params.at(id).lr_scale = opt.lr_net;
    res.model.n_steps_fit = opt.n_steps;

    std::vector<std::vector<double>> flat;
    flat.reserve(targets.size());
    for (const auto& f : targets) flat.push_back(interleave(f.values));

    Adam adam(res.params, {1.0, 0.9, 0.999, 1e-8});
    auto x0 = grid_node_coords(g);
    std::ofstream csv;
    if (!opt.log_csv.empty()) {
        csv.open(opt.log_csv);
        if (!csv) throw std::runtime_error("fit_dmoco_images: cannot open log " + opt.log_csv);
        csv << "iter,total,data,path,smooth\n";
    }
    const bool use_path = opt.lambda_path != 0.0;
    std::vector<std::vector<double>> grads;
    double ref_loss = 0.0;
    for (int it = 0; it < opt.iters; ++it) {
        std::size_t pick = std::size_t(rng.uniform_int(int(targets.size())));
        const PhaseSample& tau = phases[pick];
        PathSpec sp = straight_path(tau, opt.n_steps);
        PathSpec pp;
        if (use_path) pp = perturb_path(sp, opt.path_jitter, rng);
        TermLog terms;
        auto build = [&](Tape& t, const std::vector<int>& leaves) {
            int x0n = t.leaf(x0);
            int phi = build_flow_positions(t, res.model, leaves, sp, x0n);
            int warped = t.interp(leaves[std::size_t(res.eta)], phi, g, 2);
            int total = t.mean_sq_diff(warped, flat[pick], 1.0 / double(n));
            terms.dc = t.value(total)[0];
            if (use_path) {
                int phi_p = build_flow_positions(t, res.model, leaves, pp, x0n);
                int pen = t.mean_sq(t.sub(phi, phi_p), 1.0 / double(n));
                terms.path = t.value(pen)[0];
                total = t.add_scaled(total, pen, opt.lambda_path);
            }
            return total;
        };
        double loss = eval_grad(res.params, build, grads);
        check_divergence(loss, ref_loss, it, opt.divergence_factor, "fit_dmoco_images");
        adam.step(res.params, grads);
        log_row(res.history, csv.is_open() ? &csv : nullptr, it, loss, terms, opt.log_every,
                opt.iters);
    }
    return res;
}

StormResult fit_storm(const AcquisitionRecord& rec, const ComplexField* eta0,
                      const StormOptions& opt) {
    const Grid& g = rec.grid;
    const std::size_t n = g.n_points();
    auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);
    Rng rng(opt.seed);

    StormResult res;
    res.grid = g;
    res.eta = res.params.add("eta", init_template(rec, *op, eta0), true, opt.lr_template);
    res.model = make_storm_model(res.params, g, opt.coarse_n, opt.rank, opt.hidden, rng);
    res.params.at(res.model.basis).lr_scale = opt.lr_basis;
    for (int id : res.model.net.w) res.params.at(id).lr_scale = opt.lr_net;
    for (int id : res.model.net.b) res.params.at(id).lr_scale = opt.lr_net;

    Adam adam(res.params, {1.0, 0.9, 0.999, 1e-8});
    auto x0 = grid_node_coords(g);
    std::ofstream csv;
    if (!opt.log_csv.empty()) {
        csv.open(opt.log_csv);
        if (!csv) throw std::runtime_error("fit_storm: cannot open log " + opt.log_csv);
        csv << "iter,total,data,path,smooth\n";
    }
    std::vector<std::vector<double>> grads;
    double ref_loss = 0.0;
    for (int it = 0; it < opt.iters; ++it) {
        PhaseSample tau{rng.uniform(), rng.uniform()};
        auto groups = nearest_groups(rec.phases, tau, opt.k_nearest);
        auto sel = group_ranges(rec, groups);
        auto target = interleave(gather_group_data(rec, groups));
        const double inv_mc = 2.0 / double(target.size());
        TermLog terms;
        auto build = [&](Tape& t, const std::vector<int>& leaves) {
            int x0n = t.leaf(x0);
            int phi = build_storm_positions(t, res.model, leaves, tau, x0n);
            int warped = t.interp(leaves[std::size_t(res.eta)], phi, g, 2);
            int samples = t.nudft_fwd(warped, op, sel);
            int dc = t.mean_sq_diff(samples, target, inv_mc);
            int sm = t.smoothness(leaves[std::size_t(res.eta)], g, 2, 1.0 / double(n));
            terms.dc = t.value(dc)[0];
            terms.smooth = t.value(sm)[0];
            return t.add_scaled(dc, sm, opt.lambda_smooth);
        };
        double loss = eval_grad(res.params, build, grads);
        check_divergence(loss, ref_loss, it, opt.divergence_factor, "fit_storm");
        adam.step(res.params, grads);
        log_row(res.history, csv.is_open() ? &csv : nullptr, it, loss, terms, opt.log_every,
                opt.iters);
    }
    return res;
}

std::vector<RealField> dmoco_series(const DmocoResult& fit, const std::vector<PhaseSample>& phases,
                                    int n_steps) {
    ComplexField eta = fit.template_image();
    auto x0 = grid_node_coords(fit.grid);
    std::vector<RealField> frames;
    frames.reserve(phases.size());
    for (const auto& tau : phases) {
        auto pos = flow_positions(fit.model, fit.params, straight_path(tau, n_steps), x0);
        frames.push_back(magnitude(warp_image(eta, pos, fit.grid)));
    }
    return frames;
}

std::vector<RealField> storm_series(const StormResult& fit,
                                    const std::vector<PhaseSample>& phases) {
    ComplexField eta = fit.template_image();
    auto x0 = grid_node_coords(fit.grid);
    std::vector<RealField> frames;
    frames.reserve(phases.size());
    for (const auto& tau : phases) {
        VectorField u = storm_displacement(fit.model, fit.params, tau, fit.grid);
        std::vector<double> pos(x0.size());
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = x0[i] + u.values[i];
        frames.push_back(magnitude(warp_image(eta, pos, fit.grid)));
    }
    return frames;
}

MorResult motion_resolved_recon(const AcquisitionRecord& rec, const MorOptions& opt) {
    const Grid& g = rec.grid;
    const std::size_t n = g.n_points();
    auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);

    MorResult res;
    res.bins = bin_phases(rec.phases, opt.n_cardiac, opt.n_resp);
    const int nb = opt.n_cardiac * opt.n_resp;

    std::vector<MulticoilNudft::Ranges> sel(static_cast<std::size_t>(nb));
    std::vector<std::vector<cplx>> data(static_cast<std::size_t>(nb));
    std::vector<double> inv_m(std::size_t(nb), 0.0);
    for (int b = 0; b < nb; ++b) {
        const auto& groups = res.bins.groups_in_bin[std::size_t(b)];
        if (groups.empty()) continue;
        sel[std::size_t(b)] = group_ranges(rec, groups);
        data[std::size_t(b)] = gather_group_data(rec, groups);
        inv_m[std::size_t(b)] = 1.0 / double(data[std::size_t(b)].size());
    }

    std::vector<cplx> rhs(std::size_t(nb) * n, cplx(0.0, 0.0));
    {
        std::vector<cplx> tmp(n);
        for (int b = 0; b < nb; ++b) {
            if (inv_m[std::size_t(b)] == 0.0) continue;
            op->adjoint(data[std::size_t(b)].data(), sel[std::size_t(b)], tmp.data());
            for (std::size_t i = 0; i < n; ++i) rhs[std::size_t(b) * n + i] = inv_m[std::size_t(b)] * tmp[i];
        }
    }

    // neighbouring-bin pairs: cardiac cyclic, respiratory linear
    std::vector<std::array<int, 2>> pairs;
    auto flat = [&](int ic, int ir) { return ic * opt.n_resp + ir; };
    for (int ic = 0; ic < opt.n_cardiac; ++ic)
        for (int ir = 0; ir < opt.n_resp; ++ir) {
            if (opt.n_cardiac > 2 || (opt.n_cardiac == 2 && ic == 0))
                pairs.push_back({flat(ic, ir), flat((ic + 1) % opt.n_cardiac, ir)});
            if (ir + 1 < opt.n_resp) pairs.push_back({flat(ic, ir), flat(ic, ir + 1)});
        }
    const std::size_t np = pairs.size();
    const double tv_scale = np == 0 ? 0.0 : opt.lambda_tv / (2.0 * double(n) * double(np));

    std::vector<cplx> x = rhs;  // adjoint images as the starting point
    std::vector<double> w(np * n);
    for (int outer = 0; outer < opt.outer_iters; ++outer) {
        for (std::size_t p = 0; p < np; ++p) {
            const cplx* xa = x.data() + std::size_t(pairs[p][0]) * n;
            const cplx* xb = x.data() + std::size_t(pairs[p][1]) * n;
            for (std::size_t i = 0; i < n; ++i)
                w[p * n + i] =
                    1.0 / std::sqrt(std::norm(xa[i] - xb[i]) + opt.epsilon * opt.epsilon);
        }
        auto apply = [&](const cplx* in, cplx* out) {
            std::vector<cplx> tmp(n);
            for (int b = 0; b < nb; ++b) {
                cplx* ob = out + std::size_t(b) * n;
                if (inv_m[std::size_t(b)] == 0.0) {
                    std::fill(ob, ob + n, cplx(0.0, 0.0));
                    continue;
                }
                normal_apply(*op, sel[std::size_t(b)], inv_m[std::size_t(b)],
                             in + std::size_t(b) * n, ob);
            }
            for (std::size_t p = 0; p < np; ++p) {
                const cplx* ia = in + std::size_t(pairs[p][0]) * n;
                const cplx* ib = in + std::size_t(pairs[p][1]) * n;
                cplx* oa = out + std::size_t(pairs[p][0]) * n;
                cplx* ob = out + std::size_t(pairs[p][1]) * n;
                for (std::size_t i = 0; i < n; ++i) {
                    cplx f = tv_scale * w[p * n + i] * (ia[i] - ib[i]);
                    oa[i] += f;
                    ob[i] -= f;
                }
            }
        };
        auto cg = conjugate_gradient(apply, rhs, opt.cg_iters, opt.cg_tol, &x);
        x = std::move(cg.x);
    }

    for (int b = 0; b < nb; ++b) {
        ComplexField f(g);
        std::copy(x.begin() + std::size_t(b) * n, x.begin() + std::size_t(b + 1) * n,
                  f.values.begin());
        res.images.push_back(std::move(f));
    }
    return res;
}

std::vector<double> lowpass_signal(const std::vector<double>& x, int window) {
    if (x.empty()) return {};
    int w = window | 1;  // odd so the filter is zero-phase
    if (w < 3) return x;
    const long n = long(x.size());
    auto reflect = [&](long i) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -1 - i;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return std::size_t(i);
    };
    std::vector<double> y(x.size());
    const int half = w / 2;
    for (long i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = -half; k <= half; ++k) s += x[reflect(i + k)];
        y[std::size_t(i)] = s / double(w);
    }
    return y;
}

std::vector<double> lowpass_navigator(const std::vector<double>& nav, std::size_t n_groups,
                                      std::size_t n_feat, double cutoff_hz,
                                      double sample_rate_hz) {
    if (nav.size() != n_groups * n_feat)
        throw std::invalid_argument("lowpass_navigator: navigator size mismatch");
    if (cutoff_hz <= 0.0 || sample_rate_hz <= 2.0 * cutoff_hz)
        throw std::invalid_argument("lowpass_navigator: need sample rate > 2 * cutoff");
    const int window = int(std::lround(sample_rate_hz / cutoff_hz));
    std::vector<double> out(nav.size());
    std::vector<double> col(n_groups);
    for (std::size_t f = 0; f < n_feat; ++f) {
        for (std::size_t t = 0; t < n_groups; ++t) col[t] = nav[t * n_feat + f];
        auto smooth = lowpass_signal(col, window);
        for (std::size_t t = 0; t < n_groups; ++t) out[t * n_feat + f] = smooth[t];
    }
    return out;
}

AeResult fit_respiratory_ae(const std::vector<double>& nav, std::size_t n_groups,
                            std::size_t n_feat, const AeOptions& opt) {
    if (nav.size() != n_groups * n_feat)
        throw std::invalid_argument("fit_respiratory_ae: navigator size mismatch");
    if (n_groups < 2) throw std::invalid_argument("fit_respiratory_ae: need at least two groups");

    // standardise each feature across time
    std::vector<double> z(nav.size());
    bool any_varying = false;
    for (std::size_t f = 0; f < n_feat; ++f) {
        double mean = 0.0;
        for (std::size_t t = 0; t < n_groups; ++t) mean += nav[t * n_feat + f];
        mean /= double(n_groups);
        double var = 0.0;
        for (std::size_t t = 0; t < n_groups; ++t) {
            double d = nav[t * n_feat + f] - mean;
            var += d * d;
        }
        double sd = std::sqrt(var / double(n_groups));
        double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
        if (inv != 0.0) any_varying = true;
        for (std::size_t t = 0; t < n_groups; ++t) z[t * n_feat + f] = (nav[t * n_feat + f] - mean) * inv;
    }
    if (!any_varying) {
        AeResult flat;
        flat.degenerate = true;
        flat.latent.assign(n_groups, 0.0);
        flat.phase.assign(n_groups, 0.5);
        return flat;
    }

    Rng rng(opt.seed);
    ParamSet ps;
    MlpSpec enc_spec;
    enc_spec.in_dim = int(n_feat);
    enc_spec.hidden = {opt.hidden1, opt.hidden2};
    enc_spec.out_dim = 1;
    enc_spec.out_weight_scale = 1.0;
    MlpSpec dec_spec;
    dec_spec.in_dim = 1;
    dec_spec.hidden = {opt.hidden2, opt.hidden1};
    dec_spec.out_dim = int(n_feat);
    dec_spec.out_weight_scale = 1.0;
    MlpParams enc = register_mlp(ps, "enc", enc_spec, rng);
    MlpParams dec = register_mlp(ps, "dec", dec_spec, rng);

    Adam adam(ps, {opt.lr, 0.9, 0.999, 1e-8});
    AeResult res;
    std::vector<std::vector<double>> grads;
    std::vector<double> xb(std::size_t(opt.batch) * n_feat);
    for (int it = 0; it < opt.iters; ++it) {
        for (int bi = 0; bi < opt.batch; ++bi) {
            std::size_t row = std::size_t(rng.uniform_int(int(n_groups)));
            std::copy(z.begin() + long(row * n_feat), z.begin() + long((row + 1) * n_feat),
                      xb.begin() + long(std::size_t(bi) * n_feat));
        }
        auto build = [&](Tape& t, const std::vector<int>& leaves) {
            int in = t.leaf(xb);
            int lat = mlp_apply(t, enc, leaves, in, std::size_t(opt.batch));
            int out = mlp_apply(t, dec, leaves, lat, std::size_t(opt.batch));
            return t.mean_sq_diff(out, xb, 1.0 / double(xb.size()));
        };
        double loss = eval_grad(ps, build, grads);
        adam.step(ps, grads);
        res.loss_history.push_back(loss);
    }

    res.latent = mlp_eval(ps, enc, z, n_groups);
    double lo = *std::min_element(res.latent.begin(), res.latent.end());
    double hi = *std::max_element(res.latent.begin(), res.latent.end());
    res.degenerate = hi - lo <= 1e-12;
    res.phase.resize(n_groups);
    for (std::size_t i = 0; i < n_groups; ++i)
        res.phase[i] = res.degenerate ? 0.5 : (res.latent[i] - lo) / (hi - lo);
    return res;
}

}  // namespace moco
