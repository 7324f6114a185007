#include "moco/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "moco/recon.hpp"

namespace moco {

namespace {

void require_same(const RealField& x, const RealField& ref, const char* what) {
    if (!x.grid.same_layout(ref.grid))
        throw std::invalid_argument(std::string(what) + ": image layouts differ");
}

}  // namespace

double psnr(const RealField& x, const RealField& ref, double peak) {
    require_same(x, ref, "psnr");
    if (peak == 0.0) peak = *std::max_element(ref.values.begin(), ref.values.end());
    if (peak <= 0.0) throw std::invalid_argument("psnr: non-positive peak");
    double mse = 0.0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        double d = x.values[i] - ref.values[i];
        mse += d * d;
    }
    mse /= double(x.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const RealField& x, const RealField& ref, double peak) {
    require_same(x, ref, "ssim");
    if (x.grid.dim != 2) throw std::invalid_argument("ssim: 2D images only");
    if (peak == 0.0) peak = *std::max_element(ref.values.begin(), ref.values.end());
    if (peak <= 0.0) throw std::invalid_argument("ssim: non-positive peak");
    const int w = 7, half = w / 2;
    const int nx = x.grid.dims[0], ny = x.grid.dims[1];
    if (nx < w || ny < w) throw std::invalid_argument("ssim: image smaller than the window");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const double inv_m = 1.0 / double(w * w);
    double total = 0.0;
    std::size_t count = 0;
    for (int cy = half; cy < ny - half; ++cy)
        for (int cx = half; cx < nx - half; ++cx) {
            double ma = 0.0, mb = 0.0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    std::size_t i = x.grid.flat(cx + dx, cy + dy);
                    ma += x.values[i];
                    mb += ref.values[i];
                }
            ma *= inv_m;
            mb *= inv_m;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int dy = -half; dy <= half; ++dy)
                for (int dx = -half; dx <= half; ++dx) {
                    std::size_t i = x.grid.flat(cx + dx, cy + dy);
                    double da = x.values[i] - ma;
                    double db = ref.values[i] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va *= inv_m;
            vb *= inv_m;
            cov *= inv_m;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / double(count);
}

double nmse_percent(const std::vector<double>& x, const std::vector<double>& ref) {
    if (x.size() != ref.size()) throw std::invalid_argument("nmse: size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - ref[i];
        num += d * d;
        den += ref[i] * ref[i];
    }
    if (den == 0.0) throw std::invalid_argument("nmse: zero reference");
    return 100.0 * num / den;
}

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("pearson: bad input sizes");
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(a.size());
    mb /= double(b.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("pearson: constant input");
    return sab / std::sqrt(saa * sbb);
}

double deformation_magnitude(const VectorField& u) {
    const std::size_t n = u.grid.n_points();
    const int d = u.grid.dim;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) {
            double v = u.values[i * std::size_t(d) + std::size_t(c)];
            s += v * v;
        }
    return std::sqrt(s / double(n));
}

double deformation_error_rms(const VectorField& u, const VectorField& ref,
                             const std::vector<unsigned char>* mask) {
    if (!u.grid.same_layout(ref.grid))
        throw std::invalid_argument("deformation_error_rms: layouts differ");
    const std::size_t n = u.grid.n_points();
    const int d = u.grid.dim;
    if (mask && mask->size() != n)
        throw std::invalid_argument("deformation_error_rms: mask size mismatch");
    double s = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask && !(*mask)[i]) continue;
        for (int c = 0; c < d; ++c) {
            double diff = u.values[i * std::size_t(d) + std::size_t(c)] -
                          ref.values[i * std::size_t(d) + std::size_t(c)];
            s += diff * diff;
        }
        ++cnt;
    }
    if (cnt == 0) throw std::invalid_argument("deformation_error_rms: empty mask");
    return std::sqrt(s / double(cnt));
}

std::vector<unsigned char> motion_mask(const std::vector<VectorField>& fields, double tol) {
    if (fields.empty()) throw std::invalid_argument("motion_mask: no fields");
    const std::size_t n = fields[0].grid.n_points();
    const int d = fields[0].grid.dim;
    std::vector<unsigned char> m(n, 0);
    for (const auto& f : fields) {
        if (!f.grid.same_layout(fields[0].grid))
            throw std::invalid_argument("motion_mask: layouts differ");
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) {
                double v = f.values[i * std::size_t(d) + std::size_t(c)];
                s += v * v;
            }
            if (s > tol * tol) m[i] = 1;
        }
    }
    return m;
}

double respiratory_displacement(const std::vector<RealField>& frames, const AnnulusSpec& spec) {
    if (frames.empty()) throw std::invalid_argument("respiratory_displacement: no frames");
    const Grid& g = frames[0].grid;
    if (g.dim != 2) throw std::invalid_argument("respiratory_displacement: 2D frames only");
    int ci = int(std::lround((spec.liver_center_x_mm - g.origin[0]) / g.spacing[0]));
    ci = std::clamp(ci, 0, g.dims[0] - 1);
    const double travel = spec.liver_displacement * spec.fov_mm;
    const double top_max = spec.liver_center_y_mm + spec.liver_radius_mm + travel;
    const double gap = -spec.outer_radius0_mm - top_max;  // clearance below the annulus
    const double band_lo = spec.liver_center_y_mm;
    const double band_hi = top_max + 0.5 * std::max(gap, 0.0);
    int j_lo = std::clamp(int(std::ceil((band_lo - g.origin[1]) / g.spacing[1])), 0, g.dims[1] - 1);
    int j_hi = std::clamp(int(std::floor((band_hi - g.origin[1]) / g.spacing[1])), 0, g.dims[1] - 1);
    if (j_hi - j_lo < 2) throw std::invalid_argument("respiratory_displacement: band too narrow");
    const double level = 0.5 * (spec.intensity_liver + spec.intensity_background);

    double e_min = std::numeric_limits<double>::infinity();
    double e_max = -std::numeric_limits<double>::infinity();
    for (const auto& f : frames) {
        if (!f.grid.same_layout(g))
            throw std::invalid_argument("respiratory_displacement: frame layouts differ");
        // walk up the column; the edge is the last crossing from above to
        // below the half-maximum level
        double edge = std::numeric_limits<double>::quiet_NaN();
        for (int j = j_lo; j < j_hi; ++j) {
            double v0 = f.values[f.grid.flat(ci, j)];
            double v1 = f.values[f.grid.flat(ci, j + 1)];
            if (v0 >= level && v1 < level) {
                double s = (v0 - level) / (v0 - v1);
                edge = g.origin[1] + (double(j) + s) * g.spacing[1];
            }
        }
        if (!std::isfinite(edge))
            throw std::invalid_argument("respiratory_displacement: no edge found in a frame");
        e_min = std::min(e_min, edge);
        e_max = std::max(e_max, edge);
    }
    return e_max - e_min;
}

void write_pgm(const std::string& path, const RealField& img, double lo, double hi) {
    if (img.grid.dim != 2) throw std::invalid_argument("write_pgm: 2D images only");
    if (lo == hi) {
        lo = *std::min_element(img.values.begin(), img.values.end());
        hi = *std::max_element(img.values.begin(), img.values.end());
        if (lo == hi) hi = lo + 1.0;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
    const int nx = img.grid.dims[0], ny = img.grid.dims[1];
    f << "P5\n" << nx << " " << ny << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(nx));
    for (int j = ny - 1; j >= 0; --j) {  // top row first, y increasing upward
        for (int i = 0; i < nx; ++i) {
            double v = (img.values[img.grid.flat(i, j)] - lo) / (hi - lo);
            row[std::size_t(i)] = (unsigned char)std::clamp(int(std::lround(v * 255.0)), 0, 255);
        }
        f.write(reinterpret_cast<const char*>(row.data()), nx);
    }
}

void write_time_profile(const std::string& base, const std::vector<RealField>& frames,
                        int column) {
    if (frames.empty()) throw std::invalid_argument("write_time_profile: no frames");
    const Grid& g = frames[0].grid;
    if (column < 0 || column >= g.dims[0])
        throw std::invalid_argument("write_time_profile: column out of range");
    const int ny = g.dims[1];
    const int nt = int(frames.size());
    std::ofstream csv(base + ".csv");
    if (!csv) throw std::runtime_error("write_time_profile: cannot open " + base + ".csv");
    for (int t = 0; t < nt; ++t) {
        for (int j = 0; j < ny; ++j)
            csv << frames[std::size_t(t)].values[g.flat(column, j)] << (j + 1 < ny ? ',' : '\n');
    }
    Grid pg = make_grid_2d(nt, ny, 1.0, 0.0, 0.0);
    RealField prof(pg);
    for (int t = 0; t < nt; ++t)
        for (int j = 0; j < ny; ++j)
            prof.values[pg.flat(t, j)] = frames[std::size_t(t)].values[g.flat(column, j)];
    write_pgm(base + ".pgm", prof);
}

namespace {

/// Eigendecomposition of the Gram matrix of X's columns, eigenvalues
/// descending and clamped at zero. Rank-k column-subspace projection of any
/// matrix A (same row space) is X * V_k * diag(1/lambda) * V_k^T * (X^T A),
/// with near-null eigenpairs skipped.
struct GramPca {
    Eigen::MatrixXd v;       // [cols][cols]
    Eigen::VectorXd lambda;  // descending
};

GramPca gram_pca(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw std::runtime_error("rank_study: eigensolver failed");
    const long nc = gram.cols();
    GramPca p;
    p.v.resize(nc, nc);
    p.lambda.resize(nc);
    for (long j = 0; j < nc; ++j) {  // solver orders eigenvalues ascending
        p.lambda(j) = std::max(es.eigenvalues()(nc - 1 - j), 0.0);
        p.v.col(j) = es.eigenvectors().col(nc - 1 - j);
    }
    return p;
}

/// Columns of `a` projected onto the span of the top-k principal directions
/// of the matrix behind `p` (whose columns are `x`).
Eigen::MatrixXd project_onto_top_k(const Eigen::MatrixXd& x, const GramPca& p,
                                   const Eigen::MatrixXd& a, int k) {
    if (k <= 0) return Eigen::MatrixXd::Zero(a.rows(), a.cols());
    const double tol = 1e-12 * std::max(p.lambda(0), 1e-300);
    Eigen::MatrixXd y = x.transpose() * a;  // [cols(x)][cols(a)]
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(x.cols(), a.cols());
    for (long j = 0; j < std::min(long(k), p.lambda.size()); ++j) {
        if (p.lambda(j) <= tol) break;
        c += p.v.col(j) * (p.v.col(j).transpose() * y) / p.lambda(j);
    }
    return x * c;
}

double stacked_nmse_percent(const std::vector<std::vector<double>>& x,
                            const std::vector<std::vector<double>>& ref) {
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < x.size(); ++p)
        for (std::size_t i = 0; i < x[p].size(); ++i) {
            double d = x[p][i] - ref[p][i];
            num += d * d;
            den += ref[p][i] * ref[p][i];
        }
    if (den == 0.0) throw std::invalid_argument("rank_study: zero reference");
    return 100.0 * num / den;
}

}  // namespace

RankStudyResult rank_study(const VelocityModel& vm, const ParamSet& ps, const ComplexField& eta,
                           const RankStudyInput& in) {
    if (in.bin_phases.empty() || in.bin_phases.size() != in.bin_frames.size())
        throw std::invalid_argument("rank_study: bin phases and frames must match");
    if (in.all_frames.empty()) throw std::invalid_argument("rank_study: no reference frames");
    if (in.max_rank < 0) throw std::invalid_argument("rank_study: negative max rank");
    const Grid& g = eta.grid;
    const std::size_t n = g.n_points();
    const int d = g.dim;
    const int np = int(in.bin_phases.size());
    for (const auto& f : in.bin_frames)
        if (!f.grid.same_layout(g)) throw std::invalid_argument("rank_study: frame grid mismatch");
    for (const auto& f : in.all_frames)
        if (!f.grid.same_layout(g)) throw std::invalid_argument("rank_study: frame grid mismatch");
    auto x0 = grid_node_coords(g);

    RankStudyResult res;
    for (int k = 0; k <= in.max_rank; ++k) res.ranks.push_back(k);

    std::vector<std::vector<double>> ref_bin;
    for (const auto& f : in.bin_frames) ref_bin.push_back(f.values);

    // velocity representation: the per-phase velocity tensors on the coarse
    // grid span a subspace; truncating the model to rank k projects its
    // atoms onto the top-k part of that family before re-integration
    {
        auto atoms = velocity_tensor_atoms(vm, ps);
        const int nb = int(atoms.size());
        const std::size_t tlen = atoms[0].size();
        Eigen::MatrixXd a(long(tlen), nb);
        for (int b = 0; b < nb; ++b)
            for (std::size_t i = 0; i < tlen; ++i) a(long(i), b) = atoms[std::size_t(b)][i];
        std::vector<double> emb(std::size_t(np) * 3);
        for (int p = 0; p < np; ++p) {
            auto e = embed_phase(in.bin_phases[std::size_t(p)]);
            for (int j = 0; j < 3; ++j) emb[std::size_t(p) * 3 + std::size_t(j)] = e[std::size_t(j)];
        }
        auto w = mlp_eval(ps, vm.net, emb, std::size_t(np));
        Eigen::MatrixXd wm(nb, np);
        for (int p = 0; p < np; ++p)
            for (int b = 0; b < nb; ++b) wm(b, p) = w[std::size_t(p) * std::size_t(nb) + std::size_t(b)];
        Eigen::MatrixXd family = a * wm;  // column p = velocity tensor at bin phase p
        GramPca pca = gram_pca(family);

        auto atoms_k = atoms;
        for (int k : res.ranks) {
            if (k < nb) {
                Eigen::MatrixXd ak = project_onto_top_k(family, pca, a, k);
                for (int b = 0; b < nb; ++b)
                    for (std::size_t i = 0; i < tlen; ++i) atoms_k[std::size_t(b)][i] = ak(long(i), b);
            } else {
                atoms_k = atoms;  // full rank keeps the model untruncated
            }
            std::vector<std::vector<double>> frames;
            for (const auto& tau : in.bin_phases) {
                auto pos = flow_positions_tensors(vm, ps, atoms_k,
                                                  straight_path(tau, in.n_steps), x0);
                frames.push_back(magnitude(warp_image(eta, pos, g)).values);
            }
            res.err_velocity.push_back(stacked_nmse_percent(frames, ref_bin));
        }
    }

    // deformation representation: truncate the stacked per-phase
    // displacement fields of the fitted model
    {
        Eigen::MatrixXd x(long(n * std::size_t(d)), np);
        for (int p = 0; p < np; ++p) {
            auto u = flow_displacement(vm, ps, in.bin_phases[std::size_t(p)], g, in.n_steps);
            for (std::size_t i = 0; i < n * std::size_t(d); ++i) x(long(i), p) = u.values[i];
        }
        GramPca pca = gram_pca(x);
        for (int k : res.ranks) {
            Eigen::MatrixXd xk = k >= np ? x : project_onto_top_k(x, pca, x, k);
            std::vector<std::vector<double>> frames;
            for (int p = 0; p < np; ++p) {
                std::vector<double> pos(x0.size());
                for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = x0[i] + xk(long(i), p);
                frames.push_back(magnitude(warp_image(eta, pos, g)).values);
            }
            res.err_deformation.push_back(stacked_nmse_percent(frames, ref_bin));
        }
    }

    // image representation: template plus rank-truncated residuals of the
    // reference frames; the truncation error is the tail eigenvalue sum of
    // the residual Gram matrix, no explicit reconstruction needed
    {
        auto base = magnitude(eta).values;
        const int nf = int(in.all_frames.size());
        Eigen::MatrixXd x(long(n), nf);
        double den = 0.0;
        for (int f = 0; f < nf; ++f) {
            const auto& vals = in.all_frames[std::size_t(f)].values;
            for (std::size_t i = 0; i < n; ++i) {
                x(long(i), f) = vals[i] - base[i];
                den += vals[i] * vals[i];
            }
        }
        if (den == 0.0) throw std::invalid_argument("rank_study: zero reference");
        GramPca pca = gram_pca(x);
        for (int k : res.ranks) {
            double tail = 0.0;
            for (long j = std::min(long(k), pca.lambda.size()); j < pca.lambda.size(); ++j)
                tail += pca.lambda(j);
            res.err_image.push_back(100.0 * tail / den);
        }
    }
    return res;
}

void save_rank_study_csv(const std::string& path, const RankStudyResult& r) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_rank_study_csv: cannot open " + path);
    f << "rank,velocity,deformation,image\n";
    for (std::size_t k = 0; k < r.ranks.size(); ++k)
        f << r.ranks[k] << ',' << r.err_velocity[k] << ',' << r.err_deformation[k] << ','
          << r.err_image[k] << '\n';
}

void write_curve_plot_pgm(const std::string& path, const std::vector<std::vector<double>>& curves,
                          int width, int height) {
    if (curves.empty() || curves[0].empty())
        throw std::invalid_argument("write_curve_plot_pgm: no curves");
    std::size_t nx = curves[0].size();
    double vmax = 0.0;
    for (const auto& c : curves) {
        if (c.size() != nx) throw std::invalid_argument("write_curve_plot_pgm: length mismatch");
        for (double v : c) vmax = std::max(vmax, v);
    }
    if (vmax <= 0.0) vmax = 1.0;
    const int ml = 12, mr = 8, mt = 8, mb = 12;
    if (width < ml + mr + 2 || height < mt + mb + 2)
        throw std::invalid_argument("write_curve_plot_pgm: canvas too small");
    std::vector<unsigned char> img(std::size_t(width) * std::size_t(height), 255);
    auto put = [&](int x, int y, unsigned char v) {
        if (x >= 0 && x < width && y >= 0 && y < height)
            img[std::size_t(y) * std::size_t(width) + std::size_t(x)] = v;
    };
    for (int x = ml; x < width - mr; ++x) put(x, height - mb, 180);
    for (int y = mt; y < height - mb; ++y) put(ml, y, 180);
    auto px = [&](std::size_t i) {
        return nx == 1 ? ml
                       : ml + int(std::lround(double(i) * double(width - ml - mr - 1) /
                                              double(nx - 1)));
    };
    auto py = [&](double v) {
        return (height - mb) - int(std::lround(v / vmax * double(height - mt - mb - 1)));
    };
    for (std::size_t c = 0; c < curves.size(); ++c) {
        unsigned char shade = (unsigned char)std::min<std::size_t>(200, c * 80);
        for (std::size_t i = 0; i + 1 < nx; ++i) {
            int x0 = px(i), y0 = py(curves[c][i]);
            int x1 = px(i + 1), y1 = py(curves[c][i + 1]);
            int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
            for (int s = 0; s <= steps; ++s) {
                double t = steps == 0 ? 0.0 : double(s) / double(steps);
                put(int(std::lround(x0 + t * (x1 - x0))), int(std::lround(y0 + t * (y1 - y0))),
                    shade);
            }
        }
        if (nx == 1) put(px(0), py(curves[c][0]), shade);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_curve_plot_pgm: cannot open " + path);
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data()), std::streamsize(img.size()));
}

}  // namespace moco
