#include "moco/motion_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace moco {

namespace {

Grid coarse_grid_like(const Grid& image_grid, int coarse_n) {
    if (coarse_n < 2) throw std::invalid_argument("motion model: coarse grid needs >= 2 nodes");
    Grid c = image_grid;
    for (int a = 0; a < image_grid.dim; ++a) {
        c.dims[std::size_t(a)] = coarse_n;
        // keep the physical extent, respace the nodes
        c.spacing[std::size_t(a)] = image_grid.extent(a) / double(coarse_n - 1);
    }
    return c;
}

std::vector<double> gaussian_field(std::size_t n, double std_dev, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = std_dev * rng.gauss();
    return v;
}

}  // namespace

VelocityModel make_velocity_model(ParamSet& ps, const Grid& image_grid, int coarse_n, int rank,
                                  int hidden, Rng& rng, double basis_init_std) {
    if (rank < 1) throw std::invalid_argument("velocity model: rank must be >= 1");
    VelocityModel vm;
    vm.coarse = coarse_grid_like(image_grid, coarse_n);
    vm.rank = rank;
    std::size_t field = vm.coarse.n_points() * std::size_t(vm.coarse.dim);
    vm.basis = ps.add("velocity.basis",
                      gaussian_field(std::size_t(2 * rank) * field, basis_init_std, rng));
    MlpSpec spec;
    spec.in_dim = 3;
    spec.hidden = {hidden, hidden};
    spec.out_dim = 2 * rank;
    vm.net = register_mlp(ps, "velocity.net", spec, rng);
    return vm;
}

StormModel make_storm_model(ParamSet& ps, const Grid& image_grid, int coarse_n, int rank,
                            int hidden, Rng& rng, double basis_init_std) {
    if (rank < 1) throw std::invalid_argument("storm model: rank must be >= 1");
    StormModel sm;
    sm.coarse = coarse_grid_like(image_grid, coarse_n);
    sm.rank = rank;
    std::size_t field = sm.coarse.n_points() * std::size_t(sm.coarse.dim);
    sm.basis =
        ps.add("storm.basis", gaussian_field(std::size_t(rank) * field, basis_init_std, rng));
    MlpSpec spec;
    spec.in_dim = 3;
    spec.hidden = {hidden, hidden};
    spec.out_dim = rank;
    sm.net = register_mlp(ps, "storm.net", spec, rng);
    return sm;
}

PathSpec straight_path(const PhaseSample& tau, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("straight_path: n_steps must be >= 1");
    PathSpec p;
    p.waypoints.resize(std::size_t(n_steps) + 1);
    for (int k = 0; k <= n_steps; ++k) {
        double t = double(k) / double(n_steps);
        p.waypoints[std::size_t(k)] = {t * tau.c, t * tau.r};
    }
    return p;
}

PathSpec perturb_path(const PathSpec& path, double rel_std, Rng& rng) {
    if (path.n_steps() < 1) throw std::invalid_argument("perturb_path: empty path");
    const PhaseSample& a = path.waypoints.front();
    const PhaseSample& b = path.waypoints.back();
    double dc = b.c - a.c, dr = b.r - a.r;
    double step = std::sqrt(dc * dc + dr * dr) / double(path.n_steps());
    PathSpec q = path;
    for (std::size_t k = 1; k + 1 < q.waypoints.size(); ++k) {
        q.waypoints[k].c += rel_std * step * rng.gauss();
        q.waypoints[k].r += rel_std * step * rng.gauss();
    }
    return q;
}

PathSpec reversed_path(const PathSpec& path) {
    PathSpec q;
    q.waypoints.assign(path.waypoints.rbegin(), path.waypoints.rend());
    return q;
}

int build_flow_positions(Tape& t, const VelocityModel& vm, const std::vector<int>& leaves,
                         const PathSpec& path, int x0) {
    const int n_steps = path.n_steps();
    if (n_steps < 1) throw std::invalid_argument("build_flow_positions: empty path");
    // weights are evaluated at the start of each segment (forward Euler)
    std::vector<double> emb(std::size_t(n_steps) * 3);
    for (int k = 0; k < n_steps; ++k) {
        auto e = embed_phase(path.waypoints[std::size_t(k)]);
        emb[std::size_t(k) * 3] = e[0];
        emb[std::size_t(k) * 3 + 1] = e[1];
        emb[std::size_t(k) * 3 + 2] = e[2];
    }
    int emb_node = t.leaf(std::move(emb));
    int m = mlp_apply(t, vm.net, leaves, emb_node, std::size_t(n_steps));

    const std::size_t nb = std::size_t(2 * vm.rank);
    int x = x0;
    for (int k = 0; k < n_steps; ++k) {
        const PhaseSample& g0 = path.waypoints[std::size_t(k)];
        const PhaseSample& g1 = path.waypoints[std::size_t(k) + 1];
        double seg[2] = {g1.c - g0.c, g1.r - g0.r};
        std::vector<double> mult(nb);
        for (std::size_t b = 0; b < nb; ++b) mult[b] = seg[b % 2];
        int w = t.combine_basis(leaves[std::size_t(vm.basis)], m, std::size_t(k), std::move(mult));
        int vel = t.interp(w, x, vm.coarse, vm.coarse.dim);
        x = t.add(x, vel);
    }
    return x;
}

int build_storm_positions(Tape& t, const StormModel& sm, const std::vector<int>& leaves,
                          const PhaseSample& tau, int x0) {
    auto e = embed_phase(tau);
    int emb_node = t.leaf({e[0], e[1], e[2]});
    int w = mlp_apply(t, sm.net, leaves, emb_node, 1);
    int field = t.combine_basis(leaves[std::size_t(sm.basis)], w, 0,
                                std::vector<double>(std::size_t(sm.rank), 1.0));
    int u = t.interp(field, x0, sm.coarse, sm.coarse.dim);
    return t.add(x0, u);
}

std::vector<double> grid_node_coords(const Grid& g) {
    std::vector<double> c(g.n_points() * std::size_t(g.dim));
    for (std::size_t i = 0; i < g.n_points(); ++i) {
        auto p = g.point(i);
        for (int a = 0; a < g.dim; ++a) c[i * std::size_t(g.dim) + std::size_t(a)] = p[std::size_t(a)];
    }
    return c;
}

namespace {

/// Scratch tape with constant leaves for every parameter.
int const_leaves(const ParamSet& ps, Tape& t, std::vector<int>& leaves) {
    leaves.resize(ps.count());
    for (std::size_t i = 0; i < ps.count(); ++i) leaves[i] = t.leaf(ps.at(int(i)).value, false);
    return 0;
}

}  // namespace

std::vector<double> flow_positions(const VelocityModel& vm, const ParamSet& ps,
                                   const PathSpec& path, const std::vector<double>& seeds) {
    Tape t;
    std::vector<int> leaves;
    const_leaves(ps, t, leaves);
    int x0 = t.leaf(seeds);
    int x = build_flow_positions(t, vm, leaves, path, x0);
    return t.value(x);
}

VectorField flow_displacement(const VelocityModel& vm, const ParamSet& ps, const PhaseSample& tau,
                              const Grid& g, int n_steps) {
    auto seeds = grid_node_coords(g);
    auto pos = flow_positions(vm, ps, straight_path(tau, n_steps), seeds);
    VectorField u(g);
    for (std::size_t i = 0; i < pos.size(); ++i) u.values[i] = pos[i] - seeds[i];
    return u;
}

VectorField inverse_flow_displacement(const VelocityModel& vm, const ParamSet& ps,
                                      const PhaseSample& tau, const Grid& g, int n_steps) {
    auto seeds = grid_node_coords(g);
    auto pos = flow_positions(vm, ps, reversed_path(straight_path(tau, n_steps)), seeds);
    VectorField u(g);
    for (std::size_t i = 0; i < pos.size(); ++i) u.values[i] = pos[i] - seeds[i];
    return u;
}

VectorField transport_displacement(const VelocityModel& vm, const ParamSet& ps,
                                   const PhaseSample& tau1, const PhaseSample& tau2, const Grid& g,
                                   int n_steps) {
    auto seeds = grid_node_coords(g);
    auto q = flow_positions(vm, ps, reversed_path(straight_path(tau1, n_steps)), seeds);
    VectorField fwd = flow_displacement(vm, ps, tau2, g, n_steps);
    auto u2 = interpolate(fwd, q);
    VectorField out(g);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = (q[i] - seeds[i]) + u2[i];
    return out;
}

std::vector<double> flow_positions_tensors(const VelocityModel& vm, const ParamSet& ps,
                                           const std::vector<std::vector<double>>& tensors,
                                           const PathSpec& path, const std::vector<double>& seeds) {
    const int n_steps = path.n_steps();
    if (n_steps < 1) throw std::invalid_argument("flow_positions_tensors: empty path");
    const std::size_t field = vm.coarse.n_points() * std::size_t(vm.coarse.dim);
    const std::size_t nb = std::size_t(2 * vm.rank);
    if (tensors.size() != nb)
        throw std::invalid_argument("flow_positions_tensors: tensor count must be 2 * rank");
    for (const auto& t : tensors)
        if (t.size() != 2 * field)
            throw std::invalid_argument("flow_positions_tensors: tensor size mismatch");

    std::vector<double> emb(std::size_t(n_steps) * 3);
    for (int k = 0; k < n_steps; ++k) {
        auto e = embed_phase(path.waypoints[std::size_t(k)]);
        emb[std::size_t(k) * 3] = e[0];
        emb[std::size_t(k) * 3 + 1] = e[1];
        emb[std::size_t(k) * 3 + 2] = e[2];
    }
    std::vector<double> m = mlp_eval(ps, vm.net, emb, std::size_t(n_steps));

    std::vector<double> x = seeds;
    VectorField dir(vm.coarse);
    for (int k = 0; k < n_steps; ++k) {
        const PhaseSample& g0 = path.waypoints[std::size_t(k)];
        const PhaseSample& g1 = path.waypoints[std::size_t(k) + 1];
        const double seg[2] = {g1.c - g0.c, g1.r - g0.r};
        std::fill(dir.values.begin(), dir.values.end(), 0.0);
        for (std::size_t b = 0; b < nb; ++b) {
            const double wb = m[std::size_t(k) * nb + b];
            for (int s = 0; s < 2; ++s) {
                const double w = wb * seg[s];
                if (w == 0.0) continue;
                const double* block = tensors[b].data() + std::size_t(s) * field;
                for (std::size_t i = 0; i < field; ++i) dir.values[i] += w * block[i];
            }
        }
        auto v = interpolate(dir, x);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += v[i];
    }
    return x;
}

std::vector<std::vector<double>> velocity_tensor_atoms(const VelocityModel& vm,
                                                       const ParamSet& ps) {
    const std::size_t field = vm.coarse.n_points() * std::size_t(vm.coarse.dim);
    const std::size_t nb = std::size_t(2 * vm.rank);
    const auto& basis = ps.at(vm.basis).value;
    if (basis.size() != nb * field)
        throw std::invalid_argument("velocity_tensor_atoms: basis size mismatch");
    std::vector<std::vector<double>> atoms(nb, std::vector<double>(2 * field, 0.0));
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t s = b % 2;
        std::copy(basis.begin() + long(b * field), basis.begin() + long((b + 1) * field),
                  atoms[b].begin() + long(s * field));
    }
    return atoms;
}

std::vector<double> velocity_at(const VelocityModel& vm, const ParamSet& ps,
                                const PhaseSample& tau, int process,
                                const std::vector<double>& points) {
    if (process != 0 && process != 1) throw std::invalid_argument("velocity_at: bad process");
    Tape t;
    std::vector<int> leaves;
    const_leaves(ps, t, leaves);
    auto e = embed_phase(tau);
    int emb_node = t.leaf({e[0], e[1], e[2]});
    int m = mlp_apply(t, vm.net, leaves, emb_node, 1);
    std::vector<double> mult(std::size_t(2 * vm.rank), 0.0);
    for (int n = 0; n < vm.rank; ++n) mult[std::size_t(2 * n + process)] = 1.0;
    int w = t.combine_basis(leaves[std::size_t(vm.basis)], m, 0, std::move(mult));
    int pts = t.leaf(points);
    int v = t.interp(w, pts, vm.coarse, vm.coarse.dim);
    return t.value(v);
}

VectorField storm_displacement(const StormModel& sm, const ParamSet& ps, const PhaseSample& tau,
                               const Grid& g) {
    Tape t;
    std::vector<int> leaves;
    const_leaves(ps, t, leaves);
    int x0 = t.leaf(grid_node_coords(g));
    int x = build_storm_positions(t, sm, leaves, tau, x0);
    const auto& pos = t.value(x);
    const auto& seeds = t.value(x0);
    VectorField u(g);
    for (std::size_t i = 0; i < pos.size(); ++i) u.values[i] = pos[i] - seeds[i];
    return u;
}

void save_checkpoint(const std::string& path, const ParamSet& ps, const TextKv& meta) {
    static_assert(std::endian::native == std::endian::little);
    TextKv doc;
    for (const auto& k : meta.keys()) doc.set("meta." + k, meta.get(k));
    doc.set_int("n_params", (long long)ps.count());
    for (std::size_t i = 0; i < ps.count(); ++i) {
        const Param& p = ps.at(int(i));
        std::string pre = "param." + std::to_string(i) + ".";
        doc.set(pre + "name", p.name);
        doc.set_int(pre + "size", (long long)p.value.size());
        doc.set_int(pre + "trainable", p.trainable ? 1 : 0);
        doc.set_double(pre + "lr_scale", p.lr_scale);
    }
    doc.save(path);
    std::ofstream f(path + ".f32", std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot write blob " + path + ".f32");
    std::vector<float> buf;
    for (std::size_t i = 0; i < ps.count(); ++i) {
        const auto& v = ps.at(int(i)).value;
        buf.assign(v.begin(), v.end());
        f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
    }
    if (!f) throw std::runtime_error("save_checkpoint: short write on " + path + ".f32");
}

ParamSet load_checkpoint(const std::string& path, TextKv& meta) {
    static_assert(std::endian::native == std::endian::little);
    TextKv doc = TextKv::load(path);
    meta = TextKv();
    for (const auto& k : doc.keys())
        if (k.rfind("meta.", 0) == 0) meta.set(k.substr(5), doc.get(k));
    long long n = doc.get_int("n_params");
    ParamSet ps;
    std::ifstream f(path + ".f32", std::ios::binary);
    if (!f) throw std::invalid_argument("load_checkpoint: cannot open blob " + path + ".f32");
    for (long long i = 0; i < n; ++i) {
        std::string pre = "param." + std::to_string(i) + ".";
        std::size_t size = std::size_t(doc.get_int(pre + "size"));
        std::vector<float> buf(size);
        f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(size * 4));
        if (std::size_t(f.gcount()) != size * 4)
            throw std::invalid_argument("load_checkpoint: blob truncated at param " +
                                        std::to_string(i));
        std::vector<double> v(buf.begin(), buf.end());
        ps.add(doc.get(pre + "name"), std::move(v), doc.get_int(pre + "trainable") != 0,
               doc.get_double(pre + "lr_scale"));
    }
    return ps;
}

}  // namespace moco
