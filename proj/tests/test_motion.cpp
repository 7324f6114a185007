#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "moco/grid.hpp"
#include "moco/mlp.hpp"
#include "moco/motion_model.hpp"
#include "moco/optim.hpp"
#include "moco/rng.hpp"
#include "moco/text_kv.hpp"

using namespace moco;

namespace {

Grid image_grid() { return make_grid_2d(16, 16, 15.0, -112.5, -112.5); }

// rank-1 model whose velocity is constant in both phase and space:
// v_cardiac = m0 * u0 and v_resp = m1 * u1 with uniform vectors u0, u1
struct ConstModel {
    ParamSet ps;
    VelocityModel vm;
};

ConstModel constant_velocity_model(double m0, double m1, double u0x, double u0y, double u1x,
                                   double u1y) {
    ConstModel cm;
    Rng rng(1);
    cm.vm = make_velocity_model(cm.ps, image_grid(), 6, 1, 4, rng);
    auto& basis = cm.ps.at(cm.vm.basis).value;
    std::size_t field = cm.vm.coarse.n_points() * 2;
    for (std::size_t i = 0; i < cm.vm.coarse.n_points(); ++i) {
        basis[2 * i] = u0x;
        basis[2 * i + 1] = u0y;
        basis[field + 2 * i] = u1x;
        basis[field + 2 * i + 1] = u1y;
    }
    // zero every net tensor, then park the weights in the output bias
    for (std::size_t i = 0; i < cm.ps.count(); ++i) {
        auto& p = cm.ps.at(int(i));
        if (p.name.rfind("velocity.net.", 0) == 0) std::fill(p.value.begin(), p.value.end(), 0.0);
    }
    cm.ps.at("velocity.net.b2").value = {m0, m1};
    return cm;
}

// moderately sized smooth random model for the integration-order tests;
// scaled so a full-phase flow moves points a few millimetres
ConstModel random_model(std::uint64_t seed, double net_scale = 200.0) {
    ConstModel cm;
    Rng rng(seed);
    cm.vm = make_velocity_model(cm.ps, image_grid(), 6, 2, 8, rng, 2.0);
    for (double& v : cm.ps.at("velocity.net.w2").value) v *= net_scale;
    return cm;
}

// model whose basis fields are affine in position: the velocity is affine,
// so the flow maps and their displacement fields are affine too and every
// bilinear interpolation inside transport_displacement is exact. that turns
// the transport identities into sharp oracles limited only by the Euler
// integration residual.
ConstModel affine_model() {
    ConstModel cm;
    Rng rng(41);
    cm.vm = make_velocity_model(cm.ps, image_grid(), 6, 1, 4, rng);
    const double mats[2][6] = {{0.004, 0.010, -0.008, -0.003, 2.0, -1.0},
                               {-0.006, 0.002, 0.009, 0.005, -1.5, 2.5}};
    auto& basis = cm.ps.at(cm.vm.basis).value;
    std::size_t field = cm.vm.coarse.n_points() * 2;
    for (std::size_t i = 0; i < cm.vm.coarse.n_points(); ++i) {
        auto p = cm.vm.coarse.point(i);
        for (std::size_t b = 0; b < 2; ++b) {
            const double* m = mats[b];
            basis[b * field + 2 * i] = m[0] * p[0] + m[1] * p[1] + m[4];
            basis[b * field + 2 * i + 1] = m[2] * p[0] + m[3] * p[1] + m[5];
        }
    }
    for (std::size_t i = 0; i < cm.ps.count(); ++i) {
        auto& p = cm.ps.at(int(i));
        if (p.name.rfind("velocity.net.", 0) == 0) std::fill(p.value.begin(), p.value.end(), 0.0);
    }
    cm.ps.at("velocity.net.b2").value = {1.0, 1.0};
    return cm;
}

double rms_point_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / double(a.size() / 2));
}

}  // namespace

TEST_CASE("path construction: endpoints, step counts, jitter, reversal") {
    PhaseSample tau{0.6, 0.3};
    PathSpec p = straight_path(tau, 8);
    CHECK(p.n_steps() == 8);
    CHECK(p.waypoints.front().c == 0.0);
    CHECK(p.waypoints.front().r == 0.0);
    CHECK(p.waypoints.back().c == doctest::Approx(0.6));
    CHECK(p.waypoints.back().r == doctest::Approx(0.3));
    CHECK(p.waypoints[4].c == doctest::Approx(0.3));
    CHECK(p.waypoints[4].r == doctest::Approx(0.15));
    CHECK_THROWS_AS((void)straight_path(tau, 0), std::invalid_argument);

    Rng r1(9), r2(9), r3(10);
    PathSpec q1 = perturb_path(p, 0.1, r1);
    PathSpec q2 = perturb_path(p, 0.1, r2);
    PathSpec q3 = perturb_path(p, 0.1, r3);
    CHECK(q1.waypoints.front().c == p.waypoints.front().c);
    CHECK(q1.waypoints.back().c == p.waypoints.back().c);
    CHECK(q1.waypoints.back().r == p.waypoints.back().r);
    bool moved = false, differs = false;
    for (std::size_t k = 1; k + 1 < q1.waypoints.size(); ++k) {
        moved = moved || q1.waypoints[k].c != p.waypoints[k].c;
        differs = differs || q1.waypoints[k].c != q3.waypoints[k].c;
        CHECK(q1.waypoints[k].c == q2.waypoints[k].c);  // same seed, same jitter
    }
    CHECK(moved);
    CHECK(differs);

    PathSpec rev = reversed_path(p);
    for (std::size_t k = 0; k < p.waypoints.size(); ++k) {
        CHECK(rev.waypoints[k].c == p.waypoints[p.waypoints.size() - 1 - k].c);
        CHECK(rev.waypoints[k].r == p.waypoints[p.waypoints.size() - 1 - k].r);
    }
}

TEST_CASE("path jitter has standard deviation scale times step length") {
    PhaseSample tau{0.6, 0.3};
    PathSpec p = straight_path(tau, 4);
    const double scale = 0.1;
    const double step = std::sqrt(tau.c * tau.c + tau.r * tau.r) / 4.0;
    Rng rng(77);
    double acc = 0.0;
    std::size_t count = 0;
    for (int draw = 0; draw < 10000; ++draw) {
        PathSpec q = perturb_path(p, scale, rng);
        for (std::size_t k = 1; k + 1 < q.waypoints.size(); ++k) {
            double dc = q.waypoints[k].c - p.waypoints[k].c;
            double dr = q.waypoints[k].r - p.waypoints[k].r;
            acc += dc * dc + dr * dr;
            count += 2;
        }
    }
    double sd = std::sqrt(acc / double(count));
    CHECK(sd > 0.95 * scale * step);
    CHECK(sd < 1.05 * scale * step);
}

TEST_CASE("zero basis means identity flow along any path") {
    ConstModel cm = constant_velocity_model(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    // weights are nonzero-ish through b2, but the basis fields vanish
    cm.ps.at("velocity.net.b2").value = {1.7, -2.3};
    Grid g = image_grid();
    auto seeds = grid_node_coords(g);
    auto pos = flow_positions(cm.vm, cm.ps, straight_path({0.9, 0.7}, 16), seeds);
    CHECK(pos == seeds);  // bitwise: every velocity term is exactly zero
    VectorField u = flow_displacement(cm.vm, cm.ps, {0.3, 0.8}, g, 8);
    for (double v : u.values) CHECK(v == 0.0);
}

TEST_CASE("constant velocity integrates to the closed form on any path") {
    const double m0 = 0.5, m1 = -1.25, u0x = 6.0, u0y = -2.0, u1x = -1.0, u1y = 9.0;
    ConstModel cm = constant_velocity_model(m0, m1, u0x, u0y, u1x, u1y);
    Grid g = image_grid();
    auto seeds = grid_node_coords(g);
    PhaseSample tau{0.35, 0.8};

    auto check_pos = [&](const std::vector<double>& pos) {
        for (std::size_t i = 0; i < seeds.size(); i += 2) {
            double wx = seeds[i] + tau.c * m0 * u0x + tau.r * m1 * u1x;
            double wy = seeds[i + 1] + tau.c * m0 * u0y + tau.r * m1 * u1y;
            CHECK(std::abs(pos[i] - wx) < 1e-12);
            CHECK(std::abs(pos[i + 1] - wy) < 1e-12);
        }
    };
    check_pos(flow_positions(cm.vm, cm.ps, straight_path(tau, 4), seeds));
    check_pos(flow_positions(cm.vm, cm.ps, straight_path(tau, 32), seeds));

    // same endpoints, wild interior: the integral telescopes
    PathSpec zigzag;
    zigzag.waypoints = {{0.0, 0.0}, {0.8, -0.2}, {0.1, 0.9}, {-0.3, 0.4}, {tau.c, tau.r}};
    check_pos(flow_positions(cm.vm, cm.ps, zigzag, seeds));

    // velocity_at reports the per-process field
    std::vector<double> probe = {3.0, -8.0};
    auto vc = velocity_at(cm.vm, cm.ps, tau, 0, probe);
    auto vr = velocity_at(cm.vm, cm.ps, tau, 1, probe);
    CHECK(vc[0] == doctest::Approx(m0 * u0x).epsilon(1e-12));
    CHECK(vc[1] == doctest::Approx(m0 * u0y).epsilon(1e-12));
    CHECK(vr[0] == doctest::Approx(m1 * u1x).epsilon(1e-12));
    CHECK(vr[1] == doctest::Approx(m1 * u1y).epsilon(1e-12));
}

TEST_CASE("tape flow and plain evaluation agree") {
    ConstModel cm = random_model(21);
    Grid g = image_grid();
    auto seeds = grid_node_coords(g);
    PathSpec path = straight_path({0.45, 0.65}, 8);

    Tape t;
    std::vector<int> leaves(cm.ps.count());
    for (std::size_t i = 0; i < cm.ps.count(); ++i) leaves[i] = t.leaf(cm.ps.at(int(i)).value);
    int x = build_flow_positions(t, cm.vm, leaves, path, t.leaf(seeds));
    auto tape_pos = t.value(x);
    auto eval_pos = flow_positions(cm.vm, cm.ps, path, seeds);
    CHECK(tape_pos.size() == eval_pos.size());
    for (std::size_t i = 0; i < tape_pos.size(); ++i)
        CHECK(tape_pos[i] == doctest::Approx(eval_pos[i]).epsilon(1e-13));
}

TEST_CASE("explicit tensor atoms reproduce the model flow") {
    ConstModel cm = random_model(22);
    Grid g = image_grid();
    auto seeds = grid_node_coords(g);
    auto atoms = velocity_tensor_atoms(cm.vm, cm.ps);
    CHECK(atoms.size() == 4);
    for (const auto& a : atoms) CHECK(a.size() == cm.vm.coarse.n_points() * 4);

    for (auto tau : {PhaseSample{0.7, 0.2}, PhaseSample{0.15, 0.95}}) {
        PathSpec path = straight_path(tau, 12);
        auto want = flow_positions(cm.vm, cm.ps, path, seeds);
        auto got = flow_positions_tensors(cm.vm, cm.ps, atoms, path, seeds);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < want.size(); ++i) {
            num += (want[i] - got[i]) * (want[i] - got[i]);
            den += want[i] * want[i];
        }
        CHECK(std::sqrt(num / den) < 1e-12);
    }

    std::vector<std::vector<double>> short_atoms(atoms.begin(), atoms.end() - 1);
    CHECK_THROWS_AS((void)flow_positions_tensors(cm.vm, cm.ps, short_atoms,
                                                 straight_path({0.5, 0.5}, 4), seeds),
                    std::invalid_argument);
}

TEST_CASE("forward-inverse residual shrinks first order in the step count") {
    ConstModel cm = random_model(23);
    Grid g = image_grid();
    auto seeds = grid_node_coords(g);
    PhaseSample tau{0.6, 0.85};

    auto residual = [&](int n_steps) {
        auto fwd = flow_positions(cm.vm, cm.ps, straight_path(tau, n_steps), seeds);
        auto back =
            flow_positions(cm.vm, cm.ps, reversed_path(straight_path(tau, n_steps)), fwd);
        return rms_point_dist(back, seeds);
    };
    // sanity: the field actually moves points around
    VectorField u = flow_displacement(cm.vm, cm.ps, tau, g, 64);
    double travel = 0.0;
    for (double v : u.values) travel = std::max(travel, std::abs(v));
    CHECK(travel > 0.5);

    double r64 = residual(64);
    double r128 = residual(128);
    CHECK(r64 > 0.0);
    double ratio = r128 / r64;
    CHECK(ratio > 0.3);
    CHECK(ratio < 0.7);
}

TEST_CASE("inverse displacement is the reversed-path integral") {
    ConstModel cm = random_model(24);
    Grid g = image_grid();
    auto seeds = grid_node_coords(g);
    PhaseSample tau{0.3, 0.5};
    VectorField inv = inverse_flow_displacement(cm.vm, cm.ps, tau, g, 32);
    auto pos = flow_positions(cm.vm, cm.ps, reversed_path(straight_path(tau, 32)), seeds);
    for (std::size_t i = 0; i < pos.size(); ++i)
        CHECK(inv.values[i] == doctest::Approx(pos[i] - seeds[i]).epsilon(1e-13));
}

// nodes at least two rings inside the hull: their flow orbits (a few mm) stay
// clear of the clamped interpolation boundary, so affine fields stay exact
bool interior_node(double x, double y) { return std::abs(x) < 82.6 && std::abs(y) < 82.6; }

TEST_CASE("transport to the same phase is near identity") {
    ConstModel cm = affine_model();
    Grid g = image_grid();
    PhaseSample tau{0.4, 0.7};
    const int n = 64;
    VectorField t_same = transport_displacement(cm.vm, cm.ps, tau, tau, g, n);

    // with an affine velocity the displacement interpolation is exact, so the
    // transport residual must equal the inverse-then-forward flow composition
    auto seeds = grid_node_coords(g);
    auto q = flow_positions(cm.vm, cm.ps, reversed_path(straight_path(tau, n)), seeds);
    auto back = flow_positions(cm.vm, cm.ps, straight_path(tau, n), q);
    double tol = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < seeds.size(); i += 2) {
        if (!interior_node(seeds[i], seeds[i + 1])) continue;
        CHECK(std::abs(t_same.values[i] - (back[i] - seeds[i])) < 1e-9);
        CHECK(std::abs(t_same.values[i + 1] - (back[i + 1] - seeds[i + 1])) < 1e-9);
        tol = std::max({tol, std::abs(back[i] - seeds[i]), std::abs(back[i + 1] - seeds[i + 1])});
        worst = std::max({worst, std::abs(t_same.values[i]), std::abs(t_same.values[i + 1])});
    }
    CHECK(tol > 0.0);          // Euler inverse residual is genuinely nonzero
    CHECK(worst < 2.0 * tol);  // identity within the inverse tolerance

    // general model sanity: same-phase transport is small next to the motion
    ConstModel rm = random_model(25);
    VectorField rt = transport_displacement(rm.vm, rm.ps, tau, tau, g, n);
    VectorField ru = flow_displacement(rm.vm, rm.ps, tau, g, n);
    double rres = 0.0, rmag = 0.0;
    for (std::size_t i = 0; i < rt.values.size(); ++i) {
        rres += rt.values[i] * rt.values[i];
        rmag += ru.values[i] * ru.values[i];
    }
    CHECK(std::sqrt(rres) < 0.2 * std::sqrt(rmag));
}

TEST_CASE("transport from the template phase is the plain flow displacement") {
    ConstModel cm = random_model(26);
    Grid g = image_grid();
    PhaseSample tau{0.55, 0.25};
    VectorField direct = flow_displacement(cm.vm, cm.ps, tau, g, 32);
    VectorField via = transport_displacement(cm.vm, cm.ps, {0.0, 0.0}, tau, g, 32);
    for (std::size_t i = 0; i < direct.values.size(); ++i)
        CHECK(via.values[i] == doctest::Approx(direct.values[i]).epsilon(1e-10));
}

TEST_CASE("transport composes two flows within twice the inverse tolerance") {
    ConstModel cm = affine_model();
    Grid g = image_grid();
    PhaseSample tau1{0.2, 0.6}, tau2{0.7, 0.35};
    const int n = 64;
    auto seeds = grid_node_coords(g);

    // chain the two displacement fields the way the reconstruction does
    VectorField t01 = transport_displacement(cm.vm, cm.ps, {0.0, 0.0}, tau1, g, n);
    VectorField t02 = transport_displacement(cm.vm, cm.ps, {0.0, 0.0}, tau2, g, n);
    VectorField t12 = transport_displacement(cm.vm, cm.ps, tau1, tau2, g, n);
    std::vector<double> mid(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) mid[i] = seeds[i] + t01.values[i];
    auto shift = interpolate(t12, mid);

    // yardstick: forward-then-inverse flow residual at tau1
    auto fwd = flow_positions(cm.vm, cm.ps, straight_path(tau1, n), seeds);
    auto back = flow_positions(cm.vm, cm.ps, reversed_path(straight_path(tau1, n)), fwd);
    double tol = 0.0, err = 0.0;
    for (std::size_t i = 0; i < seeds.size(); i += 2) {
        if (!interior_node(seeds[i], seeds[i + 1])) continue;
        for (std::size_t d = 0; d < 2; ++d) {
            double composed = t01.values[i + d] + shift[i + d];
            err = std::max(err, std::abs(composed - t02.values[i + d]));
            tol = std::max(tol, std::abs(back[i + d] - seeds[i + d]));
        }
    }
    CHECK(tol > 0.0);
    CHECK(err < 2.0 * tol);
}

TEST_CASE("storm displacement is the weighted basis sum") {
    ParamSet ps;
    Rng rng(31);
    StormModel sm = make_storm_model(ps, image_grid(), 5, 3, 6, rng, 0.4);
    Grid g = image_grid();
    PhaseSample tau{0.8, 0.15};
    VectorField u = storm_displacement(sm, ps, tau, g);

    auto e = embed_phase(tau);
    auto w = mlp_eval(ps, sm.net, {e[0], e[1], e[2]}, 1);
    std::size_t field = sm.coarse.n_points() * 2;
    VectorField mix(sm.coarse);
    const auto& basis = ps.at(sm.basis).value;
    for (int n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < field; ++i)
            mix.values[i] += w[std::size_t(n)] * basis[std::size_t(n) * field + i];
    auto vals = interpolate(mix, grid_node_coords(g));
    for (std::size_t i = 0; i < vals.size(); ++i)
        CHECK(u.values[i] == doctest::Approx(vals[i]).epsilon(1e-12));
}

TEST_CASE("mlp_eval matches a hand-rolled two-layer forward pass") {
    ParamSet ps;
    MlpSpec spec;
    spec.in_dim = 2;
    spec.hidden = {2};
    spec.out_dim = 1;
    Rng rng(5);
    MlpParams mp = register_mlp(ps, "net", spec, rng);
    ps.at("net.w0").value = {0.5, -0.25, 1.0, 0.75};
    ps.at("net.b0").value = {0.1, -0.2};
    ps.at("net.w1").value = {2.0, -1.5};
    ps.at("net.b1").value = {0.3};
    std::vector<double> x = {0.4, -0.6};
    double h0 = std::tanh(0.5 * 0.4 - 0.25 * -0.6 + 0.1);
    double h1 = std::tanh(1.0 * 0.4 + 0.75 * -0.6 - 0.2);
    double want = 2.0 * h0 - 1.5 * h1 + 0.3;
    auto y = mlp_eval(ps, mp, x, 1);
    CHECK(y.size() == 1);
    CHECK(y[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip keeps names, flags and float32 values") {
    namespace fs = std::filesystem;
    ConstModel cm = random_model(33);
    cm.ps.add("extra.frozen", {1.0, 2.5, -3.75}, false, 0.125);
    TextKv meta;
    meta.set("kind", "dmoco");
    meta.set_int("rank", 2);

    std::string path = (fs::temp_directory_path() / "moco_ckpt_test").string();
    save_checkpoint(path, cm.ps, meta);
    CHECK(fs::exists(path));
    CHECK(fs::exists(path + ".f32"));
    // blob is exactly four bytes per stored scalar
    std::size_t n_scalars = 0;
    for (std::size_t i = 0; i < cm.ps.count(); ++i) n_scalars += cm.ps.at(int(i)).value.size();
    CHECK(fs::file_size(path + ".f32") == 4 * n_scalars);

    TextKv meta2;
    ParamSet loaded = load_checkpoint(path, meta2);
    CHECK(meta2.get("kind") == "dmoco");
    CHECK(meta2.get_int("rank") == 2);
    CHECK(loaded.count() == cm.ps.count());
    for (std::size_t i = 0; i < cm.ps.count(); ++i) {
        const Param& a = cm.ps.at(int(i));
        const Param& b = loaded.at(int(i));
        CHECK(a.name == b.name);
        CHECK(a.trainable == b.trainable);
        CHECK(a.lr_scale == b.lr_scale);
        REQUIRE(a.value.size() == b.value.size());
        for (std::size_t j = 0; j < a.value.size(); ++j) {
            CHECK(b.value[j] == doctest::Approx(a.value[j]).epsilon(1e-6));
            CHECK(b.value[j] == double(float(a.value[j])));  // exactly the narrowed value
        }
    }
    fs::remove(path);
    fs::remove(path + ".f32");

    TextKv m;
    CHECK_THROWS_AS((void)load_checkpoint("/nonexistent/ckpt", m), std::exception);
}
