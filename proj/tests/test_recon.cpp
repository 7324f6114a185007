#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "moco/acquisition.hpp"
#include "moco/coils.hpp"
#include "moco/grid.hpp"
#include "moco/metrics.hpp"
#include "moco/motion_model.hpp"
#include "moco/phantom.hpp"
#include "moco/recon.hpp"
#include "moco/rng.hpp"
#include "moco/trajectory.hpp"

using namespace moco;

namespace {

std::shared_ptr<const CoilMaps> unit_coils(const Grid& g) {
    CoilMaps cm;
    cm.grid = g;
    cm.n_coils = 1;
    cm.maps.emplace_back(g);
    std::fill(cm.maps[0].values.begin(), cm.maps[0].values.end(), cplx(1.0, 0.0));
    return std::make_shared<const CoilMaps>(std::move(cm));
}

std::shared_ptr<const CoilMaps> birdcage(const Grid& g, int n) {
    return std::make_shared<const CoilMaps>(make_birdcage_coils(g, n));
}

ComplexField complex_of(const RealField& f) {
    ComplexField out(f.grid);
    for (std::size_t i = 0; i < f.values.size(); ++i) out.values[i] = cplx(f.values[i], 0.0);
    return out;
}

double nmse_complex(const ComplexField& x, const ComplexField& ref) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        num += std::norm(x.values[i] - ref.values[i]);
        den += std::norm(ref.values[i]);
    }
    return num / den;
}

double field_max_abs(const ComplexField& f) {
    double m = 0.0;
    for (const auto& v : f.values) m = std::max(m, std::abs(v));
    return m;
}

double mean_node_norm(const VectorField& u) {
    const int dim = u.grid.dim;
    const std::size_t n = u.grid.n_points();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        for (int d = 0; d < dim; ++d) q += u.values[i * std::size_t(dim) + std::size_t(d)] *
                                            u.values[i * std::size_t(dim) + std::size_t(d)];
        s += std::sqrt(q);
    }
    return s / double(n);
}

// one group of readouts whose frequencies tile a shifted uniform grid, so the
// normal operator is exactly the identity and the recon has a closed form
Trajectory cartesian_trajectory(const Grid& g, int n_groups) {
    const int n = g.dims[0];
    Trajectory t;
    t.dim = 2;
    t.n_groups = n_groups;
    t.spokes_per_group = 1;
    t.samples_per_spoke = n * n / n_groups;
    t.points.reserve(std::size_t(n) * std::size_t(n) * 2);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            t.points.push_back((double(ix) - 0.5 * double(n - 1)) / (double(n) * g.spacing[0]));
            t.points.push_back((double(iy) - 0.5 * double(n - 1)) / (double(n) * g.spacing[1]));
        }
    return t;
}

// record of identical readouts of one random image, split across n_groups
AcquisitionRecord cartesian_record(const Grid& g, const RealField& img, int n_groups) {
    GroundTruth gt;
    gt.grid = g;
    gt.schedule.n_groups = n_groups;
    gt.phases.assign(std::size_t(n_groups), PhaseSample{0.0, 0.0});
    gt.frames.assign(std::size_t(n_groups), img);
    return simulate_acquisition(gt, cartesian_trajectory(g, n_groups), unit_coils(g), 0.0, 1,
                                MulticoilNudft::Mode::direct);
}

RealField random_image(const Grid& g, std::uint64_t seed) {
    RealField img(g);
    Rng rng(seed);
    for (auto& v : img.values) v = 0.2 + 0.8 * rng.uniform();
    return img;
}

// motion-free breathing record: periods equal to the group spacing pin every
// phase label at (0, 0) so all frames render the rest state
GroundTruth static_ground_truth(const AnnulusSpec& spec, const Grid& g, int n_groups) {
    MotionSchedule sched;
    sched.cardiac_period_s = sched.group_dt_s;
    sched.resp_period_s = sched.group_dt_s;
    sched.n_groups = n_groups;
    return generate_ground_truth(spec, sched, g);
}

GroundTruth moving_ground_truth(const AnnulusSpec& spec, const Grid& g, int n_groups) {
    MotionSchedule sched;
    sched.n_groups = n_groups;
    return generate_ground_truth(spec, sched, g);
}

double fluctuation_energy(const ComplexField& f) {
    cplx mean(0.0, 0.0);
    for (const auto& v : f.values) mean += v;
    mean /= double(f.values.size());
    double e = 0.0;
    for (const auto& v : f.values) e += std::norm(v - mean);
    return e;
}

}  // namespace

TEST_CASE("magnitude and warp at node coordinates reproduce the image") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    ComplexField f(g);
    Rng rng(4);
    for (auto& v : f.values) v = cplx(rng.gauss(), rng.gauss());

    auto x0 = grid_node_coords(g);
    ComplexField w = warp_image(f, x0, g);
    double dmax = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i)
        dmax = std::max(dmax, std::abs(w.values[i] - f.values[i]));
    CHECK(dmax == 0.0);  // spacing and origins are exact binary, weights are 0/1

    ComplexField one(g);
    one.values[5] = cplx(3.0, -4.0);
    RealField m = magnitude(one);
    CHECK(m.values[5] == doctest::Approx(5.0));
    CHECK(m.values[6] == 0.0);
}

TEST_CASE("tikhonov recon inverts a fully sampled uniform readout") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 8);
    RealField img = random_image(g, 11);
    AcquisitionRecord rec = cartesian_record(g, img, 4);
    auto op = make_record_operator(rec, MulticoilNudft::Mode::direct);

    ComplexField x = tikhonov_bin_recon(rec, op, {0, 1, 2, 3}, 0.0, 40, 1e-14);
    CHECK(nmse_complex(x, complex_of(img)) < 1e-10);

    ComplexField empty = tikhonov_bin_recon(rec, op, {}, 0.0, 40);
    CHECK(field_max_abs(empty) == 0.0);
}

TEST_CASE("growing smoothness weight crushes fluctuation and keeps the mean") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 8);
    RealField img = random_image(g, 12);
    AcquisitionRecord rec = cartesian_record(g, img, 1);
    auto op = make_record_operator(rec, MulticoilNudft::Mode::direct);

    auto solve = [&](double lambda) {
        return tikhonov_bin_recon(rec, op, {0}, lambda, 300, 1e-14);
    };
    ComplexField x0 = solve(0.0);
    ComplexField x1 = solve(1e5);
    ComplexField x2 = solve(1e8);

    double e0 = fluctuation_energy(x0);
    double e1 = fluctuation_energy(x1);
    double e2 = fluctuation_energy(x2);
    CHECK(e1 < 0.95 * e0);
    CHECK(e2 < 0.05 * e1);
    CHECK(e2 < 1e-3 * e0);

    // the gradient penalty never sees the constant component, so the mean survives
    auto mean_of = [](const ComplexField& f) {
        cplx s(0.0, 0.0);
        for (const auto& v : f.values) s += v;
        return s / double(f.values.size());
    };
    CHECK(std::abs(mean_of(x2) - mean_of(x0)) < 1e-6 * std::abs(mean_of(x0)));
}

TEST_CASE("binned recon covers every bin and zeros the empty ones") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    GroundTruth gt = moving_ground_truth(spec, g, 48);
    Trajectory traj = golden_angle_trajectory(g, 48, 2, 17);
    AcquisitionRecord rec = simulate_acquisition(gt, traj, birdcage(g, 2), 0.0, 2);
    auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);

    BinnedRecon br = binned_tikhonov(rec, op, 2, 2, 1e-3, 10);
    CHECK(br.images.size() == 4);
    CHECK(br.template_bin == 0);
    CHECK(br.bins.n_cardiac == 2);
    CHECK(br.bins.bin_center[0].c == doctest::Approx(0.25));
    CHECK(br.bins.bin_center[0].r == doctest::Approx(0.25));
    std::size_t covered = 0;
    for (const auto& groups : br.bins.groups_in_bin) covered += groups.size();
    CHECK(covered == 48);
    for (const auto& f : br.images) CHECK(field_max_abs(f) > 0.0);

    // a static schedule parks every group in the first bin
    GroundTruth st = static_ground_truth(spec, g, 12);
    Trajectory traj2 = golden_angle_trajectory(g, 12, 2, 17);
    AcquisitionRecord rec2 = simulate_acquisition(st, traj2, birdcage(g, 2), 0.0, 2);
    auto op2 = make_record_operator(rec2, MulticoilNudft::Mode::fast);
    BinnedRecon br2 = binned_tikhonov(rec2, op2, 2, 2, 1e-3, 10);
    CHECK(br2.bins.groups_in_bin[0].size() == 12);
    CHECK(field_max_abs(br2.images[0]) > 0.0);
    for (std::size_t b = 1; b < br2.images.size(); ++b)
        CHECK(field_max_abs(br2.images[b]) == 0.0);
}

TEST_CASE("motion resolved recon with zero coupling matches per-bin tikhonov") {
    AnnulusSpec spec;

    // each group is a full uniform readout, so every per-bin normal operator is
    // the identity and both solvers land on the bin image at machine precision
    {
        Grid g = default_phantom_grid(spec, 8);
        GroundTruth gt;
        gt.grid = g;
        gt.schedule.n_groups = 4;
        gt.phases = {{0.1, 0.0}, {0.6, 0.0}, {0.2, 0.0}, {0.9, 0.0}};
        gt.frames = {random_image(g, 21), random_image(g, 22), random_image(g, 23),
                     random_image(g, 24)};
        Trajectory cart = cartesian_trajectory(g, 1);
        Trajectory tiled = cart;
        tiled.n_groups = 4;
        for (int rep = 1; rep < 4; ++rep)
            tiled.points.insert(tiled.points.end(), cart.points.begin(), cart.points.end());
        AcquisitionRecord rec =
            simulate_acquisition(gt, tiled, unit_coils(g), 0.0, 1, MulticoilNudft::Mode::direct);
        auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);

        MorOptions opt;
        opt.n_cardiac = 2;
        opt.n_resp = 1;
        opt.lambda_tv = 0.0;
        opt.outer_iters = 1;
        opt.cg_iters = 30;
        opt.cg_tol = 1e-14;
        MorResult mor = motion_resolved_recon(rec, opt);
        REQUIRE(mor.images.size() == 2);
        for (std::size_t b = 0; b < mor.images.size(); ++b) {
            REQUIRE_FALSE(mor.bins.groups_in_bin[b].empty());
            ComplexField ref =
                tikhonov_bin_recon(rec, op, mor.bins.groups_in_bin[b], 0.0, 30, 1e-14);
            CHECK(std::sqrt(nmse_complex(mor.images[b], ref)) < 1e-10);
        }
    }

    // a well-oversampled radial record converges from either starting point
    {
        Grid g = default_phantom_grid(spec, 16);
        GroundTruth gt = moving_ground_truth(spec, g, 40);
        Trajectory traj = golden_angle_trajectory(g, 40, 8, 17);
        AcquisitionRecord rec = simulate_acquisition(gt, traj, birdcage(g, 2), 1e-3, 3);
        auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);

        MorOptions opt;
        opt.n_cardiac = 2;
        opt.n_resp = 1;
        opt.lambda_tv = 0.0;
        opt.outer_iters = 1;
        opt.cg_iters = 400;
        opt.cg_tol = 1e-13;
        MorResult mor = motion_resolved_recon(rec, opt);
        for (std::size_t b = 0; b < mor.images.size(); ++b) {
            REQUIRE_FALSE(mor.bins.groups_in_bin[b].empty());
            ComplexField ref =
                tikhonov_bin_recon(rec, op, mor.bins.groups_in_bin[b], 0.0, 400, 1e-13);
            CHECK(std::sqrt(nmse_complex(mor.images[b], ref)) < 1e-6);
        }
    }
}

TEST_CASE("bin coupling pulls the reconstructions together") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);

    // identical data in every bin stays identical under strong coupling
    GroundTruth gt;
    gt.spec = spec;
    gt.grid = g;
    gt.schedule.n_groups = 6;
    RealField rest = render_annulus(spec, {0.0, 0.0}, g);
    gt.frames.assign(6, rest);
    gt.phases = {{0.1, 0.5}, {0.45, 0.5}, {0.8, 0.5},
                 {0.1, 0.5}, {0.45, 0.5}, {0.8, 0.5}};
    Trajectory base = golden_angle_trajectory(g, 1, 3, 17);
    Trajectory tiled = base;
    tiled.n_groups = 6;
    for (int rep = 1; rep < 6; ++rep)
        tiled.points.insert(tiled.points.end(), base.points.begin(), base.points.end());
    AcquisitionRecord rec = simulate_acquisition(gt, tiled, birdcage(g, 2), 0.0, 1);

    MorOptions opt;
    opt.n_cardiac = 3;
    opt.n_resp = 1;
    opt.lambda_tv = 1e3;
    opt.outer_iters = 4;
    opt.cg_iters = 60;
    MorResult mor = motion_resolved_recon(rec, opt);
    REQUIRE(mor.images.size() == 3);
    for (int b = 1; b < 3; ++b)
        CHECK(std::sqrt(nmse_complex(mor.images[std::size_t(b)], mor.images[0])) < 1e-9);

    // on a genuinely moving record the coupled bins sit closer to each other
    GroundTruth mg = moving_ground_truth(spec, g, 40);
    Trajectory traj = golden_angle_trajectory(g, 40, 3, 17);
    AcquisitionRecord mrec = simulate_acquisition(mg, traj, birdcage(g, 2), 1e-3, 3);
    auto pair_distance = [](const MorResult& r) {
        double s = 0.0;
        for (std::size_t a = 0; a < r.images.size(); ++a)
            for (std::size_t b = a + 1; b < r.images.size(); ++b)
                for (std::size_t i = 0; i < r.images[a].values.size(); ++i)
                    s += std::norm(r.images[a].values[i] - r.images[b].values[i]);
        return s;
    };
    MorOptions loose;
    loose.n_cardiac = 2;
    loose.n_resp = 2;
    loose.lambda_tv = 0.0;
    loose.outer_iters = 2;
    loose.cg_iters = 40;
    MorOptions tight = loose;
    tight.lambda_tv = 1e5;
    tight.outer_iters = 4;
    double d_loose = pair_distance(motion_resolved_recon(mrec, loose));
    double d_tight = pair_distance(motion_resolved_recon(mrec, tight));
    CHECK(d_tight < 0.5 * d_loose);
}

TEST_CASE("motion free record fits to the template with near identity motion") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    GroundTruth gt = static_ground_truth(spec, g, 30);
    Trajectory traj = golden_angle_trajectory(g, 30, 4, 17);
    AcquisitionRecord rec = simulate_acquisition(gt, traj, birdcage(g, 2), 0.0, 5);

    DmocoOptions opt;
    opt.rank = 2;
    opt.coarse_n = 8;
    opt.hidden = 8;
    opt.n_steps = 4;
    opt.iters = 400;
    opt.k_nearest = 10;
    opt.seed = 5;
    DmocoResult res = fit_dmoco(rec, nullptr, opt);

    RealField eta_mag = magnitude(res.template_image());
    CHECK(nmse_percent(eta_mag.values, gt.frames[0].values) < 1.0);
    for (PhaseSample tau : {PhaseSample{0.3, 0.7}, PhaseSample{0.9, 0.2}}) {
        VectorField u = flow_displacement(res.model, res.params, tau, g, 8);
        CHECK(mean_node_norm(u) < 0.1 * g.spacing[0]);
    }
    CHECK(res.history.size() == 400);
    double first = res.history.front()[1];
    double last = res.history.back()[1];
    CHECK(last < first);
}

TEST_CASE("loss history decomposes into the weighted terms") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    GroundTruth gt = moving_ground_truth(spec, g, 12);
    Trajectory traj = golden_angle_trajectory(g, 12, 2, 17);
    AcquisitionRecord rec = simulate_acquisition(gt, traj, birdcage(g, 2), 1e-3, 4);

    DmocoOptions opt;
    opt.rank = 2;
    opt.coarse_n = 6;
    opt.hidden = 8;
    opt.n_steps = 3;
    opt.iters = 8;
    opt.k_nearest = 4;
    opt.lambda_path = 0.7;
    opt.lambda_smooth = 0.3;
    opt.log_every = 1;
    DmocoResult res = fit_dmoco(rec, nullptr, opt);
    REQUIRE(res.history.size() == 8);
    for (const auto& row : res.history) {
        double rebuilt = (row[2] + 0.3 * row[4]) + 0.7 * row[3];
        CHECK(std::abs(row[1] - rebuilt) <= 1e-12 * std::max(1.0, std::abs(row[1])));
        CHECK(row[2] > 0.0);
        CHECK(row[4] > 0.0);
    }

    // with both weights off the total collapses to the data term
    DmocoOptions bare = opt;
    bare.lambda_path = 0.0;
    bare.lambda_smooth = 0.0;
    DmocoResult plain = fit_dmoco(rec, nullptr, bare);
    for (const auto& row : plain.history) {
        CHECK(row[1] == row[2]);
        CHECK(row[3] == 0.0);
    }

    auto csv_path = std::filesystem::temp_directory_path() / "recon_loss_log.csv";
    DmocoOptions logged = opt;
    logged.log_csv = csv_path.string();
    fit_dmoco(rec, nullptr, logged);
    std::ifstream in(csv_path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "iter,total,data,path,smooth");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 8);
    std::filesystem::remove(csv_path);
}

TEST_CASE("fixed seed reproduces the fit bitwise and a new seed departs") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    GroundTruth gt = moving_ground_truth(spec, g, 12);
    Trajectory traj = golden_angle_trajectory(g, 12, 2, 17);
    AcquisitionRecord rec = simulate_acquisition(gt, traj, birdcage(g, 2), 1e-3, 4);

    DmocoOptions opt;
    opt.rank = 2;
    opt.coarse_n = 6;
    opt.hidden = 8;
    opt.n_steps = 3;
    opt.iters = 12;
    opt.k_nearest = 4;
    opt.seed = 11;
    DmocoResult a = fit_dmoco(rec, nullptr, opt);
    DmocoResult b = fit_dmoco(rec, nullptr, opt);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i)
        for (int c = 0; c < 5; ++c) CHECK(a.history[i][std::size_t(c)] == b.history[i][std::size_t(c)]);
    const auto& ba = a.params.at(a.model.basis).value;
    const auto& bb = b.params.at(b.model.basis).value;
    REQUIRE(ba.size() == bb.size());
    bool same = true;
    for (std::size_t i = 0; i < ba.size(); ++i) same = same && ba[i] == bb[i];
    CHECK(same);

    DmocoOptions other = opt;
    other.seed = 12;
    DmocoResult c = fit_dmoco(rec, nullptr, other);
    bool differs = false;
    for (std::size_t i = 0; i < a.history.size() && !differs; ++i)
        differs = a.history[i][1] != c.history[i][1];
    CHECK(differs);
}

TEST_CASE("motion parameters warm start from a previous fit") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    ComplexField eta0 = complex_of(render_annulus(spec, {0.0, 0.0}, g));

    ImageFitOptions iopt;
    iopt.rank = 2;
    iopt.coarse_n = 6;
    iopt.hidden = 8;
    iopt.n_steps = 3;
    iopt.iters = 5;
    iopt.seed = 3;
    std::vector<ComplexField> targets = {complex_of(render_annulus(spec, {0.15, 0.0}, g))};
    DmocoResult warm = fit_dmoco_images(targets, {{0.15, 0.0}}, eta0, iopt);

    GroundTruth gt = static_ground_truth(spec, g, 12);
    Trajectory traj = golden_angle_trajectory(g, 12, 2, 17);
    AcquisitionRecord rec = simulate_acquisition(gt, traj, birdcage(g, 2), 0.0, 5);
    DmocoOptions opt;
    opt.rank = 2;
    opt.coarse_n = 6;
    opt.hidden = 8;
    opt.iters = 0;
    DmocoResult res = fit_dmoco(rec, &eta0, opt, &warm.params);

    CHECK(res.history.empty());
    const auto& eta_val = res.params.at(res.eta).value;
    REQUIRE(eta_val.size() == 2 * eta0.values.size());
    bool eta_same = true;
    for (std::size_t i = 0; i < eta0.values.size(); ++i) {
        eta_same = eta_same && eta_val[2 * i] == eta0.values[i].real();
        eta_same = eta_same && eta_val[2 * i + 1] == eta0.values[i].imag();
    }
    CHECK(eta_same);
    const auto& src = warm.params.at(warm.model.basis).value;
    const auto& dst = res.params.at(res.model.basis).value;
    REQUIRE(src.size() == dst.size());
    bool basis_same = true;
    for (std::size_t i = 0; i < src.size(); ++i) basis_same = basis_same && src[i] == dst[i];
    CHECK(basis_same);

    Grid small = default_phantom_grid(spec, 8);
    ComplexField wrong = complex_of(render_annulus(spec, {0.0, 0.0}, small));
    CHECK_THROWS_AS(fit_dmoco(rec, &wrong, opt), std::invalid_argument);
}

TEST_CASE("image domain fit recovers two rendered deformation states") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 32);
    ComplexField eta = complex_of(render_annulus(spec, {0.0, 0.0}, g));
    std::vector<PhaseSample> phases = {{0.15, 0.0}, {0.3, 0.0}};
    std::vector<ComplexField> targets;
    for (const auto& tau : phases) targets.push_back(complex_of(render_annulus(spec, tau, g)));

    ImageFitOptions opt;
    opt.rank = 2;
    opt.coarse_n = 8;
    opt.hidden = 16;
    opt.n_steps = 4;
    opt.iters = 800;
    opt.seed = 2;
    opt.log_every = 100;
    DmocoResult res = fit_dmoco_images(targets, phases, eta, opt);

    auto series = dmoco_series(res, phases, 4);
    for (std::size_t i = 0; i < phases.size(); ++i) {
        RealField want = magnitude(targets[i]);
        CHECK(nmse_percent(series[i].values, want.values) < 5.0);
    }

    // the degenerate rest-to-rest path never moves a node, so the series frame
    // at the rest phase is the template magnitude, bit for bit
    auto rest = dmoco_series(res, {{0.0, 0.0}}, 4);
    RealField eta_mag = magnitude(res.template_image());
    double dmax = 0.0;
    for (std::size_t i = 0; i < rest[0].values.size(); ++i)
        dmax = std::max(dmax, std::abs(rest[0].values[i] - eta_mag.values[i]));
    CHECK(dmax == 0.0);
}

TEST_CASE("image domain fit of identical targets keeps motion near zero") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    ComplexField eta = complex_of(render_annulus(spec, {0.0, 0.0}, g));
    std::vector<PhaseSample> phases = {{0.2, 0.1}, {0.6, 0.5}, {0.9, 0.8}};
    std::vector<ComplexField> targets(3, eta);

    ImageFitOptions opt;
    opt.rank = 2;
    opt.coarse_n = 6;
    opt.hidden = 8;
    opt.n_steps = 4;
    opt.iters = 200;
    opt.seed = 6;
    DmocoResult res = fit_dmoco_images(targets, phases, eta, opt);
    for (const auto& tau : phases) {
        VectorField u = flow_displacement(res.model, res.params, tau, g, 8);
        CHECK(mean_node_norm(u) < 0.1 * g.spacing[0]);
    }
    CHECK_THROWS_AS(fit_dmoco_images({}, {}, eta, opt), std::invalid_argument);
    CHECK_THROWS_AS(fit_dmoco_images(targets, {{0.2, 0.1}}, eta, opt), std::invalid_argument);
}

TEST_CASE("storm baseline fits a motion free record the same way") {
    AnnulusSpec spec;
    Grid g = default_phantom_grid(spec, 16);
    GroundTruth gt = static_ground_truth(spec, g, 30);
    Trajectory traj = golden_angle_trajectory(g, 30, 4, 17);
    AcquisitionRecord rec = simulate_acquisition(gt, traj, birdcage(g, 2), 0.0, 5);

    StormOptions opt;
    opt.rank = 2;
    opt.coarse_n = 8;
    opt.hidden = 8;
    opt.iters = 400;
    opt.k_nearest = 10;
    opt.seed = 5;
    StormResult res = fit_storm(rec, nullptr, opt);

    RealField eta_mag = magnitude(res.template_image());
    CHECK(nmse_percent(eta_mag.values, gt.frames[0].values) < 1.0);
    for (PhaseSample tau : {PhaseSample{0.25, 0.6}, PhaseSample{0.8, 0.1}}) {
        VectorField u = storm_displacement(res.model, res.params, tau, g);
        CHECK(mean_node_norm(u) < 0.1 * g.spacing[0]);
    }
    for (const auto& row : res.history) CHECK(row[3] == 0.0);  // no path term

    auto frames = storm_series(res, {{0.3, 0.4}});
    CHECK(frames.size() == 1);
    CHECK(frames[0].values.size() == g.n_points());
}

TEST_CASE("box smoothing keeps constants and crushes fast oscillation") {
    std::vector<double> flat(64, 0.75);
    auto smooth = lowpass_signal(flat, 15);
    for (double v : smooth) CHECK(v == 0.75);

    std::vector<double> x(40);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 == 0) ? 1.0 : -1.0;
    auto y3 = lowpass_signal(x, 3);
    CHECK(y3[7] == doctest::Approx(1.0 / 3.0));  // interior flips sign and shrinks 3x
    CHECK(y3[8] == doctest::Approx(-1.0 / 3.0));
    CHECK(y3[0] == doctest::Approx(1.0 / 3.0));  // reflected edge

    // an even window widens to the next odd one
    std::vector<double> z(50);
    Rng rng(9);
    for (auto& v : z) v = rng.gauss();
    auto even = lowpass_signal(z, 14);
    auto odd = lowpass_signal(z, 15);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(even[i] == odd[i]);

    auto tiny = lowpass_signal(z, 1);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(tiny[i] == z[i]);
    CHECK(lowpass_signal({}, 5).empty());
}

TEST_CASE("navigator lowpass keeps the slow feature and mutes the tone") {
    const std::size_t n_groups = 200, n_feat = 2;
    std::vector<double> nav(n_groups * n_feat);
    for (std::size_t t = 0; t < n_groups; ++t) {
        nav[t * n_feat + 0] = 1.0;
        nav[t * n_feat + 1] = std::sin(2.0 * M_PI * 5.0 * double(t) / 14.0);
    }
    auto out = lowpass_navigator(nav, n_groups, n_feat, 1.0, 14.0);
    double tone = 0.0;
    for (std::size_t t = 30; t < n_groups - 30; ++t) {
        CHECK(out[t * n_feat + 0] == 1.0);
        tone = std::max(tone, std::abs(out[t * n_feat + 1]));
    }
    CHECK(tone < 0.1);

    CHECK_THROWS_AS(lowpass_navigator(nav, n_groups, n_feat, 1.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(lowpass_navigator(nav, n_groups, n_feat, 0.0, 14.0), std::invalid_argument);
    CHECK_THROWS_AS(lowpass_navigator(nav, n_groups + 1, n_feat, 1.0, 14.0),
                    std::invalid_argument);
}

TEST_CASE("autoencoder flags a flat navigator without training") {
    std::vector<double> nav(8 * 5, 3.7);
    AeResult res = fit_respiratory_ae(nav, 8, 5, {});
    CHECK(res.degenerate);
    CHECK(res.loss_history.empty());
    REQUIRE(res.latent.size() == 8);
    for (double v : res.latent) CHECK(v == 0.0);
    for (double p : res.phase) CHECK(p == 0.5);

    CHECK_THROWS_AS(fit_respiratory_ae(nav, 7, 5, {}), std::invalid_argument);
    CHECK_THROWS_AS(fit_respiratory_ae({1.0, 2.0}, 1, 2, {}), std::invalid_argument);
}

TEST_CASE("autoencoder latent tracks a one dimensional breathing drive") {
    const std::size_t n_groups = 120, n_feat = 6;
    std::vector<double> profile = {1.0, -0.8, 0.6, 1.2, -0.5, 0.9};
    std::vector<double> offset = {0.0, 0.3, 0.6, 0.9, 1.2, 1.5};
    std::vector<double> drive(n_groups);
    std::vector<double> nav(n_groups * n_feat);
    for (std::size_t t = 0; t < n_groups; ++t) {
        drive[t] = std::sin(2.0 * M_PI * 3.5 * double(t) / double(n_groups));
        for (std::size_t f = 0; f < n_feat; ++f)
            nav[t * n_feat + f] = offset[f] + profile[f] * drive[t];
    }

    AeOptions opt;
    opt.hidden1 = 24;
    opt.hidden2 = 12;
    opt.iters = 600;
    opt.batch = 16;
    AeResult res = fit_respiratory_ae(nav, n_groups, n_feat, opt);
    CHECK_FALSE(res.degenerate);
    REQUIRE(res.latent.size() == n_groups);
    CHECK(std::abs(pearson_correlation(res.latent, drive)) > 0.99);
    double lo = *std::min_element(res.phase.begin(), res.phase.end());
    double hi = *std::max_element(res.phase.begin(), res.phase.end());
    CHECK(lo == doctest::Approx(0.0));
    CHECK(hi == doctest::Approx(1.0));
    CHECK(res.loss_history.size() == 600);

    AeResult rep = fit_respiratory_ae(nav, n_groups, n_feat, opt);
    bool same = true;
    for (std::size_t i = 0; i < n_groups; ++i) same = same && rep.latent[i] == res.latent[i];
    CHECK(same);
}
