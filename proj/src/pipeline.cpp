#include "moco/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "moco/acquisition.hpp"
#include "moco/metrics.hpp"
#include "moco/sha1.hpp"
#include "moco/volume_io.hpp"

namespace fs = std::filesystem;

namespace moco {

AnnulusSpec spec_from_config(const Config& cfg) {
    AnnulusSpec s;
    s.fov_mm = cfg.get_double("phantom.fov_mm");
    s.outer_radius0_mm = cfg.get_double("phantom.outer_radius_mm");
    s.inner_radius0_mm = cfg.get_double("phantom.inner_radius_mm");
    s.outer_contraction = cfg.get_double("phantom.outer_contraction");
    s.inner_contraction = cfg.get_double("phantom.inner_contraction");
    s.liver_radius_mm = cfg.get_double("phantom.liver_radius_mm");
    s.liver_displacement = cfg.get_double("phantom.liver_displacement");
    s.support_margin_mm = cfg.get_double("phantom.support_margin_mm");
    s.intensity_background = cfg.get_double("phantom.intensity_background");
    s.intensity_wall = cfg.get_double("phantom.intensity_wall");
    s.intensity_blood = cfg.get_double("phantom.intensity_blood");
    s.intensity_liver = cfg.get_double("phantom.intensity_liver");
    s.validate();
    return s;
}

MotionSchedule schedule_from_config(const Config& cfg) {
    MotionSchedule s;
    s.cardiac_period_s = cfg.get_double("schedule.cardiac_period_s");
    s.resp_period_s = cfg.get_double("schedule.resp_period_s");
    s.group_dt_s = cfg.get_double("schedule.group_dt_s");
    s.n_groups = int(cfg.get_int("schedule.n_groups"));
    return s;
}

Grid grid_from_config(const Config& cfg, const AnnulusSpec& spec) {
    int n = int(cfg.get_int("grid.n"));
    int dim = int(cfg.get_int("grid.dim"));
    return dim == 2 ? default_phantom_grid(spec, n) : default_phantom_grid_3d(spec, n);
}

Trajectory trajectory_from_config(const Config& cfg, const Grid& grid, int n_groups) {
    int spg = int(cfg.get_int("traj.spokes_per_group"));
    int sps = int(cfg.get_int("traj.samples_per_spoke"));
    if (sps == 0) sps = 2 * grid.dims[0] + 1;
    return grid.dim == 2 ? golden_angle_trajectory(grid, n_groups, spg, sps)
                         : phyllotaxis_trajectory_3d(grid, n_groups, spg, sps);
}

TextKv spec_to_kv(const AnnulusSpec& s) {
    TextKv kv;
    kv.set_double("fov_mm", s.fov_mm);
    kv.set_double("outer_radius0_mm", s.outer_radius0_mm);
    kv.set_double("inner_radius0_mm", s.inner_radius0_mm);
    kv.set_double("outer_contraction", s.outer_contraction);
    kv.set_double("inner_contraction", s.inner_contraction);
    kv.set_double("liver_center_x_mm", s.liver_center_x_mm);
    kv.set_double("liver_center_y_mm", s.liver_center_y_mm);
    kv.set_double("liver_radius_mm", s.liver_radius_mm);
    kv.set_double("liver_displacement", s.liver_displacement);
    kv.set_double("intensity_background", s.intensity_background);
    kv.set_double("intensity_wall", s.intensity_wall);
    kv.set_double("intensity_blood", s.intensity_blood);
    kv.set_double("intensity_liver", s.intensity_liver);
    kv.set_double("support_margin_mm", s.support_margin_mm);
    return kv;
}

AnnulusSpec spec_from_kv(const TextKv& kv) {
    AnnulusSpec s;
    s.fov_mm = kv.get_double("fov_mm");
    s.outer_radius0_mm = kv.get_double("outer_radius0_mm");
    s.inner_radius0_mm = kv.get_double("inner_radius0_mm");
    s.outer_contraction = kv.get_double("outer_contraction");
    s.inner_contraction = kv.get_double("inner_contraction");
    s.liver_center_x_mm = kv.get_double("liver_center_x_mm");
    s.liver_center_y_mm = kv.get_double("liver_center_y_mm");
    s.liver_radius_mm = kv.get_double("liver_radius_mm");
    s.liver_displacement = kv.get_double("liver_displacement");
    s.intensity_background = kv.get_double("intensity_background");
    s.intensity_wall = kv.get_double("intensity_wall");
    s.intensity_blood = kv.get_double("intensity_blood");
    s.intensity_liver = kv.get_double("intensity_liver");
    s.support_margin_mm = kv.get_double("support_margin_mm");
    s.validate();
    return s;
}

AnnulusSpec read_record_spec(const std::string& record_dir) {
    return spec_from_kv(TextKv::load(record_dir + "/phantom.hdr"));
}

void read_record_navigator(const std::string& record_dir, std::vector<double>& nav,
                           std::size_t& n_groups, std::size_t& n_feat) {
    TextKv hdr = TextKv::load(record_dir + "/nav.hdr");
    n_groups = std::size_t(hdr.get_int("n_groups"));
    n_feat = std::size_t(hdr.get_int("n_feat"));
    std::ifstream f(record_dir + "/nav.f32", std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open " + record_dir + "/nav.f32");
    std::vector<float> buf(n_groups * n_feat);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
    if (std::size_t(f.gcount()) != buf.size() * 4)
        throw std::invalid_argument("navigator blob truncated");
    nav.assign(buf.begin(), buf.end());
}

namespace {

std::string two_digits(int v) {
    char b[16];
    std::snprintf(b, sizeof(b), "%02d", v);
    return b;
}

std::string four_digits(int v) {
    char b[16];
    std::snprintf(b, sizeof(b), "%04d", v);
    return b;
}

void grid_to_kv(TextKv& kv, const Grid& g) {
    kv.set_int("grid_dim", g.dim);
    kv.set_ints("grid_dims", {g.dims[0], g.dims[1], g.dims[2]});
    kv.set_doubles("grid_spacing", {g.spacing[0], g.spacing[1], g.spacing[2]});
    kv.set_doubles("grid_origin", {g.origin[0], g.origin[1], g.origin[2]});
}

void check_grid_matches(const TextKv& kv, const Grid& g, const char* what) {
    auto dims = kv.get_ints("grid_dims");
    auto sp = kv.get_doubles("grid_spacing");
    auto on = kv.get_doubles("grid_origin");
    bool ok = kv.get_int("grid_dim") == g.dim;
    for (int a = 0; a < 3 && ok; ++a)
        ok = dims[std::size_t(a)] == g.dims[std::size_t(a)] &&
             std::abs(sp[std::size_t(a)] - g.spacing[std::size_t(a)]) < 1e-9 &&
             std::abs(on[std::size_t(a)] - g.origin[std::size_t(a)]) < 1e-9;
    if (!ok)
        throw std::invalid_argument(std::string(what) +
                                    ": checkpoint grid does not match the record grid");
}

/// Collects this invocation's outputs so a failure can remove the partial
/// results, and writes the manifest on success.
class CmdScope {
  public:
    CmdScope(const RunContext& ctx, std::string subcommand)
        : ctx_(ctx), sub_(std::move(subcommand)), start_(std::chrono::steady_clock::now()) {
        if (ctx.out_dir.empty())
            throw std::invalid_argument(sub_ + ": --out is required");
        fs::create_directories(ctx.out_dir);
    }

    /// Absolute path under the output directory, recorded as an output.
    std::string out(const std::string& rel) {
        std::string p = ctx_.out_dir + "/" + rel;
        outputs_.push_back(p);
        return p;
    }
    /// Record a volume path (data file plus header sidecar).
    std::string out_vol(const std::string& rel) {
        std::string p = out(rel);
        outputs_.push_back(p + ".hdr");
        return p;
    }
    void track(const std::string& abs) { outputs_.push_back(abs); }

    void input(const std::string& path) { inputs_.push_back(path); }

    void done() {
        TextKv m;
        m.set("subcommand", sub_);
        std::string cmd;
        for (const auto& a : ctx_.command_line) cmd += (cmd.empty() ? "" : " ") + a;
        m.set("command", cmd);
        m.set_int("seed", (long long)ctx_.seed);
        m.set_int("threads", ctx_.threads);
        TextKv cfg = ctx_.cfg.resolved();
        for (const auto& k : cfg.keys()) m.set("cfg." + k, cfg.get(k));
        for (std::size_t i = 0; i < inputs_.size(); ++i) {
            m.set("input." + std::to_string(i) + ".path", inputs_[i]);
            m.set("input." + std::to_string(i) + ".blob", git_blob_hash(inputs_[i]));
        }
        for (std::size_t i = 0; i < outputs_.size(); ++i)
            m.set("output." + std::to_string(i), outputs_[i]);
        double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        m.set_double("wall_s", wall);
        m.save(ctx_.out_dir + "/manifest.txt");
        done_ = true;
    }

    ~CmdScope() {
        if (done_) return;
        std::error_code ec;
        for (const auto& p : outputs_) fs::remove(p, ec);
    }

  private:
    const RunContext& ctx_;
    std::string sub_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
    bool done_ = false;
};

void require_record(const RunContext& ctx, const char* what) {
    if (ctx.record_dir.empty())
        throw std::invalid_argument(std::string(what) + ": --record is required");
}

void require_checkpoint(const RunContext& ctx, const char* what) {
    if (ctx.checkpoint.empty())
        throw std::invalid_argument(std::string(what) + ": --checkpoint is required");
}

void track_record_files(CmdScope& scope, const std::string& dir, int n_coils) {
    scope.track(dir + "/record.hdr");
    scope.track(dir + "/samples.f32");
    scope.track(dir + "/phases.csv");
    for (int c = 0; c < n_coils; ++c) {
        scope.track(dir + "/coils/coil_" + two_digits(c) + ".vol");
        scope.track(dir + "/coils/coil_" + two_digits(c) + ".vol.hdr");
    }
}

std::vector<PhaseSample> load_resp_csv_phases(const std::vector<PhaseSample>& phases,
                                              const std::string& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw std::invalid_argument("cannot open respiratory phase file " + csv_path);
    std::string line;
    std::getline(f, line);  // header
    std::vector<double> phase;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        long g;
        double p, lat;
        int got = std::sscanf(line.c_str(), "%ld,%lf,%lf", &g, &p, &lat);
        if (got < 2) throw std::invalid_argument("bad line in " + csv_path);
        phase.push_back(p);
    }
    if (phase.size() != phases.size())
        throw std::invalid_argument("respiratory phase file row count does not match the record");
    auto out = phases;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].r = phase[i];
    return out;
}

AcquisitionRecord load_record_for_fit(const RunContext& ctx, const std::string& prefix) {
    AcquisitionRecord rec = read_record(ctx.record_dir);
    const std::string source = ctx.cfg.get_string(prefix + ".resp_source");
    if (source == "ae") {
        const std::string csv = ctx.cfg.get_string(prefix + ".resp_csv");
        if (csv.empty())
            throw std::invalid_argument(prefix + ".resp_source=ae requires " + prefix +
                                        ".resp_csv");
        rec.phases = load_resp_csv_phases(rec.phases, csv);
    }
    return rec;
}

BinnedRecon binned_recon(const AcquisitionRecord& rec, const RunContext& ctx) {
    auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);
    BinnedRecon br = binned_tikhonov(rec, op, int(ctx.cfg.get_int("init.n_cardiac")),
                                     int(ctx.cfg.get_int("init.n_resp")),
                                     ctx.cfg.get_double("init.lambda"),
                                     int(ctx.cfg.get_int("init.cg_iters")));
    if (br.bins.groups_in_bin[std::size_t(br.template_bin)].empty())
        throw std::runtime_error("template phase bin holds no readout groups; use init=adjoint");
    return br;
}

/// Targets for the image-domain motion fit: the non-empty bins' images at
/// their bin-centre phases.
void binned_targets(const BinnedRecon& br, std::vector<ComplexField>& targets,
                    std::vector<PhaseSample>& phases) {
    for (std::size_t b = 0; b < br.images.size(); ++b) {
        if (br.bins.groups_in_bin[b].empty()) continue;
        targets.push_back(br.images[b]);
        phases.push_back(br.bins.bin_center[b]);
    }
}

ImageFitOptions imgfit_options(const RunContext& ctx) {
    const Config& c = ctx.cfg;
    ImageFitOptions o;
    o.rank = int(c.get_int("fit.rank"));
    o.coarse_n = int(c.get_int("fit.coarse_n"));
    o.hidden = int(c.get_int("fit.hidden"));
    o.n_steps = int(c.get_int("fit.n_steps"));
    o.iters = int(c.get_int("imgfit.iters"));
    o.lr_basis = c.get_double("imgfit.lr_basis");
    o.lr_net = c.get_double("imgfit.lr_net");
    o.lambda_path = c.get_double("fit.lambda_path");
    o.path_jitter = c.get_double("fit.path_jitter");
    o.seed = ctx.seed;
    o.log_every = int(c.get_int("imgfit.log_every"));
    o.divergence_factor = c.get_double("imgfit.divergence_factor");
    return o;
}

DmocoOptions dmoco_options(const RunContext& ctx) {
    const Config& c = ctx.cfg;
    DmocoOptions o;
    o.rank = int(c.get_int("fit.rank"));
    o.coarse_n = int(c.get_int("fit.coarse_n"));
    o.hidden = int(c.get_int("fit.hidden"));
    o.n_steps = int(c.get_int("fit.n_steps"));
    o.iters = int(c.get_int("fit.iters"));
    o.k_nearest = int(c.get_int("fit.k_nearest"));
    o.lr_template = c.get_double("fit.lr_template");
    o.lr_basis = c.get_double("fit.lr_basis");
    o.lr_net = c.get_double("fit.lr_net");
    o.lambda_path = c.get_double("fit.lambda_path");
    o.lambda_smooth = c.get_double("fit.lambda_smooth");
    o.path_jitter = c.get_double("fit.path_jitter");
    o.seed = ctx.seed;
    o.log_every = int(c.get_int("fit.log_every"));
    o.divergence_factor = c.get_double("fit.divergence_factor");
    return o;
}

StormOptions storm_options(const RunContext& ctx) {
    const Config& c = ctx.cfg;
    StormOptions o;
    o.rank = int(c.get_int("storm.rank"));
    o.coarse_n = int(c.get_int("storm.coarse_n"));
    o.hidden = int(c.get_int("storm.hidden"));
    o.iters = int(c.get_int("storm.iters"));
    o.k_nearest = int(c.get_int("storm.k_nearest"));
    o.lr_template = c.get_double("storm.lr_template");
    o.lr_basis = c.get_double("storm.lr_basis");
    o.lr_net = c.get_double("storm.lr_net");
    o.lambda_smooth = c.get_double("storm.lambda_smooth");
    o.seed = ctx.seed;
    o.log_every = int(c.get_int("storm.log_every"));
    o.divergence_factor = c.get_double("storm.divergence_factor");
    return o;
}

std::vector<int> strided_groups(int n_groups, int stride) {
    std::vector<int> g;
    for (int i = 0; i < n_groups; i += stride) g.push_back(i);
    return g;
}

int liver_column(const AnnulusSpec& spec, const Grid& g) {
    int ci = int(std::lround((spec.liver_center_x_mm - g.origin[0]) / g.spacing[0]));
    return std::clamp(ci, 0, g.dims[0] - 1);
}

}  // namespace

ModelBundle load_model_bundle(const std::string& checkpoint, const Grid& grid) {
    TextKv meta;
    ParamSet loaded = load_checkpoint(checkpoint, meta);
    check_grid_matches(meta, grid, "load_model_bundle");
    ModelBundle mb;
    mb.kind = meta.get("kind");
    Rng rng(0);  // placeholder init, every value is overwritten below
    if (mb.kind == "dmoco") {
        DmocoResult& r = mb.dmoco;
        r.grid = grid;
        r.eta = r.params.add("eta", std::vector<double>(2 * grid.n_points(), 0.0));
        r.model = make_velocity_model(r.params, grid, int(meta.get_int("coarse_n")),
                                      int(meta.get_int("rank")), int(meta.get_int("hidden")), rng);
        r.model.n_steps_fit = int(meta.get_int("n_steps"));
        copy_values_by_name(loaded, r.params);
    } else if (mb.kind == "storm") {
        StormResult& r = mb.storm;
        r.grid = grid;
        r.eta = r.params.add("eta", std::vector<double>(2 * grid.n_points(), 0.0));
        r.model = make_storm_model(r.params, grid, int(meta.get_int("coarse_n")),
                                   int(meta.get_int("rank")), int(meta.get_int("hidden")), rng);
        copy_values_by_name(loaded, r.params);
    } else {
        throw std::invalid_argument("unknown checkpoint kind '" + mb.kind + "'");
    }
    return mb;
}

std::vector<RealField> bundle_series(const ModelBundle& mb, const std::vector<PhaseSample>& phases,
                                     int n_steps) {
    if (mb.kind == "dmoco") return dmoco_series(mb.dmoco, phases, n_steps);
    return storm_series(mb.storm, phases);
}

void cmd_phantom(const RunContext& ctx) {
    CmdScope scope(ctx, "phantom");
    AnnulusSpec spec = spec_from_config(ctx.cfg);
    MotionSchedule sched = schedule_from_config(ctx.cfg);
    Grid grid = grid_from_config(ctx.cfg, spec);
    GroundTruth gt = generate_ground_truth(spec, sched, grid);

    spec_to_kv(spec).save(scope.out("phantom.hdr"));
    write_volume(scope.out_vol("template.vol"), render_annulus(spec, {0.0, 0.0}, grid));
    {
        std::ofstream csv(scope.out("resp.csv"));
        csv << "group,t,c,r,drive\n";
        for (int g = 0; g < sched.n_groups; ++g)
            csv << g << ',' << sched.sample_time(g) << ',' << gt.phases[std::size_t(g)].c << ','
                << gt.phases[std::size_t(g)].r << ',' << gt.resp_signal[std::size_t(g)] << '\n';
    }
    const int stride = ctx.cfg.get_bool("phantom.write_all_frames")
                           ? 1
                           : int(ctx.cfg.get_int("phantom.preview_stride"));
    for (int g = 0; g < sched.n_groups; g += stride)
        write_volume(scope.out_vol("frame_" + four_digits(g) + ".vol"), gt.frames[std::size_t(g)]);
    if (grid.dim == 2) {
        write_pgm(scope.out("template.pgm"), render_annulus(spec, {0.0, 0.0}, grid));
        write_pgm(scope.out("inhale.pgm"), render_annulus(spec, {0.0, 0.5}, grid));
    }
    scope.done();
}

void cmd_acquire(const RunContext& ctx) {
    CmdScope scope(ctx, "acquire");
    AnnulusSpec spec = spec_from_config(ctx.cfg);
    MotionSchedule sched = schedule_from_config(ctx.cfg);
    Grid grid = grid_from_config(ctx.cfg, spec);
    GroundTruth gt = generate_ground_truth(spec, sched, grid);
    Trajectory traj = trajectory_from_config(ctx.cfg, grid, sched.n_groups);
    int n_coils = int(ctx.cfg.get_int("acquire.n_coils"));
    auto coils = std::make_shared<CoilMaps>(
        make_birdcage_coils(grid, n_coils, ctx.cfg.get_double("acquire.coil_sigma_frac")));
    auto mode = ctx.cfg.get_string("acquire.mode") == "direct" ? MulticoilNudft::Mode::direct
                                                               : MulticoilNudft::Mode::fast;
    AcquisitionRecord rec = simulate_acquisition(gt, traj, coils,
                                                 ctx.cfg.get_double("acquire.noise_sigma"),
                                                 ctx.seed, mode);
    write_record(ctx.out_dir, rec);
    track_record_files(scope, ctx.out_dir, n_coils);
    spec_to_kv(spec).save(scope.out("phantom.hdr"));

    auto nav = simulate_navigator(gt, int(ctx.cfg.get_int("nav.channels")),
                                  ctx.cfg.get_double("nav.noise_sigma"), ctx.seed + 1);
    const std::size_t n_feat = nav.empty() ? 0 : nav[0].size();
    {
        TextKv hdr;
        hdr.set_int("n_groups", (long long)nav.size());
        hdr.set_int("n_feat", (long long)n_feat);
        hdr.set_int("channels", ctx.cfg.get_int("nav.channels"));
        hdr.set_double("noise_sigma", ctx.cfg.get_double("nav.noise_sigma"));
        hdr.save(scope.out("nav.hdr"));
        std::ofstream f(scope.out("nav.f32"), std::ios::binary);
        std::vector<float> buf(n_feat);
        for (const auto& row : nav) {
            for (std::size_t i = 0; i < n_feat; ++i) buf[i] = float(row[i]);
            f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(n_feat * 4));
        }
        if (!f) throw std::runtime_error("cmd_acquire: failed writing nav.f32");
    }
    scope.done();
}

void cmd_nav_ae(const RunContext& ctx) {
    require_record(ctx, "nav-ae");
    CmdScope scope(ctx, "nav-ae");
    scope.input(ctx.record_dir + "/nav.hdr");
    scope.input(ctx.record_dir + "/nav.f32");
    std::vector<double> nav;
    std::size_t n_groups = 0, n_feat = 0;
    read_record_navigator(ctx.record_dir, nav, n_groups, n_feat);
    AcquisitionRecord rec = read_record(ctx.record_dir);

    // suppress cardiac beating in the navigator before the encoder sees it
    double sample_rate_hz = 1.0 / rec.schedule.group_dt_s;
    std::vector<double> filtered =
        lowpass_navigator(nav, n_groups, n_feat, ctx.cfg.get_double("ae.cutoff_hz"), sample_rate_hz);

    AeOptions opt;
    opt.hidden1 = int(ctx.cfg.get_int("ae.hidden1"));
    opt.hidden2 = int(ctx.cfg.get_int("ae.hidden2"));
    opt.iters = int(ctx.cfg.get_int("ae.iters"));
    opt.batch = int(ctx.cfg.get_int("ae.batch"));
    opt.lr = ctx.cfg.get_double("ae.lr");
    opt.seed = ctx.seed;
    AeResult res = fit_respiratory_ae(filtered, n_groups, n_feat, opt);

    {
        std::ofstream csv(scope.out("resp_ae.csv"));
        csv << "group,phase,latent\n";
        for (std::size_t g = 0; g < n_groups; ++g)
            csv << g << ',' << res.phase[g] << ',' << res.latent[g] << '\n';
    }
    {
        std::ofstream csv(scope.out("ae_loss.csv"));
        csv << "iter,loss\n";
        for (std::size_t i = 0; i < res.loss_history.size(); ++i)
            csv << i << ',' << res.loss_history[i] << '\n';
    }
    // agreement with the stored respiratory drive
    std::vector<double> drive(rec.phases.size());
    for (std::size_t g = 0; g < drive.size(); ++g) drive[g] = raised_cosine(rec.phases[g].r);
    double corr = pearson_correlation(res.phase, drive);
    TextKv sum;
    sum.set_int("n_groups", (long long)n_groups);
    sum.set_int("n_feat", (long long)n_feat);
    sum.set_double("sample_rate_hz", sample_rate_hz);
    sum.set_int("degenerate", res.degenerate ? 1 : 0);
    sum.set_double("final_loss", res.loss_history.empty() ? 0.0 : res.loss_history.back());
    sum.set_double("corr_with_drive", corr);
    sum.set_double("abs_corr_with_drive", std::abs(corr));
    sum.save(scope.out("summary.txt"));
    scope.done();
}

void cmd_init(const RunContext& ctx) {
    require_record(ctx, "init");
    CmdScope scope(ctx, "init");
    scope.input(ctx.record_dir + "/record.hdr");
    scope.input(ctx.record_dir + "/samples.f32");
    AcquisitionRecord rec = read_record(ctx.record_dir);
    auto op = make_record_operator(rec, MulticoilNudft::Mode::fast);
    BinnedRecon res = binned_tikhonov(rec, op, int(ctx.cfg.get_int("init.n_cardiac")),
                                      int(ctx.cfg.get_int("init.n_resp")),
                                      ctx.cfg.get_double("init.lambda"),
                                      int(ctx.cfg.get_int("init.cg_iters")));
    {
        std::ofstream csv(scope.out("bins.csv"));
        csv << "bin,cardiac,resp,groups,center_c,center_r\n";
        for (int b = 0; b < res.bins.n_cardiac * res.bins.n_resp; ++b)
            csv << b << ',' << b / res.bins.n_resp << ',' << b % res.bins.n_resp << ','
                << res.bins.groups_in_bin[std::size_t(b)].size() << ','
                << res.bins.bin_center[std::size_t(b)].c << ','
                << res.bins.bin_center[std::size_t(b)].r << '\n';
    }
    for (std::size_t b = 0; b < res.images.size(); ++b)
        write_volume(scope.out_vol("bin_" + two_digits(int(b)) + ".vol"), res.images[b]);
    write_volume(scope.out_vol("template.vol"), res.images[std::size_t(res.template_bin)]);
    if (rec.grid.dim == 2)
        write_pgm(scope.out("template.pgm"), magnitude(res.images[std::size_t(res.template_bin)]));
    scope.done();
}

namespace {

void save_fit_outputs(CmdScope& scope, const ParamSet& params, const Grid& grid,
                      const ComplexField& tmpl, const TextKv& meta) {
    std::string ck = scope.out("model.ckpt");
    scope.track(ck + ".f32");
    save_checkpoint(ck, params, meta);
    write_volume(scope.out_vol("template.vol"), tmpl);
    if (grid.dim == 2) write_pgm(scope.out("template.pgm"), magnitude(tmpl));
}

}  // namespace

void cmd_fit(const RunContext& ctx) {
    require_record(ctx, "fit");
    CmdScope scope(ctx, "fit");
    scope.input(ctx.record_dir + "/record.hdr");
    scope.input(ctx.record_dir + "/samples.f32");
    AcquisitionRecord rec = load_record_for_fit(ctx, "fit");

    DmocoOptions opt = dmoco_options(ctx);
    opt.log_csv = scope.out("loss.csv");
    DmocoResult res;
    if (ctx.cfg.get_string("fit.init") == "bins") {
        BinnedRecon br = binned_recon(rec, ctx);
        ComplexField eta0 = br.images[std::size_t(br.template_bin)];
        if (ctx.cfg.get_bool("init.motion")) {
            // warm-start the motion parameters on the bin images before
            // touching k-space
            std::vector<ComplexField> targets;
            std::vector<PhaseSample> centers;
            binned_targets(br, targets, centers);
            ImageFitOptions io = imgfit_options(ctx);
            io.log_csv = scope.out("init_loss.csv");
            DmocoResult warm = fit_dmoco_images(targets, centers, eta0, io);
            res = fit_dmoco(rec, &eta0, opt, &warm.params);
        } else {
            res = fit_dmoco(rec, &eta0, opt);
        }
    } else {
        res = fit_dmoco(rec, nullptr, opt);
    }

    TextKv meta;
    meta.set("kind", "dmoco");
    meta.set_int("rank", opt.rank);
    meta.set_int("coarse_n", opt.coarse_n);
    meta.set_int("hidden", opt.hidden);
    meta.set_int("n_steps", opt.n_steps);
    grid_to_kv(meta, rec.grid);
    save_fit_outputs(scope, res.params, rec.grid, res.template_image(), meta);
    scope.done();
}

void cmd_fit_storm(const RunContext& ctx) {
    require_record(ctx, "fit-storm");
    CmdScope scope(ctx, "fit-storm");
    scope.input(ctx.record_dir + "/record.hdr");
    scope.input(ctx.record_dir + "/samples.f32");
    AcquisitionRecord rec = load_record_for_fit(ctx, "storm");

    StormOptions opt = storm_options(ctx);
    opt.log_csv = scope.out("loss.csv");
    StormResult res;
    if (ctx.cfg.get_string("storm.init") == "bins") {
        BinnedRecon br = binned_recon(rec, ctx);
        ComplexField eta0 = br.images[std::size_t(br.template_bin)];
        res = fit_storm(rec, &eta0, opt);
    } else {
        res = fit_storm(rec, nullptr, opt);
    }

    TextKv meta;
    meta.set("kind", "storm");
    meta.set_int("rank", opt.rank);
    meta.set_int("coarse_n", opt.coarse_n);
    meta.set_int("hidden", opt.hidden);
    meta.set_int("n_steps", 1);
    grid_to_kv(meta, rec.grid);
    save_fit_outputs(scope, res.params, rec.grid, res.template_image(), meta);
    scope.done();
}

void cmd_recon_mor(const RunContext& ctx) {
    require_record(ctx, "recon-mor");
    CmdScope scope(ctx, "recon-mor");
    scope.input(ctx.record_dir + "/record.hdr");
    scope.input(ctx.record_dir + "/samples.f32");
    AcquisitionRecord rec = read_record(ctx.record_dir);

    MorOptions opt;
    opt.n_cardiac = int(ctx.cfg.get_int("mor.n_cardiac"));
    opt.n_resp = int(ctx.cfg.get_int("mor.n_resp"));
    opt.lambda_tv = ctx.cfg.get_double("mor.lambda_tv");
    opt.epsilon = ctx.cfg.get_double("mor.epsilon");
    opt.outer_iters = int(ctx.cfg.get_int("mor.outer_iters"));
    opt.cg_iters = int(ctx.cfg.get_int("mor.cg_iters"));
    MorResult res = motion_resolved_recon(rec, opt);

    TextKv hdr;
    hdr.set_int("n_cardiac", opt.n_cardiac);
    hdr.set_int("n_resp", opt.n_resp);
    hdr.set_double("lambda_tv", opt.lambda_tv);
    grid_to_kv(hdr, rec.grid);
    hdr.save(scope.out("mor.hdr"));
    {
        std::ofstream csv(scope.out("bins.csv"));
        csv << "bin,cardiac,resp,groups,center_c,center_r\n";
        for (int b = 0; b < opt.n_cardiac * opt.n_resp; ++b)
            csv << b << ',' << b / opt.n_resp << ',' << b % opt.n_resp << ','
                << res.bins.groups_in_bin[std::size_t(b)].size() << ','
                << res.bins.bin_center[std::size_t(b)].c << ','
                << res.bins.bin_center[std::size_t(b)].r << '\n';
    }
    for (std::size_t b = 0; b < res.images.size(); ++b)
        write_volume(scope.out_vol("bin_" + two_digits(int(b)) + ".vol"), res.images[b]);
    scope.done();
}

void cmd_series(const RunContext& ctx) {
    require_record(ctx, "series");
    require_checkpoint(ctx, "series");
    CmdScope scope(ctx, "series");
    scope.input(ctx.record_dir + "/record.hdr");
    scope.input(ctx.checkpoint);
    scope.input(ctx.checkpoint + ".f32");
    AcquisitionRecord rec = read_record(ctx.record_dir);
    AnnulusSpec spec = read_record_spec(ctx.record_dir);
    ModelBundle mb = load_model_bundle(ctx.checkpoint, rec.grid);

    const int stride = int(ctx.cfg.get_int("series.stride"));
    auto groups = strided_groups(rec.traj.n_groups, stride);
    std::vector<PhaseSample> phases;
    for (int g : groups) phases.push_back(rec.phases[std::size_t(g)]);
    auto frames = bundle_series(mb, phases, int(ctx.cfg.get_int("series.n_steps")));

    {
        std::ofstream csv(scope.out("frames.csv"));
        csv << "index,group,t,c,r\n";
        for (std::size_t i = 0; i < groups.size(); ++i)
            csv << i << ',' << groups[i] << ',' << rec.schedule.sample_time(groups[i]) << ','
                << phases[i].c << ',' << phases[i].r << '\n';
    }
    for (std::size_t i = 0; i < frames.size(); ++i)
        write_volume(scope.out_vol("frame_" + four_digits(int(i)) + ".vol"), frames[i]);
    if (rec.grid.dim == 2) {
        int col = int(ctx.cfg.get_int("series.column"));
        if (col < 0) col = liver_column(spec, rec.grid);
        scope.track(ctx.out_dir + "/time_profile.csv");
        scope.track(ctx.out_dir + "/time_profile.pgm");
        write_time_profile(ctx.out_dir + "/time_profile", frames, col);
    }
    scope.done();
}

namespace {

struct EvalData {
    std::vector<int> groups;
    std::vector<PhaseSample> phases;
    std::vector<RealField> frames;     // reconstruction
    std::vector<RealField> gt_frames;  // rendered truth
    std::vector<VectorField> disp;     // model displacement per phase, empty for mor
};

EvalData eval_frames(const RunContext& ctx, const AcquisitionRecord& rec, const AnnulusSpec& spec) {
    EvalData ev;
    const int stride = int(ctx.cfg.get_int("eval.stride"));
    ev.groups = strided_groups(rec.traj.n_groups, stride);
    for (int g : ev.groups) ev.phases.push_back(rec.phases[std::size_t(g)]);
    for (const auto& tau : ev.phases) ev.gt_frames.push_back(render_annulus(spec, tau, rec.grid));

    if (!ctx.checkpoint.empty()) {
        ModelBundle mb = load_model_bundle(ctx.checkpoint, rec.grid);
        const int n_steps = int(ctx.cfg.get_int("eval.n_steps"));
        ev.frames = bundle_series(mb, ev.phases, n_steps);
        for (const auto& tau : ev.phases)
            ev.disp.push_back(mb.kind == "dmoco"
                                  ? flow_displacement(mb.dmoco.model, mb.dmoco.params, tau,
                                                      rec.grid, n_steps)
                                  : storm_displacement(mb.storm.model, mb.storm.params, tau,
                                                       rec.grid));
    } else {
        TextKv hdr = TextKv::load(ctx.mor_dir + "/mor.hdr");
        int nc = int(hdr.get_int("n_cardiac"));
        int nr = int(hdr.get_int("n_resp"));
        BinAssignment bins = bin_phases(rec.phases, nc, nr);
        std::vector<RealField> bin_mag;
        for (int b = 0; b < nc * nr; ++b)
            bin_mag.push_back(magnitude(
                read_complex_volume(ctx.mor_dir + "/bin_" + two_digits(b) + ".vol")));
        for (int g : ev.groups) ev.frames.push_back(bin_mag[std::size_t(bins.bin_of_group[std::size_t(g)])]);
    }
    return ev;
}

/// RMS deviation from the analytic deformation over the moving region,
/// aggregated across the eval phases. NaN when the source has no deformations.
double eval_deformation_error(const EvalData& ev, const AcquisitionRecord& rec,
                              const AnnulusSpec& spec) {
    if (ev.disp.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<VectorField> gt_u;
    for (const auto& tau : ev.phases) gt_u.push_back(ground_truth_deformation(spec, tau, rec.grid));
    auto mask = motion_mask(gt_u);
    double acc = 0.0;
    for (std::size_t p = 0; p < ev.phases.size(); ++p) {
        double e = deformation_error_rms(ev.disp[p], gt_u[p], &mask);
        acc += e * e;
    }
    return std::sqrt(acc / double(ev.phases.size()));
}

}  // namespace

void cmd_eval(const RunContext& ctx) {
    require_record(ctx, "eval");
    if (ctx.checkpoint.empty() == ctx.mor_dir.empty())
        throw std::invalid_argument("eval: exactly one of --checkpoint or --mor is required");
    CmdScope scope(ctx, "eval");
    scope.input(ctx.record_dir + "/record.hdr");
    scope.input(ctx.record_dir + "/samples.f32");
    if (!ctx.checkpoint.empty()) {
        scope.input(ctx.checkpoint);
        scope.input(ctx.checkpoint + ".f32");
    } else {
        scope.input(ctx.mor_dir + "/mor.hdr");
    }
    AcquisitionRecord rec = read_record(ctx.record_dir);
    AnnulusSpec spec = read_record_spec(ctx.record_dir);

    EvalData ev = eval_frames(ctx, rec, spec);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double mean_psnr = 0.0, mean_ssim = 0.0, mean_md = 0.0;
    {
        std::ofstream csv(scope.out("metrics.csv"));
        csv << "group,t,c,r,psnr_db,ssim,md_mm\n";
        for (std::size_t i = 0; i < ev.groups.size(); ++i) {
            double p = psnr(ev.frames[i], ev.gt_frames[i]);
            double s = rec.grid.dim == 2 ? ssim(ev.frames[i], ev.gt_frames[i]) : 0.0;
            double m = ev.disp.empty() ? nan : deformation_magnitude(ev.disp[i]);
            mean_psnr += p;
            mean_ssim += s;
            mean_md += m;
            csv << ev.groups[i] << ',' << rec.schedule.sample_time(ev.groups[i]) << ','
                << ev.phases[i].c << ',' << ev.phases[i].r << ',' << p << ',' << s << ',' << m
                << '\n';
        }
        mean_psnr /= double(ev.groups.size());
        mean_ssim /= double(ev.groups.size());
        mean_md /= double(ev.groups.size());
    }
    double def_err = eval_deformation_error(ev, rec, spec);
    double rd = nan;
    if (rec.grid.dim == 2) {
        try {
            rd = respiratory_displacement(ev.frames, spec);
        } catch (const std::exception&) {
            // no usable liver edge in some frame; leave the metric undefined
        }
    }
    double rd_ref = spec.liver_displacement * spec.fov_mm;

    TextKv sum;
    sum.set_int("n_frames", (long long)ev.groups.size());
    sum.set_double("mean_psnr_db", mean_psnr);
    sum.set_double("mean_ssim", mean_ssim);
    sum.set_double("mean_md_mm", mean_md);
    sum.set_double("def_err_mm", def_err);
    sum.set_double("rd_mm", rd);
    sum.set_double("rd_ref_mm", rd_ref);
    sum.set_double("rd_rel_err", std::abs(rd - rd_ref) / rd_ref);
    sum.save(scope.out("summary.txt"));
    scope.done();
}

void cmd_rank_study(const RunContext& ctx) {
    CmdScope scope(ctx, "rank-study");
    AnnulusSpec spec = spec_from_config(ctx.cfg);
    MotionSchedule sched = schedule_from_config(ctx.cfg);
    Grid g = grid_from_config(ctx.cfg, spec);
    GroundTruth gt = generate_ground_truth(spec, sched, g);

    // truth frames at the bin centres stand in for a converged motion model
    int nc = int(ctx.cfg.get_int("rank.n_cardiac"));
    int nr = int(ctx.cfg.get_int("rank.n_resp"));
    RankStudyInput in;
    for (int ic = 0; ic < nc; ++ic)
        for (int ir = 0; ir < nr; ++ir)
            in.bin_phases.push_back({(ic + 0.5) / double(nc), (ir + 0.5) / double(nr)});
    for (const auto& tau : in.bin_phases) in.bin_frames.push_back(render_annulus(spec, tau, g));
    in.all_frames = gt.frames;
    in.n_steps = int(ctx.cfg.get_int("rank.n_steps"));
    in.max_rank = int(ctx.cfg.get_int("rank.max"));

    RealField tmpl = render_annulus(spec, {0.0, 0.0}, g);
    ComplexField eta(g);
    for (std::size_t i = 0; i < eta.values.size(); ++i) eta.values[i] = tmpl.values[i];

    std::vector<ComplexField> targets;
    for (const auto& f : in.bin_frames) {
        ComplexField t(g);
        for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = f.values[i];
        targets.push_back(std::move(t));
    }
    ImageFitOptions io = imgfit_options(ctx);
    io.log_csv = scope.out("fit_loss.csv");
    DmocoResult fit = fit_dmoco_images(targets, in.bin_phases, eta, io);

    RankStudyResult res = rank_study(fit.model, fit.params, fit.template_image(), in);
    save_rank_study_csv(scope.out("rank_study.csv"), res);
    write_curve_plot_pgm(scope.out("rank_study.pgm"),
                         {res.err_velocity, res.err_deformation, res.err_image});
    scope.done();
}

void cmd_ablate_velocity_constraint(const RunContext& ctx) {
    require_record(ctx, "ablate-velocity-constraint");
    CmdScope scope(ctx, "ablate-velocity-constraint");
    scope.input(ctx.record_dir + "/record.hdr");
    scope.input(ctx.record_dir + "/samples.f32");
    AcquisitionRecord rec = read_record(ctx.record_dir);

    BinnedRecon br = binned_recon(rec, ctx);
    ComplexField eta0 = br.images[std::size_t(br.template_bin)];
    std::vector<ComplexField> targets;
    std::vector<PhaseSample> centers;
    binned_targets(br, targets, centers);
    std::vector<RealField> target_mag;
    for (const auto& t : targets) target_mag.push_back(magnitude(t));
    const int n_steps_eval = int(ctx.cfg.get_int("eval.n_steps"));

    const double lam = ctx.cfg.get_double("fit.lambda_path");
    const struct {
        const char* name;
        double lambda;
    } variants[2] = {{"with_constraint", lam}, {"no_constraint", 0.0}};

    std::ofstream csv(scope.out("ablation.csv"));
    csv << "variant,bin,c,r,psnr_db,ssim,md_mm\n";
    std::ofstream sum(scope.out("summary.csv"));
    sum << "variant,lambda_path,mean_psnr_db,mean_ssim,mean_md_mm\n";
    for (const auto& v : variants) {
        fs::create_directories(ctx.out_dir + "/" + v.name);
        ImageFitOptions io = imgfit_options(ctx);
        io.lambda_path = v.lambda;
        io.log_csv = scope.out(std::string(v.name) + "/loss.csv");
        DmocoResult res = fit_dmoco_images(targets, centers, eta0, io);

        auto moved = dmoco_series(res, centers, n_steps_eval);
        double mean_psnr = 0.0, mean_ssim = 0.0, mean_md = 0.0;
        for (std::size_t i = 0; i < centers.size(); ++i) {
            double p = psnr(moved[i], target_mag[i]);
            double s = rec.grid.dim == 2 ? ssim(moved[i], target_mag[i]) : 0.0;
            double m = deformation_magnitude(
                flow_displacement(res.model, res.params, centers[i], rec.grid, n_steps_eval));
            mean_psnr += p;
            mean_ssim += s;
            mean_md += m;
            csv << v.name << ',' << i << ',' << centers[i].c << ',' << centers[i].r << ',' << p
                << ',' << s << ',' << m << '\n';
        }
        mean_psnr /= double(centers.size());
        mean_ssim /= double(centers.size());
        mean_md /= double(centers.size());
        sum << v.name << ',' << v.lambda << ',' << mean_psnr << ',' << mean_ssim << ','
            << mean_md << '\n';
    }
    scope.done();
}

}  // namespace moco
