#include "moco/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "moco/rng.hpp"
#include "moco/text_kv.hpp"
#include "moco/volume_io.hpp"

namespace moco {

AcquisitionRecord simulate_acquisition(const GroundTruth& gt, const Trajectory& traj,
                                       std::shared_ptr<const CoilMaps> coils, double noise_sigma,
                                       std::uint64_t seed, MulticoilNudft::Mode mode) {
    if (traj.n_groups != gt.schedule.n_groups)
        throw std::invalid_argument("simulate_acquisition: trajectory/schedule group count mismatch");
    if (traj.dim != gt.grid.dim)
        throw std::invalid_argument("simulate_acquisition: trajectory dim mismatch");
    if (noise_sigma < 0.0) throw std::invalid_argument("simulate_acquisition: negative noise sigma");

    AcquisitionRecord rec;
    rec.grid = gt.grid;
    rec.traj = traj;
    rec.coils = std::move(coils);
    rec.schedule = gt.schedule;
    rec.phases = gt.phases;
    rec.noise_sigma = noise_sigma;
    rec.seed = seed;

    MulticoilNudft op(gt.grid, rec.coils, traj.points, mode);
    const std::size_t ppg = traj.points_per_group();
    rec.data.resize(std::size_t(traj.n_groups) * rec.samples_per_group());
    std::vector<cplx> img(gt.grid.n_points());
    for (int g = 0; g < traj.n_groups; ++g) {
        const RealField& frame = gt.frames[std::size_t(g)];
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = cplx(frame.values[i], 0.0);
        MulticoilNudft::Ranges sel{{std::size_t(g) * ppg, std::size_t(g + 1) * ppg}};
        op.forward(img.data(), sel, rec.group_data(g));
    }
    if (noise_sigma > 0.0) {
        Rng rng(seed);
        for (auto& v : rec.data)
            v += cplx(noise_sigma * rng.gauss(), noise_sigma * rng.gauss());
    }
    return rec;
}

BinAssignment bin_phases(const std::vector<PhaseSample>& phases, int n_cardiac, int n_resp) {
    if (n_cardiac < 1 || n_resp < 1)
        throw std::invalid_argument("bin_phases: bin counts must be >= 1");
    BinAssignment ba;
    ba.n_cardiac = n_cardiac;
    ba.n_resp = n_resp;
    ba.bin_of_group.resize(phases.size());
    ba.groups_in_bin.assign(std::size_t(n_cardiac) * std::size_t(n_resp), {});
    ba.bin_center.resize(std::size_t(n_cardiac) * std::size_t(n_resp));
    for (int ic = 0; ic < n_cardiac; ++ic)
        for (int ir = 0; ir < n_resp; ++ir)
            ba.bin_center[std::size_t(ic) * n_resp + ir] = {(ic + 0.5) / double(n_cardiac),
                                                            (ir + 0.5) / double(n_resp)};
    for (std::size_t g = 0; g < phases.size(); ++g) {
        int ic = std::min(int(phases[g].c * n_cardiac), n_cardiac - 1);
        int ir = std::min(int(phases[g].r * n_resp), n_resp - 1);
        if (ic < 0 || ir < 0) throw std::invalid_argument("bin_phases: phase outside [0,1]");
        int b = ic * n_resp + ir;
        ba.bin_of_group[g] = b;
        ba.groups_in_bin[std::size_t(b)].push_back(int(g));
    }
    return ba;
}

std::vector<int> nearest_groups(const std::vector<PhaseSample>& phases, const PhaseSample& tau,
                                int k) {
    if (phases.empty()) throw std::invalid_argument("nearest_groups: no phases");
    if (k < 1) throw std::invalid_argument("nearest_groups: k must be >= 1");
    k = std::min<int>(k, int(phases.size()));
    std::vector<int> order(phases.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        double da = phase_distance(phases[std::size_t(a)], tau);
        double db = phase_distance(phases[std::size_t(b)], tau);
        if (da != db) return da < db;
        return a < b;  // deterministic tie break
    });
    order.resize(std::size_t(k));
    return order;
}

std::shared_ptr<MulticoilNudft> make_record_operator(const AcquisitionRecord& rec,
                                                     MulticoilNudft::Mode mode) {
    return std::make_shared<MulticoilNudft>(rec.grid, rec.coils, rec.traj.points, mode);
}

MulticoilNudft::Ranges group_ranges(const AcquisitionRecord& rec, const std::vector<int>& groups) {
    MulticoilNudft::Ranges sel;
    const std::size_t ppg = rec.traj.points_per_group();
    sel.reserve(groups.size());
    for (int g : groups) {
        if (g < 0 || g >= rec.traj.n_groups)
            throw std::invalid_argument("group_ranges: group index out of range");
        sel.push_back({std::size_t(g) * ppg, std::size_t(g + 1) * ppg});
    }
    return sel;
}

std::vector<cplx> gather_group_data(const AcquisitionRecord& rec, const std::vector<int>& groups) {
    const std::size_t ppg = rec.traj.points_per_group();
    const int nc = rec.coils->n_coils;
    std::vector<cplx> out(groups.size() * ppg * std::size_t(nc));
    const std::size_t m = groups.size() * ppg;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const cplx* src = rec.group_data(groups[gi]);  // [coil][ppg]
        for (int c = 0; c < nc; ++c)
            std::copy(src + std::size_t(c) * ppg, src + std::size_t(c + 1) * ppg,
                      out.begin() + std::size_t(c) * m + gi * ppg);
    }
    return out;
}

namespace {

std::string coil_path(const std::string& dir, int c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "coil_%02d.vol", c);
    return dir + "/" + buf;
}

}  // namespace

void write_record(const std::string& dir, const AcquisitionRecord& rec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(dir + "/coils");

    TextKv hdr;
    hdr.set_int("dim", rec.grid.dim);
    hdr.set_ints("grid_dims", {rec.grid.dims[0], rec.grid.dims[1], rec.grid.dims[2]});
    hdr.set_doubles("grid_spacing", {rec.grid.spacing[0], rec.grid.spacing[1], rec.grid.spacing[2]});
    hdr.set_doubles("grid_origin", {rec.grid.origin[0], rec.grid.origin[1], rec.grid.origin[2]});
    hdr.set_int("n_groups", rec.traj.n_groups);
    hdr.set_int("spokes_per_group", rec.traj.spokes_per_group);
    hdr.set_int("samples_per_spoke", rec.traj.samples_per_spoke);
    hdr.set_int("n_coils", rec.coils->n_coils);
    hdr.set_double("noise_sigma", rec.noise_sigma);
    hdr.set_int("seed", (long long)rec.seed);
    hdr.set_double("cardiac_period_s", rec.schedule.cardiac_period_s);
    hdr.set_double("resp_period_s", rec.schedule.resp_period_s);
    hdr.set_double("group_dt_s", rec.schedule.group_dt_s);
    hdr.set("trajectory", rec.grid.dim == 2 ? "golden_angle_2d" : "phyllotaxis_3d");
    hdr.set("samples_file", "samples.f32");
    hdr.set("samples_layout", "group,coil,point interleaved re,im float32");
    hdr.save(dir + "/record.hdr");

    {
        std::ofstream f(dir + "/samples.f32", std::ios::binary);
        if (!f) throw std::runtime_error("write_record: cannot write samples blob");
        std::vector<float> buf(rec.data.size() * 2);
        for (std::size_t i = 0; i < rec.data.size(); ++i) {
            buf[2 * i] = float(rec.data[i].real());
            buf[2 * i + 1] = float(rec.data[i].imag());
        }
        f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
    }
    for (int c = 0; c < rec.coils->n_coils; ++c)
        write_volume(coil_path(dir + "/coils", c), rec.coils->maps[std::size_t(c)]);

    std::ofstream csv(dir + "/phases.csv");
    csv << "t,c,r\n";
    char line[128];
    for (int g = 0; g < rec.traj.n_groups; ++g) {
        std::snprintf(line, sizeof(line), "%.9g,%.17g,%.17g\n", rec.schedule.sample_time(g),
                      rec.phases[std::size_t(g)].c, rec.phases[std::size_t(g)].r);
        csv << line;
    }
}

AcquisitionRecord read_record(const std::string& dir) {
    TextKv hdr = TextKv::load(dir + "/record.hdr");
    AcquisitionRecord rec;
    auto dims = hdr.get_ints("grid_dims");
    auto spacing = hdr.get_doubles("grid_spacing");
    auto origin = hdr.get_doubles("grid_origin");
    rec.grid = Grid(int(hdr.get_int("dim")), {int(dims[0]), int(dims[1]), int(dims[2])},
                    {spacing[0], spacing[1], spacing[2]}, {origin[0], origin[1], origin[2]});
    rec.schedule.cardiac_period_s = hdr.get_double("cardiac_period_s");
    rec.schedule.resp_period_s = hdr.get_double("resp_period_s");
    rec.schedule.group_dt_s = hdr.get_double("group_dt_s");
    rec.schedule.n_groups = int(hdr.get_int("n_groups"));
    rec.noise_sigma = hdr.get_double("noise_sigma");
    rec.seed = std::uint64_t(hdr.get_int("seed"));

    int spg = int(hdr.get_int("spokes_per_group"));
    int sps = int(hdr.get_int("samples_per_spoke"));
    std::string kind = hdr.get("trajectory");
    if (kind == "golden_angle_2d")
        rec.traj = golden_angle_trajectory(rec.grid, rec.schedule.n_groups, spg, sps);
    else if (kind == "phyllotaxis_3d")
        rec.traj = phyllotaxis_trajectory_3d(rec.grid, rec.schedule.n_groups, spg, sps);
    else
        throw std::invalid_argument("read_record: unknown trajectory kind '" + kind + "'");

    int nc = int(hdr.get_int("n_coils"));
    auto cm = std::make_shared<CoilMaps>();
    cm->grid = rec.grid;
    cm->n_coils = nc;
    for (int c = 0; c < nc; ++c) cm->maps.push_back(read_complex_volume(coil_path(dir + "/coils", c)));
    rec.coils = cm;

    {
        std::size_t n = std::size_t(rec.schedule.n_groups) * rec.samples_per_group();
        std::ifstream f(dir + "/samples.f32", std::ios::binary);
        if (!f) throw std::invalid_argument("read_record: cannot open samples blob");
        std::vector<float> buf(n * 2);
        f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
        if (std::size_t(f.gcount()) != buf.size() * 4)
            throw std::invalid_argument("read_record: samples blob truncated");
        rec.data.resize(n);
        for (std::size_t i = 0; i < n; ++i) rec.data[i] = cplx(buf[2 * i], buf[2 * i + 1]);
    }

    std::ifstream csv(dir + "/phases.csv");
    if (!csv) throw std::invalid_argument("read_record: cannot open phases.csv");
    std::string line;
    std::getline(csv, line);  // header
    rec.phases.clear();
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        PhaseSample p;
        double t;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &p.c, &p.r) != 3)
            throw std::invalid_argument("read_record: bad phases.csv line");
        rec.phases.push_back(p);
    }
    if (int(rec.phases.size()) != rec.schedule.n_groups)
        throw std::invalid_argument("read_record: phases.csv row count mismatch");
    return rec;
}

}  // namespace moco
