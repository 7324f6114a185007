#include "moco/config.hpp"

#include <cmath>
#include <stdexcept>

namespace moco {

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': bad number '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': bad integer '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config key '" + key + "': bad boolean '" + v + "'");
}

}  // namespace

Config::Config() {
    reg_i("grid.n", 128, 8, 1024);
    reg_i("grid.dim", 2, 2, 3);

    reg_d("phantom.fov_mm", 240.0, 1.0, 1e4);
    reg_d("phantom.outer_radius_mm", 54.0, 1.0, 1e4);
    reg_d("phantom.inner_radius_mm", 38.4, 0.5, 1e4);
    reg_d("phantom.outer_contraction", 0.10, 0.0, 0.5);
    reg_d("phantom.inner_contraction", 0.14, 0.0, 0.5);
    reg_d("phantom.liver_radius_mm", 18.0, 0.5, 1e4);
    reg_d("phantom.liver_displacement", 0.24, 0.0, 1.0);
    reg_d("phantom.support_margin_mm", 24.0, 0.0, 1e4);
    reg_d("phantom.intensity_background", 0.05, 0.0, 10.0);
    reg_d("phantom.intensity_wall", 1.0, 0.0, 10.0);
    reg_d("phantom.intensity_blood", 0.45, 0.0, 10.0);
    reg_d("phantom.intensity_liver", 0.7, 0.0, 10.0);
    reg_i("phantom.preview_stride", 50, 1, 100000);
    reg_b("phantom.write_all_frames", false);

    reg_d("schedule.cardiac_period_s", 1.0, 1e-3, 1e3);
    reg_d("schedule.resp_period_s", 5.0, 1e-3, 1e3);
    reg_d("schedule.group_dt_s", 0.07, 1e-4, 1e2);
    reg_i("schedule.n_groups", 600, 1, 1000000);

    reg_i("traj.spokes_per_group", 13, 1, 10000);
    reg_i("traj.samples_per_spoke", 0, 0, 100000);  // 0: two samples per pixel across the grid

    reg_d("acquire.noise_sigma", 5e-3, 0.0, 1e3);
    reg_i("acquire.n_coils", 6, 1, 64);
    reg_d("acquire.coil_sigma_frac", 0.45, 0.01, 10.0);
    reg_s("acquire.mode", "fast", {"fast", "direct"});
    reg_i("nav.channels", 4, 1, 64);
    reg_d("nav.noise_sigma", 0.02, 0.0, 1e3);

    reg_i("ae.hidden1", 512, 1, 65536);
    reg_i("ae.hidden2", 256, 1, 65536);
    reg_i("ae.iters", 1500, 1, 10000000);
    reg_i("ae.batch", 32, 1, 65536);
    reg_d("ae.lr", 1e-3, 0.0, 10.0);
    reg_d("ae.cutoff_hz", 1.0, 1e-6, 1e6);

    reg_i("init.n_cardiac", 5, 1, 1000);
    reg_i("init.n_resp", 3, 1, 1000);
    reg_d("init.lambda", 10.0, 0.0, 1e9);
    reg_i("init.cg_iters", 30, 1, 100000);
    reg_b("init.motion", true);  // follow the binned recon with a motion-only image fit

    reg_i("imgfit.iters", 1500, 1, 10000000);
    reg_d("imgfit.lr_basis", 2e-2, 0.0, 10.0);
    reg_d("imgfit.lr_net", 2e-3, 0.0, 10.0);
    reg_i("imgfit.log_every", 25, 1, 10000000);
    reg_d("imgfit.divergence_factor", 10.0, 1.0, 1e12);

    reg_i("fit.rank", 6, 1, 256);
    reg_i("fit.coarse_n", 32, 2, 1024);
    reg_i("fit.hidden", 32, 1, 65536);
    reg_i("fit.n_steps", 8, 1, 100000);
    reg_i("fit.iters", 3000, 1, 10000000);
    reg_i("fit.k_nearest", 20, 1, 1000000);
    reg_d("fit.lr_template", 2e-2, 0.0, 10.0);
    reg_d("fit.lr_basis", 2e-2, 0.0, 10.0);
    reg_d("fit.lr_net", 2e-3, 0.0, 10.0);
    reg_d("fit.lambda_path", 1.0, 0.0, 1e9);
    reg_d("fit.lambda_smooth", 1e-3, 0.0, 1e9);
    reg_d("fit.path_jitter", 0.1, 0.0, 10.0);
    reg_i("fit.log_every", 25, 1, 10000000);
    reg_d("fit.divergence_factor", 50.0, 1.0, 1e12);
    reg_s("fit.init", "bins", {"bins", "adjoint"});
    reg_s("fit.resp_source", "labels", {"labels", "ae"});
    reg_s("fit.resp_csv", "");

    reg_i("storm.rank", 6, 1, 256);  // same rank as fit.rank for fair comparisons
    reg_i("storm.coarse_n", 32, 2, 1024);
    reg_i("storm.hidden", 32, 1, 65536);
    reg_i("storm.iters", 3000, 1, 10000000);
    reg_i("storm.k_nearest", 20, 1, 1000000);
    reg_d("storm.lr_template", 2e-2, 0.0, 10.0);
    reg_d("storm.lr_basis", 2e-2, 0.0, 10.0);
    reg_d("storm.lr_net", 2e-3, 0.0, 10.0);
    reg_d("storm.lambda_smooth", 1e-3, 0.0, 1e9);
    reg_i("storm.log_every", 25, 1, 10000000);
    reg_d("storm.divergence_factor", 50.0, 1.0, 1e12);
    reg_s("storm.init", "bins", {"bins", "adjoint"});
    reg_s("storm.resp_source", "labels", {"labels", "ae"});
    reg_s("storm.resp_csv", "");

    reg_i("mor.n_cardiac", 5, 1, 1000);
    reg_i("mor.n_resp", 3, 1, 1000);
    reg_d("mor.lambda_tv", 1e-2, 0.0, 1e9);
    reg_d("mor.epsilon", 1e-6, 1e-300, 1.0);
    reg_i("mor.outer_iters", 6, 1, 100000);
    reg_i("mor.cg_iters", 10, 1, 100000);

    reg_i("series.n_steps", 64, 1, 100000);
    reg_i("series.stride", 5, 1, 1000000);
    reg_i("series.column", -1, -1, 100000);  // -1: the liver centre column

    reg_i("eval.stride", 5, 1, 1000000);
    reg_i("eval.n_steps", 64, 1, 100000);

    reg_i("rank.n_cardiac", 5, 1, 1000);
    reg_i("rank.n_resp", 3, 1, 1000);
    reg_i("rank.n_steps", 32, 1, 100000);
    reg_i("rank.max", 12, 0, 256);
}

void Config::reg_d(const std::string& key, double def) { reg_d(key, def, 0.0, 0.0); }

void Config::reg_d(const std::string& key, double def, double lo, double hi) {
    Entry e;
    e.key = key;
    e.type = 'd';
    TextKv tmp;
    tmp.set_double("x", def);
    e.value = tmp.get("x");
    e.lo = lo;
    e.hi = hi;
    e.has_range = !(lo == 0.0 && hi == 0.0);
    entries_.push_back(std::move(e));
}

void Config::reg_i(const std::string& key, long long def) {
    Entry e;
    e.key = key;
    e.type = 'i';
    e.value = std::to_string(def);
    entries_.push_back(std::move(e));
}

void Config::reg_i(const std::string& key, long long def, long long lo, long long hi) {
    Entry e;
    e.key = key;
    e.type = 'i';
    e.value = std::to_string(def);
    e.lo = double(lo);
    e.hi = double(hi);
    e.has_range = true;
    entries_.push_back(std::move(e));
}

void Config::reg_s(const std::string& key, const std::string& def,
                   std::vector<std::string> choices) {
    Entry e;
    e.key = key;
    e.type = 's';
    e.value = def;
    e.choices = std::move(choices);
    entries_.push_back(std::move(e));
}

void Config::reg_b(const std::string& key, bool def) {
    Entry e;
    e.key = key;
    e.type = 'b';
    e.value = def ? "true" : "false";
    entries_.push_back(std::move(e));
}

const Config::Entry& Config::find(const std::string& key, char type) const {
    for (const auto& e : entries_)
        if (e.key == key) {
            if (type != 0 && e.type != type)
                throw std::logic_error("config key '" + key + "' has a different type");
            return e;
        }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

void Config::set_checked(const std::string& key, const std::string& value) {
    for (auto& e : entries_) {
        if (e.key != key) continue;
        switch (e.type) {
            case 'd': {
                double x = parse_double(key, value);
                if (e.has_range && (x < e.lo || x > e.hi))
                    throw std::invalid_argument("config key '" + key + "': value out of range");
                break;
            }
            case 'i': {
                long long x = parse_int(key, value);
                if (e.has_range && (double(x) < e.lo || double(x) > e.hi))
                    throw std::invalid_argument("config key '" + key + "': value out of range");
                break;
            }
            case 'b':
                parse_bool(key, value);
                break;
            case 's':
                if (!e.choices.empty()) {
                    bool ok = false;
                    for (const auto& c : e.choices) ok = ok || c == value;
                    if (!ok)
                        throw std::invalid_argument("config key '" + key + "': bad choice '" +
                                                    value + "'");
                }
                break;
            default:
                throw std::logic_error("config: bad entry type");
        }
        e.value = value;
        return;
    }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

void Config::apply_file(const std::string& path) {
    TextKv kv = TextKv::load(path);
    for (const auto& k : kv.keys()) set_checked(k, kv.get(k));
}

void Config::apply_set(const std::string& assignment) {
    auto pos = assignment.find('=');
    if (pos == std::string::npos || pos == 0)
        throw std::invalid_argument("bad --set '" + assignment + "', expected key=value");
    std::string key = assignment.substr(0, pos);
    std::string value = assignment.substr(pos + 1);
    // trim surrounding spaces
    auto trim = [](std::string& s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    };
    trim(key);
    trim(value);
    set_checked(key, value);
}

double Config::get_double(const std::string& key) const {
    const Entry& e = find(key, 'd');
    return parse_double(key, e.value);
}

long long Config::get_int(const std::string& key) const {
    const Entry& e = find(key, 'i');
    return parse_int(key, e.value);
}

const std::string& Config::get_string(const std::string& key) const {
    return find(key, 's').value;
}

bool Config::get_bool(const std::string& key) const {
    const Entry& e = find(key, 'b');
    return parse_bool(key, e.value);
}

TextKv Config::resolved() const {
    TextKv kv;
    for (const auto& e : entries_) kv.set(e.key, e.value);
    return kv;
}

}  // namespace moco
