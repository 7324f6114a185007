#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moco/config.hpp"
#include "moco/phantom.hpp"
#include "moco/recon.hpp"
#include "moco/trajectory.hpp"

namespace moco {

/// Everything one CLI invocation needs: resolved configuration, the global
/// seed and thread budget, and the paths named on the command line.
struct RunContext {
    Config cfg;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir;
    std::string record_dir;  // input scan directory
    std::string checkpoint;  // fitted model file
    std::string mor_dir;     // motion-resolved output directory
    std::vector<std::string> command_line;  // echoed into the manifest
};

AnnulusSpec spec_from_config(const Config& cfg);
MotionSchedule schedule_from_config(const Config& cfg);
Grid grid_from_config(const Config& cfg, const AnnulusSpec& spec);
Trajectory trajectory_from_config(const Config& cfg, const Grid& grid, int n_groups);

TextKv spec_to_kv(const AnnulusSpec& spec);
AnnulusSpec spec_from_kv(const TextKv& kv);

/// The phantom geometry stored alongside a simulated record.
AnnulusSpec read_record_spec(const std::string& record_dir);

/// Navigator matrix stored alongside a record ([group][feature], row-major).
void read_record_navigator(const std::string& record_dir, std::vector<double>& nav,
                           std::size_t& n_groups, std::size_t& n_feat);

/// A fitted model reloaded from a checkpoint, either kind.
struct ModelBundle {
    std::string kind;  // "dmoco" or "storm"
    DmocoResult dmoco;
    StormResult storm;
};

ModelBundle load_model_bundle(const std::string& checkpoint, const Grid& grid);

/// Magnitude frames for a reloaded model at the given phases.
std::vector<RealField> bundle_series(const ModelBundle& mb, const std::vector<PhaseSample>& phases,
                                     int n_steps);

/// Subcommand entry points. Each validates its inputs, does the work, writes
/// its outputs under ctx.out_dir and finishes with a manifest. On error the
/// files already written by this invocation are removed and the exception
/// rethrown.
void cmd_phantom(const RunContext& ctx);
void cmd_acquire(const RunContext& ctx);
void cmd_nav_ae(const RunContext& ctx);
void cmd_init(const RunContext& ctx);
void cmd_fit(const RunContext& ctx);
void cmd_fit_storm(const RunContext& ctx);
void cmd_recon_mor(const RunContext& ctx);
void cmd_series(const RunContext& ctx);
void cmd_eval(const RunContext& ctx);
void cmd_rank_study(const RunContext& ctx);
void cmd_ablate_velocity_constraint(const RunContext& ctx);

}  // namespace moco
