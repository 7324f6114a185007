#include <cstdio>
#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

#include "moco/parallel.hpp"
#include "moco/pipeline.hpp"

namespace {

const char* usage_text =
    "usage: flowmoco <subcommand> [options]\n"
    "\n"
    "subcommands\n"
    "  phantom                    render the moving phantom and its motion traces\n"
    "  acquire                    simulate a radial scan (k-space record + navigator)\n"
    "  nav-ae                     respiratory phase from the navigator autoencoder\n"
    "  init                       binned quadratically regularised reconstructions\n"
    "  fit                        joint template + velocity-tensor motion fit\n"
    "  fit-storm                  direct low-rank deformation fit (baseline)\n"
    "  recon-mor                  motion-resolved binned reconstruction (baseline)\n"
    "  series                     render a dynamic frame series from a checkpoint\n"
    "  eval                       image/deformation metrics against the phantom truth\n"
    "  rank-study                 compressibility of velocity/deformation/image models\n"
    "  ablate-velocity-constraint fit with and without the path-independence penalty\n"
    "\n"
    "options\n"
    "  --config FILE   apply a key = value configuration file (repeatable)\n"
    "  --set K=V       override one configuration key (repeatable)\n"
    "  --seed N        random seed (default 1)\n"
    "  --threads N     worker thread budget (default 1)\n"
    "  --out DIR       output directory (required)\n"
    "  --record DIR    input scan directory\n"
    "  --checkpoint F  fitted model checkpoint\n"
    "  --mor DIR       motion-resolved reconstruction directory\n"
    "  --help          show this message\n";

bool is_known_subcommand(const std::string& s) {
    static const char* names[] = {"phantom",   "acquire", "nav-ae", "init",
                                  "fit",       "fit-storm", "recon-mor", "series",
                                  "eval",      "rank-study", "ablate-velocity-constraint"};
    for (const char* n : names)
        if (s == n) return true;
    return false;
}

std::string take_value(int argc, char** argv, int& i, const std::string& flag) {
    if (i + 1 >= argc) throw std::invalid_argument("missing value for " + flag);
    return argv[++i];
}

}  // namespace

int main(int argc, char** argv) {
    moco::RunContext ctx;
    std::string sub;
    try {
        if (argc < 2 || std::string(argv[1]) == "--help" || std::string(argv[1]) == "-h") {
            std::fputs(usage_text, argc < 2 ? stderr : stdout);
            return argc < 2 ? 2 : 0;
        }
        sub = argv[1];
        if (!is_known_subcommand(sub))
            throw std::invalid_argument("unknown subcommand '" + sub + "'");
        for (int i = 0; i < argc; ++i) ctx.command_line.push_back(argv[i]);
        for (int i = 2; i < argc; ++i) {
            std::string a = argv[i];
            if (a == "--config") {
                ctx.cfg.apply_file(take_value(argc, argv, i, a));
            } else if (a == "--set") {
                ctx.cfg.apply_set(take_value(argc, argv, i, a));
            } else if (a == "--seed") {
                ctx.seed = std::stoull(take_value(argc, argv, i, a));
            } else if (a == "--threads") {
                ctx.threads = std::stoi(take_value(argc, argv, i, a));
                if (ctx.threads < 1) throw std::invalid_argument("--threads must be positive");
            } else if (a == "--out") {
                ctx.out_dir = take_value(argc, argv, i, a);
            } else if (a == "--record") {
                ctx.record_dir = take_value(argc, argv, i, a);
            } else if (a == "--checkpoint") {
                ctx.checkpoint = take_value(argc, argv, i, a);
            } else if (a == "--mor") {
                ctx.mor_dir = take_value(argc, argv, i, a);
            } else if (a == "--help" || a == "-h") {
                std::fputs(usage_text, stdout);
                return 0;
            } else {
                throw std::invalid_argument("unknown option '" + a + "'");
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "flowmoco: %s\n%s", e.what(), usage_text);
        return 2;
    }

    try {
        moco::set_max_threads(ctx.threads);
        if (sub == "phantom") moco::cmd_phantom(ctx);
        else if (sub == "acquire") moco::cmd_acquire(ctx);
        else if (sub == "nav-ae") moco::cmd_nav_ae(ctx);
        else if (sub == "init") moco::cmd_init(ctx);
        else if (sub == "fit") moco::cmd_fit(ctx);
        else if (sub == "fit-storm") moco::cmd_fit_storm(ctx);
        else if (sub == "recon-mor") moco::cmd_recon_mor(ctx);
        else if (sub == "series") moco::cmd_series(ctx);
        else if (sub == "eval") moco::cmd_eval(ctx);
        else if (sub == "rank-study") moco::cmd_rank_study(ctx);
        else moco::cmd_ablate_velocity_constraint(ctx);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "flowmoco %s: %s\n", sub.c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "flowmoco %s: %s\n", sub.c_str(), e.what());
        return 3;
    }
    return 0;
}
