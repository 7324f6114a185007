#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "moco/acquisition.hpp"
#include "moco/grid.hpp"
#include "moco/motion_model.hpp"
#include "moco/optim.hpp"

namespace moco {

/// Magnitude image of a complex field.
RealField magnitude(const ComplexField& f);

/// Sample a complex field at arbitrary positions ([n][dim], clamped).
ComplexField warp_image(const ComplexField& f, const std::vector<double>& positions,
                        const Grid& out_grid);

/// Quadratically regularised single-bin reconstruction: solves
///   (1/M) A^H A x + lambda (1/N) G^T G x = (1/M) A^H d
/// over the readout groups listed in `groups` by conjugate gradients.
ComplexField tikhonov_bin_recon(const AcquisitionRecord& rec,
                                std::shared_ptr<const MulticoilNudft> op,
                                const std::vector<int>& groups, double lambda, int cg_iters,
                                double cg_tol = 1e-8);

/// Binned reconstruction: a quadratically regularised image per phase bin.
/// The template estimate is the bin whose range contains the template phase
/// (0,0), i.e. flat bin 0.
struct BinnedRecon {
    BinAssignment bins;
    std::vector<ComplexField> images;
    int template_bin = 0;
};

BinnedRecon binned_tikhonov(const AcquisitionRecord& rec, std::shared_ptr<const MulticoilNudft> op,
                            int n_cardiac, int n_resp, double lambda, int cg_iters);

/// One logged loss sample: iteration, total, data, path penalty, smoothness.
using LossRow = std::array<double, 5>;

struct DmocoOptions {
    int rank = 6;       // velocity basis fields per motion process
    int coarse_n = 32;  // basis grid nodes per axis
    int hidden = 32;
    int n_steps = 8;
    int iters = 3000;
    int k_nearest = 20;
    double lr_template = 2e-2;
    double lr_basis = 2e-2;
    double lr_net = 2e-3;
    double lambda_path = 1.0;    // path-independence penalty weight
    double lambda_smooth = 1e-3; // template smoothness weight
    double path_jitter = 0.1;    // waypoint noise, relative to step length
    std::uint64_t seed = 1;
    int log_every = 25;
    std::string log_csv;          // when set, loss terms are appended here
    double divergence_factor = 50.0;
};

struct DmocoResult {
    ParamSet params;
    VelocityModel model;
    int eta = -1;  // param index of the complex template, interleaved
    Grid grid;
    std::vector<LossRow> history;

    ComplexField template_image() const;
};

/// Joint template + velocity-tensor fit. When `eta0` is null the template
/// starts from the scaled adjoint image of the whole record. When `init` is
/// given, motion parameters with matching names (basis fields, net weights)
/// start from its values; the architectures must agree. The template always
/// comes from eta0 (or the adjoint image), never from `init`.
DmocoResult fit_dmoco(const AcquisitionRecord& rec, const ComplexField* eta0,
                      const DmocoOptions& opt, const ParamSet* init = nullptr);

struct ImageFitOptions {
    int rank = 6;
    int coarse_n = 32;
    int hidden = 32;
    int n_steps = 8;
    int iters = 1500;
    double lr_basis = 2e-2;
    double lr_net = 2e-3;
    double lambda_path = 1.0;
    double path_jitter = 0.1;
    std::uint64_t seed = 1;
    int log_every = 25;
    std::string log_csv;
    double divergence_factor = 10.0;
};

/// Motion-only fit in the image domain: the template stays frozen at `eta`
/// and the velocity model is trained so the warped template matches each
/// target frame at its phase, with the path-independence penalty. One
/// random target and one fresh perturbed path per iteration. The history's
/// smoothness column stays zero.
DmocoResult fit_dmoco_images(const std::vector<ComplexField>& targets,
                             const std::vector<PhaseSample>& phases, const ComplexField& eta,
                             const ImageFitOptions& opt);

struct StormOptions {
    int rank = 6;  // deformation basis fields (no per-process split), kept
                   // equal to the velocity rank for head-to-head comparisons
    int coarse_n = 32;
    int hidden = 32;
    int iters = 3000;
    int k_nearest = 20;
    double lr_template = 2e-2;
    double lr_basis = 2e-2;
    double lr_net = 2e-3;
    double lambda_smooth = 1e-3;
    std::uint64_t seed = 1;
    int log_every = 25;
    std::string log_csv;
    double divergence_factor = 50.0;
};

struct StormResult {
    ParamSet params;
    StormModel model;
    int eta = -1;
    Grid grid;
    std::vector<LossRow> history;  // path column stays zero

    ComplexField template_image() const;
};

/// Direct low-rank deformation fit (no path integration, no path penalty).
StormResult fit_storm(const AcquisitionRecord& rec, const ComplexField* eta0,
                      const StormOptions& opt);

/// Reconstructed magnitude frames at the given phases.
std::vector<RealField> dmoco_series(const DmocoResult& fit, const std::vector<PhaseSample>& phases,
                                    int n_steps);
std::vector<RealField> storm_series(const StormResult& fit, const std::vector<PhaseSample>& phases);

struct MorOptions {
    int n_cardiac = 5;
    int n_resp = 3;
    double lambda_tv = 1e-2;  // inter-bin edge-preserving difference weight
    double epsilon = 1e-6;    // smoothing of |.| near zero
    int outer_iters = 6;
    int cg_iters = 10;
    double cg_tol = 1e-8;
};

struct MorResult {
    BinAssignment bins;
    std::vector<ComplexField> images;  // per flat bin
};

/// Motion-resolved baseline: all bins solved jointly with an L1-like penalty
/// on differences between neighbouring bins (cardiac neighbours cyclic,
/// respiratory neighbours linear), by majorise-minimise over reweighted
/// quadratics with an inner conjugate-gradient solve.
MorResult motion_resolved_recon(const AcquisitionRecord& rec, const MorOptions& opt);

/// Zero-phase moving-average smoothing with reflected ends; the window is
/// forced odd.
std::vector<double> lowpass_signal(const std::vector<double>& x, int window);

/// Low-pass each navigator feature across time with a zero-phase moving
/// average whose window spans sample_rate / cutoff samples. The navigator
/// is row-major [group][feature]. Requires sample_rate > 2 * cutoff.
std::vector<double> lowpass_navigator(const std::vector<double>& nav, std::size_t n_groups,
                                      std::size_t n_feat, double cutoff_hz,
                                      double sample_rate_hz);

struct AeOptions {
    int hidden1 = 512;
    int hidden2 = 256;
    int iters = 2000;
    int batch = 32;
    double lr = 1e-3;
    std::uint64_t seed = 7;
};

struct AeResult {
    std::vector<double> latent;        // raw bottleneck value per group
    std::vector<double> phase;         // latent min-max scaled to [0,1]
    std::vector<double> loss_history;  // one entry per training iteration
    bool degenerate = false;           // constant input; phase pinned at 0.5
};

/// Respiratory navigator autoencoder: a bottleneck of width one trained to
/// reproduce the (already low-passed) navigator rows; the latent, min-max
/// rescaled, is the respiratory phase estimate. Constant navigators are
/// flagged degenerate with the phase pinned at 0.5.
AeResult fit_respiratory_ae(const std::vector<double>& nav, std::size_t n_groups,
                            std::size_t n_feat, const AeOptions& opt);

}  // namespace moco
