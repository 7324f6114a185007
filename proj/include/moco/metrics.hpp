#pragma once

#include <string>
#include <vector>

#include "moco/grid.hpp"
#include "moco/motion_model.hpp"
#include "moco/phantom.hpp"

namespace moco {

/// Peak signal-to-noise ratio in dB. peak = 0 uses max(ref); identical
/// images give +infinity.
double psnr(const RealField& x, const RealField& ref, double peak = 0.0);

/// Mean structural similarity over a 7x7 uniform window, evaluated where the
/// window fits entirely inside the image (2D only). peak = 0 uses max(ref).
double ssim(const RealField& x, const RealField& ref, double peak = 0.0);

/// 100 * ||x - ref||^2 / ||ref||^2.
double nmse_percent(const std::vector<double>& x, const std::vector<double>& ref);

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b);

/// RMS displacement magnitude (mm) of a deformation over its grid nodes:
/// sqrt(sum_r ||phi(r) - r||^2 / node count). Identity gives 0.
double deformation_magnitude(const VectorField& u);

/// Root-mean-square difference (mm) between two displacement fields over
/// all nodes or, when given, over the masked ones.
double deformation_error_rms(const VectorField& u, const VectorField& ref,
                             const std::vector<unsigned char>* mask = nullptr);

/// Nodes displaced by more than tol (mm) in any of the given fields.
std::vector<unsigned char> motion_mask(const std::vector<VectorField>& fields, double tol = 1e-9);

/// Peak-to-peak vertical travel (mm) of the liver disc's upper edge across
/// the frames, located on the disc's centre column by half-maximum crossing
/// with linear subsample interpolation.
double respiratory_displacement(const std::vector<RealField>& frames, const AnnulusSpec& spec);

/// 8-bit PGM quick-look (2D). lo == hi requests auto range.
void write_pgm(const std::string& path, const RealField& img, double lo = 0.0, double hi = 0.0);

/// Intensity of one image column over time: `base`.csv (frame per row) and
/// `base`.pgm (x = frame, y = row).
void write_time_profile(const std::string& base, const std::vector<RealField>& frames, int column);

/// Inputs for the rank study: reference frames and the phase sets the three
/// representation families are sampled at.
struct RankStudyInput {
    std::vector<PhaseSample> bin_phases;  // probe phases (velocity/deformation families)
    std::vector<RealField> bin_frames;    // reference frames at bin_phases
    std::vector<RealField> all_frames;    // reference frames for the image family
    int n_steps = 32;                     // integration steps for truncated-model flows
    int max_rank = 12;                    // shared rank axis 0 .. max_rank
};

/// How well low-rank truncations of a fitted motion model reproduce the
/// reference frames, in three representations over a shared rank axis. Per
/// kept rank k the table records NMSE% of the re-rendered frames:
///  - velocity: the per-phase velocity tensors at the probe phases span a
///    subspace; the model is projected onto its top-k part, flows are
///    re-integrated and the template warped;
///  - deformation: the stacked per-phase displacement fields are
///    rank-truncated before warping;
///  - image: the template stays and the reference-frame residuals around it
///    are rank-truncated (evaluated over all_frames).
/// Rank 0 is the static template for all three families.
struct RankStudyResult {
    std::vector<int> ranks;               // 0 .. max_rank
    std::vector<double> err_velocity;     // NMSE% vs bin_frames
    std::vector<double> err_deformation;  // NMSE% vs bin_frames
    std::vector<double> err_image;        // NMSE% vs all_frames
};

RankStudyResult rank_study(const VelocityModel& vm, const ParamSet& ps, const ComplexField& eta,
                           const RankStudyInput& in);

void save_rank_study_csv(const std::string& path, const RankStudyResult& r);

/// Line plot of several curves sharing an x axis of 0..n-1, rendered to an
/// 8-bit PGM: white background, darker gray per later curve, y axis from 0
/// to the common maximum.
void write_curve_plot_pgm(const std::string& path, const std::vector<std::vector<double>>& curves,
                          int width = 480, int height = 320);

}  // namespace moco
