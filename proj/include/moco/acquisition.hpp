#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "moco/coils.hpp"
#include "moco/nudft.hpp"
#include "moco/phantom.hpp"
#include "moco/trajectory.hpp"

namespace moco {

/// A simulated scan: trajectory, coil maps, noisy k-space data and the true
/// motion phase labels per readout group. Data is stored per group with the
/// group's samples laid out [coil][point].
struct AcquisitionRecord {
    Grid grid;
    Trajectory traj;
    std::shared_ptr<const CoilMaps> coils;
    MotionSchedule schedule;
    std::vector<PhaseSample> phases;  // one per group
    std::vector<cplx> data;           // n_groups * n_coils * points_per_group
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    std::size_t samples_per_group() const {
        return traj.points_per_group() * std::size_t(coils->n_coils);
    }
    const cplx* group_data(int g) const { return data.data() + std::size_t(g) * samples_per_group(); }
    cplx* group_data(int g) { return data.data() + std::size_t(g) * samples_per_group(); }
};

/// Forward-simulate k-space for every ground-truth frame and add complex
/// white Gaussian noise with standard deviation sigma per real component.
AcquisitionRecord simulate_acquisition(const GroundTruth& gt, const Trajectory& traj,
                                       std::shared_ptr<const CoilMaps> coils, double noise_sigma,
                                       std::uint64_t seed,
                                       MulticoilNudft::Mode mode = MulticoilNudft::Mode::fast);

/// Uniform phase binning: cardiac in [0,1) into n_cardiac bins, respiratory
/// in [0,1] into n_resp bins (r = 1 clamps into the last bin).
struct BinAssignment {
    int n_cardiac = 0;
    int n_resp = 0;
    std::vector<int> bin_of_group;               // flat bin = ic * n_resp + ir
    std::vector<std::vector<int>> groups_in_bin; // per flat bin
    std::vector<PhaseSample> bin_center;         // per flat bin
};

BinAssignment bin_phases(const std::vector<PhaseSample>& phases, int n_cardiac, int n_resp);

/// Indices of the K groups whose phase is closest to tau (cardiac distance
/// circular, respiratory linear). K is clamped to the group count.
std::vector<int> nearest_groups(const std::vector<PhaseSample>& phases, const PhaseSample& tau,
                                int k);

/// Build one k-space operator over the whole record's trajectory.
std::shared_ptr<MulticoilNudft> make_record_operator(const AcquisitionRecord& rec,
                                                     MulticoilNudft::Mode mode);

/// Point-index ranges of the given groups within the record-wide operator,
/// plus the matching measured data laid out [coil][concatenated points].
MulticoilNudft::Ranges group_ranges(const AcquisitionRecord& rec, const std::vector<int>& groups);
std::vector<cplx> gather_group_data(const AcquisitionRecord& rec, const std::vector<int>& groups);

/// Record directory round trip (samples blob, coil volumes, phases CSV and a
/// text header describing the trajectory so it can be rebuilt exactly).
void write_record(const std::string& dir, const AcquisitionRecord& rec);
AcquisitionRecord read_record(const std::string& dir);

}  // namespace moco
