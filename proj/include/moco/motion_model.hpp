#pragma once

#include <string>
#include <vector>

#include "moco/grid.hpp"
#include "moco/mlp.hpp"
#include "moco/optim.hpp"
#include "moco/phase.hpp"
#include "moco/rng.hpp"
#include "moco/tape.hpp"
#include "moco/text_kv.hpp"

namespace moco {

/// Deformations as path integrals of a low-rank velocity tensor. The
/// velocity of motion process s (0 cardiac, 1 respiratory) at phase tau is
///   v_s(tau, r) = sum_n basis[n,s](r) * m[n,s](tau),
/// with one coarse-grid vector field per (n, s) and the weights m produced
/// by a small network from [sin 2 pi c, cos 2 pi c, r]. The map that pulls
/// the frame at tau back to the template is the forward-Euler integral of v
/// along a path from the template phase (0,0) to tau.
struct VelocityModel {
    Grid coarse;       // basis grid; same physical extent as the image grid
    int rank = 0;      // fields per process; basis tensor is [2*rank][nodes*dim]
    int basis = -1;    // ParamSet index of the basis tensor
    MlpParams net;     // 3 -> hidden -> 2*rank, ordering n-major (c, r per n)
    int n_steps_fit = 8;
    int n_steps_eval = 64;
};

/// Direct low-rank deformation baseline: the displacement itself is
///   u(tau, r) = sum_n basis[n](r) * w[n](tau)
/// with no path integration.
struct StormModel {
    Grid coarse;
    int rank = 0;  // basis tensor is [rank][nodes*dim]
    int basis = -1;
    MlpParams net;  // 3 -> hidden -> rank
};

/// Register a velocity model's parameters. The basis starts as a small
/// Gaussian field and the network output layer near zero, so the initial
/// flow is near identity.
VelocityModel make_velocity_model(ParamSet& ps, const Grid& image_grid, int coarse_n, int rank,
                                  int hidden, Rng& rng, double basis_init_std = 0.5);

StormModel make_storm_model(ParamSet& ps, const Grid& image_grid, int coarse_n, int rank,
                            int hidden, Rng& rng, double basis_init_std = 0.5);

/// Integration path through phase space; waypoints run from the start phase
/// to the end phase inclusive, so n_steps = waypoints.size() - 1.
struct PathSpec {
    std::vector<PhaseSample> waypoints;
    int n_steps() const { return int(waypoints.size()) - 1; }
};

/// Straight path from the template phase (0,0) to tau.
PathSpec straight_path(const PhaseSample& tau, int n_steps);
/// Same endpoints, interior waypoints jittered by Gaussian noise with
/// standard deviation rel_std times the straight step length.
PathSpec perturb_path(const PathSpec& path, double rel_std, Rng& rng);
/// The path walked backwards (integrating along it inverts the flow).
PathSpec reversed_path(const PathSpec& path);

/// Record the flow integral on a tape. `x0` holds seed positions
/// [n][dim]; the result node holds the integrated positions [n][dim].
int build_flow_positions(Tape& t, const VelocityModel& vm, const std::vector<int>& leaves,
                         const PathSpec& path, int x0);

/// Record the direct low-rank displacement map position update on a tape.
int build_storm_positions(Tape& t, const StormModel& sm, const std::vector<int>& leaves,
                          const PhaseSample& tau, int x0);

/// Node coordinates of a grid, [n_points][dim], the usual seed set.
std::vector<double> grid_node_coords(const Grid& g);

/// Evaluation (no gradients): integrate seed points along a path.
std::vector<double> flow_positions(const VelocityModel& vm, const ParamSet& ps,
                                   const PathSpec& path, const std::vector<double>& seeds);

/// Displacement field phi(r) - r on grid nodes for the straight path to tau.
VectorField flow_displacement(const VelocityModel& vm, const ParamSet& ps, const PhaseSample& tau,
                              const Grid& g, int n_steps);

/// Inverse map phi_tau^{-1} - id on grid nodes: the straight path walked
/// backwards from tau to the template phase.
VectorField inverse_flow_displacement(const VelocityModel& vm, const ParamSet& ps,
                                      const PhaseSample& tau, const Grid& g, int n_steps);

/// Displacement of the map taking the frame at tau1 to the frame at tau2,
/// phi_tau2 o phi_tau1^{-1}, composed by interpolating the forward
/// displacement field at the inverse-mapped points.
VectorField transport_displacement(const VelocityModel& vm, const ParamSet& ps,
                                   const PhaseSample& tau1, const PhaseSample& tau2, const Grid& g,
                                   int n_steps);

/// Integrate seeds along a path for an explicit velocity-tensor family. Each
/// tensor holds both process blocks on the model's coarse grid (cardiac
/// block first, [2 * nodes * dim] values); the model's weight net supplies
/// the per-segment combination weights, so tensors.size() must be 2 * rank.
/// With the model's own basis split into per-process tensors this matches
/// flow_positions up to rounding.
std::vector<double> flow_positions_tensors(const VelocityModel& vm, const ParamSet& ps,
                                           const std::vector<std::vector<double>>& tensors,
                                           const PathSpec& path, const std::vector<double>& seeds);

/// The model's own basis as velocity-tensor atoms for
/// flow_positions_tensors: atom b = n*2+s carries basis field b in process
/// block s and zeros in the other block.
std::vector<std::vector<double>> velocity_tensor_atoms(const VelocityModel& vm,
                                                       const ParamSet& ps);

/// Velocity field of one process at a phase, sampled at arbitrary points.
std::vector<double> velocity_at(const VelocityModel& vm, const ParamSet& ps,
                                const PhaseSample& tau, int process,
                                const std::vector<double>& points);

VectorField storm_displacement(const StormModel& sm, const ParamSet& ps, const PhaseSample& tau,
                               const Grid& g);

/// Checkpoint: `path` gets a text manifest (meta keys plus the parameter
/// table) and `path`.f32 the values as little-endian float32 in
/// registration order.
void save_checkpoint(const std::string& path, const ParamSet& ps, const TextKv& meta);
ParamSet load_checkpoint(const std::string& path, TextKv& meta);

}  // namespace moco
