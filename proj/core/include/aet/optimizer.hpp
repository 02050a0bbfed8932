#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aet/io.hpp"
#include "aet/normalization.hpp"
#include "aet/random.hpp"
#include "aet/types.hpp"

namespace aet {

struct SplatGradients;

/// Knobs for the Gaussian-atom reconstruction loop. Learning rates and the
/// densify/prune thresholds are expressed against unit-peak measurement data
/// and the [-0.5, 0.5]^3 solve cube; distances (merge_distance, init_sigma)
/// are in Angstrom and converted internally.
struct OptimizerConfig {
    int n_init = 10000;
    int n_iters = 10000;

    double lr_mu = 5e-2;
    double lr_sigma = 1.25;
    double lr_q = 12.0;
    double momentum = 0.9; // exponential-average decay for position grads

    double densify_grad_threshold = 0.005;
    int densify_interval = 100;
    // Densification stops after this iteration; 0 means it never stops.
    int densify_until = 0;

    double prune_q_threshold = 1e-3; // absolute amplitude floor
    double prune_q_rel = 0.005;      // fraction of the current max amplitude
    int prune_interval = 100;

    double merge_distance = 0.25; // Angstrom
    int merge_interval = 100;
    int knn_cutover = 10000; // all-pairs neighbor search up to this cloud size
    int knn_k = 20;          // neighbors considered above the cutover

    int warmup_iters = 500; // no densify/prune/merge before this iteration

    double init_sigma = 0.5;         // Angstrom
    double init_peak_fraction = 0.02; // initial per-atom peak / data peak

    std::uint64_t seed = 0;

    void validate() const;
};

/// Region of the solve cube that the detector measures from every tilt: a
/// cylinder around the tilt axis, clipped to the cube. An atom outside it
/// rotates off the detector for part (or all) of the tilt range, so the data
/// cannot pin it down; the reconstruction loop refuses to place or keep
/// atoms there.
struct SolveSupport {
    Axis axis = Axis::Y;
    double radius = 0.0;      // max transverse distance from the tilt axis
    double half_height = 0.0; // max |coordinate| along the tilt axis

    bool contains(const Vec3& p) const;

    /// The same region under an isotropic rescaling of space.
    SolveSupport scaled(double s) const { return {axis, radius * s, half_height * s}; }
};

/// Support region for a solve cube of the given side under this geometry.
/// The cylinder radius is the detector-column half-extent (for Axis::Z both
/// detector directions rotate, so the smaller one applies) and the height is
/// the detector-row half-extent, each clipped to the cube.
SolveSupport solve_support(const TiltGeometry& geometry, double cube_side);

/// Removes atoms whose centers lie outside the support. Returns the count.
int cull_outside(AtomCloud& cloud, const SolveSupport& support);

/// n_init atoms uniform in the normalized cube [-0.5, 0.5]^3, widths
/// init_sigma * space_scale and amplitudes such that each atom's projected
/// peak is init_peak_fraction. Deterministic per config seed. The overload
/// with a support region (in normalized coordinates) rejection-samples so
/// every seed starts inside it.
AtomCloud init_random(const OptimizerConfig& config, double space_scale);
AtomCloud init_random(const OptimizerConfig& config, double space_scale,
                      const SolveSupport& support);

/// One gradient step: position update with exponential-average smoothing,
/// multiplicative (log-space) sigma update, amplitude clamped at zero.
/// Throws OptimizerAbort on non-finite gradients.
void step(AtomCloud& cloud, const SplatGradients& grads, const OptimizerConfig& config);

/// Duplicates every atom whose mean positional-gradient magnitude since the
/// last reset exceeds the threshold; clones are offset by N(0, sigma/2) and
/// all accumulators reset. Returns the number of clones added.
int densify(AtomCloud& cloud, double grad_threshold, Rng& rng);

/// Removes atoms with amplitude < q_threshold, compacting bookkeeping
/// arrays. Returns the number of atoms removed.
int prune(AtomCloud& cloud, double q_threshold);

/// Single merge pass: scanning atoms in index order, each not-yet-merged
/// atom gathers unmerged neighbors within merge_distance (all pairs when the
/// cloud is at most knn_cutover atoms, otherwise among its knn_k nearest)
/// and the group is replaced by one atom with mean position, amplitude, and
/// width. Every atom participates in at most one merge per pass. Returns
/// the number of atoms removed (0 at a fixed point, where the minimum
/// pairwise distance is at least merge_distance).
int merge_close(AtomCloud& cloud, double merge_distance, int knn_cutover = 10000,
                int knn_k = 20);

struct ReconstructResult {
    AtomCloud cloud; // physical units
    std::vector<IterationRecord> log;
    std::vector<std::string> warnings;
    NormalizationMap map; // the normalization the solve ran under
};

using ProgressFn = std::function<void(int iter, double loss, std::size_t k)>;

/// Full reconstruction loop: normalize the stack to unit peak and the solve
/// cube to [-0.5, 0.5]^3, seed n_init random atoms inside the measured
/// support, run n_iters of backward/step with periodic densify/prune/merge
/// (atoms drifting outside the support are culled on the prune cadence),
/// then a final merge and prune, and return the cloud in physical units.
/// cube_side <= 0 picks the largest cube inside the detector. Deterministic
/// per seed and independent of thread count.
ReconstructResult reconstruct(const ProjectionStack& stack, const OptimizerConfig& config,
                              double cube_side = 0.0, const ProgressFn& progress = {});

} // namespace aet
