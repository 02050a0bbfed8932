#pragma once

#include <string>
#include <vector>

#include "aet/types.hpp"
#include "aet/vec3.hpp"

namespace aet {

/// One accepted match: indices into the ground-truth and predicted sets
/// plus their separation in angstroms.
struct MatchedPair {
    int gt_index = 0;
    int pred_index = 0;
    double distance = 0.0;
};

/// Outcome of one-to-one matching between predicted and ground-truth atom
/// positions. Count identities hold on every input:
///   n_tp + n_fn == n_gt    and    n_tp + n_fp == n_pred.
/// fpr is the false-discovery rate FP / n_pred (0 when nothing was
/// predicted); this bounded definition makes methods with different
/// prediction counts comparable.
struct MatchReport {
    int n_gt = 0;
    int n_pred = 0;
    int n_tp = 0;
    int n_fp = 0;
    int n_fn = 0;
    double tpr = 0.0;
    double fpr = 0.0;
    double matched_rmsd = 0.0; // RMS pair distance, 0 when no pairs
    std::vector<MatchedPair> pairs;
};

/// Greedy one-to-one matching. Ground-truth atoms are processed in
/// ascending order of their distance to the nearest prediction (computed
/// once, up front); each takes its nearest still-unmatched prediction if
/// that lies within `tol` angstroms. Leftover ground-truth atoms are false
/// negatives, leftover predictions false positives.
///
/// The greedy pass is not an optimal assignment, but on realistic point
/// sets its true-positive count tracks the optimum closely (see the
/// matching tests, which compare against an augmenting-path oracle).
MatchReport match_atoms(const std::vector<Vec3>& pred,
                        const std::vector<Vec3>& gt, double tol = 0.75);

/// Mean local structural similarity between two voxel grids of identical
/// dimensions. Local statistics use a separable Gaussian window (sigma 1.5,
/// the classic SSIM choice) truncated to `window` taps per axis and
/// renormalized; only windows fully inside the volume contribute.
/// Stabilizers are C1 = (0.01 L)^2 and C2 = (0.03 L)^2 with L the larger
/// of the two volumes' dynamic ranges, which keeps the metric symmetric in
/// its arguments. Two flat volumes compare via the luminance term alone.
///
/// Throws InvalidInput on shape mismatch, an even or non-positive window,
/// or a window exceeding any grid dimension.
double ssim3d(const VoxelVolume& a, const VoxelVolume& b, int window = 7);

/// Matched-prediction amplitudes grouped by the species of the matched
/// ground-truth atom.
struct SpeciesAmplitudes {
    std::string label;
    std::vector<double> q; // amplitudes of predictions matched to this species
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation (0 for fewer than 2)
};

struct AmplitudeHistogram {
    std::vector<SpeciesAmplitudes> species; // sorted by label
    /// |mean difference| / pooled sample std when exactly two species are
    /// present (infinity if the pooled std is zero but the means differ);
    /// 0 otherwise.
    double separability = 0.0;
};

/// Groups the amplitudes of matched predictions in `cloud` by the species
/// label of their matched ground-truth atom. `gt_species[i]` labels ground
/// truth atom i; `matched` must have been computed against that ground
/// truth with predictions taken from `cloud` in order.
AmplitudeHistogram amplitude_histogram(const AtomCloud& cloud,
                                       const MatchReport& matched,
                                       const std::vector<std::string>& gt_species);

} // namespace aet
