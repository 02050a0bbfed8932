#pragma once

#include <string>
#include <vector>

#include "aet/types.hpp"

namespace aet {

/// Filtered backprojection on a single-tilt-axis stack: each detector row is
/// ramp-filtered (band-limited Ram-Lak kernel, frequency-domain application
/// on a power-of-two padded buffer) and smeared back across the grid with
/// bilinear detector interpolation, scaled by pi / (2 n_angles). `grid`
/// supplies the output shape; its contents are replaced. Exactly linear in
/// the input stack.
VoxelVolume fbp(const ProjectionStack& stack, VoxelVolume grid);

struct SartOptions {
    int n_sweeps = 50;
    double relaxation = 0.3; // in [0, 2)

    void validate() const;
};

struct SartResult {
    VoxelVolume volume;
    // Mean |Ax - p| over all pixels after each completed sweep.
    std::vector<double> residuals;
    std::vector<std::string> warnings;
};

/// Simultaneous algebraic reconstruction: angle-by-angle updates
/// x += relaxation * A_t^T [ (p_t - A_t x) / rowsum_t ] with the matched
/// ray-driven projector pair, a nonnegativity clamp after every sweep, and
/// an early stop (with warning) if the residual doubles from its minimum.
SartResult sart(const ProjectionStack& stack, VoxelVolume grid,
                const SartOptions& options = {});

struct TraceOptions {
    double min_separation = 2.0;  // Angstrom
    double floor_fraction = 0.15; // intensity floor as a fraction of the max

    void validate() const;
};

/// Peak tracing on a reconstructed volume: strict 26-neighborhood local
/// maxima above the intensity floor, refined to sub-voxel positions with a
/// per-axis 3-point parabolic fit, then accepted greedily in descending
/// intensity subject to the pairwise min_separation. The returned set always
/// satisfies the separation invariant.
std::vector<Vec3> trace_atoms(const VoxelVolume& volume, const TraceOptions& options = {});

} // namespace aet
