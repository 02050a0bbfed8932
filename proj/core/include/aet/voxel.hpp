#pragma once

#include "aet/types.hpp"

namespace aet {

// Ray-driven projector pair for voxel volumes. The forward operator samples
// the volume by trilinear interpolation at midpoints spaced one voxel apart
// along each detector ray and scales by the step length; samples outside
// the volume contribute zero. The adjoint scatters with exactly the same
// weights (a matched transpose pair, as algebraic solvers require).

/// Line integrals of the volume over every angle of the geometry.
ProjectionStack forward_project(const VoxelVolume& volume, const TiltGeometry& geometry);

/// Exact adjoint of forward_project. `grid` supplies shape/spacing/origin;
/// its data is overwritten. The per-frame partial volumes are reduced in
/// frame order, so the result is independent of thread count.
VoxelVolume backproject(const ProjectionStack& stack, VoxelVolume grid);

/// Single-angle forward: accumulates the frame for one tilt angle into a
/// row-major buffer of the geometry's detector shape. Rows run in parallel.
void forward_project_frame(const VoxelVolume& volume, double angle_deg,
                           const TiltGeometry& geometry, double* frame);

/// Single-angle adjoint: scatters one frame into `into` (accumulating).
/// Single-threaded; callers own any higher-level parallelism.
void backproject_frame(const double* frame, double angle_deg,
                       const TiltGeometry& geometry, VoxelVolume& into);

} // namespace aet
