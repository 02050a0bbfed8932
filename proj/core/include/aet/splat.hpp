#pragma once

#include <vector>

#include "aet/types.hpp"

namespace aet {

// Analytic projector for isotropic 3D Gaussians. A Gaussian
// q * exp(-|r - mu|^2 / (2 sigma^2)) integrated along the beam gives the 2D
// footprint q * sigma * sqrt(2 pi) * exp(-|u - c|^2 / (2 sigma^2)) at
// detector point u, where c is the projected center. Footprints are
// truncated: outside kProjectTruncSigmas (projection) or kRasterTruncSigmas
// (rasterization) the contribution is dropped. The radii are sized so the
// dropped tail stays below 4e-6 of the peak (projection) and the rasterized
// field keeps 1e-4 relative accuracy even where ~20 atoms overlap.
inline constexpr double kProjectTruncSigmas = 5.0;
inline constexpr double kRasterTruncSigmas = 6.5;

/// Derivatives of the scalar loss with respect to every atom parameter.
struct SplatGradients {
    std::vector<Vec3> d_mu;
    std::vector<double> d_sigma;
    std::vector<double> d_q;

    std::size_t size() const { return d_mu.size(); }
};

/// Adds one atom's analytic footprint at the given tilt angle into a
/// row-major frame accumulator of geometry's detector shape.
void project_atom(const GaussianAtom& atom, double angle_deg,
                  const TiltGeometry& geometry, double* frame);

/// Projects the whole cloud over every angle. Frames may be computed
/// concurrently; atoms are always accumulated in index order, so the
/// result is independent of thread count. Throws InvalidInput when the
/// cloud's sigma scale is incompatible with the detector pitch (a
/// normalized/physical unit mix-up).
ProjectionStack project_cloud(const AtomCloud& cloud, const TiltGeometry& geometry);

/// Evaluates sum_a q_a exp(-|r - mu_a|^2 / (2 sigma_a^2)) on the grid.
/// `grid` supplies shape/spacing/origin; its data is overwritten.
VoxelVolume rasterize_volume(const AtomCloud& cloud, VoxelVolume grid);

/// L1 data term: loss = mean over all pixels of |predicted - measured|,
/// with exact analytic gradients through the truncated footprints
/// (zero subgradient at zero residual). Per-atom positional gradient
/// magnitudes are folded into cloud.grad_accum for the densifier.
double backward_l1(AtomCloud& cloud, const TiltGeometry& geometry,
                   const ProjectionStack& measured, SplatGradients& grads);

} // namespace aet
