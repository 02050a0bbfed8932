#pragma once

// Independent reference implementations used only by tests. Everything here
// is deliberately brute-force and shares no code with the library paths it
// checks (rotations via Rodrigues' formula, projection via midpoint
// quadrature, rasterization via untruncated per-voxel sums).

#include <cmath>
#include <vector>

#include "aet/types.hpp"

namespace aet::oracle {

inline Vec3 rodrigues_rotate(const Vec3& k, double angle_deg, const Vec3& v) {
    double t = angle_deg * M_PI / 180.0;
    Vec3 kxv{k.y * v.z - k.z * v.y, k.z * v.x - k.x * v.z, k.x * v.y - k.y * v.x};
    double kv = k.x * v.x + k.y * v.y + k.z * v.z;
    return v * std::cos(t) + kxv * std::sin(t) + k * (kv * (1.0 - std::cos(t)));
}

inline Vec3 unit_axis(Axis a) {
    switch (a) {
    case Axis::X: return {1, 0, 0};
    case Axis::Y: return {0, 1, 0};
    default: return {0, 0, 1};
    }
}

/// Midpoint-quadrature line integral of the atom's density along the beam
/// for one detector pixel: step sigma/50 over +-6 sigma around the atom's
/// beam-frame depth. No truncation in the transverse plane.
inline double quadrature_pixel(const GaussianAtom& atom, double angle_deg,
                               Axis axis, double u_col, double u_row) {
    Vec3 k = unit_axis(axis);
    // Beam-frame depth of the atom center (forward rotation).
    Vec3 cb = rodrigues_rotate(k, angle_deg, atom.mu);
    double t0 = cb.z;
    const double step = atom.sigma / 50.0;
    const double span = 6.0 * atom.sigma;
    const int n = static_cast<int>(std::ceil(2.0 * span / step));
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double t = t0 - span + (i + 0.5) * step;
        // Beam-frame sample point -> sample frame via the inverse rotation.
        Vec3 bp = (axis == Axis::X) ? Vec3{u_row, u_col, t} : Vec3{u_col, u_row, t};
        Vec3 p = rodrigues_rotate(k, -angle_deg, bp);
        Vec3 d = p - atom.mu;
        sum += std::exp(-d.norm2() / (2.0 * atom.sigma * atom.sigma));
    }
    return atom.q * sum * step;
}

/// Full reference frame for one atom at one angle.
inline std::vector<double> quadrature_frame(const GaussianAtom& atom,
                                            double angle_deg,
                                            const TiltGeometry& g) {
    std::vector<double> frame(g.frame_pixels(), 0.0);
    for (int r = 0; r < g.det_rows; ++r) {
        double u_row = (r - 0.5 * (g.det_rows - 1)) * g.pixel_pitch;
        for (int c = 0; c < g.det_cols; ++c) {
            double u_col = (c - 0.5 * (g.det_cols - 1)) * g.pixel_pitch;
            frame[static_cast<std::size_t>(r) * g.det_cols + c] +=
                quadrature_pixel(atom, angle_deg, g.axis, u_col, u_row);
        }
    }
    return frame;
}

/// Untruncated direct rasterization: every atom contributes to every voxel.
inline VoxelVolume brute_force_rasterize(const AtomCloud& cloud, VoxelVolume grid) {
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                Vec3 r = grid.voxel_center(ix, iy, iz);
                double v = 0.0;
                for (const GaussianAtom& a : cloud.atoms)
                    v += a.q * std::exp(-(r - a.mu).norm2() /
                                        (2.0 * a.sigma * a.sigma));
                grid.at(ix, iy, iz) = v;
            }
    return grid;
}

} // namespace aet::oracle
