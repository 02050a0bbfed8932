#pragma once

#include "aet/types.hpp"
#include "aet/vec3.hpp"

namespace aet {

// Coordinate conventions, fixed once and pinned by tests:
//  - right-handed lab frame, angles in degrees, active rotations;
//  - rotate_to_beam applies R_axis(angle) to the point, after which the
//    beam travels along +z;
//  - the detector row coordinate runs along the tilt axis (which rotation
//    leaves fixed), the column coordinate along the remaining transverse
//    axis. For Axis::Z, rows map to y and columns to x.

struct Mat3 {
    double m[3][3];

    Vec3 apply(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    /// Applies the transpose (the inverse, for rotations).
    Vec3 apply_t(const Vec3& v) const {
        return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
                m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
                m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
    }
};

/// Active right-handed rotation by angle_deg about the given axis.
Mat3 rotation_matrix(double angle_deg, Axis axis);

/// Rotates a point into beam-aligned coordinates (beam along +z).
Vec3 rotate_to_beam(const Vec3& point, double angle_deg, Axis axis);

/// Detector-plane coordinates (u_col, u_row) of a beam-frame point.
inline void detector_coords(const Vec3& beam_point, Axis axis, double& u_col,
                            double& u_row) {
    if (axis == Axis::X) {
        u_col = beam_point.y;
        u_row = beam_point.x;
    } else { // Y and Z share the mapping
        u_col = beam_point.x;
        u_row = beam_point.y;
    }
}

/// Beam-frame point for detector coordinates and depth t along the beam.
inline Vec3 beam_point(double u_col, double u_row, double t, Axis axis) {
    if (axis == Axis::X) return {u_row, u_col, t};
    return {u_col, u_row, t};
}

/// Physical coordinate of a pixel center on a centered detector axis.
inline double pixel_center(int index, int n, double pitch) {
    return (index - 0.5 * (n - 1)) * pitch;
}

/// Inverse of pixel_center: fractional pixel index of a coordinate.
inline double pixel_index(double u, int n, double pitch) {
    return u / pitch + 0.5 * (n - 1);
}

} // namespace aet
