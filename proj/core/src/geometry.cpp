#include "aet/geometry.hpp"

#include <cmath>

namespace aet {

namespace {
constexpr double kDegToRad = 0.017453292519943295;
}

Mat3 rotation_matrix(double angle_deg, Axis axis) {
    double c = std::cos(angle_deg * kDegToRad);
    double s = std::sin(angle_deg * kDegToRad);
    switch (axis) {
    case Axis::X:
        return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
    case Axis::Y:
        return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
    default:
        return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    }
}

Vec3 rotate_to_beam(const Vec3& point, double angle_deg, Axis axis) {
    return rotation_matrix(angle_deg, axis).apply(point);
}

} // namespace aet
