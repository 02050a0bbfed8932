#include "aet/normalization.hpp"

#include <cmath>

#include "aet/errors.hpp"

namespace aet {

void NormalizationMap::validate() const {
    if (!std::isfinite(data.scale) || data.scale == 0.0 || !std::isfinite(data.offset))
        throw InvalidConfig("normalization: intensity scale must be finite and non-zero");
    if (!std::isfinite(space.scale) || space.scale == 0.0 || !space.center.finite())
        throw InvalidConfig("normalization: spatial scale must be finite and non-zero");
}

NormalizationMap NormalizationMap::standard(const ProjectionStack& stack,
                                            double cube_side, Vec3 cube_center) {
    double peak = 0.0;
    for (double v : stack.data) peak = std::max(peak, v);
    if (!(peak > 0.0))
        throw InvalidConfig("normalization: stack maximum must be positive");
    if (!(cube_side > 0.0) || !std::isfinite(cube_side))
        throw InvalidConfig("normalization: cube side must be positive");
    NormalizationMap map;
    map.data.scale = 256.0 / peak;
    map.data.offset = 0.0;
    map.space.scale = 1.0 / cube_side;
    map.space.center = cube_center;
    map.validate();
    return map;
}

ProjectionStack normalize(const ProjectionStack& stack, const NormalizationMap& map) {
    map.validate();
    ProjectionStack out = stack;
    for (double& v : out.data) v = map.data.apply(v);
    out.geometry.pixel_pitch = stack.geometry.pixel_pitch * map.space.scale;
    return out;
}

ProjectionStack denormalize(const ProjectionStack& stack, const NormalizationMap& map) {
    map.validate();
    ProjectionStack out = stack;
    for (double& v : out.data) v = map.data.invert(v);
    out.geometry.pixel_pitch = stack.geometry.pixel_pitch / map.space.scale;
    return out;
}

AtomCloud normalize(const AtomCloud& cloud, const NormalizationMap& map) {
    map.validate();
    AtomCloud out = cloud;
    const double qs = map.amplitude_scale();
    for (GaussianAtom& a : out.atoms) {
        a.mu = map.space.apply(a.mu);
        a.sigma *= map.space.scale;
        a.q *= qs;
    }
    return out;
}

AtomCloud denormalize(const AtomCloud& cloud, const NormalizationMap& map) {
    map.validate();
    AtomCloud out = cloud;
    const double qs = map.amplitude_scale();
    for (GaussianAtom& a : out.atoms) {
        a.mu = map.space.invert(a.mu);
        a.sigma /= map.space.scale;
        a.q /= qs;
    }
    return out;
}

TiltGeometry normalize(const TiltGeometry& geom, const NormalizationMap& map) {
    map.validate();
    TiltGeometry out = geom;
    out.pixel_pitch = geom.pixel_pitch * map.space.scale;
    return out;
}

} // namespace aet
