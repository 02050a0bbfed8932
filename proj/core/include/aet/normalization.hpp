#pragma once

#include "aet/types.hpp"

namespace aet {

/// Affine map i -> i * scale + offset for projection intensities.
struct IntensityMap {
    double scale = 1.0;
    double offset = 0.0;

    double apply(double v) const { return v * scale + offset; }
    double invert(double v) const { return (v - offset) / scale; }
};

/// Isotropic affine map r -> (r - center) * scale for coordinates.
struct SpaceMap {
    double scale = 1.0;
    Vec3 center;

    Vec3 apply(const Vec3& r) const { return (r - center) * scale; }
    Vec3 invert(const Vec3& r) const { return r / scale + center; }
};

/// Mapping between physical units and the optimization frame: intensities
/// onto [0, 256], the reconstruction cube onto [-0.5, 0.5]^3. Atom
/// amplitudes transform by data.scale / space.scale so that normalized
/// clouds reproduce normalized projections (the intensity offset applies
/// to measured frames only; atom footprints carry no background).
struct NormalizationMap {
    IntensityMap data;
    SpaceMap space;

    /// Throws InvalidConfig when either scale is zero or non-finite.
    void validate() const;

    /// Standard map for a measured stack over a cube of the given side:
    /// stack max -> 256 (zero stays zero), cube -> [-0.5, 0.5]^3.
    static NormalizationMap standard(const ProjectionStack& stack,
                                     double cube_side, Vec3 cube_center = {});

    double amplitude_scale() const { return data.scale / space.scale; }
};

ProjectionStack normalize(const ProjectionStack& stack, const NormalizationMap& map);
ProjectionStack denormalize(const ProjectionStack& stack, const NormalizationMap& map);

AtomCloud normalize(const AtomCloud& cloud, const NormalizationMap& map);
AtomCloud denormalize(const AtomCloud& cloud, const NormalizationMap& map);

/// Geometry expressed in normalized coordinates (pitch scaled).
TiltGeometry normalize(const TiltGeometry& geom, const NormalizationMap& map);

} // namespace aet
