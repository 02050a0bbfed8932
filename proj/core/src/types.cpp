#include "aet/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace aet {

void TiltGeometry::validate() const {
    if (det_rows <= 0 || det_cols <= 0)
        throw InvalidConfig("detector grid must be positive");
    if (!(pixel_pitch > 0.0) || !std::isfinite(pixel_pitch))
        throw InvalidConfig("pixel pitch must be positive and finite");
    for (std::size_t i = 0; i < angles_deg.size(); ++i) {
        double a = angles_deg[i];
        if (!std::isfinite(a) || a < -90.0 || a > 90.0)
            throw InvalidConfig("tilt angles must lie in [-90, 90]");
        if (i > 0 && !(angles_deg[i - 1] < a))
            throw InvalidConfig("tilt angles must be strictly increasing");
    }
}

void ProjectionStack::validate() const {
    geometry.validate();
    if (data.size() != geometry.n_angles() * geometry.frame_pixels())
        throw InvalidInput("projection stack size does not match geometry");
    for (double v : data)
        if (!std::isfinite(v)) throw InvalidInput("non-finite projection value");
}

double VoxelVolume::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : data) m = std::max(m, v);
    return m;
}

double VoxelVolume::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : data) m = std::min(m, v);
    return m;
}

void VoxelVolume::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0)
        throw InvalidConfig("volume dimensions must be positive");
    if (!(spacing > 0.0) || !std::isfinite(spacing))
        throw InvalidConfig("voxel spacing must be positive and finite");
    if (data.size() != n_voxels())
        throw InvalidInput("volume data size does not match dimensions");
    for (double v : data)
        if (!std::isfinite(v)) throw InvalidInput("non-finite voxel value");
}

double GroundTruthStructure::min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < positions.size(); ++i)
        for (std::size_t j = i + 1; j < positions.size(); ++j)
            best = std::min(best, distance(positions[i], positions[j]));
    return best;
}

} // namespace aet
