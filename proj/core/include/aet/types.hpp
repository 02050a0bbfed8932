#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "aet/errors.hpp"
#include "aet/vec3.hpp"

namespace aet {

/// Tilt (rotation) axis of the acquisition. The beam always travels along
/// +z in the beam-aligned frame; see geometry.hpp for the full convention.
enum class Axis : unsigned char { X = 0, Y = 1, Z = 2 };

/// One atom: an isotropic 3D Gaussian q * exp(-|r - mu|^2 / (2 sigma^2)).
/// The covariance is sigma^2 * I by construction and never stored as a matrix.
struct GaussianAtom {
    Vec3 mu;            // center, Angstrom (or normalized units)
    double sigma = 1.0; // isotropic std-dev, > 0
    double q = 0.0;     // amplitude, >= 0

    bool valid() const {
        return mu.finite() && std::isfinite(sigma) && sigma > 0.0 &&
               std::isfinite(q) && q >= 0.0;
    }
};

/// Dynamic atom collection plus per-atom optimizer bookkeeping.
/// grad_accum[i] is a running mean of |dL/dmu_i| used by densification;
/// mu_momentum[i] is the first-moment state for position updates. All
/// side arrays stay index-aligned with atoms through every structural op.
struct AtomCloud {
    std::vector<GaussianAtom> atoms;
    std::vector<double> grad_accum;
    std::vector<int> grad_count;
    std::vector<Vec3> mu_momentum;

    std::size_t size() const { return atoms.size(); }
    bool empty() const { return atoms.empty(); }

    void push_atom(const GaussianAtom& a) {
        atoms.push_back(a);
        grad_accum.push_back(0.0);
        grad_count.push_back(0);
        mu_momentum.push_back(Vec3{});
    }

    void reset_accumulators() {
        std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
        std::fill(grad_count.begin(), grad_count.end(), 0);
    }

    /// Folds one positional-gradient magnitude into the running mean.
    void accumulate_grad(std::size_t i, double magnitude) {
        int n = grad_count[i];
        grad_accum[i] = (grad_accum[i] * n + magnitude) / (n + 1);
        grad_count[i] = n + 1;
    }

    bool consistent() const {
        return grad_accum.size() == atoms.size() &&
               grad_count.size() == atoms.size() &&
               mu_momentum.size() == atoms.size();
    }
};

/// Single-axis tilt geometry: ordered angles, rotation axis, detector grid.
struct TiltGeometry {
    std::vector<double> angles_deg;
    Axis axis = Axis::Y;
    int det_rows = 0;
    int det_cols = 0;
    double pixel_pitch = 0.25; // Angstrom per pixel

    std::size_t n_angles() const { return angles_deg.size(); }
    std::size_t frame_pixels() const {
        return static_cast<std::size_t>(det_rows) * det_cols;
    }

    /// Angles strictly increasing within [-90, 90], positive grid and pitch.
    void validate() const;
};

/// Per-angle 2D projection frames, row-major within each frame.
struct ProjectionStack {
    TiltGeometry geometry;
    std::vector<double> data; // n_angles * det_rows * det_cols

    ProjectionStack() = default;
    explicit ProjectionStack(TiltGeometry geom)
        : geometry(std::move(geom)),
          data(geometry.n_angles() * geometry.frame_pixels(), 0.0) {}

    std::size_t n_frames() const { return geometry.n_angles(); }

    double* frame(std::size_t i) { return data.data() + i * geometry.frame_pixels(); }
    const double* frame(std::size_t i) const {
        return data.data() + i * geometry.frame_pixels();
    }

    double& at(std::size_t angle, int row, int col) {
        return data[angle * geometry.frame_pixels() +
                    static_cast<std::size_t>(row) * geometry.det_cols + col];
    }
    double at(std::size_t angle, int row, int col) const {
        return data[angle * geometry.frame_pixels() +
                    static_cast<std::size_t>(row) * geometry.det_cols + col];
    }

    void validate() const;
};

/// 3D scalar grid with isotropic spacing. origin is the center of voxel
/// (0,0,0); storage is x-fastest: data[ix + nx*(iy + ny*iz)].
struct VoxelVolume {
    int nx = 0, ny = 0, nz = 0;
    double spacing = 1.0; // Angstrom
    Vec3 origin;
    std::vector<double> data;

    VoxelVolume() = default;
    VoxelVolume(int nx_, int ny_, int nz_, double spacing_, Vec3 origin_)
        : nx(nx_), ny(ny_), nz(nz_), spacing(spacing_), origin(origin_),
          data(static_cast<std::size_t>(nx_) * ny_ * nz_, 0.0) {}

    /// Cube of n^3 voxels centered on the lab origin.
    static VoxelVolume centered_cube(int n, double spacing_) {
        double half = 0.5 * (n - 1) * spacing_;
        return VoxelVolume(n, n, n, spacing_, Vec3{-half, -half, -half});
    }

    std::size_t n_voxels() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
    std::size_t index(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(iy) +
                    static_cast<std::size_t>(ny) * static_cast<std::size_t>(iz));
    }
    double& at(int ix, int iy, int iz) { return data[index(ix, iy, iz)]; }
    double at(int ix, int iy, int iz) const { return data[index(ix, iy, iz)]; }

    Vec3 voxel_center(int ix, int iy, int iz) const {
        return {origin.x + ix * spacing, origin.y + iy * spacing,
                origin.z + iz * spacing};
    }

    double max_value() const;
    double min_value() const;

    void validate() const;
};

/// Reference Gaussian parameters for one atomic species.
struct SpeciesRef {
    double amplitude = 1.0; // potential units
    double sigma = 0.5;     // Angstrom
};

/// Known atom positions and species labels used to score reconstructions.
struct GroundTruthStructure {
    std::vector<Vec3> positions;       // Angstrom
    std::vector<std::string> species;  // per-atom label, same length
    std::map<std::string, SpeciesRef> ref; // per-species reference params

    std::size_t size() const { return positions.size(); }

    const SpeciesRef& ref_for(const std::string& label) const {
        auto it = ref.find(label);
        if (it == ref.end())
            throw InvalidInput("no reference parameters for species " + label);
        return it->second;
    }

    /// Minimum distance over all atom pairs (infinity for < 2 atoms).
    double min_pairwise_distance() const;
};

} // namespace aet
