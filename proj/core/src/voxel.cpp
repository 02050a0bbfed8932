#include "aet/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "aet/errors.hpp"
#include "aet/geometry.hpp"
#include "aet/parallel.hpp"

namespace aet {

namespace {

/// Geometry of one tilt frame's ray bundle: every detector ray travels
/// along `dir`; the pixel (row, col) ray passes through
/// col_axis * u_col + row_axis * u_row at beam depth t = 0.
struct FrameRays {
    Vec3 dir;
    Vec3 col_axis;
    Vec3 row_axis;

    FrameRays(double angle_deg, Axis axis) {
        Mat3 R = rotation_matrix(angle_deg, axis);
        dir = R.apply_t({0, 0, 1});
        Vec3 col_beam = (axis == Axis::X) ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
        Vec3 row_beam = (axis == Axis::X) ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        col_axis = R.apply_t(col_beam);
        row_axis = R.apply_t(row_beam);
    }
};

/// Clips the ray o + t*dir against the axis-aligned box that bounds the
/// trilinear support (voxel centers padded by one spacing). Returns false
/// when the ray misses entirely.
bool clip_ray(const Vec3& o, const Vec3& dir, const VoxelVolume& v, double& t0,
              double& t1) {
    t0 = -1e300;
    t1 = 1e300;
    for (int ax = 0; ax < 3; ++ax) {
        double lo = v.origin[ax] - v.spacing;
        double hi = v.origin[ax] + ((ax == 0 ? v.nx : ax == 1 ? v.ny : v.nz)) * v.spacing;
        double oa = o[ax], da = dir[ax];
        if (std::abs(da) < 1e-12) {
            if (oa < lo || oa > hi) return false;
            continue;
        }
        double ta = (lo - oa) / da;
        double tb = (hi - oa) / da;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 < t1;
}

/// Walks the midpoint samples of one ray, handing each sample's 8-corner
/// trilinear stencil to `emit(voxel_index, weight)`. Weight includes the
/// step length. Both projector directions use this single code path, so the
/// operators are exact transposes by construction.
template <typename Emit>
void walk_ray(const VoxelVolume& v, const Vec3& o, const Vec3& dir, Emit&& emit) {
    double t0, t1;
    if (!clip_ray(o, dir, v, t0, t1)) return;
    const double step = v.spacing;
    const int n = static_cast<int>(std::ceil((t1 - t0) / step));
    const double inv_sp = 1.0 / v.spacing;
    for (int k = 0; k < n; ++k) {
        double t = t0 + (k + 0.5) * step;
        if (t >= t1) break;
        double gx = (o.x + t * dir.x - v.origin.x) * inv_sp;
        double gy = (o.y + t * dir.y - v.origin.y) * inv_sp;
        double gz = (o.z + t * dir.z - v.origin.z) * inv_sp;
        int ix = static_cast<int>(std::floor(gx));
        int iy = static_cast<int>(std::floor(gy));
        int iz = static_cast<int>(std::floor(gz));
        double fx = gx - ix, fy = gy - iy, fz = gz - iz;
        for (int c = 0; c < 8; ++c) {
            int jx = ix + (c & 1);
            int jy = iy + ((c >> 1) & 1);
            int jz = iz + ((c >> 2) & 1);
            if (jx < 0 || jx >= v.nx || jy < 0 || jy >= v.ny || jz < 0 || jz >= v.nz)
                continue;
            double w = ((c & 1) ? fx : 1.0 - fx) * (((c >> 1) & 1) ? fy : 1.0 - fy) *
                       (((c >> 2) & 1) ? fz : 1.0 - fz);
            emit(v.index(jx, jy, jz), w * step);
        }
    }
}

} // namespace

void forward_project_frame(const VoxelVolume& volume, double angle_deg,
                           const TiltGeometry& geometry, double* frame) {
    FrameRays rays(angle_deg, geometry.axis);
    parallel_for(static_cast<std::size_t>(geometry.det_rows),
                 [&](std::size_t rlo, std::size_t rhi) {
                     for (std::size_t r = rlo; r < rhi; ++r) {
                         double u_row = pixel_center(static_cast<int>(r), geometry.det_rows,
                                                     geometry.pixel_pitch);
                         for (int c = 0; c < geometry.det_cols; ++c) {
                             double u_col =
                                 pixel_center(c, geometry.det_cols, geometry.pixel_pitch);
                             Vec3 o = rays.col_axis * u_col + rays.row_axis * u_row;
                             double acc = 0.0;
                             walk_ray(volume, o, rays.dir, [&](std::size_t idx, double w) {
                                 acc += volume.data[idx] * w;
                             });
                             frame[r * geometry.det_cols + c] += acc;
                         }
                     }
                 });
}

ProjectionStack forward_project(const VoxelVolume& volume, const TiltGeometry& geometry) {
    volume.validate();
    geometry.validate();
    ProjectionStack stack(geometry);
    // One frame at a time; rows inside the frame run in parallel. Each
    // pixel has a single writer, so any thread count gives the same bits.
    for (std::size_t f = 0; f < geometry.n_angles(); ++f)
        forward_project_frame(volume, geometry.angles_deg[f], geometry, stack.frame(f));
    return stack;
}

void backproject_frame(const double* frame, double angle_deg,
                       const TiltGeometry& geometry, VoxelVolume& into) {
    FrameRays rays(angle_deg, geometry.axis);
    for (int r = 0; r < geometry.det_rows; ++r) {
        double u_row = pixel_center(r, geometry.det_rows, geometry.pixel_pitch);
        for (int c = 0; c < geometry.det_cols; ++c) {
            double y = frame[static_cast<std::size_t>(r) * geometry.det_cols + c];
            if (y == 0.0) continue;
            double u_col = pixel_center(c, geometry.det_cols, geometry.pixel_pitch);
            Vec3 o = rays.col_axis * u_col + rays.row_axis * u_row;
            walk_ray(into, o, rays.dir,
                     [&](std::size_t idx, double w) { into.data[idx] += y * w; });
        }
    }
}

VoxelVolume backproject(const ProjectionStack& stack, VoxelVolume grid) {
    stack.validate();
    grid.validate();
    std::fill(grid.data.begin(), grid.data.end(), 0.0);
    const std::size_t n_frames = stack.n_frames();
    if (n_frames == 0) return grid;

    // Per-frame partial volumes, reduced strictly in frame order: the
    // result is bit-identical at any thread count.
    const std::size_t batch_width =
        std::min<std::size_t>(std::max(1, thread_count()), n_frames);
    std::vector<VoxelVolume> scratch(batch_width, grid);
    for (std::size_t base = 0; base < n_frames; base += batch_width) {
        std::size_t batch = std::min(batch_width, n_frames - base);
        parallel_for(batch, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                std::fill(scratch[i].data.begin(), scratch[i].data.end(), 0.0);
                backproject_frame(stack.frame(base + i), stack.geometry.angles_deg[base + i],
                                  stack.geometry, scratch[i]);
            }
        });
        for (std::size_t i = 0; i < batch; ++i) {
            const std::vector<double>& part = scratch[i].data;
            for (std::size_t j = 0; j < grid.data.size(); ++j) grid.data[j] += part[j];
        }
    }
    return grid;
}

} // namespace aet
