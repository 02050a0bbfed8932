#include "aet/splat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "aet/errors.hpp"
#include "aet/geometry.hpp"
#include "aet/parallel.hpp"

namespace aet {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

struct PixelRange {
    int lo = 0;
    int hi = -1; // inclusive; empty when hi < lo
};

PixelRange clamp_range(double center, double radius, int n, double pitch) {
    PixelRange r;
    r.lo = std::max(0, static_cast<int>(std::floor(pixel_index(center - radius, n, pitch))));
    r.hi = std::min(n - 1, static_cast<int>(std::ceil(pixel_index(center + radius, n, pitch))));
    return r;
}

/// Separable footprint tables along one detector axis: offset, offset^2 and
/// exp(-offset^2 / (2 sigma^2)) for each pixel in the range.
struct AxisTable {
    PixelRange range;
    std::vector<double> du;
    std::vector<double> du2;
    std::vector<double> ex;

    void fill(double center, double radius, int n, double pitch, double inv_2s2) {
        range = clamp_range(center, radius, n, pitch);
        int len = range.hi - range.lo + 1;
        if (len <= 0) return;
        du.resize(len);
        du2.resize(len);
        ex.resize(len);
        for (int k = 0; k < len; ++k) {
            double u = pixel_center(range.lo + k, n, pitch) - center;
            du[k] = u;
            du2[k] = u * u;
            ex[k] = std::exp(-u * u * inv_2s2);
        }
    }

    bool empty() const { return range.hi < range.lo; }
};

void check_units(const AtomCloud& cloud, const TiltGeometry& geometry) {
    if (cloud.empty()) return;
    double smin = cloud.atoms[0].sigma, smax = smin;
    for (const GaussianAtom& a : cloud.atoms) {
        smin = std::min(smin, a.sigma);
        smax = std::max(smax, a.sigma);
    }
    // Sub-pixel or wildly super-pixel widths mean the cloud and geometry
    // are in different unit systems (normalized vs physical). Sane setups
    // sample each Gaussian with 1..25 pixels per sigma.
    if (smax < 0.5 * geometry.pixel_pitch || smin > 25.0 * geometry.pixel_pitch)
        throw InvalidInput("cloud/geometry unit mismatch: sigma " +
                           std::to_string(smin) + ".." + std::to_string(smax) +
                           " vs pixel pitch " + std::to_string(geometry.pixel_pitch));
}

} // namespace

void project_atom(const GaussianAtom& atom, double angle_deg,
                  const TiltGeometry& geometry, double* frame) {
    if (!atom.valid())
        throw InvalidInput("project_atom: invalid atom parameters");
    if (atom.q == 0.0) return;

    Vec3 cb = rotate_to_beam(atom.mu, angle_deg, geometry.axis);
    double c_col = 0, c_row = 0;
    detector_coords(cb, geometry.axis, c_col, c_row);

    const double radius = kProjectTruncSigmas * atom.sigma;
    const double r2 = radius * radius;
    const double inv_2s2 = 1.0 / (2.0 * atom.sigma * atom.sigma);
    AxisTable col, row;
    col.fill(c_col, radius, geometry.det_cols, geometry.pixel_pitch, inv_2s2);
    row.fill(c_row, radius, geometry.det_rows, geometry.pixel_pitch, inv_2s2);
    if (col.empty() || row.empty()) return;

    const double amp = atom.q * atom.sigma * kSqrt2Pi;
    const int ncol = col.range.hi - col.range.lo + 1;
    for (int i = row.range.lo; i <= row.range.hi; ++i) {
        double er = amp * row.ex[i - row.range.lo];
        double dr2 = row.du2[i - row.range.lo];
        double* out = frame + static_cast<std::size_t>(i) * geometry.det_cols + col.range.lo;
        for (int k = 0; k < ncol; ++k) {
            if (dr2 + col.du2[k] <= r2) out[k] += er * col.ex[k];
        }
    }
}

ProjectionStack project_cloud(const AtomCloud& cloud, const TiltGeometry& geometry) {
    geometry.validate();
    check_units(cloud, geometry);
    for (const GaussianAtom& a : cloud.atoms)
        if (!a.valid()) throw InvalidInput("project_cloud: invalid atom parameters");
    ProjectionStack stack(geometry);
    parallel_for(geometry.n_angles(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t f = lo; f < hi; ++f) {
            double* frame = stack.frame(f);
            for (const GaussianAtom& atom : cloud.atoms)
                project_atom(atom, geometry.angles_deg[f], geometry, frame);
        }
    });
    return stack;
}

VoxelVolume rasterize_volume(const AtomCloud& cloud, VoxelVolume grid) {
    std::fill(grid.data.begin(), grid.data.end(), 0.0);
    if (cloud.empty()) return grid;
    for (const GaussianAtom& a : cloud.atoms)
        if (!a.valid()) throw InvalidInput("rasterize_volume: invalid atom parameters");

    // z-slabs run concurrently; within a slab atoms accumulate in index
    // order, so every voxel sees the same summation order at any thread count.
    parallel_for(static_cast<std::size_t>(grid.nz), [&](std::size_t zlo, std::size_t zhi) {
        std::vector<double> exf[3];
        for (const GaussianAtom& a : cloud.atoms) {
            if (a.q == 0.0) continue;
            const double radius = kRasterTruncSigmas * a.sigma;
            const double r2 = radius * radius;
            const double inv_2s2 = 1.0 / (2.0 * a.sigma * a.sigma);

            int lo[3], hi[3];
            double base[3] = {grid.origin.x, grid.origin.y, grid.origin.z};
            int dims[3] = {grid.nx, grid.ny, grid.nz};
            for (int ax = 0; ax < 3; ++ax) {
                lo[ax] = std::max(0, static_cast<int>(
                                         std::ceil((a.mu[ax] - radius - base[ax]) / grid.spacing)));
                hi[ax] = std::min(dims[ax] - 1,
                                  static_cast<int>(std::floor(
                                      (a.mu[ax] + radius - base[ax]) / grid.spacing)));
            }
            lo[2] = std::max(lo[2], static_cast<int>(zlo));
            hi[2] = std::min(hi[2], static_cast<int>(zhi) - 1);
            if (lo[0] > hi[0] || lo[1] > hi[1] || lo[2] > hi[2]) continue;

            for (int ax = 0; ax < 3; ++ax) {
                exf[ax].resize(hi[ax] - lo[ax] + 1);
                for (int k = lo[ax]; k <= hi[ax]; ++k) {
                    double d = base[ax] + k * grid.spacing - a.mu[ax];
                    exf[ax][k - lo[ax]] = d * d; // squared offsets first
                }
            }
            for (int ax = 0; ax < 3; ++ax)
                for (double& v : exf[ax]) v = std::exp(-v * inv_2s2) *
                                              (ax == 0 ? a.q : 1.0);

            for (int iz = lo[2]; iz <= hi[2]; ++iz) {
                double dz = base[2] + iz * grid.spacing - a.mu.z;
                double ez = exf[2][iz - lo[2]];
                for (int iy = lo[1]; iy <= hi[1]; ++iy) {
                    double dy = base[1] + iy * grid.spacing - a.mu.y;
                    double rem = r2 - dz * dz - dy * dy;
                    if (rem < 0.0) continue;
                    double eyz = ez * exf[1][iy - lo[1]];
                    double* out = grid.data.data() + grid.index(lo[0], iy, iz);
                    const double* exx = exf[0].data();
                    for (int ix = lo[0]; ix <= hi[0]; ++ix) {
                        double dx = base[0] + ix * grid.spacing - a.mu.x;
                        if (dx * dx <= rem) out[ix - lo[0]] += eyz * exx[ix - lo[0]];
                    }
                }
            }
        }
    });
    return grid;
}

double backward_l1(AtomCloud& cloud, const TiltGeometry& geometry,
                   const ProjectionStack& measured, SplatGradients& grads) {
    geometry.validate();
    if (!cloud.consistent())
        throw InvalidInput("backward_l1: cloud bookkeeping arrays out of sync");
    if (measured.geometry.det_rows != geometry.det_rows ||
        measured.geometry.det_cols != geometry.det_cols ||
        measured.geometry.angles_deg != geometry.angles_deg)
        throw InvalidInput("backward_l1: measured stack does not match geometry");
    if (measured.data.size() != geometry.n_angles() * geometry.frame_pixels())
        throw InvalidInput("backward_l1: measured stack size mismatch");

    const std::size_t n_frames = geometry.n_angles();
    const std::size_t frame_px = geometry.frame_pixels();
    const std::size_t n_px = n_frames * frame_px;
    grads.d_mu.assign(cloud.size(), Vec3{});
    grads.d_sigma.assign(cloud.size(), 0.0);
    grads.d_q.assign(cloud.size(), 0.0);
    if (n_px == 0) return 0.0;

    ProjectionStack predicted = project_cloud(cloud, geometry);

    // Residual signs and per-frame absolute sums (frame order fixed).
    std::vector<std::int8_t> sign(n_px, 0);
    std::vector<double> frame_abs(n_frames, 0.0);
    parallel_for(n_frames, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t f = lo; f < hi; ++f) {
            double acc = 0.0;
            const double* p = predicted.frame(f);
            const double* m = measured.frame(f);
            std::int8_t* s = sign.data() + f * frame_px;
            for (std::size_t i = 0; i < frame_px; ++i) {
                double r = p[i] - m[i];
                acc += std::abs(r);
                s[i] = (r > 0.0) ? 1 : (r < 0.0 ? -1 : 0);
            }
            frame_abs[f] = acc;
        }
    });
    double loss = 0.0;
    for (double v : frame_abs) loss += v;
    const double inv_n = 1.0 / static_cast<double>(n_px);
    loss *= inv_n;

    // Gradients: atoms run concurrently, frames sequentially per atom, so
    // each atom's sums are reproduced exactly at any thread count.
    parallel_for(cloud.size(), [&](std::size_t alo, std::size_t ahi) {
        AxisTable col, row;
        for (std::size_t ai = alo; ai < ahi; ++ai) {
            const GaussianAtom& a = cloud.atoms[ai];
            const double radius = kProjectTruncSigmas * a.sigma;
            const double r2 = radius * radius;
            const double inv_2s2 = 1.0 / (2.0 * a.sigma * a.sigma);
            const double inv_s2 = 2.0 * inv_2s2;
            const double sig_sqrt2pi = a.sigma * kSqrt2Pi;
            const double q_sqrt2pi = a.q * kSqrt2Pi;
            const double amp = a.q * sig_sqrt2pi;

            Vec3 dmu{};
            double dsig = 0.0, dq = 0.0;
            for (std::size_t f = 0; f < n_frames; ++f) {
                double angle = geometry.angles_deg[f];
                Mat3 R = rotation_matrix(angle, geometry.axis);
                Vec3 cb = R.apply(a.mu);
                double c_col = 0, c_row = 0;
                detector_coords(cb, geometry.axis, c_col, c_row);
                col.fill(c_col, radius, geometry.det_cols, geometry.pixel_pitch, inv_2s2);
                row.fill(c_row, radius, geometry.det_rows, geometry.pixel_pitch, inv_2s2);
                if (col.empty() || row.empty()) continue;

                double s_dq = 0, s_dsig = 0, s_dcol = 0, s_drow = 0;
                const int ncol = col.range.hi - col.range.lo + 1;
                const std::int8_t* sf = sign.data() + f * frame_px;
                for (int i = row.range.lo; i <= row.range.hi; ++i) {
                    double er = row.ex[i - row.range.lo];
                    double dr = row.du[i - row.range.lo];
                    double dr2 = row.du2[i - row.range.lo];
                    const std::int8_t* srow =
                        sf + static_cast<std::size_t>(i) * geometry.det_cols + col.range.lo;
                    for (int k = 0; k < ncol; ++k) {
                        double d2 = dr2 + col.du2[k];
                        if (d2 > r2) continue;
                        double w = static_cast<double>(srow[k]);
                        if (w == 0.0) continue;
                        double E = er * col.ex[k];
                        double wE = w * E;
                        s_dq += wE;
                        s_dsig += wE * (1.0 + d2 * inv_s2);
                        double wg = wE * amp * inv_s2;
                        s_dcol += wg * col.du[k];
                        s_drow += wg * dr;
                    }
                }
                dq += s_dq * sig_sqrt2pi;
                dsig += s_dsig * q_sqrt2pi;
                // Map detector-plane center gradients into the beam frame,
                // then back to sample coordinates through R^T.
                Vec3 db = (geometry.axis == Axis::X) ? Vec3{s_drow, s_dcol, 0.0}
                                                     : Vec3{s_dcol, s_drow, 0.0};
                dmu += R.apply_t(db);
            }
            grads.d_mu[ai] = dmu * inv_n;
            grads.d_sigma[ai] = dsig * inv_n;
            grads.d_q[ai] = dq * inv_n;
        }
    });

    for (std::size_t i = 0; i < cloud.size(); ++i)
        cloud.accumulate_grad(i, grads.d_mu[i].norm());
    return loss;
}

} // namespace aet
