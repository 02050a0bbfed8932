#include "aet/baselines.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aet/errors.hpp"
#include "aet/geometry.hpp"
#include "aet/parallel.hpp"
#include "aet/voxel.hpp"

namespace aet {

namespace {

int padded_length(int cols) {
    int m = 64;
    while (m < 2 * cols) m <<= 1;
    return m;
}

/// Frequency response of the band-limited ramp filter: the classic discrete
/// space-domain kernel (1/4 at zero, -1/(pi k)^2 at odd lags) transformed
/// into the frequency domain. Doubling the real part pairs with the final
/// pi / (2 n_angles) backprojection scale.
std::vector<double> ramp_filter(int m) {
    std::vector<double> kernel(static_cast<std::size_t>(m), 0.0);
    kernel[0] = 0.25;
    for (int k = 1; k <= m / 2; k += 2) {
        double v = -1.0 / (M_PI * M_PI * k * k);
        kernel[static_cast<std::size_t>(k)] = v;
        kernel[static_cast<std::size_t>(m - k)] = v;
    }
    std::vector<double> freq(static_cast<std::size_t>(m / 2 + 1), 0.0);
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(m / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(m, kernel.data(), out, FFTW_ESTIMATE);
    fftw_execute(plan);
    for (int i = 0; i <= m / 2; ++i) freq[static_cast<std::size_t>(i)] = 2.0 * out[i][0];
    fftw_destroy_plan(plan);
    fftw_free(out);
    return freq;
}

} // namespace

VoxelVolume fbp(const ProjectionStack& stack, VoxelVolume grid) {
    stack.validate();
    grid.validate();
    const TiltGeometry& geom = stack.geometry;
    const int rows = geom.det_rows;
    const int cols = geom.det_cols;
    const std::size_t n_angles = geom.n_angles();
    const double pitch = geom.pixel_pitch;

    // Ramp-filter every detector row in the frequency domain.
    const int m = padded_length(cols);
    std::vector<double> freq = ramp_filter(m);
    std::vector<double> filtered(stack.data.size(), 0.0);
    {
        std::vector<double> in(static_cast<std::size_t>(m), 0.0);
        fftw_complex* spec = fftw_alloc_complex(static_cast<std::size_t>(m / 2 + 1));
        fftw_plan fwd = fftw_plan_dft_r2c_1d(m, in.data(), spec, FFTW_ESTIMATE);
        fftw_plan inv = fftw_plan_dft_c2r_1d(m, spec, in.data(), FFTW_ESTIMATE);
        double inv_m = 1.0 / m;
        for (std::size_t f = 0; f < n_angles; ++f) {
            const double* frame = stack.frame(f);
            double* out_frame = filtered.data() + f * geom.frame_pixels();
            for (int r = 0; r < rows; ++r) {
                const double* src = frame + static_cast<std::size_t>(r) * cols;
                std::fill(in.begin(), in.end(), 0.0);
                std::copy(src, src + cols, in.begin());
                fftw_execute(fwd);
                for (int i = 0; i <= m / 2; ++i) {
                    spec[i][0] *= freq[static_cast<std::size_t>(i)];
                    spec[i][1] *= freq[static_cast<std::size_t>(i)];
                }
                fftw_execute(inv);
                double* dst = out_frame + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) dst[c] = in[static_cast<std::size_t>(c)] * inv_m;
            }
        }
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
        fftw_free(spec);
    }

    // Voxel-driven backprojection, bilinear in detector coordinates. The
    // 1/pitch converts the row signal from per-sample to per-length units.
    std::vector<Mat3> rot(n_angles);
    for (std::size_t a = 0; a < n_angles; ++a)
        rot[a] = rotation_matrix(geom.angles_deg[a], geom.axis);
    const double scale = M_PI / (2.0 * static_cast<double>(n_angles)) / pitch;
    std::fill(grid.data.begin(), grid.data.end(), 0.0);
    parallel_for(static_cast<std::size_t>(grid.nz), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t iz = lo; iz < hi; ++iz)
            for (int iy = 0; iy < grid.ny; ++iy)
                for (int ix = 0; ix < grid.nx; ++ix) {
                    Vec3 v = grid.voxel_center(ix, iy, static_cast<int>(iz));
                    double sum = 0.0;
                    for (std::size_t a = 0; a < n_angles; ++a) {
                        Vec3 b = rot[a].apply(v);
                        double u_col, u_row;
                        detector_coords(b, geom.axis, u_col, u_row);
                        double cf = pixel_index(u_col, cols, pitch);
                        double rf = pixel_index(u_row, rows, pitch);
                        int c0 = static_cast<int>(std::floor(cf));
                        int r0 = static_cast<int>(std::floor(rf));
                        double wc = cf - c0, wr = rf - r0;
                        const double* fr = filtered.data() + a * geom.frame_pixels();
                        auto sample = [&](int r, int c) -> double {
                            if (r < 0 || r >= rows || c < 0 || c >= cols) return 0.0;
                            return fr[static_cast<std::size_t>(r) * cols + c];
                        };
                        sum += (1 - wr) * ((1 - wc) * sample(r0, c0) + wc * sample(r0, c0 + 1)) +
                               wr * ((1 - wc) * sample(r0 + 1, c0) + wc * sample(r0 + 1, c0 + 1));
                    }
                    grid.at(ix, iy, static_cast<int>(iz)) = sum * scale;
                }
    });
    return grid;
}

void SartOptions::validate() const {
    if (n_sweeps < 0) throw InvalidConfig("sart: n_sweeps must be >= 0");
    if (relaxation < 0.0 || relaxation >= 2.0)
        throw InvalidConfig("sart: relaxation must be in [0, 2)");
}

SartResult sart(const ProjectionStack& stack, VoxelVolume grid, const SartOptions& options) {
    stack.validate();
    grid.validate();
    options.validate();
    const TiltGeometry& geom = stack.geometry;
    const std::size_t n_angles = geom.n_angles();
    const std::size_t frame_px = geom.frame_pixels();

    // Single-angle geometries plus per-angle ray lengths (row sums of A).
    std::vector<TiltGeometry> per_angle(n_angles);
    for (std::size_t a = 0; a < n_angles; ++a) {
        per_angle[a] = geom;
        per_angle[a].angles_deg = {geom.angles_deg[a]};
    }
    VoxelVolume ones(grid.nx, grid.ny, grid.nz, grid.spacing, grid.origin);
    std::fill(ones.data.begin(), ones.data.end(), 1.0);
    std::vector<std::vector<double>> row_sums(n_angles);
    for (std::size_t a = 0; a < n_angles; ++a)
        row_sums[a] = forward_project(ones, per_angle[a]).data;

    SartResult result;
    result.volume = std::move(grid);
    std::fill(result.volume.data.begin(), result.volume.data.end(), 0.0);

    double best = std::numeric_limits<double>::infinity();
    const std::size_t total_px = stack.data.size();
    for (int sweep = 0; sweep < options.n_sweeps; ++sweep) {
        for (std::size_t a = 0; a < n_angles; ++a) {
            ProjectionStack update = forward_project(result.volume, per_angle[a]);
            const double* measured = stack.frame(a);
            for (std::size_t i = 0; i < frame_px; ++i) {
                double w = row_sums[a][i];
                update.data[i] = w > 1e-12 ? (measured[i] - update.data[i]) / w : 0.0;
            }
            VoxelVolume delta =
                backproject(update, VoxelVolume(result.volume.nx, result.volume.ny,
                                                result.volume.nz, result.volume.spacing,
                                                result.volume.origin));
            for (std::size_t i = 0; i < result.volume.data.size(); ++i)
                result.volume.data[i] += options.relaxation * delta.data[i];
        }
        for (double& v : result.volume.data) v = std::max(0.0, v);

        ProjectionStack predicted = forward_project(result.volume, geom);
        double res = 0.0;
        for (std::size_t i = 0; i < total_px; ++i)
            res += std::abs(predicted.data[i] - stack.data[i]);
        res /= static_cast<double>(total_px);
        result.residuals.push_back(res);
        best = std::min(best, res);
        if (res > 2.0 * best) {
            result.warnings.push_back("sart diverging: residual " + std::to_string(res) +
                                      " exceeds twice its minimum after sweep " +
                                      std::to_string(sweep + 1) + "; stopping early");
            break;
        }
    }
    return result;
}

void TraceOptions::validate() const {
    if (min_separation < 0) throw InvalidConfig("trace_atoms: min_separation must be >= 0");
    if (floor_fraction < 0 || floor_fraction > 1)
        throw InvalidConfig("trace_atoms: floor_fraction must be in [0, 1]");
}

std::vector<Vec3> trace_atoms(const VoxelVolume& volume, const TraceOptions& options) {
    volume.validate();
    options.validate();
    double max_v = volume.max_value();
    if (!(max_v > 0.0)) return {};
    double floor = options.floor_fraction * max_v;

    struct Peak {
        double value;
        std::size_t index;
        Vec3 pos;
    };
    std::vector<Peak> peaks;
    for (int iz = 0; iz < volume.nz; ++iz)
        for (int iy = 0; iy < volume.ny; ++iy)
            for (int ix = 0; ix < volume.nx; ++ix) {
                double v = volume.at(ix, iy, iz);
                if (v <= floor) continue;
                bool strict_max = true;
                for (int dz = -1; dz <= 1 && strict_max; ++dz)
                    for (int dy = -1; dy <= 1 && strict_max; ++dy)
                        for (int dx = -1; dx <= 1 && strict_max; ++dx) {
                            if (dx == 0 && dy == 0 && dz == 0) continue;
                            int jx = ix + dx, jy = iy + dy, jz = iz + dz;
                            if (jx < 0 || jx >= volume.nx || jy < 0 || jy >= volume.ny ||
                                jz < 0 || jz >= volume.nz)
                                continue;
                            if (volume.at(jx, jy, jz) >= v) strict_max = false;
                        }
                if (!strict_max) continue;

                // Per-axis 3-point parabolic sub-voxel refinement.
                Vec3 pos = volume.voxel_center(ix, iy, iz);
                auto refine = [&](double fm, double f0, double fp) {
                    double denom = fm - 2.0 * f0 + fp;
                    if (std::abs(denom) < 1e-300) return 0.0;
                    return std::clamp(0.5 * (fm - fp) / denom, -0.5, 0.5);
                };
                if (ix > 0 && ix + 1 < volume.nx)
                    pos.x += refine(volume.at(ix - 1, iy, iz), v, volume.at(ix + 1, iy, iz)) *
                             volume.spacing;
                if (iy > 0 && iy + 1 < volume.ny)
                    pos.y += refine(volume.at(ix, iy - 1, iz), v, volume.at(ix, iy + 1, iz)) *
                             volume.spacing;
                if (iz > 0 && iz + 1 < volume.nz)
                    pos.z += refine(volume.at(ix, iy, iz - 1), v, volume.at(ix, iy, iz + 1)) *
                             volume.spacing;
                peaks.push_back({v, volume.index(ix, iy, iz), pos});
            }

    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.index < b.index; // deterministic tie-break
    });

    std::vector<Vec3> accepted;
    double min_sep2 = options.min_separation * options.min_separation;
    for (const Peak& p : peaks) {
        bool ok = true;
        for (const Vec3& q : accepted)
            if (distance2(p.pos, q) < min_sep2) {
                ok = false;
                break;
            }
        if (ok) accepted.push_back(p.pos);
    }
    return accepted;
}

} // namespace aet
