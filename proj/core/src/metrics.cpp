#include "aet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "aet/errors.hpp"

namespace aet {

MatchReport match_atoms(const std::vector<Vec3>& pred,
                        const std::vector<Vec3>& gt, double tol) {
    if (!(tol > 0.0)) throw InvalidInput("match_atoms: tolerance must be > 0");

    MatchReport report;
    report.n_gt = static_cast<int>(gt.size());
    report.n_pred = static_cast<int>(pred.size());

    // Static processing order: ground-truth atoms by ascending distance to
    // their nearest prediction, so tightly-pinned atoms claim predictions
    // before loosely-pinned ones can steal them.
    std::vector<double> nearest(gt.size(),
                                std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (const Vec3& p : pred)
            nearest[i] = std::min(nearest[i], distance2(gt[i], p));
    std::vector<int> order(gt.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (nearest[a] != nearest[b]) return nearest[a] < nearest[b];
        return a < b;
    });

    std::vector<char> taken(pred.size(), 0);
    double sq_sum = 0.0;
    const double tol2 = tol * tol;
    for (int gi : order) {
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pred.size(); ++j) {
            if (taken[j]) continue;
            double d2 = distance2(gt[gi], pred[j]);
            if (d2 < best_d2) { // ties resolve to the lower prediction index
                best = static_cast<int>(j);
                best_d2 = d2;
            }
        }
        if (best >= 0 && best_d2 <= tol2) {
            taken[best] = 1;
            report.pairs.push_back({gi, best, std::sqrt(best_d2)});
            sq_sum += best_d2;
        }
    }

    report.n_tp = static_cast<int>(report.pairs.size());
    report.n_fn = report.n_gt - report.n_tp;
    report.n_fp = report.n_pred - report.n_tp;
    report.tpr = report.n_gt > 0 ? static_cast<double>(report.n_tp) / report.n_gt : 0.0;
    report.fpr = report.n_pred > 0 ? static_cast<double>(report.n_fp) / report.n_pred : 0.0;
    report.matched_rmsd =
        report.pairs.empty() ? 0.0 : std::sqrt(sq_sum / report.pairs.size());
    return report;
}

namespace {

std::vector<double> ssim_kernel(int window) {
    const double sigma = 1.5;
    int r = window / 2;
    std::vector<double> k(window);
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        double d = i - r;
        k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

/// 1D convolution along one axis with zero padding. Border outputs are
/// contaminated by the padding, but ssim3d only reads centers whose full
/// 3D window is inside the volume, and those never touch padded taps.
std::vector<double> convolve_axis(const std::vector<double>& f, int nx, int ny,
                                  int nz, int axis,
                                  const std::vector<double>& k) {
    int r = static_cast<int>(k.size()) / 2;
    std::vector<double> out(f.size(), 0.0);
    int n_axis = axis == 0 ? nx : (axis == 1 ? ny : nz);
    std::size_t stride = axis == 0 ? 1
                         : axis == 1 ? static_cast<std::size_t>(nx)
                                     : static_cast<std::size_t>(nx) * ny;
    for (int iz = 0; iz < nz; ++iz)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                std::size_t idx = static_cast<std::size_t>(ix) +
                                  static_cast<std::size_t>(nx) *
                                      (static_cast<std::size_t>(iy) +
                                       static_cast<std::size_t>(ny) * iz);
                int c = axis == 0 ? ix : (axis == 1 ? iy : iz);
                double acc = 0.0;
                int lo = std::max(-r, -c), hi = std::min(r, n_axis - 1 - c);
                auto base = static_cast<std::ptrdiff_t>(idx);
                auto step = static_cast<std::ptrdiff_t>(stride);
                for (int t = lo; t <= hi; ++t)
                    acc += k[t + r] * f[static_cast<std::size_t>(base + t * step)];
                out[idx] = acc;
            }
    return out;
}

std::vector<double> blur3(const std::vector<double>& f, int nx, int ny, int nz,
                          const std::vector<double>& k) {
    auto a = convolve_axis(f, nx, ny, nz, 0, k);
    auto b = convolve_axis(a, nx, ny, nz, 1, k);
    return convolve_axis(b, nx, ny, nz, 2, k);
}

} // namespace

double ssim3d(const VoxelVolume& a, const VoxelVolume& b, int window) {
    if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz)
        throw InvalidInput("ssim3d: volume shapes differ");
    if (window < 1 || window % 2 == 0)
        throw InvalidInput("ssim3d: window must be a positive odd integer");
    if (window > a.nx || window > a.ny || window > a.nz)
        throw InvalidInput("ssim3d: window exceeds a volume dimension");

    double range_a = a.max_value() - a.min_value();
    double range_b = b.max_value() - b.min_value();
    double range = std::max(range_a, range_b);
    if (range <= 0.0) {
        // Two flat volumes: no structure to compare, so fall back to a
        // magnitude-scaled stabilizer and let the luminance term decide.
        // The scale must sit far above arithmetic rounding residue but far
        // below the data itself.
        double mag = std::max({std::abs(a.max_value()), std::abs(b.max_value()), 1.0});
        range = 0.01 * mag;
    }
    const double c1 = 0.01 * range * 0.01 * range;
    const double c2 = 0.03 * range * 0.03 * range;

    const std::vector<double> k = ssim_kernel(window);
    const int nx = a.nx, ny = a.ny, nz = a.nz;
    std::vector<double> ab(a.data.size()), aa(a.data.size()), bb(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        ab[i] = a.data[i] * b.data[i];
        aa[i] = a.data[i] * a.data[i];
        bb[i] = b.data[i] * b.data[i];
    }
    auto mu_a = blur3(a.data, nx, ny, nz, k);
    auto mu_b = blur3(b.data, nx, ny, nz, k);
    auto e_aa = blur3(aa, nx, ny, nz, k);
    auto e_bb = blur3(bb, nx, ny, nz, k);
    auto e_ab = blur3(ab, nx, ny, nz, k);

    const int r = window / 2;
    double sum = 0.0;
    std::size_t count = 0;
    for (int iz = r; iz < nz - r; ++iz)
        for (int iy = r; iy < ny - r; ++iy)
            for (int ix = r; ix < nx - r; ++ix) {
                std::size_t i = static_cast<std::size_t>(ix) +
                                static_cast<std::size_t>(nx) *
                                    (static_cast<std::size_t>(iy) +
                                     static_cast<std::size_t>(ny) * iz);
                double ma = mu_a[i], mb = mu_b[i];
                double va = e_aa[i] - ma * ma;
                double vb = e_bb[i] - mb * mb;
                double cov = e_ab[i] - ma * mb;
                double s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                           ((ma * ma + mb * mb + c1) * (va + vb + c2));
                sum += s;
                ++count;
            }
    return sum / static_cast<double>(count);
}

namespace {

double sample_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double sample_stddev(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (v.size() - 1));
}

} // namespace

AmplitudeHistogram amplitude_histogram(const AtomCloud& cloud,
                                       const MatchReport& matched,
                                       const std::vector<std::string>& gt_species) {
    std::map<std::string, std::vector<double>> groups;
    for (const MatchedPair& p : matched.pairs) {
        if (p.gt_index < 0 ||
            p.gt_index >= static_cast<int>(gt_species.size()) ||
            p.pred_index < 0 ||
            p.pred_index >= static_cast<int>(cloud.size()))
            throw InvalidInput("amplitude_histogram: pair index out of range");
        groups[gt_species[p.gt_index]].push_back(cloud.atoms[p.pred_index].q);
    }

    AmplitudeHistogram hist;
    for (auto& [label, q] : groups) {
        SpeciesAmplitudes s;
        s.label = label;
        s.q = std::move(q);
        s.mean = sample_mean(s.q);
        s.stddev = sample_stddev(s.q, s.mean);
        hist.species.push_back(std::move(s));
    }

    if (hist.species.size() == 2) {
        const SpeciesAmplitudes& s0 = hist.species[0];
        const SpeciesAmplitudes& s1 = hist.species[1];
        double n0 = static_cast<double>(s0.q.size());
        double n1 = static_cast<double>(s1.q.size());
        double dof = n0 + n1 - 2.0;
        double pooled =
            dof > 0.0 ? std::sqrt(((n0 - 1.0) * s0.stddev * s0.stddev +
                                   (n1 - 1.0) * s1.stddev * s1.stddev) /
                                  dof)
                      : 0.0;
        double diff = std::abs(s0.mean - s1.mean);
        if (pooled > 0.0)
            hist.separability = diff / pooled;
        else
            hist.separability =
                diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return hist;
}

} // namespace aet
