#include "aet/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "aet/errors.hpp"
#include "aet/splat.hpp"

namespace aet {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

void compact(AtomCloud& cloud, const std::vector<char>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!keep[i]) continue;
        if (out != i) {
            cloud.atoms[out] = cloud.atoms[i];
            cloud.grad_accum[out] = cloud.grad_accum[i];
            cloud.grad_count[out] = cloud.grad_count[i];
            cloud.mu_momentum[out] = cloud.mu_momentum[i];
        }
        ++out;
    }
    cloud.atoms.resize(out);
    cloud.grad_accum.resize(out);
    cloud.grad_count.resize(out);
    cloud.mu_momentum.resize(out);
}

} // namespace

void OptimizerConfig::validate() const {
    if (n_init < 1) throw InvalidConfig("optimizer: n_init must be >= 1");
    if (n_iters < 0) throw InvalidConfig("optimizer: n_iters must be >= 0");
    if (lr_mu < 0 || lr_sigma < 0 || lr_q < 0)
        throw InvalidConfig("optimizer: learning rates must be >= 0");
    if (momentum < 0 || momentum >= 1)
        throw InvalidConfig("optimizer: momentum must be in [0, 1)");
    if (densify_grad_threshold < 0 || prune_q_threshold < 0 || prune_q_rel < 0 ||
        merge_distance < 0)
        throw InvalidConfig("optimizer: thresholds must be >= 0");
    if (densify_interval < 1 || prune_interval < 1 || merge_interval < 1)
        throw InvalidConfig("optimizer: intervals must be >= 1");
    if (knn_cutover < 0 || knn_k < 1)
        throw InvalidConfig("optimizer: knn_cutover must be >= 0 and knn_k >= 1");
    if (warmup_iters < 0 || densify_until < 0)
        throw InvalidConfig("optimizer: warmup_iters and densify_until must be >= 0");
    if (init_sigma <= 0 || init_peak_fraction <= 0)
        throw InvalidConfig("optimizer: init_sigma and init_peak_fraction must be > 0");
}

bool SolveSupport::contains(const Vec3& p) const {
    double along, r2;
    switch (axis) {
        case Axis::X:
            along = p.x;
            r2 = p.y * p.y + p.z * p.z;
            break;
        case Axis::Z:
            along = p.z;
            r2 = p.x * p.x + p.y * p.y;
            break;
        default:
            along = p.y;
            r2 = p.x * p.x + p.z * p.z;
            break;
    }
    return r2 <= radius * radius && std::abs(along) <= half_height;
}

SolveSupport solve_support(const TiltGeometry& geometry, double cube_side) {
    geometry.validate();
    if (cube_side <= 0)
        throw InvalidConfig("solve_support: cube_side must be > 0");
    double u = 0.5 * geometry.det_cols * geometry.pixel_pitch;
    double v = 0.5 * geometry.det_rows * geometry.pixel_pitch;
    double half = 0.5 * cube_side;
    SolveSupport support;
    support.axis = geometry.axis;
    if (geometry.axis == Axis::Z) {
        // The beam runs along the tilt axis, so depth is never resolved and
        // both detector directions rotate; the inscribed circle is set by
        // the smaller of the two.
        support.radius = std::min({u, v, half});
        support.half_height = half;
    } else {
        support.radius = std::min(u, half);
        support.half_height = std::min(v, half);
    }
    return support;
}

int cull_outside(AtomCloud& cloud, const SolveSupport& support) {
    std::vector<char> keep(cloud.size(), 1);
    int removed = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!support.contains(cloud.atoms[i].mu)) {
            keep[i] = 0;
            ++removed;
        }
    }
    if (removed > 0) compact(cloud, keep);
    return removed;
}

namespace {

AtomCloud init_random_impl(const OptimizerConfig& config, double space_scale,
                           const SolveSupport* support) {
    config.validate();
    if (space_scale <= 0) throw InvalidConfig("init_random: space_scale must be > 0");
    Rng rng(derive_seed(config.seed, 0));
    double sigma = config.init_sigma * space_scale;
    double q = config.init_peak_fraction / (sigma * kSqrt2Pi);
    AtomCloud cloud;
    cloud.atoms.reserve(static_cast<std::size_t>(config.n_init));
    // Rejection sampling stays uniform over the admissible region; the
    // attempt budget only trips on degenerate geometries where the support
    // is a vanishing sliver of the cube.
    long attempts_left = 1000L * config.n_init;
    for (int i = 0; i < config.n_init; ++i) {
        Vec3 mu;
        do {
            if (attempts_left-- <= 0)
                throw OptimizerAbort(
                    "init_random: support region too small to seed atoms");
            mu = Vec3{rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5};
        } while (support && !support->contains(mu));
        cloud.push_atom({mu, sigma, q});
    }
    return cloud;
}

} // namespace

AtomCloud init_random(const OptimizerConfig& config, double space_scale) {
    return init_random_impl(config, space_scale, nullptr);
}

AtomCloud init_random(const OptimizerConfig& config, double space_scale,
                      const SolveSupport& support) {
    return init_random_impl(config, space_scale, &support);
}

void step(AtomCloud& cloud, const SplatGradients& grads, const OptimizerConfig& config) {
    if (grads.size() != cloud.size() || grads.d_sigma.size() != cloud.size() ||
        grads.d_q.size() != cloud.size())
        throw InvalidInput("step: gradient arrays do not match the cloud");
    double keep = config.momentum;
    double mix = 1.0 - keep;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& g = grads.d_mu[i];
        double ds = grads.d_sigma[i];
        double dq = grads.d_q[i];
        if (!g.finite() || !std::isfinite(ds) || !std::isfinite(dq)) {
            std::ostringstream msg;
            msg << "non-finite gradient at atom " << i << ": d_mu=(" << g.x << ", "
                << g.y << ", " << g.z << ") d_sigma=" << ds << " d_q=" << dq;
            throw OptimizerAbort(msg.str());
        }
        Vec3& m = cloud.mu_momentum[i];
        m = m * keep + g * mix;
        GaussianAtom& a = cloud.atoms[i];
        a.mu = a.mu - m * config.lr_mu;
        // Multiplicative width update keeps sigma positive: the gradient with
        // respect to log sigma is sigma * d_sigma. The per-step change is
        // clamped to half an e-fold so a pathological gradient cannot
        // underflow sigma to zero.
        a.sigma *= std::exp(-std::clamp(config.lr_sigma * a.sigma * ds, -0.5, 0.5));
        a.q = std::max(0.0, a.q - config.lr_q * dq);
    }
}

int densify(AtomCloud& cloud, double grad_threshold, Rng& rng) {
    std::size_t original = cloud.size();
    int added = 0;
    for (std::size_t i = 0; i < original; ++i) {
        if (cloud.grad_count[i] == 0 || cloud.grad_accum[i] <= grad_threshold) continue;
        GaussianAtom clone = cloud.atoms[i];
        double scale = 0.5 * clone.sigma;
        clone.mu = clone.mu + Vec3{rng.normal() * scale, rng.normal() * scale,
                                   rng.normal() * scale};
        cloud.push_atom(clone);
        ++added;
    }
    cloud.reset_accumulators();
    return added;
}

int prune(AtomCloud& cloud, double q_threshold) {
    std::vector<char> keep(cloud.size(), 1);
    int removed = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.atoms[i].q < q_threshold) {
            keep[i] = 0;
            ++removed;
        }
    }
    if (removed > 0) compact(cloud, keep);
    return removed;
}

int merge_close(AtomCloud& cloud, double merge_distance, int knn_cutover, int knn_k) {
    if (merge_distance <= 0 || cloud.size() < 2) return 0;
    std::size_t n = cloud.size();
    double r2 = merge_distance * merge_distance;
    std::vector<char> merged(n, 0);
    std::vector<char> keep(n, 1);
    bool use_knn = n > static_cast<std::size_t>(knn_cutover);
    std::vector<std::size_t> group;
    std::vector<std::pair<double, std::size_t>> nearest;
    int removed = 0;

    for (std::size_t i = 0; i < n; ++i) {
        if (merged[i]) continue;
        group.clear();
        if (!use_knn) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || merged[j]) continue;
                if (distance2(cloud.atoms[i].mu, cloud.atoms[j].mu) <= r2)
                    group.push_back(j);
            }
        } else {
            nearest.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || merged[j]) continue;
                double d2 = distance2(cloud.atoms[i].mu, cloud.atoms[j].mu);
                if (d2 <= r2) nearest.emplace_back(d2, j);
            }
            std::size_t k = std::min<std::size_t>(nearest.size(),
                                                  static_cast<std::size_t>(knn_k));
            std::partial_sort(nearest.begin(), nearest.begin() + k, nearest.end());
            for (std::size_t t = 0; t < k; ++t) group.push_back(nearest[t].second);
        }
        if (group.empty()) continue;

        Vec3 mu = cloud.atoms[i].mu;
        double sigma = cloud.atoms[i].sigma;
        double q = cloud.atoms[i].q;
        for (std::size_t j : group) {
            mu = mu + cloud.atoms[j].mu;
            sigma += cloud.atoms[j].sigma;
            q += cloud.atoms[j].q;
            merged[j] = 1;
            keep[j] = 0;
        }
        double inv = 1.0 / static_cast<double>(group.size() + 1);
        cloud.atoms[i] = {mu * inv, sigma * inv, q * inv};
        cloud.grad_accum[i] = 0.0;
        cloud.grad_count[i] = 0;
        cloud.mu_momentum[i] = Vec3{};
        merged[i] = 1;
        removed += static_cast<int>(group.size());
    }
    if (removed > 0) compact(cloud, keep);
    return removed;
}

ReconstructResult reconstruct(const ProjectionStack& stack, const OptimizerConfig& config,
                              double cube_side, const ProgressFn& progress) {
    config.validate();
    stack.validate();
    const TiltGeometry& geom = stack.geometry;
    if (cube_side <= 0)
        cube_side = std::min(geom.det_rows, geom.det_cols) * geom.pixel_pitch;

    ReconstructResult result;
    // Solve against unit-peak data so the densify/prune thresholds have a
    // fixed meaning regardless of acquisition brightness.
    result.map = NormalizationMap::standard(stack, cube_side);
    result.map.data.scale /= 256.0;
    ProjectionStack measured = normalize(stack, result.map);

    SolveSupport support =
        solve_support(geom, cube_side).scaled(result.map.space.scale);
    AtomCloud cloud = init_random(config, result.map.space.scale, support);
    Rng densify_rng(derive_seed(config.seed, 1));

    double merge_dist = config.merge_distance * result.map.space.scale;
    int densify_stop = config.densify_until > 0 ? config.densify_until : config.n_iters;
    result.log.reserve(static_cast<std::size_t>(config.n_iters));

    double window_best = std::numeric_limits<double>::infinity();
    int window_start = 0;
    bool stall_warned = false;
    bool empty_warned = false;

    SplatGradients grads;
    for (int iter = 0; iter < config.n_iters; ++iter) {
        double loss = backward_l1(cloud, measured.geometry, measured, grads);
        if (!std::isfinite(loss)) throw OptimizerAbort("non-finite loss");
        step(cloud, grads, config);

        int n_densified = 0, n_pruned = 0, n_merged = 0;
        if (iter >= config.warmup_iters && !cloud.empty()) {
            if ((iter + 1) % config.densify_interval == 0 && iter < densify_stop)
                n_densified = densify(cloud, config.densify_grad_threshold, densify_rng);
            if ((iter + 1) % config.prune_interval == 0) {
                double max_q = 0.0;
                for (const GaussianAtom& a : cloud.atoms) max_q = std::max(max_q, a.q);
                n_pruned = prune(cloud, std::max(config.prune_q_threshold,
                                                 config.prune_q_rel * max_q));
                n_pruned += cull_outside(cloud, support);
            }
            if ((iter + 1) % config.merge_interval == 0)
                n_merged = merge_close(cloud, merge_dist, config.knn_cutover, config.knn_k);
        }
        if (cloud.empty() && !empty_warned) {
            result.warnings.push_back("cloud emptied at iteration " +
                                      std::to_string(iter) + "; run is degenerate");
            empty_warned = true;
        }

        result.log.push_back({iter, loss, static_cast<int>(cloud.size()), n_densified,
                              n_pruned, n_merged});

        // Stall detection: no new best loss across a 500-iteration window.
        if (loss < window_best) {
            window_best = loss;
            window_start = iter;
        } else if (iter - window_start >= 500 && !stall_warned) {
            result.warnings.push_back("loss has not improved since iteration " +
                                      std::to_string(window_start));
            stall_warned = true;
        }
        if (progress) progress(iter, loss, cloud.size());
    }

    merge_close(cloud, merge_dist, config.knn_cutover, config.knn_k);
    double max_q = 0.0;
    for (const GaussianAtom& a : cloud.atoms) max_q = std::max(max_q, a.q);
    prune(cloud, std::max(config.prune_q_threshold, config.prune_q_rel * max_q));
    cull_outside(cloud, support);

    result.cloud = denormalize(cloud, result.map);
    return result;
}

} // namespace aet
