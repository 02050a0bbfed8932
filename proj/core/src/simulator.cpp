#include "aet/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "aet/errors.hpp"
#include "aet/parallel.hpp"
#include "aet/random.hpp"
#include "aet/splat.hpp"

namespace aet {

namespace {

/// Draws a species index from the cumulative mix fractions.
std::size_t draw_species(const std::vector<SpeciesMix>& mix, Rng& rng) {
    double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        cum += mix[i].fraction;
        if (u < cum) return i;
    }
    return mix.size() - 1;
}

GroundTruthStructure finish_structure(const ParticleSpec& spec,
                                      std::vector<Vec3> positions) {
    GroundTruthStructure gt;
    gt.positions = std::move(positions);
    Rng species_rng(derive_seed(spec.seed, 1));
    gt.species.reserve(gt.positions.size());
    for (std::size_t i = 0; i < gt.positions.size(); ++i)
        gt.species.push_back(spec.species_mix[draw_species(spec.species_mix, species_rng)].label);
    for (const SpeciesMix& m : spec.species_mix)
        gt.ref[m.label] = SpeciesRef{m.ref_amplitude, m.ref_sigma};
    return gt;
}

} // namespace

void ParticleSpec::validate() const {
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw InvalidConfig("particle radius must be positive");
    if (species_mix.empty())
        throw InvalidConfig("particle needs at least one species");
    double total = 0.0;
    for (const SpeciesMix& m : species_mix) {
        if (m.label.empty()) throw InvalidConfig("species label must be non-empty");
        if (!(m.fraction > 0.0)) throw InvalidConfig("species fractions must be positive");
        if (!(m.ref_sigma > 0.0)) throw InvalidConfig("species sigma must be positive");
        if (!(m.ref_amplitude > 0.0)) throw InvalidConfig("species amplitude must be positive");
        total += m.fraction;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw InvalidConfig("species fractions must sum to 1");
    if (kind == ParticleKind::LatticeFCC && !(lattice_constant > 0.0))
        throw InvalidConfig("lattice constant must be positive");
    if (kind == ParticleKind::Amorphous && !(min_distance > 0.0))
        throw InvalidConfig("amorphous min distance must be positive");
    if (rejection_budget < 1)
        throw InvalidConfig("rejection budget must be at least 1");
}

void AcquisitionSpec::validate() const {
    if (scheme == TiltScheme::Custom) {
        if (!(angle_step > 0.0)) throw InvalidConfig("angle step must be positive");
        if (!(angle_min < angle_max)) throw InvalidConfig("angle range must be non-empty");
    }
    if (probe_sigma < 0.0 || !std::isfinite(probe_sigma))
        throw InvalidConfig("probe sigma must be non-negative");
    if (noise_sigma < 0.0 || !std::isfinite(noise_sigma))
        throw InvalidConfig("noise sigma must be non-negative");
    if (!(pixel_pitch > 0.0)) throw InvalidConfig("pixel pitch must be positive");
    if (det_rows <= 0 || det_cols <= 0)
        throw InvalidConfig("detector grid must be positive");
}

std::vector<double> make_tilt_scheme(TiltScheme scheme, double angle_min,
                                     double angle_max, double angle_step) {
    double lo = angle_min, hi = angle_max, step = angle_step;
    switch (scheme) {
    case TiltScheme::Full:    lo = -90; hi = 90; step = 1; break;
    case TiltScheme::Limited: lo = -70; hi = 70; step = 3; break;
    case TiltScheme::Sampled: lo = -90; hi = 90; step = 3; break;
    case TiltScheme::MW:      lo = -70; hi = 70; step = 1; break;
    case TiltScheme::Custom:  break;
    }
    if (!(step > 0.0) || !(lo < hi) || lo < -90.0 || hi > 90.0)
        throw InvalidConfig("invalid tilt range");
    std::vector<double> angles;
    int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    angles.reserve(n);
    for (int i = 0; i < n; ++i) angles.push_back(lo + i * step);
    return angles;
}

TiltGeometry make_geometry(const AcquisitionSpec& acq) {
    acq.validate();
    TiltGeometry g;
    g.angles_deg = make_tilt_scheme(acq.scheme, acq.angle_min, acq.angle_max, acq.angle_step);
    g.axis = acq.axis;
    g.det_rows = acq.det_rows;
    g.det_cols = acq.det_cols;
    g.pixel_pitch = acq.pixel_pitch;
    g.validate();
    return g;
}

GroundTruthStructure make_lattice_particle(const ParticleSpec& spec) {
    spec.validate();
    if (spec.kind != ParticleKind::LatticeFCC)
        throw InvalidConfig("make_lattice_particle called for a non-lattice spec");
    const double a = spec.lattice_constant;
    const double r2 = spec.radius * spec.radius;
    const int span = static_cast<int>(std::ceil(spec.radius / a)) + 1;
    static const double basis[4][3] = {
        {0.0, 0.0, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}, {0.5, 0.5, 0.0}};

    std::vector<Vec3> sites;
    for (int cx = -span; cx <= span; ++cx)
        for (int cy = -span; cy <= span; ++cy)
            for (int cz = -span; cz <= span; ++cz)
                for (const auto& b : basis) {
                    Vec3 p{(cx + b[0]) * a, (cy + b[1]) * a, (cz + b[2]) * a};
                    if (p.norm2() <= r2) sites.push_back(p);
                }
    if (sites.empty())
        throw InfeasibleSpec("no lattice sites inside the particle radius");
    // Cell loops already run in a fixed order; sort anyway so the site
    // order is a documented property of the output, not of loop nesting.
    std::sort(sites.begin(), sites.end(), [](const Vec3& l, const Vec3& r) {
        if (l.x != r.x) return l.x < r.x;
        if (l.y != r.y) return l.y < r.y;
        return l.z < r.z;
    });
    return finish_structure(spec, std::move(sites));
}

GroundTruthStructure make_amorphous_particle(const ParticleSpec& spec) {
    spec.validate();
    if (spec.kind != ParticleKind::Amorphous)
        throw InvalidConfig("make_amorphous_particle called for a non-amorphous spec");
    Rng rng(derive_seed(spec.seed, 0));
    const double d2 = spec.min_distance * spec.min_distance;
    std::vector<Vec3> accepted;
    int rejections = 0;
    while (rejections < spec.rejection_budget) {
        // Uniform point in the sphere via cube rejection.
        Vec3 p;
        do {
            p = {rng.uniform(-spec.radius, spec.radius),
                 rng.uniform(-spec.radius, spec.radius),
                 rng.uniform(-spec.radius, spec.radius)};
        } while (p.norm2() > spec.radius * spec.radius);
        bool ok = true;
        for (const Vec3& q : accepted) {
            if ((p - q).norm2() < d2) {
                ok = false;
                break;
            }
        }
        if (ok)
            accepted.push_back(p);
        else
            ++rejections;
    }
    if (accepted.empty())
        throw InfeasibleSpec("amorphous insertion placed no atoms within the budget");
    return finish_structure(spec, std::move(accepted));
}

GroundTruthStructure make_particle(const ParticleSpec& spec) {
    return spec.kind == ParticleKind::LatticeFCC ? make_lattice_particle(spec)
                                                 : make_amorphous_particle(spec);
}

AtomCloud effective_cloud(const GroundTruthStructure& gt, double probe_sigma) {
    AtomCloud cloud;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const SpeciesRef& ref = gt.ref_for(gt.species[i]);
        double s_eff = std::sqrt(ref.sigma * ref.sigma + probe_sigma * probe_sigma);
        double scale = (ref.sigma * ref.sigma * ref.sigma) / (s_eff * s_eff * s_eff);
        cloud.push_atom({gt.positions[i], s_eff, ref.amplitude * scale});
    }
    return cloud;
}

ProjectionStack synthesize_projections(const GroundTruthStructure& gt,
                                       const AcquisitionSpec& acq) {
    TiltGeometry geom = make_geometry(acq);
    AtomCloud cloud = effective_cloud(gt, acq.probe_sigma);
    ProjectionStack stack = project_cloud(cloud, geom);
    if (acq.noise_sigma > 0.0) {
        parallel_for(stack.n_frames(), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t f = lo; f < hi; ++f) {
                Rng rng(derive_seed(acq.seed, f));
                double* frame = stack.frame(f);
                for (std::size_t i = 0; i < geom.frame_pixels(); ++i)
                    frame[i] += acq.noise_sigma * rng.normal();
            }
        });
    }
    return stack;
}

} // namespace aet
