#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aet/types.hpp"

namespace aet {

enum class ParticleKind { LatticeFCC, Amorphous };

/// One species in a particle recipe: occupancy fraction plus the reference
/// Gaussian (amplitude, width) used for both simulation and evaluation.
struct SpeciesMix {
    std::string label;
    double fraction = 1.0;
    double ref_amplitude = 1.0;
    double ref_sigma = 0.5;
};

struct ParticleSpec {
    ParticleKind kind = ParticleKind::LatticeFCC;
    double radius = 10.0;           // Angstrom
    double lattice_constant = 4.08; // Angstrom (lattice only)
    double min_distance = 2.4;      // Angstrom (amorphous only)
    std::vector<SpeciesMix> species_mix = {{"Au", 1.0, 1.0, 0.5}};
    std::uint64_t seed = 0;
    // Amorphous insertion stops once this many candidates have been
    // rejected; the density that fits within the budget is what you get.
    int rejection_budget = 20000;

    void validate() const;
};

enum class TiltScheme { Full, Limited, Sampled, MW, Custom };

struct AcquisitionSpec {
    TiltScheme scheme = TiltScheme::Full;
    // Custom-scheme range; ignored for the named schemes.
    double angle_min = -90.0;
    double angle_max = 90.0;
    double angle_step = 1.0;
    double probe_sigma = 0.0; // Angstrom
    double noise_sigma = 0.0; // potential units
    double pixel_pitch = 0.25; // Angstrom
    int det_rows = 64;
    int det_cols = 64;
    Axis axis = Axis::Y;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Named tilt schedules: Full covers -90..+90 at 1 degree, Limited
/// -70..+70 at 3 degrees, Sampled -90..+90 at 3 degrees, MW -70..+70 at
/// 1 degree. Custom uses the provided range.
std::vector<double> make_tilt_scheme(TiltScheme scheme, double angle_min = -90.0,
                                     double angle_max = 90.0, double angle_step = 1.0);

TiltGeometry make_geometry(const AcquisitionSpec& acq);

/// FCC lattice sites (origin on a site) clipped to the sphere, species
/// drawn per atom from the mix fractions with the spec seed.
GroundTruthStructure make_lattice_particle(const ParticleSpec& spec);

/// Random sequential insertion in the sphere honoring min_distance exactly;
/// stops when the rejection budget runs out.
GroundTruthStructure make_amorphous_particle(const ParticleSpec& spec);

GroundTruthStructure make_particle(const ParticleSpec& spec);

/// The structure as a Gaussian cloud with the probe blur folded in
/// analytically: sigma_eff = sqrt(ref_sigma^2 + probe^2), amplitude scaled
/// by (ref_sigma / sigma_eff)^3 so the integrated mass is unchanged.
AtomCloud effective_cloud(const GroundTruthStructure& gt, double probe_sigma);

/// Projects the blurred cloud over the scheme and adds i.i.d. Gaussian
/// pixel noise, one derived seed per frame. Bit-identical per seed at any
/// thread count.
ProjectionStack synthesize_projections(const GroundTruthStructure& gt,
                                       const AcquisitionSpec& acq);

} // namespace aet
