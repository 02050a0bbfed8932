#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "aet/baselines.hpp"
#include "aet/config.hpp"
#include "aet/optimizer.hpp"
#include "aet/simulator.hpp"

namespace aet {

/// One experiment grid: a sample recipe and acquisition template crossed
/// with tilt schemes, reconstruction methods, and replicate seeds, plus the
/// method options and the evaluation grid every cell shares.
struct ExperimentPlan {
    ParticleSpec particle;
    AcquisitionSpec acquisition; // scheme and seed are overridden per cell
    std::vector<TiltScheme> schemes = {TiltScheme::Full};
    std::vector<std::string> methods = {"gaussian"}; // gaussian | fbp | sart
    std::vector<std::uint64_t> seeds = {0};
    OptimizerConfig optimizer;
    SartOptions sart;
    TraceOptions trace;
    double match_tol = 0.75; // Angstrom
    int ssim_window = 7;
    int grid_n = 64;           // evaluation cube voxels per side
    double grid_spacing = 0.0; // Angstrom; 0 = detector width / grid_n

    void validate() const;
    /// The evaluation grid all volumes are compared on.
    VoxelVolume evaluation_grid() const;
};

/// One row of the consolidated results table. NaN fields (gaussian-only or
/// two-species-only quantities) serialize as empty CSV cells.
struct CellResult {
    std::string scheme;
    std::string method;
    std::uint64_t seed = 0;
    int n_gt = 0;
    int n_pred = 0;
    int n_tp = 0;
    int n_fp = 0;
    int n_fn = 0;
    double tpr = 0.0;
    double fpr = 0.0;
    double matched_rmsd = 0.0;
    double ssim = 0.0;
    int k_final = 0; // gaussian: cloud size; fbp/sart: traced atom count
    double loss_final = std::numeric_limits<double>::quiet_NaN();
    double amp_ratio = std::numeric_limits<double>::quiet_NaN();
    double amp_separability = std::numeric_limits<double>::quiet_NaN();
    bool from_cache = false; // loaded from an existing row file (resume)
};

using ExperimentProgress = std::function<void(const std::string& message)>;

/// Runs the scheme x method x seed grid under out_dir and writes the
/// consolidated results.csv. Each cell persists its artifacts and a row
/// file in its own directory; cells whose row file already exists are
/// loaded instead of recomputed, so interrupted runs resume where they
/// stopped. All randomness derives from the replicate seeds, and every
/// value flows through the persisted files, so a finished grid is
/// byte-identical no matter the thread count or how often it was resumed.
std::vector<CellResult> run_experiment(const ExperimentPlan& plan,
                                       const std::string& out_dir,
                                       const ExperimentProgress& progress = {});

// Name mappings shared by configs, manifests, and the command line.
std::string scheme_name(TiltScheme scheme);
TiltScheme scheme_from_name(const std::string& name);
std::string axis_name(Axis axis);
Axis axis_from_name(const std::string& name);
std::string particle_kind_name(ParticleKind kind);
ParticleKind particle_kind_from_name(const std::string& name);

// Section parsers: read one struct from its config section, using the
// struct's defaults for absent keys. Shared by the experiment plan and the
// individual subcommands.
ParticleSpec particle_from_config(const Config& cfg);
AcquisitionSpec acquisition_from_config(const Config& cfg);
OptimizerConfig optimizer_from_config(const Config& cfg);
SartOptions sart_from_config(const Config& cfg);
TraceOptions trace_from_config(const Config& cfg);
ExperimentPlan plan_from_config(const Config& cfg);

// Echoes: write a struct back into config keys with full precision, the
// inverse of the section parsers. Used to emit manifests that reproduce a
// run exactly.
void echo_particle(Config& cfg, const ParticleSpec& spec);
void echo_acquisition(Config& cfg, const AcquisitionSpec& spec);
void echo_optimizer(Config& cfg, const OptimizerConfig& config);
void echo_sart(Config& cfg, const SartOptions& options);
void echo_trace(Config& cfg, const TraceOptions& options);
void echo_plan(Config& cfg, const ExperimentPlan& plan);

/// Consolidated-results CSV schema.
std::string cell_csv_header();
std::string cell_csv_row(const CellResult& cell);
CellResult cell_from_csv_row(const std::string& line);

} // namespace aet
