#include "aet/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aet/errors.hpp"
#include "aet/io.hpp"
#include "aet/metrics.hpp"
#include "aet/random.hpp"
#include "aet/splat.hpp"

namespace aet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- names

std::string scheme_name(TiltScheme scheme) {
    switch (scheme) {
    case TiltScheme::Full: return "full";
    case TiltScheme::Limited: return "limited";
    case TiltScheme::Sampled: return "sampled";
    case TiltScheme::MW: return "mw";
    case TiltScheme::Custom: return "custom";
    }
    throw InvalidConfig("unknown tilt scheme value");
}

TiltScheme scheme_from_name(const std::string& name) {
    if (name == "full") return TiltScheme::Full;
    if (name == "limited") return TiltScheme::Limited;
    if (name == "sampled") return TiltScheme::Sampled;
    if (name == "mw") return TiltScheme::MW;
    if (name == "custom") return TiltScheme::Custom;
    throw InvalidConfig("unknown tilt scheme \"" + name +
                        "\" (expected full, limited, sampled, mw, or custom)");
}

std::string axis_name(Axis axis) {
    switch (axis) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
    }
    throw InvalidConfig("unknown axis value");
}

Axis axis_from_name(const std::string& name) {
    if (name == "x") return Axis::X;
    if (name == "y") return Axis::Y;
    if (name == "z") return Axis::Z;
    throw InvalidConfig("unknown axis \"" + name + "\" (expected x, y, or z)");
}

std::string particle_kind_name(ParticleKind kind) {
    switch (kind) {
    case ParticleKind::LatticeFCC: return "lattice";
    case ParticleKind::Amorphous: return "amorphous";
    }
    throw InvalidConfig("unknown particle kind value");
}

ParticleKind particle_kind_from_name(const std::string& name) {
    if (name == "lattice") return ParticleKind::LatticeFCC;
    if (name == "amorphous") return ParticleKind::Amorphous;
    throw InvalidConfig("unknown particle kind \"" + name +
                        "\" (expected lattice or amorphous)");
}

// -------------------------------------------------------------- helpers

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_opt(double v) { return std::isnan(v) ? std::string() : fmt17(v); }

std::string trimmed(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        std::string t = trimmed(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

/// Comma split that keeps empty fields (CSV rows with optional cells).
std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig(what + ": not a number: \"" + s + "\"");
    }
}

long long parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos, 10);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig(what + ": not an integer: \"" + s + "\"");
    }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(s, &pos, 10);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig(what + ": not an unsigned integer: \"" + s + "\"");
    }
}

double parse_opt(const std::string& s, const std::string& what) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    return parse_num(s, what);
}

/// Writes through a temporary name and renames into place so partially
/// written files never look complete to a resumed run.
template <typename WriteFn>
void write_atomically(const fs::path& path, WriteFn&& write_to) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_to(tmp.string());
    fs::rename(tmp, path);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string cell_dir_name(TiltScheme scheme, const std::string& method,
                          std::uint64_t seed) {
    return "cell_" + scheme_name(scheme) + "_" + method + "_s" +
           std::to_string(seed);
}

std::string sim_dir_name(TiltScheme scheme, std::uint64_t seed) {
    return "sim_" + scheme_name(scheme) + "_s" + std::to_string(seed);
}

// Seed streams: the replicate seed directly seeds the particle; the noise
// and optimizer-init streams are derived from it per scheme (stable under
// matrix reordering because the stream index uses the scheme enum value).
std::uint64_t noise_seed(std::uint64_t rep, TiltScheme scheme) {
    return derive_seed(rep, 1000 + static_cast<std::uint64_t>(scheme));
}

std::uint64_t solver_seed(std::uint64_t rep, TiltScheme scheme) {
    return derive_seed(rep, 2000 + static_cast<std::uint64_t>(scheme));
}

} // namespace

// ------------------------------------------------------- config parsing

ParticleSpec particle_from_config(const Config& cfg) {
    ParticleSpec spec;
    spec.kind = particle_kind_from_name(
        cfg.get_string("particle.kind", particle_kind_name(spec.kind)));
    spec.radius = cfg.get_double("particle.radius", spec.radius);
    spec.lattice_constant =
        cfg.get_double("particle.lattice_constant", spec.lattice_constant);
    spec.min_distance = cfg.get_double("particle.min_distance", spec.min_distance);
    spec.rejection_budget =
        cfg.get_int("particle.rejection_budget", spec.rejection_budget);
    spec.seed = cfg.get_u64("particle.seed", spec.seed);
    if (cfg.has("particle.species")) {
        spec.species_mix.clear();
        std::string raw = cfg.get_string("particle.species", "");
        for (const std::string& item : split_list(raw, ',')) {
            std::vector<std::string> parts = split_list(item, ':');
            if (parts.size() != 4)
                throw InvalidConfig(
                    "particle.species entries must be "
                    "label:fraction:amplitude:sigma, got \"" +
                    item + "\"");
            SpeciesMix mix;
            mix.label = parts[0];
            mix.fraction = parse_num(parts[1], "particle.species fraction");
            mix.ref_amplitude = parse_num(parts[2], "particle.species amplitude");
            mix.ref_sigma = parse_num(parts[3], "particle.species sigma");
            spec.species_mix.push_back(std::move(mix));
        }
    }
    return spec;
}

AcquisitionSpec acquisition_from_config(const Config& cfg) {
    AcquisitionSpec acq;
    acq.scheme =
        scheme_from_name(cfg.get_string("acquisition.scheme", scheme_name(acq.scheme)));
    acq.angle_min = cfg.get_double("acquisition.angle_min", acq.angle_min);
    acq.angle_max = cfg.get_double("acquisition.angle_max", acq.angle_max);
    acq.angle_step = cfg.get_double("acquisition.angle_step", acq.angle_step);
    acq.probe_sigma = cfg.get_double("acquisition.probe_sigma", acq.probe_sigma);
    acq.noise_sigma = cfg.get_double("acquisition.noise_sigma", acq.noise_sigma);
    acq.pixel_pitch = cfg.get_double("acquisition.pixel_pitch", acq.pixel_pitch);
    acq.det_rows = cfg.get_int("acquisition.det_rows", acq.det_rows);
    acq.det_cols = cfg.get_int("acquisition.det_cols", acq.det_cols);
    acq.axis = axis_from_name(cfg.get_string("acquisition.axis", axis_name(acq.axis)));
    acq.seed = cfg.get_u64("acquisition.seed", acq.seed);
    return acq;
}

OptimizerConfig optimizer_from_config(const Config& cfg) {
    OptimizerConfig c;
    c.n_init = cfg.get_int("optimizer.n_init", c.n_init);
    c.n_iters = cfg.get_int("optimizer.n_iters", c.n_iters);
    c.lr_mu = cfg.get_double("optimizer.lr_mu", c.lr_mu);
    c.lr_sigma = cfg.get_double("optimizer.lr_sigma", c.lr_sigma);
    c.lr_q = cfg.get_double("optimizer.lr_q", c.lr_q);
    c.momentum = cfg.get_double("optimizer.momentum", c.momentum);
    c.densify_grad_threshold =
        cfg.get_double("optimizer.densify_grad_threshold", c.densify_grad_threshold);
    c.densify_interval = cfg.get_int("optimizer.densify_interval", c.densify_interval);
    c.densify_until = cfg.get_int("optimizer.densify_until", c.densify_until);
    c.prune_q_threshold =
        cfg.get_double("optimizer.prune_q_threshold", c.prune_q_threshold);
    c.prune_q_rel = cfg.get_double("optimizer.prune_q_rel", c.prune_q_rel);
    c.prune_interval = cfg.get_int("optimizer.prune_interval", c.prune_interval);
    c.merge_distance = cfg.get_double("optimizer.merge_distance", c.merge_distance);
    c.merge_interval = cfg.get_int("optimizer.merge_interval", c.merge_interval);
    c.knn_cutover = cfg.get_int("optimizer.knn_cutover", c.knn_cutover);
    c.knn_k = cfg.get_int("optimizer.knn_k", c.knn_k);
    c.warmup_iters = cfg.get_int("optimizer.warmup_iters", c.warmup_iters);
    c.init_sigma = cfg.get_double("optimizer.init_sigma", c.init_sigma);
    c.init_peak_fraction =
        cfg.get_double("optimizer.init_peak_fraction", c.init_peak_fraction);
    c.seed = cfg.get_u64("optimizer.seed", c.seed);
    return c;
}

SartOptions sart_from_config(const Config& cfg) {
    SartOptions opt;
    opt.n_sweeps = cfg.get_int("sart.n_sweeps", opt.n_sweeps);
    opt.relaxation = cfg.get_double("sart.relaxation", opt.relaxation);
    return opt;
}

TraceOptions trace_from_config(const Config& cfg) {
    TraceOptions opt;
    opt.min_separation = cfg.get_double("trace.min_separation", opt.min_separation);
    opt.floor_fraction = cfg.get_double("trace.floor_fraction", opt.floor_fraction);
    return opt;
}

ExperimentPlan plan_from_config(const Config& cfg) {
    ExperimentPlan plan;
    plan.particle = particle_from_config(cfg);
    plan.acquisition = acquisition_from_config(cfg);
    plan.optimizer = optimizer_from_config(cfg);
    plan.sart = sart_from_config(cfg);
    plan.trace = trace_from_config(cfg);
    if (cfg.has("experiment.schemes")) {
        plan.schemes.clear();
        for (const std::string& name :
             split_list(cfg.get_string("experiment.schemes", ""), ','))
            plan.schemes.push_back(scheme_from_name(name));
    }
    if (cfg.has("experiment.methods"))
        plan.methods = split_list(cfg.get_string("experiment.methods", ""), ',');
    if (cfg.has("experiment.seeds")) {
        plan.seeds.clear();
        for (const std::string& s :
             split_list(cfg.get_string("experiment.seeds", ""), ','))
            plan.seeds.push_back(parse_u64(s, "experiment.seeds"));
    }
    plan.grid_n = cfg.get_int("experiment.grid_n", plan.grid_n);
    plan.grid_spacing = cfg.get_double("experiment.grid_spacing", plan.grid_spacing);
    plan.match_tol = cfg.get_double("evaluate.tol", plan.match_tol);
    plan.ssim_window = cfg.get_int("evaluate.ssim_window", plan.ssim_window);
    return plan;
}

// -------------------------------------------------------------- echoes

void echo_particle(Config& cfg, const ParticleSpec& spec) {
    cfg.set("particle.kind", particle_kind_name(spec.kind));
    cfg.set("particle.radius", fmt17(spec.radius));
    cfg.set("particle.lattice_constant", fmt17(spec.lattice_constant));
    cfg.set("particle.min_distance", fmt17(spec.min_distance));
    cfg.set("particle.rejection_budget", std::to_string(spec.rejection_budget));
    cfg.set("particle.seed", std::to_string(spec.seed));
    std::string mix;
    for (const SpeciesMix& m : spec.species_mix) {
        if (!mix.empty()) mix += ",";
        mix += m.label + ":" + fmt17(m.fraction) + ":" + fmt17(m.ref_amplitude) +
               ":" + fmt17(m.ref_sigma);
    }
    cfg.set("particle.species", mix);
}

void echo_acquisition(Config& cfg, const AcquisitionSpec& spec) {
    cfg.set("acquisition.scheme", scheme_name(spec.scheme));
    cfg.set("acquisition.angle_min", fmt17(spec.angle_min));
    cfg.set("acquisition.angle_max", fmt17(spec.angle_max));
    cfg.set("acquisition.angle_step", fmt17(spec.angle_step));
    cfg.set("acquisition.probe_sigma", fmt17(spec.probe_sigma));
    cfg.set("acquisition.noise_sigma", fmt17(spec.noise_sigma));
    cfg.set("acquisition.pixel_pitch", fmt17(spec.pixel_pitch));
    cfg.set("acquisition.det_rows", std::to_string(spec.det_rows));
    cfg.set("acquisition.det_cols", std::to_string(spec.det_cols));
    cfg.set("acquisition.axis", axis_name(spec.axis));
    cfg.set("acquisition.seed", std::to_string(spec.seed));
}

void echo_optimizer(Config& cfg, const OptimizerConfig& c) {
    cfg.set("optimizer.n_init", std::to_string(c.n_init));
    cfg.set("optimizer.n_iters", std::to_string(c.n_iters));
    cfg.set("optimizer.lr_mu", fmt17(c.lr_mu));
    cfg.set("optimizer.lr_sigma", fmt17(c.lr_sigma));
    cfg.set("optimizer.lr_q", fmt17(c.lr_q));
    cfg.set("optimizer.momentum", fmt17(c.momentum));
    cfg.set("optimizer.densify_grad_threshold", fmt17(c.densify_grad_threshold));
    cfg.set("optimizer.densify_interval", std::to_string(c.densify_interval));
    cfg.set("optimizer.densify_until", std::to_string(c.densify_until));
    cfg.set("optimizer.prune_q_threshold", fmt17(c.prune_q_threshold));
    cfg.set("optimizer.prune_q_rel", fmt17(c.prune_q_rel));
    cfg.set("optimizer.prune_interval", std::to_string(c.prune_interval));
    cfg.set("optimizer.merge_distance", fmt17(c.merge_distance));
    cfg.set("optimizer.merge_interval", std::to_string(c.merge_interval));
    cfg.set("optimizer.knn_cutover", std::to_string(c.knn_cutover));
    cfg.set("optimizer.knn_k", std::to_string(c.knn_k));
    cfg.set("optimizer.warmup_iters", std::to_string(c.warmup_iters));
    cfg.set("optimizer.init_sigma", fmt17(c.init_sigma));
    cfg.set("optimizer.init_peak_fraction", fmt17(c.init_peak_fraction));
    cfg.set("optimizer.seed", std::to_string(c.seed));
}

void echo_sart(Config& cfg, const SartOptions& options) {
    cfg.set("sart.n_sweeps", std::to_string(options.n_sweeps));
    cfg.set("sart.relaxation", fmt17(options.relaxation));
}

void echo_trace(Config& cfg, const TraceOptions& options) {
    cfg.set("trace.min_separation", fmt17(options.min_separation));
    cfg.set("trace.floor_fraction", fmt17(options.floor_fraction));
}

void echo_plan(Config& cfg, const ExperimentPlan& plan) {
    echo_particle(cfg, plan.particle);
    echo_acquisition(cfg, plan.acquisition);
    echo_optimizer(cfg, plan.optimizer);
    echo_sart(cfg, plan.sart);
    echo_trace(cfg, plan.trace);
    std::string schemes;
    for (TiltScheme s : plan.schemes) {
        if (!schemes.empty()) schemes += ",";
        schemes += scheme_name(s);
    }
    cfg.set("experiment.schemes", schemes);
    std::string methods;
    for (const std::string& m : plan.methods) {
        if (!methods.empty()) methods += ",";
        methods += m;
    }
    cfg.set("experiment.methods", methods);
    std::string seeds;
    for (std::uint64_t s : plan.seeds) {
        if (!seeds.empty()) seeds += ",";
        seeds += std::to_string(s);
    }
    cfg.set("experiment.seeds", seeds);
    cfg.set("experiment.grid_n", std::to_string(plan.grid_n));
    cfg.set("experiment.grid_spacing", fmt17(plan.grid_spacing));
    cfg.set("evaluate.tol", fmt17(plan.match_tol));
    cfg.set("evaluate.ssim_window", std::to_string(plan.ssim_window));
}

// ----------------------------------------------------------- validation

void ExperimentPlan::validate() const {
    particle.validate();
    acquisition.validate();
    optimizer.validate();
    sart.validate();
    trace.validate();
    if (schemes.empty()) throw InvalidConfig("experiment: no tilt schemes");
    if (methods.empty()) throw InvalidConfig("experiment: no methods");
    if (seeds.empty()) throw InvalidConfig("experiment: no seeds");
    for (const std::string& m : methods)
        if (m != "gaussian" && m != "fbp" && m != "sart")
            throw InvalidConfig("experiment: unknown method \"" + m +
                                "\" (expected gaussian, fbp, or sart)");
    // Duplicates would collide on the same cell directory.
    for (std::size_t i = 0; i < schemes.size(); ++i)
        for (std::size_t j = i + 1; j < schemes.size(); ++j)
            if (schemes[i] == schemes[j])
                throw InvalidConfig("experiment: duplicate scheme " +
                                    scheme_name(schemes[i]));
    for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t j = i + 1; j < methods.size(); ++j)
            if (methods[i] == methods[j])
                throw InvalidConfig("experiment: duplicate method " + methods[i]);
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t j = i + 1; j < seeds.size(); ++j)
            if (seeds[i] == seeds[j])
                throw InvalidConfig("experiment: duplicate seed " +
                                    std::to_string(seeds[i]));
    if (grid_n < 4) throw InvalidConfig("experiment: grid_n must be >= 4");
    if (grid_spacing < 0)
        throw InvalidConfig("experiment: grid_spacing must be >= 0");
    if (!(match_tol > 0)) throw InvalidConfig("evaluate: tol must be > 0");
    if (ssim_window < 1 || ssim_window % 2 == 0 || ssim_window > grid_n)
        throw InvalidConfig(
            "evaluate: ssim_window must be odd, positive, and fit the grid");
}

VoxelVolume ExperimentPlan::evaluation_grid() const {
    double spacing = grid_spacing > 0.0
                         ? grid_spacing
                         : acquisition.det_cols * acquisition.pixel_pitch / grid_n;
    return VoxelVolume::centered_cube(grid_n, spacing);
}

// ------------------------------------------------------------------ CSV

std::string cell_csv_header() {
    return "scheme,method,seed,n_gt,n_pred,n_tp,n_fp,n_fn,tpr,fpr,"
           "matched_rmsd,ssim,k_final,loss_final,amp_ratio,amp_separability";
}

std::string cell_csv_row(const CellResult& c) {
    std::ostringstream out;
    out << c.scheme << ',' << c.method << ',' << c.seed << ',' << c.n_gt << ','
        << c.n_pred << ',' << c.n_tp << ',' << c.n_fp << ',' << c.n_fn << ','
        << fmt17(c.tpr) << ',' << fmt17(c.fpr) << ',' << fmt17(c.matched_rmsd)
        << ',' << fmt17(c.ssim) << ',' << c.k_final << ','
        << fmt_opt(c.loss_final) << ',' << fmt_opt(c.amp_ratio) << ','
        << fmt_opt(c.amp_separability);
    return out.str();
}

CellResult cell_from_csv_row(const std::string& line) {
    std::vector<std::string> f = csv_split(trimmed(line));
    if (f.size() != 16)
        throw IoError(IoError::Kind::Parse,
                      "results row: expected 16 fields, got " +
                          std::to_string(f.size()));
    CellResult c;
    c.scheme = f[0];
    c.method = f[1];
    c.seed = parse_u64(f[2], "results row seed");
    c.n_gt = static_cast<int>(parse_int(f[3], "results row n_gt"));
    c.n_pred = static_cast<int>(parse_int(f[4], "results row n_pred"));
    c.n_tp = static_cast<int>(parse_int(f[5], "results row n_tp"));
    c.n_fp = static_cast<int>(parse_int(f[6], "results row n_fp"));
    c.n_fn = static_cast<int>(parse_int(f[7], "results row n_fn"));
    c.tpr = parse_num(f[8], "results row tpr");
    c.fpr = parse_num(f[9], "results row fpr");
    c.matched_rmsd = parse_num(f[10], "results row matched_rmsd");
    c.ssim = parse_num(f[11], "results row ssim");
    c.k_final = static_cast<int>(parse_int(f[12], "results row k_final"));
    c.loss_final = parse_opt(f[13], "results row loss_final");
    c.amp_ratio = parse_opt(f[14], "results row amp_ratio");
    c.amp_separability = parse_opt(f[15], "results row amp_separability");
    return c;
}

// ------------------------------------------------------------ the grid

namespace {

void ensure_simulation(const ExperimentPlan& plan, TiltScheme scheme,
                       std::uint64_t seed, const fs::path& out_dir,
                       const ExperimentProgress& progress) {
    fs::path dir = out_dir / sim_dir_name(scheme, seed);
    std::string tag = "[sim] " + scheme_name(scheme) + " s" + std::to_string(seed);
    if (fs::exists(dir / "manifest.cfg")) {
        if (progress) progress(tag + ": cached");
        return;
    }
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(dir);

    ParticleSpec particle = plan.particle;
    particle.seed = seed;
    AcquisitionSpec acq = plan.acquisition;
    acq.scheme = scheme;
    acq.seed = noise_seed(seed, scheme);

    GroundTruthStructure gt = make_particle(particle);
    ProjectionStack stack = synthesize_projections(gt, acq);

    write_atomically(dir / "gt.xyz", [&](const std::string& p) {
        write_atoms(p, to_records(gt),
                    "ground truth: label x y z amplitude sigma, Angstrom");
    });
    write_atomically(dir / "stack.aetp", [&](const std::string& p) {
        write_projection_stack(p, stack);
    });
    Config manifest;
    echo_particle(manifest, particle);
    echo_acquisition(manifest, acq);
    manifest.set("sim.n_atoms", std::to_string(gt.size()));
    manifest.set("sim.n_angles", std::to_string(stack.n_frames()));
    write_atomically(dir / "manifest.cfg",
                     [&](const std::string& p) { manifest.write_file(p); });

    if (progress) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s: %zu atoms, %zu angles (%.1f s)",
                      tag.c_str(), gt.size(), stack.n_frames(),
                      seconds_since(t0));
        progress(buf);
    }
}

CellResult run_cell(const ExperimentPlan& plan, TiltScheme scheme,
                    const std::string& method, std::uint64_t seed,
                    const fs::path& out_dir, const VoxelVolume& grid_template,
                    const ExperimentProgress& progress) {
    fs::path dir = out_dir / cell_dir_name(scheme, method, seed);
    fs::path row_path = dir / "row.csv";
    std::string tag =
        "[cell] " + scheme_name(scheme) + "/" + method + " s" + std::to_string(seed);

    if (fs::exists(row_path)) {
        std::ifstream in(row_path);
        std::string header, row;
        if (std::getline(in, header) && std::getline(in, row)) {
            CellResult cached = cell_from_csv_row(row);
            cached.from_cache = true;
            if (progress) progress(tag + ": cached");
            return cached;
        }
        throw IoError(IoError::Kind::Parse,
                      "unreadable row file " + row_path.string());
    }

    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(dir);

    // Both fresh and resumed runs read the simulation back from disk, so a
    // cell's output never depends on whether the simulation was cached.
    fs::path sim = out_dir / sim_dir_name(scheme, seed);
    GroundTruthStructure gt = structure_from_records(read_atoms((sim / "gt.xyz").string()));
    ProjectionStack stack = read_projection_stack((sim / "stack.aetp").string());

    CellResult cell;
    cell.scheme = scheme_name(scheme);
    cell.method = method;
    cell.seed = seed;
    cell.n_gt = static_cast<int>(gt.size());

    VoxelVolume volume = grid_template;
    std::vector<Vec3> pred;
    AtomCloud cloud;

    if (method == "gaussian") {
        OptimizerConfig cfg = plan.optimizer;
        cfg.seed = solver_seed(seed, scheme);
        ReconstructResult rec = reconstruct(
            stack, cfg, 0.0, [&](int iter, double loss, std::size_t k) {
                if (progress && (iter + 1) % 250 == 0) {
                    char buf[160];
                    std::snprintf(buf, sizeof buf, "%s: iter %d loss %.3e k %zu",
                                  tag.c_str(), iter + 1, loss, k);
                    progress(buf);
                }
            });
        for (const std::string& w : rec.warnings)
            if (progress) progress(tag + ": warning: " + w);
        cloud = std::move(rec.cloud);
        for (const GaussianAtom& a : cloud.atoms) pred.push_back(a.mu);
        volume = rasterize_volume(cloud, grid_template);
        cell.k_final = static_cast<int>(cloud.size());
        if (!rec.log.empty()) cell.loss_final = rec.log.back().loss;
        write_atomically(dir / "atoms.xyz", [&](const std::string& p) {
            write_atoms(p, to_records(cloud),
                        "reconstructed Gaussians: label x y z amplitude sigma, Angstrom");
        });
        write_atomically(dir / "run_log.csv", [&](const std::string& p) {
            write_run_log(p, rec.log);
        });
    } else if (method == "fbp") {
        volume = fbp(stack, grid_template);
        pred = trace_atoms(volume, plan.trace);
        cell.k_final = static_cast<int>(pred.size());
    } else { // sart
        SartResult sr = sart(stack, grid_template, plan.sart);
        for (const std::string& w : sr.warnings)
            if (progress) progress(tag + ": warning: " + w);
        volume = std::move(sr.volume);
        pred = trace_atoms(volume, plan.trace);
        cell.k_final = static_cast<int>(pred.size());
        write_atomically(dir / "residuals.csv", [&](const std::string& p) {
            std::ofstream out(p, std::ios::trunc);
            out << "sweep,residual\n";
            for (std::size_t s = 0; s < sr.residuals.size(); ++s)
                out << s + 1 << "," << fmt17(sr.residuals[s]) << "\n";
        });
    }

    if (method != "gaussian") {
        std::vector<AtomRecord> traced;
        for (const Vec3& p : pred) traced.push_back({"TR", p, 0.0, 0.0});
        write_atomically(dir / "atoms.xyz", [&](const std::string& p) {
            write_atoms(p, traced,
                        "traced peak positions: label x y z (amplitude/sigma unused)");
        });
    }
    write_atomically(dir / "volume.aetv",
                     [&](const std::string& p) { write_volume(p, volume); });

    MatchReport match = match_atoms(pred, gt.positions, plan.match_tol);
    cell.n_pred = match.n_pred;
    cell.n_tp = match.n_tp;
    cell.n_fp = match.n_fp;
    cell.n_fn = match.n_fn;
    cell.tpr = match.tpr;
    cell.fpr = match.fpr;
    cell.matched_rmsd = match.matched_rmsd;

    VoxelVolume gt_volume = rasterize_volume(
        effective_cloud(gt, plan.acquisition.probe_sigma), grid_template);
    cell.ssim = ssim3d(volume, gt_volume, plan.ssim_window);

    if (method == "gaussian" && gt.ref.size() == 2) {
        AmplitudeHistogram hist = amplitude_histogram(cloud, match, gt.species);
        if (hist.species.size() == 2) {
            // Ratio oriented by the true reference amplitudes: a correct
            // reconstruction puts the heavier species on top.
            double ref0 = gt.ref_for(hist.species[0].label).amplitude;
            double ref1 = gt.ref_for(hist.species[1].label).amplitude;
            double hi = ref0 >= ref1 ? hist.species[0].mean : hist.species[1].mean;
            double lo = ref0 >= ref1 ? hist.species[1].mean : hist.species[0].mean;
            if (lo > 0.0) cell.amp_ratio = hi / lo;
            cell.amp_separability = hist.separability;
        }
    }

    Config manifest;
    echo_plan(manifest, plan);
    manifest.set("cell.scheme", scheme_name(scheme));
    manifest.set("cell.method", method);
    manifest.set("cell.seed", std::to_string(seed));
    manifest.set("cell.noise_seed", std::to_string(noise_seed(seed, scheme)));
    manifest.set("cell.solver_seed", std::to_string(solver_seed(seed, scheme)));
    write_atomically(dir / "manifest.cfg",
                     [&](const std::string& p) { manifest.write_file(p); });

    // The row file is the cell's completion marker; it goes last.
    write_atomically(row_path, [&](const std::string& p) {
        std::ofstream out(p, std::ios::trunc);
        out << cell_csv_header() << "\n" << cell_csv_row(cell) << "\n";
    });

    if (progress) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "%s: tpr %.3f fpr %.3f ssim %.3f k %d (%.1f s)",
                      tag.c_str(), cell.tpr, cell.fpr, cell.ssim, cell.k_final,
                      seconds_since(t0));
        progress(buf);
    }
    return cell;
}

} // namespace

std::vector<CellResult> run_experiment(const ExperimentPlan& plan,
                                       const std::string& out_dir,
                                       const ExperimentProgress& progress) {
    plan.validate();
    fs::path root(out_dir);
    fs::create_directories(root);

    Config manifest;
    echo_plan(manifest, plan);
    write_atomically(root / "manifest.cfg",
                     [&](const std::string& p) { manifest.write_file(p); });

    VoxelVolume grid_template = plan.evaluation_grid();

    for (TiltScheme scheme : plan.schemes)
        for (std::uint64_t seed : plan.seeds)
            ensure_simulation(plan, scheme, seed, root, progress);

    std::vector<CellResult> rows;
    for (TiltScheme scheme : plan.schemes)
        for (const std::string& method : plan.methods)
            for (std::uint64_t seed : plan.seeds)
                rows.push_back(
                    run_cell(plan, scheme, method, seed, root, grid_template, progress));

    write_atomically(root / "results.csv", [&](const std::string& p) {
        std::ofstream out(p, std::ios::trunc);
        if (!out)
            throw IoError(IoError::Kind::OpenFailed, "cannot write " + p);
        out << cell_csv_header() << "\n";
        for (const CellResult& r : rows) out << cell_csv_row(r) << "\n";
    });
    return rows;
}

} // namespace aet
