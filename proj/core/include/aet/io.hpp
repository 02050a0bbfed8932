#pragma once

#include <string>
#include <vector>

#include "aet/types.hpp"

namespace aet {

// Binary containers (little-endian, f64 metadata, f32 payload):
//
//   projection stack  "AETP" | u32 version | u32 n_angles | u32 rows |
//                     u32 cols | f64 pixel_pitch | u8 axis |
//                     f64 angles[n_angles] | f32 frames (row-major, angle order)
//
//   volume            "AETV" | u32 version | u32 nx | u32 ny | u32 nz |
//                     f64 spacing | f64 origin[3] | f32 data (x fastest,
//                     z slowest — matches the in-memory layout)
//
// Readers reject wrong magic / wrong version / truncated payloads with
// IoError carrying the matching Kind and the byte offset of the failure.

inline constexpr unsigned kFormatVersion = 1;

void write_projection_stack(const std::string& path, const ProjectionStack& stack);
ProjectionStack read_projection_stack(const std::string& path);

void write_volume(const std::string& path, const VoxelVolume& volume);
VoxelVolume read_volume(const std::string& path);

/// One line of the extended-XYZ atom format: "LABEL x y z q sigma".
struct AtomRecord {
    std::string label;
    Vec3 pos;
    double q = 0.0;
    double sigma = 1.0;
};

/// Text format: line 1 atom count, line 2 comment (units note), then one
/// record per line with 6 significant digits.
void write_atoms(const std::string& path, const std::vector<AtomRecord>& records,
                 const std::string& comment = "x y z in Angstrom, q amplitude, sigma Angstrom");
std::vector<AtomRecord> read_atoms(const std::string& path);

std::vector<AtomRecord> to_records(const AtomCloud& cloud);
std::vector<AtomRecord> to_records(const GroundTruthStructure& structure);
AtomCloud cloud_from_records(const std::vector<AtomRecord>& records);
GroundTruthStructure structure_from_records(const std::vector<AtomRecord>& records);

/// One optimizer iteration in the run log.
struct IterationRecord {
    int iter = 0;
    double loss = 0.0;
    int k = 0;
    int n_densified = 0;
    int n_pruned = 0;
    int n_merged = 0;
};

/// CSV with header "iter,loss,k,n_densified,n_pruned,n_merged".
void write_run_log(const std::string& path, const std::vector<IterationRecord>& records);
std::vector<IterationRecord> read_run_log(const std::string& path);

/// 16-bit binary PGM (P5) with min-max windowing; the window used is
/// recorded in the comment line. Passing lo >= hi auto-windows to the
/// data's min/max.
void write_pgm16(const std::string& path, int rows, int cols,
                 const double* data, double window_lo = 0.0,
                 double window_hi = 0.0);

} // namespace aet
