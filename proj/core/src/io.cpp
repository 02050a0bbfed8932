#include "aet/io.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "aet/errors.hpp"

namespace aet {

namespace {

class BinaryWriter {
  public:
    explicit BinaryWriter(const std::string& path)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_)
            throw IoError(IoError::Kind::OpenFailed, "cannot open " + path + " for writing");
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_)
            throw IoError(IoError::Kind::OpenFailed, "write failed on " + path_, offset_);
        offset_ += n;
    }

    void u8(std::uint8_t v) { bytes(&v, 1); }

    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                             static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 24)};
        bytes(b, 4);
    }

    void f64(double v) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(v);
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(u >> (8 * i));
        bytes(b, 8);
    }

    void f32_array(const double* data, std::size_t n) {
        std::vector<std::uint8_t> buf(n * 4);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(data[i]));
            buf[4 * i] = static_cast<std::uint8_t>(u);
            buf[4 * i + 1] = static_cast<std::uint8_t>(u >> 8);
            buf[4 * i + 2] = static_cast<std::uint8_t>(u >> 16);
            buf[4 * i + 3] = static_cast<std::uint8_t>(u >> 24);
        }
        bytes(buf.data(), buf.size());
    }

  private:
    std::string path_;
    std::ofstream out_;
    std::size_t offset_ = 0;
};

class BinaryReader {
  public:
    explicit BinaryReader(const std::string& path)
        : path_(path), in_(path, std::ios::binary) {
        if (!in_)
            throw IoError(IoError::Kind::OpenFailed, "cannot open " + path + " for reading");
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw IoError(IoError::Kind::Truncated,
                          path_ + ": truncated at byte " +
                              std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())),
                          offset_ + static_cast<std::size_t>(in_.gcount()));
        offset_ += n;
    }

    std::uint8_t u8() {
        std::uint8_t v = 0;
        bytes(&v, 1);
        return v;
    }

    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }

    double f64() {
        std::uint8_t b[8];
        bytes(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return std::bit_cast<double>(u);
    }

    void f32_array(double* data, std::size_t n) {
        std::vector<std::uint8_t> buf(n * 4);
        bytes(buf.data(), buf.size());
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t u = static_cast<std::uint32_t>(buf[4 * i]) |
                              (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                              (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
            data[i] = static_cast<double>(std::bit_cast<float>(u));
        }
    }

    void expect_magic(const char magic[4]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, magic, 4) != 0)
            throw IoError(IoError::Kind::BadMagic,
                          path_ + ": bad magic, expected " + std::string(magic, 4));
    }

    void expect_version(unsigned version) {
        std::uint32_t got = u32();
        if (got != version)
            throw IoError(IoError::Kind::BadVersion,
                          path_ + ": unsupported format version " + std::to_string(got),
                          offset_ - 4);
    }

    /// Header count fields get a sanity bound so corrupt files fail as
    /// parse errors instead of attempting huge allocations.
    std::uint32_t count_field(const char* name, std::uint32_t cap) {
        std::uint32_t v = u32();
        if (v > cap)
            throw IoError(IoError::Kind::Parse,
                          path_ + ": header field " + name + " out of range (" +
                              std::to_string(v) + ")",
                          offset_ - 4);
        return v;
    }

    std::size_t offset() const { return offset_; }

  private:
    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
};

constexpr std::uint32_t kMaxGridDim = 1u << 20;
constexpr std::uint32_t kMaxAngles = 1u << 20;

std::string format_sig6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

void write_projection_stack(const std::string& path, const ProjectionStack& stack) {
    stack.validate();
    BinaryWriter w(path);
    w.bytes("AETP", 4);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(stack.geometry.n_angles()));
    w.u32(static_cast<std::uint32_t>(stack.geometry.det_rows));
    w.u32(static_cast<std::uint32_t>(stack.geometry.det_cols));
    w.f64(stack.geometry.pixel_pitch);
    w.u8(static_cast<std::uint8_t>(stack.geometry.axis));
    for (double a : stack.geometry.angles_deg) w.f64(a);
    w.f32_array(stack.data.data(), stack.data.size());
}

ProjectionStack read_projection_stack(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("AETP");
    r.expect_version(kFormatVersion);
    std::uint32_t n_angles = r.count_field("n_angles", kMaxAngles);
    std::uint32_t rows = r.count_field("rows", kMaxGridDim);
    std::uint32_t cols = r.count_field("cols", kMaxGridDim);
    double pitch = r.f64();
    std::uint8_t axis = r.u8();
    if (axis > 2)
        throw IoError(IoError::Kind::Parse, path + ": invalid axis " + std::to_string(axis),
                      r.offset() - 1);

    TiltGeometry geom;
    geom.axis = static_cast<Axis>(axis);
    geom.det_rows = static_cast<int>(rows);
    geom.det_cols = static_cast<int>(cols);
    geom.pixel_pitch = pitch;
    geom.angles_deg.resize(n_angles);
    for (std::uint32_t i = 0; i < n_angles; ++i) geom.angles_deg[i] = r.f64();

    ProjectionStack stack;
    stack.geometry = std::move(geom);
    stack.data.resize(static_cast<std::size_t>(n_angles) * rows * cols);
    r.f32_array(stack.data.data(), stack.data.size());
    return stack;
}

void write_volume(const std::string& path, const VoxelVolume& volume) {
    volume.validate();
    BinaryWriter w(path);
    w.bytes("AETV", 4);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(volume.nx));
    w.u32(static_cast<std::uint32_t>(volume.ny));
    w.u32(static_cast<std::uint32_t>(volume.nz));
    w.f64(volume.spacing);
    w.f64(volume.origin.x);
    w.f64(volume.origin.y);
    w.f64(volume.origin.z);
    w.f32_array(volume.data.data(), volume.data.size());
}

VoxelVolume read_volume(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("AETV");
    r.expect_version(kFormatVersion);
    std::uint32_t nx = r.count_field("nx", kMaxGridDim);
    std::uint32_t ny = r.count_field("ny", kMaxGridDim);
    std::uint32_t nz = r.count_field("nz", kMaxGridDim);
    double spacing = r.f64();
    Vec3 origin{r.f64(), r.f64(), r.f64()};

    VoxelVolume v(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz),
                  spacing, origin);
    r.f32_array(v.data.data(), v.data.size());
    return v;
}

void write_atoms(const std::string& path, const std::vector<AtomRecord>& records,
                 const std::string& comment) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "cannot open " + path + " for writing");
    out << records.size() << "\n" << comment << "\n";
    for (const AtomRecord& rec : records) {
        out << rec.label << " " << format_sig6(rec.pos.x) << " "
            << format_sig6(rec.pos.y) << " " << format_sig6(rec.pos.z) << " "
            << format_sig6(rec.q) << " " << format_sig6(rec.sigma) << "\n";
    }
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "write failed on " + path);
}

std::vector<AtomRecord> read_atoms(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(IoError::Kind::OpenFailed, "cannot open " + path + " for reading");

    std::string line;
    if (!std::getline(in, line))
        throw IoError(IoError::Kind::Truncated, path + ": missing count line");
    std::size_t count = 0;
    try {
        std::size_t pos = 0;
        count = std::stoull(line, &pos);
        while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
        if (pos != line.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw IoError(IoError::Kind::Parse, path + ":1: expected atom count, got \"" + line + "\"");
    }
    if (!std::getline(in, line))
        throw IoError(IoError::Kind::Truncated, path + ": missing comment line");

    std::vector<AtomRecord> records;
    records.reserve(count);
    int line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        AtomRecord rec;
        if (!(ls >> rec.label >> rec.pos.x >> rec.pos.y >> rec.pos.z >> rec.q >> rec.sigma))
            throw IoError(IoError::Kind::Parse,
                          path + ":" + std::to_string(line_no) + ": malformed atom line \"" +
                              line + "\"");
        records.push_back(std::move(rec));
    }
    if (records.size() != count)
        throw IoError(IoError::Kind::Parse,
                      path + ": count line says " + std::to_string(count) + " atoms, body has " +
                          std::to_string(records.size()));
    return records;
}

std::vector<AtomRecord> to_records(const AtomCloud& cloud) {
    std::vector<AtomRecord> records;
    records.reserve(cloud.size());
    for (const GaussianAtom& a : cloud.atoms)
        records.push_back({"GA", a.mu, a.q, a.sigma});
    return records;
}

std::vector<AtomRecord> to_records(const GroundTruthStructure& structure) {
    if (structure.species.size() != structure.positions.size())
        throw InvalidInput("structure species/position size mismatch");
    std::vector<AtomRecord> records;
    records.reserve(structure.size());
    for (std::size_t i = 0; i < structure.size(); ++i) {
        const SpeciesRef& ref = structure.ref_for(structure.species[i]);
        records.push_back({structure.species[i], structure.positions[i], ref.amplitude,
                           ref.sigma});
    }
    return records;
}

AtomCloud cloud_from_records(const std::vector<AtomRecord>& records) {
    AtomCloud cloud;
    for (const AtomRecord& rec : records)
        cloud.push_atom({rec.pos, rec.sigma, rec.q});
    return cloud;
}

GroundTruthStructure structure_from_records(const std::vector<AtomRecord>& records) {
    GroundTruthStructure s;
    for (const AtomRecord& rec : records) {
        s.positions.push_back(rec.pos);
        s.species.push_back(rec.label);
        auto it = s.ref.find(rec.label);
        if (it == s.ref.end()) {
            s.ref[rec.label] = SpeciesRef{rec.q, rec.sigma};
        } else if (std::abs(it->second.amplitude - rec.q) > 1e-9 ||
                   std::abs(it->second.sigma - rec.sigma) > 1e-9) {
            throw InvalidInput("species " + rec.label +
                               " has inconsistent reference parameters across atoms");
        }
    }
    return s;
}

void write_run_log(const std::string& path, const std::vector<IterationRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "cannot open " + path + " for writing");
    out << "iter,loss,k,n_densified,n_pruned,n_merged\n";
    char buf[64];
    for (const IterationRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%.17g", r.loss);
        out << r.iter << "," << buf << "," << r.k << "," << r.n_densified << ","
            << r.n_pruned << "," << r.n_merged << "\n";
    }
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "write failed on " + path);
}

std::vector<IterationRecord> read_run_log(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(IoError::Kind::OpenFailed, "cannot open " + path + " for reading");
    std::string line;
    if (!std::getline(in, line) || line != "iter,loss,k,n_densified,n_pruned,n_merged")
        throw IoError(IoError::Kind::Parse, path + ": bad run-log header");
    std::vector<IterationRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        IterationRecord r;
        if (std::sscanf(line.c_str(), "%d,%lf,%d,%d,%d,%d", &r.iter, &r.loss, &r.k,
                        &r.n_densified, &r.n_pruned, &r.n_merged) != 6)
            throw IoError(IoError::Kind::Parse,
                          path + ":" + std::to_string(line_no) + ": malformed run-log row");
        records.push_back(r);
    }
    return records;
}

void write_pgm16(const std::string& path, int rows, int cols, const double* data,
                 double window_lo, double window_hi) {
    if (rows <= 0 || cols <= 0)
        throw InvalidInput("pgm: non-positive image dimensions");
    std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (!(window_lo < window_hi)) {
        window_lo = data[0];
        window_hi = data[0];
        for (std::size_t i = 1; i < n; ++i) {
            window_lo = std::min(window_lo, data[i]);
            window_hi = std::max(window_hi, data[i]);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "cannot open " + path + " for writing");
    char lo_buf[64], hi_buf[64];
    std::snprintf(lo_buf, sizeof lo_buf, "%.17g", window_lo);
    std::snprintf(hi_buf, sizeof hi_buf, "%.17g", window_hi);
    out << "P5\n# window " << lo_buf << " " << hi_buf << "\n"
        << cols << " " << rows << "\n65535\n";
    double span = window_hi - window_lo;
    std::vector<std::uint8_t> buf(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        double t = span > 0.0 ? (data[i] - window_lo) / span : 0.0;
        t = std::min(1.0, std::max(0.0, t));
        std::uint16_t v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        buf[2 * i] = static_cast<std::uint8_t>(v >> 8); // PGM maxval > 255 is big-endian
        buf[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "write failed on " + path);
}

} // namespace aet
