#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace aet {

/// Flat key=value configuration with [section] grouping. Keys inside a
/// section are addressed as "section.key". Full-line comments start with
/// '#' or ';'. Lookups mark keys as consumed; anything left unconsumed is
/// reported by unknown_keys() so callers can warn about typos.
class Config {
  public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text,
                               const std::string& origin = "<string>");

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

    /// Throws InvalidConfig naming every missing key at once.
    void require(const std::vector<std::string>& keys) const;

    /// Keys present in the file that no lookup has touched yet.
    std::vector<std::string> unknown_keys() const;

    /// Raw access for iteration (e.g. manifest echo).
    const std::map<std::string, std::string>& values() const { return values_; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Serializes back to the [section] key=value syntax, sections and keys
    /// in sorted order, so manifests are deterministic and reparseable.
    void write_file(const std::string& path) const;

  private:
    std::string origin_ = "<none>";
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> touched_;

    const std::string* find(const std::string& key) const;
};

} // namespace aet
