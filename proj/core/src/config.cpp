#include "aet/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "aet/errors.hpp"

namespace aet {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

} // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(IoError::Kind::OpenFailed, "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3)
                throw IoError(IoError::Kind::Parse,
                              origin + ":" + std::to_string(line_no) +
                                  ": malformed section header \"" + t + "\"");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw IoError(IoError::Kind::Parse,
                              origin + ":" + std::to_string(line_no) + ": empty section name");
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw IoError(IoError::Kind::Parse,
                          origin + ":" + std::to_string(line_no) +
                              ": expected key=value, got \"" + t + "\"");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw IoError(IoError::Kind::Parse,
                          origin + ":" + std::to_string(line_no) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        cfg.values_[key] = value;
    }
    return cfg;
}

const std::string* Config::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    touched_.insert(key);
    return &it->second;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        double d = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw InvalidConfig(origin_ + ": key " + key + " is not a number: \"" + *v + "\"");
    }
}

int Config::get_int(const std::string& key, int fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        long l = std::stol(*v, &pos, 10);
        if (pos != v->size()) throw std::invalid_argument("trailing");
        return static_cast<int>(l);
    } catch (const std::exception&) {
        throw InvalidConfig(origin_ + ": key " + key + " is not an integer: \"" + *v + "\"");
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        std::uint64_t u = std::stoull(*v, &pos, 10);
        if (pos != v->size()) throw std::invalid_argument("trailing");
        return u;
    } catch (const std::exception&) {
        throw InvalidConfig(origin_ + ": key " + key + " is not an unsigned integer: \"" +
                            *v + "\"");
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw InvalidConfig(origin_ + ": key " + key + " is not a boolean: \"" + *v + "\"");
}

void Config::require(const std::vector<std::string>& keys) const {
    std::string missing;
    for (const std::string& k : keys) {
        if (values_.find(k) == values_.end()) {
            if (!missing.empty()) missing += ", ";
            missing += k;
        } else {
            touched_.insert(k);
        }
    }
    if (!missing.empty())
        throw InvalidConfig(origin_ + ": missing required keys: " + missing);
}

std::vector<std::string> Config::unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& [key, value] : values_)
        if (touched_.find(key) == touched_.end()) out.push_back(key);
    return out;
}

void Config::write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "cannot write config " + path);
    // Bare keys first so they cannot fall under a section header.
    for (const auto& [key, value] : values_)
        if (key.rfind('.') == std::string::npos)
            out << key << " = " << value << "\n";
    std::string section;
    for (const auto& [key, value] : values_) {
        std::size_t dot = key.rfind('.');
        if (dot == std::string::npos) continue;
        std::string sec = key.substr(0, dot);
        if (sec != section) {
            out << "\n[" << sec << "]\n";
            section = sec;
        }
        out << key.substr(dot + 1) << " = " << value << "\n";
    }
    if (!out)
        throw IoError(IoError::Kind::OpenFailed, "failed writing config " + path);
}

} // namespace aet
