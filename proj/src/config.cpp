#include "sparsevid/config.hpp"

#include <algorithm>
#include <fstream>

#include "sparsevid/errors.hpp"

namespace sparsevid {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvConfig KvConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open '" + path + "'");
    KvConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              " is not key=value: '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("config: empty key at line " + std::to_string(lineno));
        cfg.kv_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

std::string KvConfig::get_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

int KvConfig::get_int(const std::string& key) const {
    try {
        return std::stoi(get_str(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config: key '" + key + "' is not an integer");
    }
}

int KvConfig::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KvConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get_str(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config: key '" + key + "' is not a number");
    }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t fallback) const {
    if (!has(key)) return fallback;
    try {
        return std::stoull(get_str(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config: key '" + key + "' is not an unsigned integer");
    }
}

void KvConfig::restrict_keys(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : kv_)
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw ConfigError("config: unknown key '" + k + "'");
}

std::string KvConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

}  // namespace sparsevid
