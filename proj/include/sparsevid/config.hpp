#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sparsevid {

// Plain-text key=value run configuration. '#' starts a comment; blank lines
// are ignored. Flags set later override file values.
class KvConfig {
public:
    KvConfig() = default;
    static KvConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;

    // Throws ConfigError naming the first key outside `allowed`.
    void restrict_keys(const std::vector<std::string>& allowed) const;

    // Canonical "k=v\n" lines sorted by key; input to provenance digests.
    std::string canonical() const;

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace sparsevid
