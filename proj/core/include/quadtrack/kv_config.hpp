#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace quadtrack {

/// Flat `key = value` file; `#` starts a comment, blank lines ignored.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws DataError naming the first key not in `known`.
    void reject_unknown(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace quadtrack
