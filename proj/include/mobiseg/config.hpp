#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mobiseg {

using ConfigScalar = std::variant<bool, std::int64_t, double, std::string>;
using ConfigValue = std::variant<bool, std::int64_t, double, std::string, std::vector<ConfigScalar>>;

/// Flat key/value view of a TOML subset: [table] headers, `key = value` with
/// strings, integers, floats, booleans and single-line arrays of those, and
/// '#' comments. Keys are addressed as "table.key".
class Config {
  public:
    static Config parse(std::string_view text, const std::string& source = "<config>");
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::vector<std::string> keys() const;
    void set(const std::string& key, ConfigValue value) { values_[key] = std::move(value); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
    std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const;

    /// Canonical text (sorted keys) used for hashing.
    std::string canonical() const;

  private:
    std::map<std::string, ConfigValue> values_;
};

} // namespace mobiseg
