#pragma once

#include <string>
#include <vector>

#include "moco/text_kv.hpp"

namespace moco {

/// Typed configuration with a closed key registry. Every key has a default;
/// files and --set overrides may only touch registered keys (an unknown key
/// is rejected by name), values are type-checked and range-checked when set.
class Config {
  public:
    Config();

    /// Overlay a key = value file.
    void apply_file(const std::string& path);
    /// Apply one "key=value" override.
    void apply_set(const std::string& assignment);

    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    const std::string& get_string(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    /// All keys with their current values, in registry order.
    TextKv resolved() const;

  private:
    struct Entry {
        std::string key;
        char type = 's';  // d, i, s, b
        std::string value;
        double lo = 0.0, hi = 0.0;
        bool has_range = false;
        std::vector<std::string> choices;
    };

    std::vector<Entry> entries_;

    void reg_d(const std::string& key, double def);
    void reg_d(const std::string& key, double def, double lo, double hi);
    void reg_i(const std::string& key, long long def);
    void reg_i(const std::string& key, long long def, long long lo, long long hi);
    void reg_s(const std::string& key, const std::string& def,
               std::vector<std::string> choices = {});
    void reg_b(const std::string& key, bool def);
    const Entry& find(const std::string& key, char type) const;
    void set_checked(const std::string& key, const std::string& value);
};

}  // namespace moco
