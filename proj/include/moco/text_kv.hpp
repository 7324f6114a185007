#pragma once

#include <string>
#include <vector>

namespace moco {

/// Flat ordered key/value text document. One `key = value` pair per line,
/// `#` starts a comment, blank lines ignored. Keys keep insertion order so
/// serialised documents are stable.
class TextKv {
  public:
    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double v);
    void set_int(const std::string& key, long long v);
    void set_doubles(const std::string& key, const std::vector<double>& v);
    void set_ints(const std::string& key, const std::vector<long long>& v);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;  // throws if missing
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<long long> get_ints(const std::string& key) const;

    const std::vector<std::string>& keys() const { return order_; }

    std::string serialize() const;
    static TextKv parse(const std::string& text);
    static TextKv load(const std::string& path);
    void save(const std::string& path) const;

  private:
    std::vector<std::string> order_;
    std::vector<std::string> values_;
    int find(const std::string& key) const;
};

/// Split a string on whitespace.
std::vector<std::string> split_ws(const std::string& s);

}  // namespace moco
