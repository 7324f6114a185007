#include "moco/text_kv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace moco {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

int TextKv::find(const std::string& key) const {
    for (std::size_t i = 0; i < order_.size(); ++i)
        if (order_[i] == key) return int(i);
    return -1;
}

void TextKv::set(const std::string& key, const std::string& value) {
    int i = find(key);
    if (i < 0) {
        order_.push_back(key);
        values_.push_back(value);
    } else {
        values_[i] = value;
    }
}

void TextKv::set_double(const std::string& key, double v) { set(key, fmt_double(v)); }
void TextKv::set_int(const std::string& key, long long v) { set(key, std::to_string(v)); }

void TextKv::set_doubles(const std::string& key, const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += " ";
        s += fmt_double(v[i]);
    }
    set(key, s);
}

void TextKv::set_ints(const std::string& key, const std::vector<long long>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += " ";
        s += std::to_string(v[i]);
    }
    set(key, s);
}

bool TextKv::has(const std::string& key) const { return find(key) >= 0; }

const std::string& TextKv::get(const std::string& key) const {
    int i = find(key);
    if (i < 0) throw std::invalid_argument("TextKv: missing key '" + key + "'");
    return values_[i];
}

std::string TextKv::get_or(const std::string& key, const std::string& fallback) const {
    int i = find(key);
    return i < 0 ? fallback : values_[i];
}

double TextKv::get_double(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (trim(s.substr(pos)) != "")
        throw std::invalid_argument("TextKv: key '" + key + "' is not a single number");
    return v;
}

long long TextKv::get_int(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (trim(s.substr(pos)) != "")
        throw std::invalid_argument("TextKv: key '" + key + "' is not a single integer");
    return v;
}

std::vector<double> TextKv::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& tok : split_ws(get(key))) out.push_back(std::stod(tok));
    return out;
}

std::vector<long long> TextKv::get_ints(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& tok : split_ws(get(key))) out.push_back(std::stoll(tok));
    return out;
}

std::string TextKv::serialize() const {
    std::string out;
    for (std::size_t i = 0; i < order_.size(); ++i) {
        out += order_[i];
        out += " = ";
        out += values_[i];
        out += "\n";
    }
    return out;
}

TextKv TextKv::parse(const std::string& text) {
    TextKv kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("TextKv: line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("TextKv: line " + std::to_string(lineno) + " has empty key");
        kv.set(key, val);
    }
    return kv;
}

TextKv TextKv::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("TextKv: cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void TextKv::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("TextKv: cannot write '" + path + "'");
    f << serialize();
}

}  // namespace moco
