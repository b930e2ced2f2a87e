#pragma once

#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvox {

/// Flat INI-style key=value store. Sections prefix keys as "section.key".
/// Parsing records the source line of every key so schema violations can
/// point at the offending line.
class ConfigMap {
public:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static ConfigMap parse(const std::string& text) {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string s = trim(strip_comment(line));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw std::runtime_error("config line " + std::to_string(lineno) +
                                             ": unterminated section header");
                section = trim(s.substr(1, s.size() - 2));
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            const std::string value = trim(s.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            if (!section.empty()) key = section + "." + key;
            if (cfg.entries_.count(key))
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": duplicate key " + key);
            cfg.entries_[key] = Entry{value, lineno};
        }
        return cfg;
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second.value;
    }

    double get_number(const std::string& key, double fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        std::size_t pos = 0;
        double v;
        try {
            v = std::stod(it->second.value, &pos);
        } catch (const std::exception&) {
            throw bad_value(key, it->second);
        }
        if (pos != it->second.value.size()) throw bad_value(key, it->second);
        return v;
    }

    long get_int(const std::string& key, long fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        std::size_t pos = 0;
        long v;
        try {
            v = std::stol(it->second.value, &pos);
        } catch (const std::exception&) {
            throw bad_value(key, it->second);
        }
        if (pos != it->second.value.size()) throw bad_value(key, it->second);
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const std::string& v = it->second.value;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw bad_value(key, it->second);
    }

    /// Flat textual form; parsing it back yields the same entries.
    std::string serialize() const {
        std::string out;
        for (const auto& [key, entry] : entries_) out += key + " = " + entry.value + "\n";
        return out;
    }

    /// Throws, naming the first key (and its source line) that is not in
    /// the accepted set.
    void require_known(const std::vector<std::string>& known) const {
        for (const auto& [key, entry] : entries_) {
            bool found = false;
            for (const auto& k : known)
                if (k == key) {
                    found = true;
                    break;
                }
            if (!found)
                throw std::runtime_error("config line " + std::to_string(entry.line) +
                                         ": unknown key " + key);
        }
    }

private:
    static std::string strip_comment(const std::string& s) {
        const auto pos = s.find_first_of("#;");
        return pos == std::string::npos ? s : s.substr(0, pos);
    }

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static std::runtime_error bad_value(const std::string& key, const Entry& e) {
        return std::runtime_error("config line " + std::to_string(e.line) + ": bad value for " +
                                  key + ": " + e.value);
    }

    std::map<std::string, Entry> entries_;
};

}  // namespace rvox
