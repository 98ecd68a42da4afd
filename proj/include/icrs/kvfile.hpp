#pragma once
// Parser for the plain key = "value" config/manifest format. Supported value
// forms: quoted strings, integers, reals, true/false, and flat arrays of
// quoted strings. '#' starts a comment. Nothing else -- this is deliberately
// not a full TOML implementation.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace icrs {

struct KvValue {
    enum class Type { string, integer, real, boolean, string_list } type =
        Type::string;
    std::string str;
    std::int64_t integer = 0;
    double real = 0.0;
    bool boolean = false;
    std::vector<std::string> list;
};

class KvFile {
public:
    static KvFile parse_file(const std::string& path);
    static KvFile parse_text(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& dflt) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t dflt) const;
    double get_real_or(const std::string& key, double dflt) const;
    bool get_bool_or(const std::string& key, bool dflt) const;
    std::vector<std::string> get_list_or(const std::string& key,
                                         std::vector<std::string> dflt) const;

    const std::map<std::string, KvValue>& values() const { return values_; }
    const std::string& origin() const { return origin_; }

private:
    std::map<std::string, KvValue> values_;
    std::string origin_;
};

}  // namespace icrs
