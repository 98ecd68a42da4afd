#include "icrs/kvfile.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "icrs/error.hpp"

namespace icrs {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Parses a double-quoted string starting at s[i] == '"'. Supports \" and \\.
std::string parse_quoted(const std::string& s, std::size_t& i,
                         const std::string& where) {
    std::string out;
    ++i;  // opening quote
    while (i < s.size() && s[i] != '"') {
        if (s[i] == '\\' && i + 1 < s.size()) {
            ++i;
            out.push_back(s[i] == 'n' ? '\n' : s[i] == 't' ? '\t' : s[i]);
        } else {
            out.push_back(s[i]);
        }
        ++i;
    }
    if (i >= s.size())
        throw io_error("malformed config", where + ": unterminated string");
    ++i;  // closing quote
    return out;
}

KvValue parse_value(const std::string& raw, const std::string& where) {
    KvValue v;
    std::string s = trim(raw);
    if (s.empty())
        throw io_error("malformed config", where + ": empty value");
    if (s.front() == '"') {
        std::size_t i = 0;
        v.type = KvValue::Type::string;
        v.str = parse_quoted(s, i, where);
        if (trim(s.substr(i)).size())
            throw io_error("malformed config", where + ": trailing characters");
        return v;
    }
    if (s.front() == '[') {
        v.type = KvValue::Type::string_list;
        std::size_t i = 1;
        while (true) {
            while (i < s.size() && (std::isspace(static_cast<unsigned char>(s[i])) || s[i] == ','))
                ++i;
            if (i >= s.size())
                throw io_error("malformed config", where + ": unterminated array");
            if (s[i] == ']') break;
            if (s[i] != '"')
                throw io_error("malformed config",
                               where + ": arrays may contain only quoted strings");
            v.list.push_back(parse_quoted(s, i, where));
        }
        return v;
    }
    if (s == "true" || s == "false") {
        v.type = KvValue::Type::boolean;
        v.boolean = (s == "true");
        return v;
    }
    // integer or real
    try {
        std::size_t pos = 0;
        if (s.find('.') == std::string::npos &&
            s.find('e') == std::string::npos &&
            s.find('E') == std::string::npos) {
            v.type = KvValue::Type::integer;
            v.integer = std::stoll(s, &pos);
        } else {
            v.type = KvValue::Type::real;
            v.real = std::stod(s, &pos);
        }
        if (pos != s.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw io_error("malformed config", where + ": cannot parse value '" + s + "'");
    }
    return v;
}

}  // namespace

KvFile KvFile::parse_text(const std::string& text, const std::string& origin) {
    KvFile kv;
    kv.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto strip_comment = [](std::string s) {
        bool in_quotes = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_quotes = !in_quotes;
            if (s[i] == '#' && !in_quotes) return s.substr(0, i);
        }
        return s;
    };
    auto array_open = [](const std::string& s) {
        bool in_quotes = false;
        int depth = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_quotes = !in_quotes;
            if (in_quotes) continue;
            if (s[i] == '[') ++depth;
            if (s[i] == ']') --depth;
        }
        return depth > 0;
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = origin + ":" + std::to_string(lineno);
        line = strip_comment(line);
        std::string t = trim(line);
        if (t.empty()) continue;
        // arrays may span lines; keep reading until brackets balance
        while (array_open(t)) {
            std::string more;
            if (!std::getline(in, more))
                throw io_error("malformed config", where + ": unterminated array");
            ++lineno;
            t += " " + trim(strip_comment(more));
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw io_error("malformed config", where + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw io_error("malformed config", where + ": empty key");
        kv.values_[key] = parse_value(t.substr(eq + 1), where);
    }
    return kv;
}

KvFile KvFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("manifest not found", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
}

std::string KvFile::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.type != KvValue::Type::string)
        throw io_error("malformed config",
                       origin_ + ": missing string key '" + key + "'");
    return it->second.str;
}

std::string KvFile::get_string_or(const std::string& key,
                                  const std::string& dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second.type != KvValue::Type::string)
        throw io_error("malformed config", origin_ + ": '" + key + "' is not a string");
    return it->second.str;
}

std::int64_t KvFile::get_int_or(const std::string& key, std::int64_t dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second.type != KvValue::Type::integer)
        throw io_error("malformed config", origin_ + ": '" + key + "' is not an integer");
    return it->second.integer;
}

double KvFile::get_real_or(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second.type == KvValue::Type::integer)
        return static_cast<double>(it->second.integer);
    if (it->second.type != KvValue::Type::real)
        throw io_error("malformed config", origin_ + ": '" + key + "' is not a number");
    return it->second.real;
}

bool KvFile::get_bool_or(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second.type != KvValue::Type::boolean)
        throw io_error("malformed config", origin_ + ": '" + key + "' is not a boolean");
    return it->second.boolean;
}

std::vector<std::string> KvFile::get_list_or(const std::string& key,
                                             std::vector<std::string> dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second.type != KvValue::Type::string_list)
        throw io_error("malformed config", origin_ + ": '" + key + "' is not an array");
    return it->second.list;
}

}  // namespace icrs
