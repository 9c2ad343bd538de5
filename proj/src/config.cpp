#include "mobiseg/config.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/csv.hpp"

#include <fstream>
#include <sstream>

namespace mobiseg {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

class LineParser {
  public:
    LineParser(std::string_view text, std::string where) : s_(text), where_(std::move(where)) {}

    [[noreturn]] void fail(const std::string& what) const { throw InputError(where_ + ": " + what); }

    void skip_space()
    {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t'))
            ++pos_;
    }

    bool at_end()
    {
        skip_space();
        return pos_ >= s_.size() || s_[pos_] == '#' || s_[pos_] == '\r';
    }

    ConfigValue value()
    {
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == '[') {
            ++pos_;
            std::vector<ConfigScalar> items;
            for (;;) {
                skip_space();
                if (pos_ >= s_.size())
                    fail("unterminated array");
                if (s_[pos_] == ']') {
                    ++pos_;
                    return items;
                }
                items.push_back(scalar());
                skip_space();
                if (pos_ < s_.size() && s_[pos_] == ',')
                    ++pos_;
                else if (pos_ < s_.size() && s_[pos_] != ']')
                    fail("expected ',' or ']' in array");
            }
        }
        return std::visit([](auto&& v) -> ConfigValue { return v; }, scalar());
    }

  private:
    ConfigScalar scalar()
    {
        skip_space();
        if (pos_ >= s_.size())
            fail("missing value");
        const char c = s_[pos_];
        if (c == '"')
            return basic_string();
        if (c == '\'') {
            const auto end = s_.find('\'', pos_ + 1);
            if (end == std::string_view::npos)
                fail("unterminated string");
            std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
            pos_ = end + 1;
            return out;
        }
        std::size_t end = pos_;
        while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != '#' && s_[end] != ' ' &&
               s_[end] != '\t' && s_[end] != '\r')
            ++end;
        std::string token(s_.substr(pos_, end - pos_));
        pos_ = end;
        if (token == "true")
            return true;
        if (token == "false")
            return false;
        std::string digits;
        for (char ch : token)
            if (ch != '_')
                digits.push_back(ch);
        if (digits.find_first_of(".eE") == std::string::npos || digits == "inf" || digits == "nan") {
            if (auto i = parse_int64(digits))
                return *i;
        }
        if (auto d = parse_double(digits))
            return *d;
        fail("cannot parse value '" + token + "'");
    }

    std::string basic_string()
    {
        std::string out;
        ++pos_;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            char c = s_[pos_++];
            if (c == '\\') {
                if (pos_ >= s_.size())
                    fail("bad escape");
                const char e = s_[pos_++];
                switch (e) {
                case 'n':
                    c = '\n';
                    break;
                case 't':
                    c = '\t';
                    break;
                case '"':
                case '\\':
                    c = e;
                    break;
                default:
                    fail(std::string("unsupported escape \\") + e);
                }
            }
            out.push_back(c);
        }
        if (pos_ >= s_.size())
            fail("unterminated string");
        ++pos_;
        return out;
    }

    std::string_view s_;
    std::string where_;
    std::size_t pos_ = 0;
};

template <class T>
const T* scalar_as(const ConfigValue& v)
{
    return std::get_if<T>(&v);
}

std::string describe(const ConfigScalar& v)
{
    return std::visit(
        [](auto&& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, bool>)
                return x ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::int64_t>)
                return std::to_string(x);
            else if constexpr (std::is_same_v<T, double>)
                return format_exact(x);
            else
                return "\"" + x + "\"";
        },
        v);
}

} // namespace

Config Config::parse(std::string_view text, const std::string& source)
{
    Config cfg;
    std::string table;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        std::string_view t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        if (t.front() == '[') {
            const auto close = t.find(']');
            if (close == std::string_view::npos)
                throw InputError(where + ": unterminated table header");
            table = std::string(trim(t.substr(1, close - 1)));
            if (table.empty())
                throw InputError(where + ": empty table name");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw InputError(where + ": expected key = value");
        std::string key(trim(t.substr(0, eq)));
        if (key.size() >= 2 && key.front() == '"' && key.back() == '"')
            key = key.substr(1, key.size() - 2);
        if (key.empty())
            throw InputError(where + ": empty key");
        const std::string full = table.empty() ? key : table + "." + key;
        LineParser p(t.substr(eq + 1), where);
        ConfigValue v = p.value();
        if (!p.at_end())
            throw InputError(where + ": trailing characters after value");
        if (cfg.values_.count(full))
            throw InputError(where + ": duplicate key '" + full + "'");
        cfg.values_[full] = std::move(v);
    }
    return cfg;
}

Config Config::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

std::vector<std::string> Config::keys() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        out.push_back(k);
    return out;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    if (const auto* s = scalar_as<std::string>(it->second))
        return *s;
    throw InputError("config key '" + key + "' must be a string");
}

double Config::get_double(const std::string& key, double fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    if (const auto* d = scalar_as<double>(it->second))
        return *d;
    if (const auto* i = scalar_as<std::int64_t>(it->second))
        return static_cast<double>(*i);
    throw InputError("config key '" + key + "' must be a number");
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    if (const auto* i = scalar_as<std::int64_t>(it->second))
        return *i;
    throw InputError("config key '" + key + "' must be an integer");
}

bool Config::get_bool(const std::string& key, bool fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    if (const auto* b = scalar_as<bool>(it->second))
        return *b;
    throw InputError("config key '" + key + "' must be true or false");
}

std::vector<double> Config::get_doubles(const std::string& key, std::vector<double> fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    const auto* arr = std::get_if<std::vector<ConfigScalar>>(&it->second);
    if (!arr)
        throw InputError("config key '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& s : *arr) {
        if (const auto* d = std::get_if<double>(&s))
            out.push_back(*d);
        else if (const auto* i = std::get_if<std::int64_t>(&s))
            out.push_back(static_cast<double>(*i));
        else
            throw InputError("config key '" + key + "' must hold numbers");
    }
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& key, std::vector<std::string> fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    const auto* arr = std::get_if<std::vector<ConfigScalar>>(&it->second);
    if (!arr)
        throw InputError("config key '" + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& s : *arr) {
        if (const auto* str = std::get_if<std::string>(&s))
            out.push_back(*str);
        else
            throw InputError("config key '" + key + "' must hold strings");
    }
    return out;
}

std::string Config::canonical() const
{
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k + "=";
        if (const auto* arr = std::get_if<std::vector<ConfigScalar>>(&v)) {
            out += "[";
            for (std::size_t i = 0; i < arr->size(); ++i)
                out += (i ? "," : "") + describe((*arr)[i]);
            out += "]";
        } else {
            out += std::visit([](auto&& x) -> std::string {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, std::vector<ConfigScalar>>)
                    return "";
                else
                    return describe(ConfigScalar{x});
            }, v);
        }
        out += "\n";
    }
    return out;
}

} // namespace mobiseg
