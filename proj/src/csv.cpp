#include "mobiseg/csv.hpp"

#include "mobiseg/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace mobiseg {

namespace {

constexpr std::size_t kFlushBytes = 1 << 20;

bool needs_quotes(std::string_view s)
{
    return s.find_first_of(",\"\n\r") != std::string_view::npos;
}

} // namespace

void split_csv_line(std::string_view line, std::vector<std::string_view>& fields, std::string& scratch)
{
    fields.clear();
    if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
    if (line.find('"') == std::string_view::npos) {
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            if (comma == std::string_view::npos) {
                fields.push_back(line.substr(start));
                return;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
    }
    scratch.clear();
    scratch.reserve(line.size()); // views into scratch must survive later appends
    std::size_t i = 0;
    for (;;) {
        const std::size_t begin = scratch.size();
        if (i < line.size() && line[i] == '"') {
            ++i;
            for (;;) {
                if (i >= line.size())
                    throw InputError("unterminated quoted CSV field");
                if (line[i] == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        scratch.push_back('"');
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                scratch.push_back(line[i++]);
            }
            while (i < line.size() && line[i] != ',')
                scratch.push_back(line[i++]);
        } else {
            while (i < line.size() && line[i] != ',')
                scratch.push_back(line[i++]);
        }
        fields.emplace_back(scratch.data() + begin, scratch.size() - begin);
        if (i >= line.size())
            return;
        ++i; // comma
    }
}

CsvReader::CsvReader(const std::string& path) : path_(path), in_(path)
{
    if (!in_)
        throw InputError("cannot read " + path);
    std::vector<std::string_view> fields;
    if (next(fields))
        for (auto f : fields)
            header_.emplace_back(f);
}

int CsvReader::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name)
            return static_cast<int>(i);
    return -1;
}

std::size_t CsvReader::require(std::string_view name) const
{
    const int c = column(name);
    if (c < 0)
        throw InputError(path_ + ": missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(c);
}

bool CsvReader::next(std::vector<std::string_view>& fields)
{
    while (std::getline(in_, line_)) {
        ++line_no_;
        if (line_no_ == 1 && line_.size() >= 3 && line_.compare(0, 3, "\xEF\xBB\xBF") == 0)
            line_.erase(0, 3);
        if (line_.empty() || line_ == "\r")
            continue;
        split_csv_line(line_, fields, scratch_);
        return true;
    }
    return false;
}

std::optional<double> parse_double(std::string_view s)
{
    while (!s.empty() && s.front() == ' ')
        s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ')
        s.remove_suffix(1);
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        return std::nullopt;
    return v;
}

std::optional<std::int64_t> parse_int64(std::string_view s)
{
    while (!s.empty() && s.front() == ' ')
        s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ')
        s.remove_suffix(1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        return std::nullopt;
    return v;
}

std::string format_real(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

std::string format_exact(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path) : path_(path), out_(path, std::ios::binary)
{
    if (!out_)
        throw InputError("cannot write " + path);
    buffer_.reserve(kFlushBytes + 4096);
}

CsvWriter::~CsvWriter()
{
    if (!closed_) {
        try {
            close();
        } catch (...) {
        }
    }
}

void CsvWriter::separator()
{
    if (row_started_)
        buffer_.push_back(',');
    row_started_ = true;
}

void CsvWriter::flush_if_full()
{
    if (buffer_.size() >= kFlushBytes) {
        out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        buffer_.clear();
    }
}

CsvWriter& CsvWriter::text(std::string_view s)
{
    separator();
    if (!needs_quotes(s)) {
        buffer_.append(s);
        return *this;
    }
    buffer_.push_back('"');
    for (char c : s) {
        if (c == '"')
            buffer_.push_back('"');
        buffer_.push_back(c);
    }
    buffer_.push_back('"');
    return *this;
}

CsvWriter& CsvWriter::integer(std::int64_t v)
{
    separator();
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    buffer_.append(buf, res.ptr);
    return *this;
}

CsvWriter& CsvWriter::real(double v)
{
    separator();
    buffer_.append(format_real(v));
    return *this;
}

CsvWriter& CsvWriter::exact(double v)
{
    separator();
    if (std::isnan(v)) {
        buffer_.append("nan");
        return *this;
    }
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    buffer_.append(buf, res.ptr);
    return *this;
}

CsvWriter& CsvWriter::fixed(double v, int decimals)
{
    separator();
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
    buffer_.append(buf, res.ptr);
    return *this;
}

CsvWriter& CsvWriter::empty()
{
    separator();
    return *this;
}

void CsvWriter::end_row()
{
    buffer_.push_back('\n');
    row_started_ = false;
    flush_if_full();
}

void CsvWriter::header(const std::vector<std::string>& names)
{
    for (const auto& n : names)
        text(n);
    end_row();
}

void CsvWriter::close()
{
    closed_ = true;
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    buffer_.clear();
    out_.flush();
    if (!out_)
        throw InputError("failed writing " + path_);
    out_.close();
}

void Table::add(std::vector<Cell> row)
{
    if (row.size() != columns.size())
        throw InvariantError("table row has " + std::to_string(row.size()) + " cells, expected " +
                             std::to_string(columns.size()));
    rows.push_back(std::move(row));
}

void write_table(const Table& table, const std::string& path)
{
    CsvWriter w(path);
    w.header(table.columns);
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size())
            throw InvariantError("table row width differs from header in " + path);
        for (const auto& cell : row) {
            if (const auto* s = std::get_if<std::string>(&cell))
                w.text(*s);
            else if (const auto* i = std::get_if<std::int64_t>(&cell))
                w.integer(*i);
            else
                w.real(std::get<double>(cell));
        }
        w.end_row();
    }
    w.close();
}

std::size_t CsvData::require(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
            return i;
    throw InputError("missing column '" + std::string(name) + "'");
}

CsvData read_csv(const std::string& path)
{
    CsvReader r(path);
    CsvData d;
    d.header = r.header();
    std::vector<std::string_view> fields;
    while (r.next(fields)) {
        std::vector<std::string> row;
        row.reserve(fields.size());
        for (auto f : fields)
            row.emplace_back(f);
        d.rows.push_back(std::move(row));
    }
    return d;
}

} // namespace mobiseg
