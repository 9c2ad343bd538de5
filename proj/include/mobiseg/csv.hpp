#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mobiseg {

/// Line-oriented CSV reader (RFC 4180 quoting; quoted fields may not span
/// lines). Field views stay valid until the next call to next().
class CsvReader {
  public:
    explicit CsvReader(const std::string& path);

    const std::vector<std::string>& header() const { return header_; }
    /// Index of a header column, or -1.
    int column(std::string_view name) const;
    /// Index of a required column; throws InputError naming the file.
    std::size_t require(std::string_view name) const;
    /// Reads the next non-empty record. Returns false at end of file.
    bool next(std::vector<std::string_view>& fields);
    std::size_t line_number() const { return line_no_; }
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ifstream in_;
    std::vector<std::string> header_;
    std::string line_;
    std::string scratch_;
    std::size_t line_no_ = 0;
};

/// Splits one CSV record. Quoted fields are unescaped into `scratch`, which
/// must not be modified while the views are in use.
void split_csv_line(std::string_view line, std::vector<std::string_view>& fields, std::string& scratch);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int64(std::string_view s);

/// Buffered CSV writer with locale-independent number formatting.
class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    CsvWriter& text(std::string_view s);
    CsvWriter& integer(std::int64_t v);
    /// 6 significant digits.
    CsvWriter& real(double v);
    /// Shortest representation that round-trips.
    CsvWriter& exact(double v);
    CsvWriter& fixed(double v, int decimals);
    CsvWriter& empty();
    void end_row();
    void header(const std::vector<std::string>& names);
    /// Flushes and checks the stream; throws InputError on failure.
    void close();

  private:
    void separator();
    void flush_if_full();

    std::string path_;
    std::ofstream out_;
    std::string buffer_;
    bool row_started_ = false;
    bool closed_ = false;
};

std::string format_real(double v);
std::string format_exact(double v);

/// A report cell: text, integer or real (6 significant digits on output).
using Cell = std::variant<std::string, std::int64_t, double>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
};

/// Writes the table; zero rows give a header-only file.
void write_table(const Table& table, const std::string& path);

/// Reads a whole CSV file into strings.
struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t require(std::string_view name) const;
};
CsvData read_csv(const std::string& path);

} // namespace mobiseg
