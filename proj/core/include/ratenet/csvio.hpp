#pragma once

#include <string>
#include <utility>
#include <vector>

namespace ratenet {

inline constexpr const char* kToolVersion = "1.0.0";

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double value);

/// CSV writer with a '#'-prefixed metadata preamble; stripping comment
/// lines leaves strict CSV. The file is written to a temporary name and
/// renamed into place on close.
class CsvWriter {
public:
    CsvWriter(std::string path, std::vector<std::pair<std::string, std::string>> metadata,
              std::vector<std::string> columns);
    ~CsvWriter();

    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void write_row(const std::vector<double>& values);
    void write_row_raw(const std::vector<std::string>& fields);

    /// Flush and atomically rename into place. Called by the destructor if
    /// not invoked explicitly; explicit calls surface write errors.
    void close();

private:
    std::string path_;
    std::string tmp_path_;
    std::string buffer_;
    bool closed_ = false;
    std::size_t n_columns_ = 0;
};

/// Writes text to path atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace ratenet
