#include "ratenet/csvio.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ratenet {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

CsvWriter::CsvWriter(std::string path, std::vector<std::pair<std::string, std::string>> metadata,
                     std::vector<std::string> columns)
    : path_(std::move(path)), n_columns_(columns.size()) {
    tmp_path_ = path_ + ".tmp";
    buffer_.reserve(1 << 16);
    buffer_ += "# tool: ratenet ";
    buffer_ += kToolVersion;
    buffer_ += '\n';
    for (const auto& [key, value] : metadata) {
        buffer_ += "# ";
        buffer_ += key;
        buffer_ += ": ";
        buffer_ += value;
        buffer_ += '\n';
    }
    for (std::size_t i = 0; i < columns.size(); ++i) {
        buffer_ += columns[i];
        buffer_ += i + 1 == columns.size() ? '\n' : ',';
    }
}

CsvWriter::~CsvWriter() {
    try {
        close();
    } catch (...) {
        // destructor must not throw; explicit close() reports errors
    }
}

void CsvWriter::write_row(const std::vector<double>& values) {
    if (values.size() != n_columns_)
        throw std::invalid_argument("CsvWriter: row width mismatch in " + path_);
    for (std::size_t i = 0; i < values.size(); ++i) {
        buffer_ += format_double(values[i]);
        buffer_ += i + 1 == values.size() ? '\n' : ',';
    }
}

void CsvWriter::write_row_raw(const std::vector<std::string>& fields) {
    if (fields.size() != n_columns_)
        throw std::invalid_argument("CsvWriter: row width mismatch in " + path_);
    for (std::size_t i = 0; i < fields.size(); ++i) {
        buffer_ += fields[i];
        buffer_ += i + 1 == fields.size() ? '\n' : ',';
    }
}

void CsvWriter::close() {
    if (closed_)
        return;
    closed_ = true;
    write_file_atomic(path_, buffer_);
    buffer_.clear();
}

void write_file_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open " + tmp + " for writing");
        out << text;
        if (!out.good())
            throw std::runtime_error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace ratenet
