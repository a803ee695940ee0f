#ifndef SMBFORGE_CSV_HPP
#define SMBFORGE_CSV_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace smbforge {

// Shortest decimal representation that round-trips to the same double, so
// that identical runs produce byte-identical files.
inline std::string csv_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("csv_double: conversion failed");
    return std::string(buf, ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    // Mixed row builder: strings pass through, arithmetic values are formatted.
    class Row {
    public:
        explicit Row(CsvWriter& w) : w_(w) {}
        Row& operator<<(const std::string& s) { cells_.push_back(s); return *this; }
        Row& operator<<(const char* s) { cells_.emplace_back(s); return *this; }
        Row& operator<<(double v) { cells_.push_back(csv_double(v)); return *this; }
        Row& operator<<(int v) { cells_.push_back(std::to_string(v)); return *this; }
        Row& operator<<(long v) { cells_.push_back(std::to_string(v)); return *this; }
        Row& operator<<(std::uint64_t v) { cells_.push_back(std::to_string(v)); return *this; }
        ~Row() { w_.row(cells_); }
        Row(const Row&) = delete;
        Row& operator=(const Row&) = delete;

    private:
        CsvWriter& w_;
        std::vector<std::string> cells_;
    };

    Row row() { return Row(*this); }

private:
    std::ofstream out_;
};

// Minimal reader for the files this toolkit writes: comma-separated, first
// line is a header, no quoting.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw std::runtime_error("csv column not found: " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= s.size(); ++i)
            if (i == s.size() || s[i] == ',') {
                cells.push_back(s.substr(start, i - start));
                start = i + 1;
            }
        return cells;
    };
    if (std::getline(in, line)) t.header = split(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

}  // namespace smbforge

#endif
