#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "evq/error.hpp"

// Minimal comma-delimited I/O. Fields must not contain commas or newlines;
// every file starts with a fixed documented header row. Numbers are written
// in shortest round-trip form so write -> read is exact and diff-friendly.

namespace evq {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const char* what, int line = 0) {
    if (s == "nan") return std::nan("");
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        fail("line ", line, ": bad ", what, " value '", std::string(s), "'");
    return v;
}

inline long parse_long(std::string_view s, const char* what, int line = 0) {
    long v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        fail("line ", line, ": bad ", what, " value '", std::string(s), "'");
    return v;
}

inline std::vector<std::string> split_fields(const std::string& line, char delim = ',') {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

inline std::string join_fields(const std::vector<std::string>& fields, char delim = ',') {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(delim);
        out += fields[i];
    }
    return out;
}

class CsvReader {
public:
    CsvReader(const std::string& path, const std::vector<std::string>& expected_header)
        : path_(path), in_(path) {
        if (!in_) fail("cannot open file: ", path);
        std::string header_line;
        if (!std::getline(in_, header_line)) fail(path, ": empty file (missing header)");
        ++line_;
        auto header = split_fields(header_line);
        if (header != expected_header)
            fail(path, ": unexpected header '", header_line, "' (expected '",
                 join_fields(expected_header), "')");
        ncols_ = expected_header.size();
    }

    // Returns false at end of input. Throws on column-count mismatch.
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_;
            if (line.empty() || line == "\r") continue;
            fields = split_fields(line);
            if (fields.size() != ncols_)
                fail(path_, ": line ", line_, ": expected ", ncols_, " fields, got ",
                     fields.size());
            return true;
        }
        return false;
    }

    int line() const { return line_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    int line_ = 0;
    size_t ncols_ = 0;
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : path_(path), out_(path, std::ios::binary) {
        if (!out_) fail("cannot write file: ", path);
        out_ << join_fields(header) << '\n';
        ncols_ = header.size();
    }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != ncols_)
            fail(path_, ": writer given ", fields.size(), " fields, header has ", ncols_);
        out_ << join_fields(fields) << '\n';
    }

    void flush() { out_.flush(); }

private:
    std::string path_;
    std::ofstream out_;
    size_t ncols_ = 0;
};

} // namespace evq
