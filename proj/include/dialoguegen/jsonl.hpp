#pragma once

// Line-delimited JSON primitives shared by the hub and the datastore.

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "dialoguegen/error.hpp"

namespace dialoguegen::jsonl {

/// Appends lines and fsyncs before returning. Throws `onFailure` kind on I/O errors.
inline void append_lines(const std::filesystem::path& path, const std::vector<std::string>& lines,
                         ErrorKind onFailure = ErrorKind::Io) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) fail(onFailure, "cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (f == nullptr) fail(onFailure, "cannot open " + path.string() + ": " + std::strerror(errno));
    bool ok = true;
    for (const auto& line : lines) {
        ok = ok && std::fwrite(line.data(), 1, line.size(), f) == line.size();
        ok = ok && std::fputc('\n', f) != EOF;
    }
    ok = ok && std::fflush(f) == 0;
    ok = ok && ::fsync(::fileno(f)) == 0;
    ok = (std::fclose(f) == 0) && ok;
    if (!ok) fail(onFailure, "write to " + path.string() + " failed: " + std::strerror(errno));
}

inline void append(const std::filesystem::path& path, const nlohmann::ordered_json& record,
                   ErrorKind onFailure = ErrorKind::Io) {
    append_lines(path, {record.dump()}, onFailure);
}

/// Reads every non-blank line as JSON. A missing file reads as empty.
/// A truncated final line (no trailing newline, unparseable) is ignored so a
/// reader racing a writer sees a clean prefix.
inline std::vector<nlohmann::ordered_json> read_all(const std::filesystem::path& path) {
    std::vector<nlohmann::ordered_json> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::ordered_json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            if (in.eof()) break;
            throw ParseError(lineNo, path.string() + ": " + e.what());
        }
    }
    return out;
}

/// Atomically replaces a file's contents (write temp + rename).
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot write " + tmp);
        out << contents;
        if (!out) fail(ErrorKind::Io, "write to " + tmp + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::Io, "rename " + tmp + " failed: " + ec.message());
}

} // namespace dialoguegen::jsonl
