#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "evtlight/errors.hpp"

namespace evtlight {

// Outputs are written whole via temp file + rename so readers never see a
// partial file.
inline size_t write_file_atomic(const std::string& path, const std::string& data) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("rename to " + path + " failed: " + ec.message());
    }
    return data.size();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Durations on the CLI carry a unit suffix (us, ms, s); microseconds inside.
inline uint64_t parse_duration_us(const std::string& text) {
    size_t pos = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ParseError("bad duration '" + text + "'");
    }
    std::string unit = text.substr(pos);
    double scale;
    if (unit == "us" || unit.empty()) scale = 1.0;
    else if (unit == "ms") scale = 1e3;
    else if (unit == "s") scale = 1e6;
    else throw ParseError("bad duration unit '" + unit + "' (expected us, ms or s)");
    if (value < 0) throw ParseError("negative duration '" + text + "'");
    return static_cast<uint64_t>(value * scale + 0.5);
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace evtlight
