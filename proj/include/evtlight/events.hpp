#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evtlight/io_util.hpp"

namespace evtlight {

// ATIS default sensor geometry.
inline constexpr int kDefaultSensorWidth = 304;
inline constexpr int kDefaultSensorHeight = 240;

// One change event: pixel, timestamp in integer microseconds, polarity +1/-1.
struct Event {
    uint64_t t = 0;
    uint16_t x = 0;
    uint16_t y = 0;
    int8_t p = 1;

    bool operator==(const Event&) const = default;
};

struct Geometry {
    uint16_t width = kDefaultSensorWidth;
    uint16_t height = kDefaultSensorHeight;

    bool operator==(const Geometry&) const = default;
    bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Immutable after construction; timestamps non-decreasing, ties keep file order.
struct EventStream {
    Geometry geometry;
    std::vector<Event> events;

    bool operator==(const EventStream&) const = default;
};

struct StreamViolation {
    size_t index;
    std::string message;
};

struct ValidationReport {
    std::vector<StreamViolation> violations;
    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_stream(const EventStream& s) {
    ValidationReport report;
    uint64_t prev_t = 0;
    for (size_t i = 0; i < s.events.size(); ++i) {
        const Event& e = s.events[i];
        if (i > 0 && e.t < prev_t)
            report.violations.push_back({i, "non-monotonic at index " + std::to_string(i)});
        if (!s.geometry.contains(e.x, e.y))
            report.violations.push_back(
                {i, "event at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                        ") outside geometry " + std::to_string(s.geometry.width) + "x" +
                        std::to_string(s.geometry.height) + " at index " + std::to_string(i)});
        if (e.p != 1 && e.p != -1)
            report.violations.push_back({i, "polarity not in {-1,1} at index " + std::to_string(i)});
        prev_t = e.t;
    }
    return report;
}

enum class EventFileFormat { Text, Binary };

// Text form:   "# evt1 <width> <height>" header, then "t_us,x,y,p" per line.
// Binary form: magic "EVT1", u16 width, u16 height, then little-endian
//              records (u64 t_us, u16 x, u16 y, i8 p).
namespace detail {

inline void put_le16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_le64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline uint16_t get_le16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint64_t get_le64(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline std::string serialize_events_text(const EventStream& s) {
    std::string out = "# evt1 " + std::to_string(s.geometry.width) + " " +
                      std::to_string(s.geometry.height) + "\n";
    for (const Event& e : s.events) {
        out += std::to_string(e.t);
        out += ',';
        out += std::to_string(e.x);
        out += ',';
        out += std::to_string(e.y);
        out += ',';
        out += e.p > 0 ? "1" : "-1";
        out += '\n';
    }
    return out;
}

inline std::string serialize_events_binary(const EventStream& s) {
    std::string out = "EVT1";
    detail::put_le16(out, s.geometry.width);
    detail::put_le16(out, s.geometry.height);
    for (const Event& e : s.events) {
        detail::put_le64(out, e.t);
        detail::put_le16(out, e.x);
        detail::put_le16(out, e.y);
        out.push_back(static_cast<char>(e.p));
    }
    return out;
}

inline EventStream parse_events_text(const std::string& data, const std::string& origin = "<text>") {
    EventStream s;
    std::istringstream in(data);
    std::string line;
    size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(origin + ": empty file");
    ++lineno;
    {
        std::istringstream h(line);
        std::string hash, tag;
        int w = 0, ht = 0;
        if (!(h >> hash >> tag >> w >> ht) || hash != "#" || tag != "evt1" || w <= 0 || ht <= 0 ||
            w > 0xFFFF || ht > 0xFFFF)
            throw ParseError(origin + ":1: bad header, expected '# evt1 <width> <height>'");
        s.geometry = {static_cast<uint16_t>(w), static_cast<uint16_t>(ht)};
    }
    uint64_t prev_t = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        uint64_t t;
        long long x, y, p;
        char c1, c2, c3;
        std::istringstream r(line);
        if (!(r >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',')
            throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed record '" + line + "'");
        if (p != 1 && p != -1)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": polarity must be 1 or -1");
        if (x < 0 || x >= s.geometry.width || y < 0 || y >= s.geometry.height)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": event outside geometry");
        if (!s.events.empty() && t < prev_t)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": non-monotonic timestamp at index " +
                             std::to_string(s.events.size()));
        s.events.push_back({t, static_cast<uint16_t>(x), static_cast<uint16_t>(y), static_cast<int8_t>(p)});
        prev_t = t;
    }
    return s;
}

inline EventStream parse_events_binary(const std::string& data, const std::string& origin = "<binary>") {
    constexpr size_t kRecord = 8 + 2 + 2 + 1;
    if (data.size() < 8 || data.compare(0, 4, "EVT1") != 0)
        throw ParseError(origin + ": missing EVT1 magic");
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    EventStream s;
    s.geometry.width = detail::get_le16(bytes + 4);
    s.geometry.height = detail::get_le16(bytes + 6);
    if (s.geometry.width == 0 || s.geometry.height == 0) throw ParseError(origin + ": zero geometry");
    const size_t payload = data.size() - 8;
    if (payload % kRecord != 0)
        throw ParseError(origin + ": truncated record at offset " + std::to_string(8 + payload - payload % kRecord));
    const size_t count = payload / kRecord;
    s.events.reserve(count);
    uint64_t prev_t = 0;
    for (size_t i = 0; i < count; ++i) {
        const unsigned char* r = bytes + 8 + i * kRecord;
        Event e;
        e.t = detail::get_le64(r);
        e.x = detail::get_le16(r + 8);
        e.y = detail::get_le16(r + 10);
        e.p = static_cast<int8_t>(r[12]);
        if (e.p != 1 && e.p != -1)
            throw ParseError(origin + ": polarity not in {-1,1} at record " + std::to_string(i));
        if (e.x >= s.geometry.width || e.y >= s.geometry.height)
            throw ParseError(origin + ": event outside geometry at record " + std::to_string(i));
        if (i > 0 && e.t < prev_t)
            throw ParseError(origin + ": non-monotonic timestamp at record " + std::to_string(i));
        s.events.push_back(e);
        prev_t = e.t;
    }
    return s;
}

inline EventStream read_events(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() >= 4 && data.compare(0, 4, "EVT1") == 0) return parse_events_binary(data, path);
    return parse_events_text(data, path);
}

inline size_t write_events(const EventStream& s, const std::string& path,
                           EventFileFormat format = EventFileFormat::Binary) {
    const std::string data =
        format == EventFileFormat::Text ? serialize_events_text(s) : serialize_events_binary(s);
    write_file_atomic(path, data);
    return s.events.size();
}

}  // namespace evtlight
