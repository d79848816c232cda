#pragma once

// NIST RTTM and UEM readers/writers.
//
// RTTM SPEAKER lines carry ten whitespace-separated fields:
//   SPEAKER <session> <channel> <tbeg> <tdur> <NA> <NA> <speaker> <NA> <NA>
// Lines of other types and comment lines (';' or '#') are skipped.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcdiar/errors.hpp"
#include "mcdiar/timeline.hpp"

namespace mcdiar {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool parse_double(std::string_view text, double& value) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc() && ptr == last && std::isfinite(value);
}

inline bool is_comment(const std::vector<std::string_view>& fields) {
    return fields.empty() || fields.front().front() == ';' || fields.front().front() == '#';
}

inline std::string format_time(double seconds) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", seconds);
    return buf;
}

}  // namespace detail

/// Parse RTTM text. Returns one normalized Timeline per session, ordered by session id.
inline std::vector<Timeline> parse_rttm(std::istream& in, const std::string& source = "<rttm>") {
    std::map<std::string, Timeline> sessions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = detail::split_ws(line);
        if (detail::is_comment(fields)) continue;
        if (fields[0] != "SPEAKER") continue;
        if (fields.size() < 8) {
            throw ParseError(source, line_no, "SPEAKER line needs at least 8 fields");
        }
        double tbeg = 0.0, tdur = 0.0;
        if (!detail::parse_double(fields[3], tbeg)) {
            throw ParseError(source, line_no, "bad onset '" + std::string(fields[3]) + "'");
        }
        if (!detail::parse_double(fields[4], tdur)) {
            throw ParseError(source, line_no, "bad duration '" + std::string(fields[4]) + "'");
        }
        if (tbeg < 0.0 || !(tdur > 0.0)) {
            throw ParseError(source, line_no, "turn must have onset >= 0 and duration > 0");
        }
        const std::string session(fields[1]);
        auto& tl = sessions[session];
        tl.session_id = session;
        tl.turns.push_back({std::string(fields[7]), tbeg, tbeg + tdur});
    }
    std::vector<Timeline> out;
    out.reserve(sessions.size());
    for (auto& [id, tl] : sessions) out.push_back(normalize(tl));
    return out;
}

inline std::vector<Timeline> read_rttm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open RTTM file " + path);
    return parse_rttm(in, path);
}

/// Emit normalized timelines as RTTM, times with 3 decimals, channel "1".
inline void format_rttm(const std::vector<Timeline>& timelines, std::ostream& out) {
    for (const auto& raw : timelines) {
        const Timeline tl = normalize(raw);
        for (const auto& turn : tl.turns) {
            out << "SPEAKER " << tl.session_id << " 1 " << detail::format_time(turn.start) << ' '
                << detail::format_time(turn.end - turn.start) << " <NA> <NA> " << turn.speaker
                << " <NA> <NA>\n";
        }
    }
}

inline void write_rttm(const std::vector<Timeline>& timelines, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write RTTM file " + path);
    format_rttm(timelines, out);
    if (!out) throw IoError("write failed for " + path);
}

/// Parse UEM text: "<session> <channel> <tbeg> <tend>" per line.
inline std::map<std::string, Uem> parse_uem(std::istream& in, const std::string& source = "<uem>") {
    std::map<std::string, Uem> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = detail::split_ws(line);
        if (detail::is_comment(fields)) continue;
        if (fields.size() < 4) throw ParseError(source, line_no, "UEM line needs 4 fields");
        double tbeg = 0.0, tend = 0.0;
        if (!detail::parse_double(fields[2], tbeg) || !detail::parse_double(fields[3], tend)) {
            throw ParseError(source, line_no, "bad UEM times");
        }
        if (!(tend > tbeg)) throw ParseError(source, line_no, "UEM region has end <= start");
        auto& uem = out[std::string(fields[0])];
        uem.session_id = std::string(fields[0]);
        uem.scored_regions.push_back({tbeg, tend});
    }
    for (auto& [id, uem] : out) uem.scored_regions = merge_intervals(std::move(uem.scored_regions));
    return out;
}

inline std::map<std::string, Uem> read_uem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open UEM file " + path);
    return parse_uem(in, path);
}

inline void write_uem(const std::vector<Uem>& uems, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write UEM file " + path);
    for (const auto& uem : uems) {
        for (const auto& iv : merge_intervals(uem.scored_regions)) {
            out << uem.session_id << " 1 " << detail::format_time(iv.start) << ' '
                << detail::format_time(iv.end) << '\n';
        }
    }
}

}  // namespace mcdiar
