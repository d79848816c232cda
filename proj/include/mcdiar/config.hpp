#pragma once

// Pipeline configuration as a layered key = value text file.
//
//   # comment
//   max_speakers = 4
//   [clustering]
//   method = cop_kmeans      # becomes clustering.method
//
// Files are applied in order, then command-line `key=value` overrides.
// Unknown keys are rejected.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mcdiar/clustering.hpp"
#include "mcdiar/errors.hpp"
#include "mcdiar/fusion.hpp"
#include "mcdiar/scoring.hpp"

namespace mcdiar {

struct BinarizeParams {
    double threshold = 0.5;
    int median_window = 11;
    double min_active_seconds = 0.5;
};

struct PipelineConfig {
    double segment_size = 80.0;
    int max_speakers = 4;
    BinarizeParams binarize;
    ClusteringParams clustering;
    FusionParams fusion;
    std::vector<double> channel_weights;  // empty: 1.0 per channel
    double collar = 0.25;
    bool score_overlaps = true;
    int workers = default_workers();
    std::vector<std::string> inputs;  // segment bundle files, grouped into sessions by header
    std::string output_dir = "out";

    static int default_workers() {
        if (const char* env = std::getenv("MCDIAR_WORKERS")) {
            const int n = std::atoi(env);
            if (n > 0) return n;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
    }

    ScoringOptions scoring() const {
        ScoringOptions o;
        o.collar = collar;
        o.score_overlaps = score_overlaps;
        return o;
    }

    void validate() const {
        if (!(segment_size > 0.0)) throw ConfigError("segment_size must be > 0");
        if (max_speakers < 1) throw ConfigError("max_speakers must be >= 1");
        if (!(binarize.threshold > 0.0 && binarize.threshold < 1.0)) throw ConfigError("binarize.threshold must lie in (0,1)");
        if (binarize.median_window < 1 || binarize.median_window % 2 == 0) {
            throw ConfigError("binarize.median_window must be odd and >= 1");
        }
        if (binarize.min_active_seconds < 0.0) throw ConfigError("binarize.min_active_seconds must be >= 0");
        if (clustering.stop_threshold < 0.0 || clustering.stop_threshold > 2.0) {
            throw ConfigError("clustering.stop_threshold must lie in [0,2]");
        }
        if (clustering.penalty < 0.0) throw ConfigError("clustering.penalty must be >= 0");
        if (clustering.max_iter < 1) throw ConfigError("clustering.max_iter must be >= 1");
        for (double w : channel_weights)
            if (!(w > 0.0)) throw ConfigError("fusion.weights must be positive");
        if (collar < 0.0) throw ConfigError("scoring.collar must be >= 0");
        if (workers < 1) throw ConfigError("workers must be >= 1");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::string fmt_double(double d) {
    std::ostringstream os;
    os << d;
    return os.str();
}

struct Field {
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

inline const std::map<std::string, Field>& config_fields() {
    static const std::map<std::string, Field> fields = {
        {"segment_size", {[](auto& c, const auto& v) { c.segment_size = to_double("segment_size", v); },
                          [](const auto& c) { return fmt_double(c.segment_size); }}},
        {"max_speakers", {[](auto& c, const auto& v) { c.max_speakers = static_cast<int>(to_int("max_speakers", v)); },
                          [](const auto& c) { return std::to_string(c.max_speakers); }}},
        {"binarize.threshold",
         {[](auto& c, const auto& v) { c.binarize.threshold = to_double("binarize.threshold", v); },
          [](const auto& c) { return fmt_double(c.binarize.threshold); }}},
        {"binarize.median_window",
         {[](auto& c, const auto& v) { c.binarize.median_window = static_cast<int>(to_int("binarize.median_window", v)); },
          [](const auto& c) { return std::to_string(c.binarize.median_window); }}},
        {"binarize.min_active_seconds",
         {[](auto& c, const auto& v) { c.binarize.min_active_seconds = to_double("binarize.min_active_seconds", v); },
          [](const auto& c) { return fmt_double(c.binarize.min_active_seconds); }}},
        {"clustering.method", {[](auto& c, const auto& v) { c.clustering.method = parse_clustering_method(v); },
                               [](const auto& c) { return std::string(to_string(c.clustering.method)); }}},
        {"clustering.stop_threshold",
         {[](auto& c, const auto& v) { c.clustering.stop_threshold = to_double("clustering.stop_threshold", v); },
          [](const auto& c) { return fmt_double(c.clustering.stop_threshold); }}},
        {"clustering.penalty", {[](auto& c, const auto& v) { c.clustering.penalty = to_double("clustering.penalty", v); },
                                [](const auto& c) { return fmt_double(c.clustering.penalty); }}},
        {"clustering.max_iter",
         {[](auto& c, const auto& v) { c.clustering.max_iter = static_cast<int>(to_int("clustering.max_iter", v)); },
          [](const auto& c) { return std::to_string(c.clustering.max_iter); }}},
        {"clustering.seed",
         {[](auto& c, const auto& v) { c.clustering.seed = static_cast<std::uint64_t>(to_int("clustering.seed", v)); },
          [](const auto& c) { return std::to_string(c.clustering.seed); }}},
        {"fusion.rank_weighting",
         {[](auto& c, const auto& v) { c.fusion.rank_weighting = parse_rank_weighting(v); },
          [](const auto& c) { return std::string(to_string(c.fusion.rank_weighting)); }}},
        {"fusion.weights",
         {[](auto& c, const auto& v) {
              c.channel_weights.clear();
              for (const auto& item : split_list(v)) c.channel_weights.push_back(to_double("fusion.weights", item));
          },
          [](const auto& c) { return join_doubles(c.channel_weights); }}},
        {"scoring.collar", {[](auto& c, const auto& v) { c.collar = to_double("scoring.collar", v); },
                            [](const auto& c) { return fmt_double(c.collar); }}},
        {"scoring.score_overlaps",
         {[](auto& c, const auto& v) { c.score_overlaps = to_bool("scoring.score_overlaps", v); },
          [](const auto& c) { return std::string(c.score_overlaps ? "true" : "false"); }}},
        {"workers", {[](auto& c, const auto& v) { c.workers = static_cast<int>(to_int("workers", v)); },
                     [](const auto& c) { return std::to_string(c.workers); }}},
        {"inputs", {[](auto& c, const auto& v) { c.inputs = split_list(v); },
                    [](const auto& c) {
                        std::string s;
                        for (std::size_t i = 0; i < c.inputs.size(); ++i) s += (i ? "," : "") + c.inputs[i];
                        return s;
                    }}},
        {"output_dir", {[](auto& c, const auto& v) { c.output_dir = v; },
                        [](const auto& c) { return c.output_dir; }}},
    };
    return fields;
}

}  // namespace detail

inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const auto& fields = detail::config_fields();
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->second.set(cfg, value);
}

/// Apply a "key=value" override.
inline void apply_override(PipelineConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like key=value: '" + assignment + "'");
    set_config_value(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline void apply_config(PipelineConfig& cfg, std::istream& in, const std::string& source = "<config>") {
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(source, line_no, "unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        try {
            set_config_value(cfg, key, detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline void apply_config_file(PipelineConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    apply_config(cfg, in, path);
}

/// Every key with its current value, one "key = value" per line, sorted by key.
inline std::string dump_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    for (const auto& [key, field] : detail::config_fields()) os << key << " = " << field.get(cfg) << '\n';
    return os.str();
}

}  // namespace mcdiar
