#pragma once

// Session-level orchestration: per-channel clustering and stitching, fusion
// across channels, pseudo-label export and the on-disk output tree.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mcdiar/clustering.hpp"
#include "mcdiar/config.hpp"
#include "mcdiar/errors.hpp"
#include "mcdiar/fusion.hpp"
#include "mcdiar/local_io.hpp"
#include "mcdiar/log.hpp"
#include "mcdiar/rttm.hpp"
#include "mcdiar/timeline.hpp"

namespace mcdiar {

struct ChannelDiagnostics {
    std::size_t n_segments = 0;
    std::size_t n_streams = 0;
    std::size_t n_active_streams = 0;
    int ahc_k = 0;
    int k = 0;
    std::size_t ahc_violations = 0;
    std::size_t violations = 0;
    std::size_t violating_segments = 0;
    std::vector<std::string> warnings;
};

struct ChannelResult {
    int channel = 0;
    Timeline timeline;
    ChannelDiagnostics diagnostics;
    std::string error;  // non-empty if the channel failed

    bool ok() const { return error.empty(); }
};

struct SessionResult {
    std::string session_id;
    int iteration = 1;
    std::vector<ChannelResult> channels;
    Timeline fused;

    std::vector<int> failed_channels() const {
        std::vector<int> out;
        for (const auto& c : channels)
            if (!c.ok()) out.push_back(c.channel);
        return out;
    }
    int exit_code() const { return failed_channels().empty() ? 0 : 2; }
};

/// Binarize, select, cluster and stitch one channel.
inline ChannelResult run_channel(const BundleSet& set, const PipelineConfig& cfg, int channel = 0) {
    const auto wall_start = std::chrono::steady_clock::now();
    ChannelResult out;
    out.channel = channel;
    out.timeline.session_id = set.session_id;
    auto& diag = out.diagnostics;
    diag.n_segments = set.bundles.size();

    std::vector<LocalStream> streams;
    for (const auto& bundle : set.bundles) {
        auto bin = binarize(bundle, cfg.binarize.threshold, cfg.binarize.median_window);
        diag.n_streams += bin.size();
        for (auto& s : select_active_streams(bin, cfg.binarize.min_active_seconds, set.frame_rate))
            streams.push_back(std::move(s));
    }
    diag.n_active_streams = streams.size();

    const LogContext ctx{set.session_id, channel, "channel"};
    if (streams.empty()) {
        diag.warnings.push_back("no active streams; empty hypothesis");
        log_warning(ctx, diag.warnings.back());
        return out;
    }

    const SessionClustering sc = cluster_session(streams, cfg.max_speakers, cfg.clustering);
    diag.ahc_k = sc.ahc_k;
    diag.k = sc.k;
    diag.ahc_violations = sc.ahc_violations;
    diag.violations = sc.assignment.violations;
    diag.violating_segments = sc.assignment.violating_segments;
    out.timeline = streams_to_timeline(streams, sc.assignment, set.segment_starts(), set.frame_rate, set.session_id);
    if (out.timeline.turns.empty()) {
        diag.warnings.push_back("stitched hypothesis is empty");
        log_warning(ctx, diag.warnings.back());
    }
    const std::chrono::duration<double, std::milli> wall = std::chrono::steady_clock::now() - wall_start;
    log_info(ctx,
             "k=" + std::to_string(sc.k) + " ahc_k=" + std::to_string(sc.ahc_k) +
                 " violations=" + std::to_string(diag.violations),
             wall.count());
    return out;
}

namespace detail {

/// Run f(i) for i in [0, n) on up to `workers` threads.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& f) {
    const auto w = static_cast<std::size_t>(std::max(1, workers));
    if (w == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(w, n); ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Process every channel of one session and fuse the surviving hypotheses.
/// A failing channel is recorded and excluded; throws AllChannelsFailed if none survive.
inline SessionResult run_session(const std::vector<BundleSet>& channels, const PipelineConfig& cfg,
                                 int iteration = 1) {
    cfg.validate();
    if (channels.empty()) throw ConfigError("run_session needs at least one channel");
    const std::string& session = channels.front().session_id;
    for (const auto& c : channels)
        if (c.session_id != session) throw SchemaError("channels disagree on session id: " + session + " vs " + c.session_id);
    if (!cfg.channel_weights.empty() && cfg.channel_weights.size() != channels.size()) {
        throw ConfigError("fusion.weights has " + std::to_string(cfg.channel_weights.size()) + " entries for " +
                          std::to_string(channels.size()) + " channels");
    }

    SessionResult result;
    result.session_id = session;
    result.iteration = iteration;
    result.channels.resize(channels.size());
    detail::parallel_for(channels.size(), cfg.workers, [&](std::size_t c) {
        const int ch = static_cast<int>(c);
        try {
            result.channels[c] = run_channel(channels[c], cfg, ch);
        } catch (const std::exception& e) {
            result.channels[c] = ChannelResult{};
            result.channels[c].channel = ch;
            result.channels[c].timeline.session_id = session;
            result.channels[c].error = e.what();
            log_error({session, ch, "channel"}, e.what());
        }
    });

    std::vector<Timeline> hyps;
    std::vector<double> weights;
    for (const auto& c : result.channels) {
        if (!c.ok()) continue;
        hyps.push_back(c.timeline);
        weights.push_back(cfg.channel_weights.empty() ? 1.0 : cfg.channel_weights[static_cast<std::size_t>(c.channel)]);
    }
    if (hyps.empty()) throw AllChannelsFailed("all " + std::to_string(channels.size()) + " channels of session " + session + " failed");

    const auto wall_start = std::chrono::steady_clock::now();
    HypothesisSet set = HypothesisSet::of(std::move(hyps), std::move(weights));
    set.session_id = session;
    result.fused = fuse(set, cfg.fusion);
    result.fused.session_id = session;
    const std::chrono::duration<double, std::milli> wall = std::chrono::steady_clock::now() - wall_start;
    log_info({session, std::nullopt, "fusion"}, "fused " + std::to_string(set.hypotheses.size()) + " hypotheses",
             wall.count());
    return result;
}

/// Re-run with refreshed bundles (e.g. from a model adapted on exported labels).
inline SessionResult run_second_pass(const std::vector<BundleSet>& refreshed, const PipelineConfig& cfg,
                                     const SessionResult& previous) {
    if (!refreshed.empty() && refreshed.front().session_id != previous.session_id) {
        throw SchemaError("second pass session " + refreshed.front().session_id + " does not match " +
                          previous.session_id);
    }
    return run_session(refreshed, cfg, previous.iteration + 1);
}

// ---------------------------------------------------------------------------
// Pseudo-labels for adaptation: the fused timeline rasterized on each
// channel's segment grid. A frame is active for a speaker when its center
// lies inside one of that speaker's turns.

struct SsaSegmentLabels {
    int segment_index = 0;
    double start = 0.0;
    Matrix labels;  // G x T, 0/1

    friend bool operator==(const SsaSegmentLabels&, const SsaSegmentLabels&) = default;
};

struct SsaLabels {
    std::string session_id;
    int channel = 0;
    int iteration = 1;
    double frame_rate = 0.0;
    std::vector<std::string> speakers;  // row order, sorted
    std::vector<SsaSegmentLabels> segments;

    friend bool operator==(const SsaLabels&, const SsaLabels&) = default;
};

inline SsaLabels make_ssa_labels(const Timeline& fused, const BundleSet& channel, int channel_index, int iteration) {
    SsaLabels out;
    out.session_id = channel.session_id;
    out.channel = channel_index;
    out.iteration = iteration;
    out.frame_rate = channel.frame_rate;
    const Timeline tl = normalize(fused);
    out.speakers = speakers_of(tl);
    std::sort(out.speakers.begin(), out.speakers.end());
    std::vector<IntervalList> per_speaker;
    for (const auto& spk : out.speakers) per_speaker.push_back(speaker_intervals(tl, spk));
    const double fr = channel.frame_rate;
    for (const auto& b : channel.bundles) {
        const std::size_t T = b.frames();
        SsaSegmentLabels seg{b.segment_index, b.start, Matrix(out.speakers.size(), T)};
        for (std::size_t g = 0; g < out.speakers.size(); ++g) {
            for (const auto& iv : per_speaker[g]) {
                // frames f with start <= b.start + (f + 0.5)/fr < end
                const double lo = std::ceil((iv.start - b.start) * fr - 0.5 - kTimeEpsilon);
                const double hi = std::ceil((iv.end - b.start) * fr - 0.5 - kTimeEpsilon);
                const auto f0 = static_cast<long long>(std::max(0.0, lo));
                const auto f1 = static_cast<long long>(std::min(static_cast<double>(T), hi));
                for (long long f = f0; f < f1; ++f) seg.labels(g, static_cast<std::size_t>(f)) = 1.0;
            }
        }
        out.segments.push_back(std::move(seg));
    }
    std::sort(out.segments.begin(), out.segments.end(),
              [](const auto& a, const auto& b) { return a.segment_index < b.segment_index; });
    return out;
}

inline std::vector<SsaLabels> export_ssa_labels(const SessionResult& result, const std::vector<BundleSet>& channels) {
    std::vector<SsaLabels> out;
    for (std::size_t c = 0; c < channels.size(); ++c)
        out.push_back(make_ssa_labels(result.fused, channels[c], static_cast<int>(c), result.iteration));
    return out;
}

/// Timeline implied by the label frames (each active frame spans 1/frame_rate).
inline Timeline ssa_labels_to_timeline(const SsaLabels& labels) {
    Timeline tl{labels.session_id, {}};
    for (const auto& seg : labels.segments) {
        for (std::size_t g = 0; g < labels.speakers.size(); ++g) {
            const std::size_t T = seg.labels.cols();
            std::size_t t = 0;
            while (t < T) {
                if (seg.labels(g, t) < 0.5) {
                    ++t;
                    continue;
                }
                std::size_t e = t;
                while (e < T && seg.labels(g, e) >= 0.5) ++e;
                tl.turns.push_back({labels.speakers[g], seg.start + static_cast<double>(t) / labels.frame_rate,
                                    seg.start + static_cast<double>(e) / labels.frame_rate});
                t = e;
            }
        }
    }
    return normalize(tl);
}

inline void format_ssa_labels(const SsaLabels& labels, std::ostream& out) {
    using nlohmann::json;
    json header = {{"record", "header"},          {"session_id", labels.session_id},
                   {"channel", labels.channel},     {"iteration", labels.iteration},
                   {"frame_rate", labels.frame_rate}, {"speakers", labels.speakers}};
    out << header.dump() << '\n';
    for (const auto& seg : labels.segments) {
        json rows = json::array();
        for (std::size_t g = 0; g < seg.labels.rows(); ++g) {
            json row = json::array();
            for (double v : seg.labels.row(g)) row.push_back(v >= 0.5 ? 1 : 0);
            rows.push_back(std::move(row));
        }
        json rec = {{"record", "labels"}, {"segment_index", seg.segment_index}, {"start", seg.start},
                    {"T", seg.labels.cols()}, {"labels", std::move(rows)}};
        out << rec.dump() << '\n';
    }
}

inline SsaLabels parse_ssa_labels(std::istream& in, const std::string& source = "<labels>") {
    using nlohmann::json;
    SsaLabels out;
    bool have_header = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json rec = json::parse(line);
            const std::string kind = rec.at("record").get<std::string>();
            if (kind == "header") {
                out.session_id = rec.at("session_id").get<std::string>();
                out.channel = rec.at("channel").get<int>();
                out.iteration = rec.at("iteration").get<int>();
                out.frame_rate = rec.at("frame_rate").get<double>();
                out.speakers = rec.at("speakers").get<std::vector<std::string>>();
                have_header = true;
            } else if (kind == "labels") {
                if (!have_header) throw ParseError(source, line_no, "labels before header");
                SsaSegmentLabels seg;
                seg.segment_index = rec.at("segment_index").get<int>();
                seg.start = rec.at("start").get<double>();
                const auto T = rec.at("T").get<std::size_t>();
                const auto& rows = rec.at("labels");
                if (rows.size() != out.speakers.size()) throw ParseError(source, line_no, "label rows != speakers");
                seg.labels = Matrix(out.speakers.size(), T);
                for (std::size_t g = 0; g < rows.size(); ++g) {
                    if (rows[g].size() != T) throw ParseError(source, line_no, "label row length != T");
                    for (std::size_t t = 0; t < T; ++t) seg.labels(g, t) = rows[g][t].get<int>() ? 1.0 : 0.0;
                }
                out.segments.push_back(std::move(seg));
            } else {
                throw ParseError(source, line_no, "unknown record '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    if (!have_header) throw ParseError(source, line_no, "missing header record");
    return out;
}

inline void write_ssa_labels(const SsaLabels& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write label file " + path);
    format_ssa_labels(labels, out);
    if (!out) throw IoError("write failed for " + path);
}

inline SsaLabels read_ssa_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open label file " + path);
    return parse_ssa_labels(in, path);
}

// ---------------------------------------------------------------------------
// Output tree, byte-identical for identical inputs and configuration:
//   <dir>/<session>/channel_<c>.rttm
//   <dir>/<session>/fused.rttm
//   <dir>/<session>/report.json
//   <dir>/<session>/labels/channel_<c>.jsonl   (only when labels are given)

inline nlohmann::json report_json(const SessionResult& r) {
    using nlohmann::json;
    json channels = json::array();
    for (const auto& c : r.channels) {
        const auto& d = c.diagnostics;
        channels.push_back({{"channel", c.channel},
                            {"ok", c.ok()},
                            {"error", c.error},
                            {"segments", d.n_segments},
                            {"streams", d.n_streams},
                            {"active_streams", d.n_active_streams},
                            {"ahc_k", d.ahc_k},
                            {"k", d.k},
                            {"ahc_violations", d.ahc_violations},
                            {"violations", d.violations},
                            {"violating_segments", d.violating_segments},
                            {"warnings", d.warnings},
                            {"speech_s", total_speech(c.timeline)}});
    }
    return {{"session_id", r.session_id},
            {"iteration", r.iteration},
            {"failed_channels", r.failed_channels()},
            {"fused_speakers", speakers_of(r.fused).size()},
            {"fused_speech_s", total_speech(r.fused)},
            {"channels", std::move(channels)}};
}

inline std::filesystem::path write_session_outputs(const SessionResult& r, const std::filesystem::path& dir,
                                                   const std::vector<SsaLabels>& labels = {}) {
    namespace fs = std::filesystem;
    const fs::path root = dir / r.session_id;
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
    for (const auto& c : r.channels) {
        if (!c.ok()) continue;
        write_rttm({c.timeline}, (root / ("channel_" + std::to_string(c.channel) + ".rttm")).string());
    }
    write_rttm({r.fused}, (root / "fused.rttm").string());
    {
        std::ofstream out(root / "report.json");
        if (!out) throw IoError("cannot write report in " + root.string());
        out << report_json(r).dump(2) << '\n';
    }
    if (!labels.empty()) {
        fs::create_directories(root / "labels", ec);
        if (ec) throw IoError("cannot create label directory: " + ec.message());
        for (const auto& l : labels)
            write_ssa_labels(l, (root / "labels" / ("channel_" + std::to_string(l.channel) + ".jsonl")).string());
    }
    return root;
}

/// Group bundle files into sessions by header session id; channel order follows the input order.
inline std::map<std::string, std::vector<BundleSet>> load_sessions(const std::vector<std::string>& paths) {
    std::map<std::string, std::vector<BundleSet>> out;
    for (const auto& p : paths) {
        BundleSet set = read_bundles(p);
        out[set.session_id].push_back(std::move(set));
    }
    return out;
}

}  // namespace mcdiar
