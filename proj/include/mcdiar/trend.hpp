#pragma once

// Simulator-driven experiments: segment length, clustering constraints and
// multi-channel fusion, each scored against the simulated ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcdiar/config.hpp"
#include "mcdiar/errors.hpp"
#include "mcdiar/pipeline.hpp"
#include "mcdiar/scoring.hpp"
#include "mcdiar/simulate.hpp"

namespace mcdiar {

enum class TrendExperiment { segment_length, constraint_ablation, channel_fusion };

inline const char* to_string(TrendExperiment e) {
    switch (e) {
        case TrendExperiment::segment_length: return "segment_length";
        case TrendExperiment::constraint_ablation: return "constraint_ablation";
        case TrendExperiment::channel_fusion: return "channel_fusion";
    }
    return "?";
}

inline TrendExperiment parse_trend_experiment(const std::string& name) {
    if (name == "segment_length") return TrendExperiment::segment_length;
    if (name == "constraint_ablation") return TrendExperiment::constraint_ablation;
    if (name == "channel_fusion") return TrendExperiment::channel_fusion;
    throw ConfigError("unknown experiment '" + name + "'");
}

struct TrendOptions {
    SimConfig sim;
    PipelineConfig pipeline;
    std::vector<double> segment_sizes{15.0, 40.0, 80.0};
    std::vector<ClusteringMethod> methods{ClusteringMethod::ahc, ClusteringMethod::cahc, ClusteringMethod::kmeans,
                                          ClusteringMethod::cop_kmeans};
    int workers = PipelineConfig::default_workers();
};

/// Settings each experiment is defined with; everything else stays at defaults.
inline TrendOptions default_trend_options(TrendExperiment e) {
    TrendOptions o;
    switch (e) {
        case TrendExperiment::segment_length: break;
        case TrendExperiment::constraint_ablation: o.sim.permutation_error_rate = 0.2; break;
        case TrendExperiment::channel_fusion:
            o.sim.n_channels = 6;
            o.sim.channel_outlier_indices = {5};
            break;
    }
    return o;
}

struct TrendRecord {
    std::string grid;  // grid point label
    double grid_value = 0.0;
    std::size_t grid_index = 0;
    std::uint64_t seed = 0;
    std::string role;  // "single", "channel", "fused", "best_channel", "worst_channel"
    int channel = -1;
    double der = std::numeric_limits<double>::quiet_NaN();
    std::size_t violations = 0;
    std::size_t violating_segments = 0;
    std::string error;
};

struct TrendSummary {
    std::string grid;
    double grid_value = 0.0;
    std::string role;
    std::size_t runs = 0;
    std::size_t failures = 0;
    double mean_der = std::numeric_limits<double>::quiet_NaN();
    std::size_t max_violating_segments = 0;
};

struct TrendResult {
    TrendExperiment experiment = TrendExperiment::segment_length;
    std::vector<TrendRecord> records;
    std::vector<TrendSummary> summaries;

    const TrendSummary& summary(const std::string& grid, const std::string& role) const {
        for (const auto& s : summaries)
            if (s.grid == grid && s.role == role) return s;
        throw std::out_of_range("no summary for " + grid + "/" + role);
    }
    std::vector<const TrendRecord*> select(const std::string& grid, const std::string& role) const {
        std::vector<const TrendRecord*> out;
        for (const auto& r : records)
            if (r.grid == grid && r.role == role) out.push_back(&r);
        return out;
    }
};

namespace detail {

inline std::string grid_label(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

inline double session_der(const Timeline& truth, const Timeline& hyp, const SimConfig& sim, const PipelineConfig& p) {
    ScoringOptions opts = p.scoring();
    opts.uem = Uem{truth.session_id, {{0.0, sim.session_length}}};
    Timeline h = hyp;
    h.session_id = truth.session_id;
    return score(truth, h, opts).der;
}

inline TrendRecord channel_record(const ChannelResult& c, const Timeline& truth, const SimConfig& sim,
                                  const PipelineConfig& p) {
    TrendRecord r;
    r.channel = c.channel;
    r.error = c.error;
    if (c.ok()) {
        r.der = session_der(truth, c.timeline, sim, p);
        r.violations = c.diagnostics.violations;
        r.violating_segments = c.diagnostics.violating_segments;
    }
    return r;
}

inline std::vector<TrendRecord> run_one(TrendExperiment e, const TrendOptions& o, std::size_t gi, std::uint64_t seed) {
    SimConfig sim = o.sim;
    sim.seed = seed;
    PipelineConfig p = o.pipeline;
    p.workers = 1;
    std::vector<TrendRecord> out;
    std::string grid;
    double grid_value = 0.0;

    auto stamp = [&](TrendRecord r, const std::string& role) {
        r.grid = grid;
        r.grid_value = grid_value;
        r.grid_index = gi;
        r.seed = seed;
        r.role = role;
        out.push_back(std::move(r));
    };

    try {
        switch (e) {
            case TrendExperiment::segment_length: {
                grid_value = o.segment_sizes.at(gi);
                grid = grid_label(grid_value);
                sim.segment_size = grid_value;
                sim.n_channels = 1;
                // conversation depends on the seed only; rendering also on the grid point
                sim.synthesis_salt = gi;
                p.segment_size = grid_value;
                const GroundTruth truth = generate_ground_truth(sim);
                const auto bundles = synthesize_channel(truth, sim, 0).bundles;
                stamp(channel_record(run_channel(bundles, p, 0), truth.timeline, sim, p), "single");
                break;
            }
            case TrendExperiment::constraint_ablation: {
                const ClusteringMethod m = o.methods.at(gi);
                grid = to_string(m);
                grid_value = static_cast<double>(gi);
                sim.n_channels = 1;
                p.clustering.method = m;
                const GroundTruth truth = generate_ground_truth(sim);
                const auto bundles = synthesize_channel(truth, sim, 0).bundles;
                stamp(channel_record(run_channel(bundles, p, 0), truth.timeline, sim, p), "single");
                break;
            }
            case TrendExperiment::channel_fusion: {
                grid = std::to_string(sim.n_channels) + "ch";
                grid_value = sim.n_channels;
                const GroundTruth truth = generate_ground_truth(sim);
                std::vector<BundleSet> channels;
                for (int c = 0; c < sim.n_channels; ++c) channels.push_back(synthesize_channel(truth, sim, c).bundles);
                const SessionResult res = run_session(channels, p);
                double best = std::numeric_limits<double>::infinity();
                double worst = -std::numeric_limits<double>::infinity();
                int best_c = -1, worst_c = -1;
                for (const auto& c : res.channels) {
                    TrendRecord r = channel_record(c, truth.timeline, sim, p);
                    if (r.error.empty()) {
                        if (r.der < best) best = r.der, best_c = c.channel;
                        if (r.der > worst) worst = r.der, worst_c = c.channel;
                    }
                    stamp(std::move(r), "channel");
                }
                TrendRecord fused;
                fused.der = session_der(truth.timeline, res.fused, sim, p);
                stamp(std::move(fused), "fused");
                TrendRecord b, w;
                b.der = best, b.channel = best_c;
                w.der = worst, w.channel = worst_c;
                stamp(std::move(b), "best_channel");
                stamp(std::move(w), "worst_channel");
                break;
            }
        }
    } catch (const std::exception& ex) {
        TrendRecord r;
        r.error = ex.what();
        stamp(std::move(r), "error");
    }
    return out;
}

inline std::size_t grid_size(TrendExperiment e, const TrendOptions& o) {
    switch (e) {
        case TrendExperiment::segment_length: return o.segment_sizes.size();
        case TrendExperiment::constraint_ablation: return o.methods.size();
        case TrendExperiment::channel_fusion: return 1;
    }
    return 0;
}

}  // namespace detail

/// Every (grid point, seed) run is independent; records come back in
/// (grid point, seed) order regardless of the worker count.
inline TrendResult run_trend_experiment(TrendExperiment e, const std::vector<std::uint64_t>& seeds,
                                        const TrendOptions& options) {
    options.sim.validate();
    const std::size_t G = detail::grid_size(e, options);
    if (G == 0) throw ConfigError("empty grid for experiment " + std::string(to_string(e)));
    std::vector<std::vector<TrendRecord>> per_run(G * seeds.size());
    detail::parallel_for(per_run.size(), options.workers, [&](std::size_t job) {
        per_run[job] = detail::run_one(e, options, job / seeds.size(), seeds[job % seeds.size()]);
    });

    TrendResult result;
    result.experiment = e;
    for (auto& run : per_run)
        for (auto& r : run) result.records.push_back(std::move(r));

    // summaries keyed by grid point then role, in first-seen order
    std::vector<std::pair<std::size_t, std::string>> keys;
    for (const auto& r : result.records) {
        const std::pair<std::size_t, std::string> key{r.grid_index, r.role};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    for (const auto& [gi, role] : keys) {
        TrendSummary s;
        s.role = role;
        double sum = 0.0;
        std::size_t ok = 0;
        for (const auto& r : result.records) {
            if (r.grid_index != gi || r.role != role) continue;
            s.grid = r.grid;
            s.grid_value = r.grid_value;
            ++s.runs;
            if (!r.error.empty() || std::isnan(r.der)) {
                ++s.failures;
                continue;
            }
            sum += r.der;
            ++ok;
            s.max_violating_segments = std::max(s.max_violating_segments, r.violating_segments);
        }
        if (ok > 0) s.mean_der = sum / static_cast<double>(ok);
        result.summaries.push_back(std::move(s));
    }
    return result;
}

inline void format_trend(const TrendResult& result, std::ostream& out) {
    using nlohmann::json;
    const std::string name = to_string(result.experiment);
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    for (const auto& r : result.records) {
        json rec = {{"record", "run"},
                    {"experiment", name},
                    {"grid", r.grid},
                    {"grid_value", r.grid_value},
                    {"seed", r.seed},
                    {"role", r.role},
                    {"channel", r.channel},
                    {"der", num(r.der)},
                    {"violations", r.violations},
                    {"violating_segments", r.violating_segments}};
        if (!r.error.empty()) rec["error"] = r.error;
        out << rec.dump() << '\n';
    }
    for (const auto& s : result.summaries) {
        json rec = {{"record", "summary"},
                    {"experiment", name},
                    {"grid", s.grid},
                    {"grid_value", s.grid_value},
                    {"role", s.role},
                    {"runs", s.runs},
                    {"failures", s.failures},
                    {"mean_der", num(s.mean_der)},
                    {"max_violating_segments", s.max_violating_segments}};
        out << rec.dump() << '\n';
    }
}

/// Line plot of mean DER per grid point, one line per role.
inline std::string trend_svg(const TrendResult& result) {
    std::vector<std::string> grids, roles;
    for (const auto& s : result.summaries) {
        if (std::find(grids.begin(), grids.end(), s.grid) == grids.end()) grids.push_back(s.grid);
        if (s.role != "channel" && s.role != "error" && std::find(roles.begin(), roles.end(), s.role) == roles.end())
            roles.push_back(s.role);
    }
    double ymax = 1.0;
    for (const auto& s : result.summaries)
        if (std::isfinite(s.mean_der)) ymax = std::max(ymax, s.mean_der);
    ymax *= 1.1;

    const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
    const double pw = W - L - R, ph = H - T - B;
    auto xpos = [&](std::size_t i) { return L + (grids.size() == 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(grids.size() - 1)); };
    auto ypos = [&](double v) { return T + ph * (1.0 - v / ymax); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

    std::ostringstream os;
    char buf[160];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
       << to_string(result.experiment) << ": mean DER (%)</text>\n";
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T + ph, L + pw, T + ph);
    os << buf;
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L, T + ph);
    os << buf;
    for (int k = 0; k <= 4; ++k) {
        const double v = ymax * k / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">%.1f</text>\n",
                      L - 6, ypos(v) + 4, v);
        os << buf;
    }
    for (std::size_t i = 0; i < grids.size(); ++i) {
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">",
                      xpos(i), T + ph + 18);
        os << buf << grids[i] << "</text>\n";
    }
    for (std::size_t r = 0; r < roles.size(); ++r) {
        const char* color = colors[r % 5];
        std::string points;
        for (std::size_t i = 0; i < grids.size(); ++i) {
            for (const auto& s : result.summaries) {
                if (s.grid != grids[i] || s.role != roles[r] || !std::isfinite(s.mean_der)) continue;
                std::snprintf(buf, sizeof buf, "%.2f,%.2f ", xpos(i), ypos(s.mean_der));
                points += buf;
                std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", xpos(i),
                              ypos(s.mean_der), color);
                os << buf;
            }
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" fill=\"%s\">",
                      L + pw + 12, T + 16.0 * static_cast<double>(r + 1), color);
        os << buf << roles[r] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_trend_svg(const TrendResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write plot " + path);
    out << trend_svg(result);
}

}  // namespace mcdiar
