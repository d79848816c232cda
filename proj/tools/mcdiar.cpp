// mcdiar command-line front end.
//
// Exit codes: 0 all sessions fused, 2 some channels or sessions failed, 1 fatal.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcdiar/mcdiar.hpp"

namespace fs = std::filesystem;
using namespace mcdiar;

namespace {

struct ConfigArgs {
    std::vector<std::string> files;
    std::vector<std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", files, "configuration file(s), applied in order");
        app->add_option("--set", overrides, "key=value override, applied after files");
    }

    PipelineConfig build() const {
        PipelineConfig cfg;
        for (const auto& f : files) apply_config_file(cfg, f);
        for (const auto& o : overrides) apply_override(cfg, o);
        cfg.validate();
        return cfg;
    }
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto dash = item.find('-');
        if (dash != std::string::npos && dash > 0) {
            const auto a = std::stoull(item.substr(0, dash));
            const auto b = std::stoull(item.substr(dash + 1));
            if (b < a) throw ConfigError("bad seed range " + item);
            for (auto s = a; s <= b; ++s) out.push_back(s);
        } else {
            out.push_back(std::stoull(item));
        }
    }
    if (out.empty()) throw ConfigError("no seeds given");
    return out;
}

std::map<std::string, std::string> read_scenario_map(const std::string& path) {
    // "<session> <scenario>" per line
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario map " + path);
    std::map<std::string, std::string> out;
    std::string session, scenario;
    while (in >> session >> scenario) out[session] = scenario;
    return out;
}

std::vector<Timeline> read_all_rttm(const std::vector<std::string>& paths) {
    std::vector<Timeline> out;
    for (const auto& p : paths)
        for (auto& tl : read_rttm(p)) out.push_back(std::move(tl));
    return out;
}

void print_report_line(std::ostream& os, const std::string& name, const DerReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-24s DER %6.2f  CF %6.2f  FA %6.2f  MI %6.2f  speech %9.3f s\n", name.c_str(), r.der,
                  r.cf, r.fa, r.mi, r.scored_speech_s);
    os << buf;
}

int cmd_run(const ConfigArgs& ca, const std::vector<std::string>& bundles, const std::string& out_dir,
            bool labels) {
    PipelineConfig cfg = ca.build();
    std::vector<std::string> inputs = cfg.inputs;
    inputs.insert(inputs.end(), bundles.begin(), bundles.end());
    if (inputs.empty()) throw ConfigError("no segment bundle inputs (use --bundles or inputs=)");
    const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);

    int code = 0;
    std::size_t fused = 0;
    for (const auto& [session, channels] : load_sessions(inputs)) {
        try {
            const SessionResult r = run_session(channels, cfg);
            std::vector<SsaLabels> ssa;
            if (labels) ssa = export_ssa_labels(r, channels);
            write_session_outputs(r, dir, ssa);
            if (r.exit_code() != 0) code = 2;
            ++fused;
        } catch (const AllChannelsFailed& e) {
            log_error({session, std::nullopt, "session"}, e.what());
            code = 2;
        }
    }
    if (fused == 0) {
        std::cerr << "mcdiar: no session produced fused output\n";
        return 1;
    }
    return code;
}

int cmd_cluster(const ConfigArgs& ca, const std::string& bundles, const std::string& out) {
    const PipelineConfig cfg = ca.build();
    const BundleSet set = read_bundles(bundles);
    const ChannelResult r = run_channel(set, cfg, 0);
    if (out.empty() || out == "-") {
        format_rttm({r.timeline}, std::cout);
    } else {
        write_rttm({r.timeline}, out);
    }
    const auto& d = r.diagnostics;
    log_info({set.session_id, 0, "cluster"}, "streams=" + std::to_string(d.n_active_streams) + " ahc_k=" +
                                                 std::to_string(d.ahc_k) + " k=" + std::to_string(d.k) +
                                                 " violating_segments=" + std::to_string(d.violating_segments));
    return 0;
}

int cmd_fuse(const std::vector<std::string>& hyps, const std::vector<double>& weights, const std::string& rank,
             const std::string& out) {
    if (hyps.empty()) throw ConfigError("fuse needs at least one --hyp");
    if (!weights.empty() && weights.size() != hyps.size()) {
        throw ConfigError("--weights needs one value per --hyp file");
    }
    FusionParams params;
    params.rank_weighting = parse_rank_weighting(rank);
    // session -> (timelines, weights), one entry per hypothesis file containing the session
    std::map<std::string, HypothesisSet> sessions;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        for (auto& tl : read_rttm(hyps[i])) {
            auto& set = sessions[tl.session_id];
            set.session_id = tl.session_id;
            set.hypotheses.push_back(std::move(tl));
            set.weights.push_back(weights.empty() ? 1.0 : weights[i]);
        }
    }
    std::vector<Timeline> fused;
    for (const auto& [id, set] : sessions) {
        Timeline f = fuse(set, params);
        f.session_id = id;
        fused.push_back(std::move(f));
    }
    if (out.empty() || out == "-") {
        format_rttm(fused, std::cout);
    } else {
        write_rttm(fused, out);
    }
    return 0;
}

int cmd_score(const std::vector<std::string>& refs, const std::vector<std::string>& hyps, const std::string& uem,
              double collar, bool skip_overlap, bool per_session, const std::string& scenario_map,
              const std::string& macro, const std::string& records) {
    ScoringOptions opts;
    opts.collar = collar;
    opts.score_overlaps = !skip_overlap;
    std::map<std::string, Uem> uems;
    if (!uem.empty()) uems = read_uem(uem);
    const auto scores = score_sessions(read_all_rttm(refs), read_all_rttm(hyps), opts, uems);
    if (scores.empty()) throw ConfigError("reference contains no sessions");
    if (per_session)
        for (const auto& s : scores) print_report_line(std::cout, s.session_id, s.report);
    print_report_line(std::cout, "*** POOLED ***", pooled(scores));
    if (!records.empty()) {
        std::ofstream os(records);
        if (!os) throw IoError("cannot write " + records);
        for (const auto& s : scores) {
            const auto& r = s.report;
            os << nlohmann::json{{"session", s.session_id}, {"cf", r.cf}, {"fa", r.fa}, {"mi", r.mi}, {"der", r.der},
                                 {"scored_speech_s", r.scored_speech_s}}
                      .dump()
               << '\n';
        }
    }
    std::map<std::string, std::string> scenarios;
    if (!scenario_map.empty()) scenarios = read_scenario_map(scenario_map);
    const MacroMode mode = macro == "per_session" ? MacroMode::per_session : MacroMode::per_scenario;
    if (macro != "per_session" && macro != "per_scenario") throw ConfigError("--macro must be per_scenario or per_session");
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-24s DER %6.2f\n", ("*** MACRO " + macro + " ***").c_str(),
                  macro_der(scores, scenarios, mode));
    std::cout << buf;
    return 0;
}

int cmd_simulate(SimConfig sim, const std::string& out_dir, const std::vector<int>& outliers) {
    sim.channel_outlier_indices = std::set<int>(outliers.begin(), outliers.end());
    sim.validate();
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const GroundTruth truth = generate_ground_truth(sim);
    write_rttm({truth.timeline}, (dir / "reference.rttm").string());
    write_uem({Uem{sim.session_id, {{0.0, sim.session_length}}}}, (dir / "reference.uem").string());
    for (int c = 0; c < sim.n_channels; ++c) {
        const auto syn = synthesize_channel(truth, sim, c);
        write_bundles(syn.bundles, (dir / (sim.session_id + "_ch" + std::to_string(c) + ".jsonl")).string());
    }
    log_info({sim.session_id, std::nullopt, "simulate"},
             "speakers=" + std::to_string(sim.n_speakers) + " channels=" + std::to_string(sim.n_channels) +
                 " overlap_fraction=" + std::to_string(truth.overlap_fraction));
    return 0;
}

int cmd_trend(const std::string& name, const std::string& seeds, const std::string& out, const std::string& plot,
              const std::vector<double>& segment_sizes, double permutation_rate, const ConfigArgs& ca,
              int workers) {
    const TrendExperiment e = parse_trend_experiment(name);
    TrendOptions opts = default_trend_options(e);
    opts.pipeline = ca.build();
    if (!segment_sizes.empty()) opts.segment_sizes = segment_sizes;
    if (permutation_rate >= 0.0) opts.sim.permutation_error_rate = permutation_rate;
    if (workers > 0) opts.workers = workers;
    const TrendResult result = run_trend_experiment(e, parse_seeds(seeds), opts);
    if (out.empty() || out == "-") {
        format_trend(result, std::cout);
    } else {
        std::ofstream os(out);
        if (!os) throw IoError("cannot write " + out);
        format_trend(result, os);
    }
    if (!plot.empty()) write_trend_svg(result, plot);
    return 0;
}

int cmd_ssa(const std::string& fused_path, const std::vector<std::string>& bundles, const std::string& out_dir,
            int iteration) {
    std::map<std::string, Timeline> fused;
    for (auto& tl : read_rttm(fused_path)) fused[tl.session_id] = std::move(tl);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    for (const auto& [session, channels] : load_sessions(bundles)) {
        const auto it = fused.find(session);
        const Timeline tl = it == fused.end() ? Timeline{session, {}} : it->second;
        if (it == fused.end()) log_warning({session, std::nullopt, "ssa"}, "no fused turns; labels are all zero");
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const auto labels = make_ssa_labels(tl, channels[c], static_cast<int>(c), iteration);
            write_ssa_labels(labels, (dir / (session + "_ch" + std::to_string(c) + ".labels.jsonl")).string());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-channel speaker diarization back end"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "debug|info|warning|error|off");

    // run
    auto* run = app.add_subcommand("run", "cluster, stitch and fuse every session");
    ConfigArgs run_cfg;
    run_cfg.attach(run);
    std::vector<std::string> run_bundles;
    std::string run_out;
    bool run_labels = false;
    run->add_option("-b,--bundles", run_bundles, "segment bundle files (one per channel)");
    run->add_option("-o,--out", run_out, "output directory (default: output_dir)");
    run->add_flag("--labels", run_labels, "also export adaptation labels");

    // cluster
    auto* cluster = app.add_subcommand("cluster", "cluster and stitch a single channel");
    ConfigArgs cl_cfg;
    cl_cfg.attach(cluster);
    std::string cl_bundles, cl_out;
    cluster->add_option("-b,--bundles", cl_bundles, "segment bundle file")->required();
    cluster->add_option("-o,--out", cl_out, "RTTM output (default stdout)");

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "fuse RTTM hypotheses per session");
    std::vector<std::string> fu_hyps;
    std::vector<double> fu_weights;
    std::string fu_rank = "linear", fu_out;
    fuse_cmd->add_option("--hyp", fu_hyps, "hypothesis RTTM files")->required();
    fuse_cmd->add_option("--weights", fu_weights, "one weight per hypothesis file")->delimiter(',');
    fuse_cmd->add_option("--rank-weighting", fu_rank, "uniform|linear");
    fuse_cmd->add_option("-o,--out", fu_out, "RTTM output (default stdout)");

    // score
    auto* score_cmd = app.add_subcommand("score", "diarization error rate");
    std::vector<std::string> sc_ref, sc_hyp;
    std::string sc_uem, sc_map, sc_macro = "per_scenario", sc_records;
    double sc_collar = 0.25;
    bool sc_skip = false, sc_per = false;
    score_cmd->add_option("-r,--ref", sc_ref, "reference RTTM")->required();
    score_cmd->add_option("-s,--hyp", sc_hyp, "system RTTM")->required();
    score_cmd->add_option("-u,--uem", sc_uem, "UEM file");
    score_cmd->add_option("--collar", sc_collar, "no-score collar around reference boundaries (s)");
    score_cmd->add_flag("--ignore-overlaps", sc_skip, "exclude overlapped reference speech");
    score_cmd->add_flag("--per-session", sc_per, "print every session");
    score_cmd->add_option("--scenario-map", sc_map, "file of '<session> <scenario>' lines");
    score_cmd->add_option("--macro", sc_macro, "per_scenario|per_session");
    score_cmd->add_option("--records", sc_records, "per-session JSON lines output");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "synthetic session: reference RTTM plus channel bundles");
    SimConfig sim;
    std::string sim_out = "sim";
    std::vector<int> sim_outliers;
    double sim_overlap = -1.0;
    sim_cmd->add_option("-o,--out", sim_out, "output directory");
    sim_cmd->add_option("--seed", sim.seed);
    sim_cmd->add_option("--session-id", sim.session_id);
    sim_cmd->add_option("--speakers", sim.n_speakers);
    sim_cmd->add_option("--length", sim.session_length, "session length (s)");
    sim_cmd->add_option("--mean-pause", sim.mean_pause);
    sim_cmd->add_option("--mean-utterance", sim.mean_utterance);
    sim_cmd->add_option("--overlap-fraction", sim_overlap, "target overlap fraction");
    sim_cmd->add_option("--dim", sim.embedding_dim);
    sim_cmd->add_option("--noise", sim.embedding_noise_base, "embedding noise base");
    sim_cmd->add_option("--permutation-rate", sim.permutation_error_rate);
    sim_cmd->add_option("--channels", sim.n_channels);
    sim_cmd->add_option("--outliers", sim_outliers, "outlier channel indices")->delimiter(',');
    sim_cmd->add_option("--segment-size", sim.segment_size);
    sim_cmd->add_option("--frame-rate", sim.frame_rate);

    // trend
    auto* trend = app.add_subcommand("trend", "seeded simulator experiments");
    std::string tr_name, tr_seeds = "1-10", tr_out, tr_plot;
    std::vector<double> tr_sizes;
    double tr_perm = -1.0;
    int tr_workers = 0;
    ConfigArgs tr_cfg;
    tr_cfg.attach(trend);
    trend->add_option("experiment", tr_name, "segment_length|constraint_ablation|channel_fusion")->required();
    trend->add_option("--seeds", tr_seeds, "e.g. 1-10 or 1,4,9");
    trend->add_option("-o,--out", tr_out, "record output (default stdout)");
    trend->add_option("--plot", tr_plot, "SVG plot of mean DER per grid point");
    trend->add_option("--segment-sizes", tr_sizes, "segment_length grid")->delimiter(',');
    trend->add_option("--permutation-rate", tr_perm);
    trend->add_option("--workers", tr_workers);

    // ssa-labels
    auto* ssa = app.add_subcommand("ssa-labels", "rasterize a fused RTTM on each channel's segment grid");
    std::string ssa_fused, ssa_out = "labels";
    std::vector<std::string> ssa_bundles;
    int ssa_iter = 1;
    ssa->add_option("--fused", ssa_fused, "fused RTTM")->required();
    ssa->add_option("-b,--bundles", ssa_bundles, "segment bundle files")->required();
    ssa->add_option("-o,--out", ssa_out, "output directory");
    ssa->add_option("--iteration", ssa_iter);

    // config
    auto* config = app.add_subcommand("config", "show the effective configuration");
    ConfigArgs co_cfg;
    co_cfg.attach(config);
    bool co_dump = false;
    config->add_flag("--dump", co_dump, "print every key = value");

    CLI11_PARSE(app, argc, argv);

    try {
        static const std::map<std::string, LogLevel> levels = {{"debug", LogLevel::debug},
                                                               {"info", LogLevel::info},
                                                               {"warning", LogLevel::warning},
                                                               {"error", LogLevel::error},
                                                               {"off", LogLevel::off}};
        const auto lv = levels.find(log_level);
        if (lv == levels.end()) throw ConfigError("unknown log level " + log_level);
        Logger::instance().set_level(lv->second);

        if (*run) return cmd_run(run_cfg, run_bundles, run_out, run_labels);
        if (*cluster) return cmd_cluster(cl_cfg, cl_bundles, cl_out);
        if (*fuse_cmd) return cmd_fuse(fu_hyps, fu_weights, fu_rank, fu_out);
        if (*score_cmd) return cmd_score(sc_ref, sc_hyp, sc_uem, sc_collar, sc_skip, sc_per, sc_map, sc_macro, sc_records);
        if (*sim_cmd) {
            if (sim_overlap >= 0.0) sim.overlap_fraction = sim_overlap;
            return cmd_simulate(sim, sim_out, sim_outliers);
        }
        if (*trend) return cmd_trend(tr_name, tr_seeds, tr_out, tr_plot, tr_sizes, tr_perm, tr_cfg, tr_workers);
        if (*ssa) return cmd_ssa(ssa_fused, ssa_bundles, ssa_out, ssa_iter);
        if (*config) {
            std::cout << dump_config(co_cfg.build());
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "mcdiar: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
