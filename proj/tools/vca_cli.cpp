// vca: command-line front end for dataset synthesis, training, dialogue
// simulation and the verification harnesses. Every run is reproducible from
// the config seed; reports embed the resolved config.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vca/io.hpp"
#include "vca/json_io.hpp"
#include "vca/run_config.hpp"

namespace fs = std::filesystem;
using namespace vca;
using detail::json;

namespace {

// One process per output directory: the lock is created with "wx" so a
// second instance fails instead of interleaving writes.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".vca.lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (!fs::is_directory(dir))
            throw IoError("cannot create directory: " + dir.string());
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (!f)
            throw IoError("output directory is locked (remove stale " + path_.string() +
                          " if no other run is active)");
        std::fclose(f);
    }
    ~DirectoryLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

RunConfig resolve_config(const std::string& config_path, std::optional<std::uint64_t> seed,
                         const std::string& out_dir) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();
    return cfg;
}

int cmd_synth_data(const RunConfig& cfg) {
    DirectoryLock lock(cfg.dataset_dir);
    const FeatureExtractor extractor(cfg.feature_dim, cfg.latent_dim, cfg.seed);
    SeededRng rng = split_stream(cfg.seed, Stream::DataSynthesis);
    const SynthResult res =
        synthesize_dataset(cfg.synth_options(), {}, extractor, cfg.dataset_dir, rng);
    std::printf("wrote %zu dialogue files, %zu preference pairs\n", res.dialogue_files,
                res.preference_pairs);
    std::printf("manifest: %s\n", res.manifest_file.string().c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    DirectoryLock lock(cfg.output_dir);
    const LoadReport data = load_dialogues(cfg.dataset_dir);
    for (const std::string& issue : data.issues)
        std::fprintf(stderr, "skipped: %s\n", issue.c_str());
    for (const DialogueRecord& rec : data.records) {
        if (rec.rounds.front().prompt_embedding.size() != cfg.prompt_dim ||
            rec.rounds.front().target_feature.size() != cfg.latent_dim)
            throw DatasetError(rec.dialogue_id + ": vector lengths disagree with config dims");
    }

    const auto pref = load_preference_pairs(cfg.dataset_dir / "preference_pairs.json");
    if (pref.front().prompt_embedding.size() != cfg.prompt_dim ||
        pref.front().positive_feature.size() != cfg.feature_dim)
        throw DatasetError("preference file: vector lengths disagree with config dims");
    Scorer scorer = Scorer::zeros(cfg.prompt_dim, cfg.feature_dim, cfg.logit_dim,
                                  cfg.scorer_rank, cfg.scorer_alpha, cfg.seed);
    SeededRng scorer_rng = split_stream(cfg.seed, Stream::ScorerTraining);
    const auto curve = train_scorer(scorer, pref, cfg.scorer_epochs, cfg.scorer_lr, scorer_rng,
                                    cfg.beta_dpo, cfg.scorer_batch);
    save_scorer(scorer, cfg.output_dir / "scorer.json");
    std::printf("scorer: %d epochs, final mean loss %s, pairwise accuracy %s\n",
                cfg.scorer_epochs, curve.empty() ? "n/a" : format_double(curve.back()).c_str(),
                format_double(pairwise_accuracy(scorer, pref)).c_str());

    Denoiser den = make_denoiser(cfg.latent_dim, cfg.prompt_dim, cfg.beta_dm,
                                 split_stream(cfg.seed, Stream::DenoiserInit));
    LoraAdapter lora = make_lora(cfg.latent_dim, cfg.prompt_dim, cfg.lora_rank, cfg.lora_alpha,
                                 cfg.lora_eta, split_stream(cfg.seed, Stream::LoraInit));
    const FeatureExtractor extractor(cfg.feature_dim, cfg.latent_dim, cfg.seed);
    TrainLoopConfig loop_cfg;
    loop_cfg.ppo = cfg.ppo;
    loop_cfg.lr_phi = cfg.lr_phi;
    loop_cfg.phi_update_interval = cfg.phi_update_interval;
    SeededRng train_rng = split_stream(cfg.seed, Stream::TrainingLoop);
    const auto log = training_loop(data.records, den, lora, scorer, extractor,
                                   cfg.noise_schedule, cfg.reward_schedule, loop_cfg, train_rng);

    write_metrics_csv(log, cfg.output_dir / "metrics.csv");
    TrainingCheckpoint ckpt{den, lora, cfg.seed, log.size()};
    save_training_checkpoint(ckpt, cfg.output_dir / "checkpoint.json");

    double total = 0.0;
    for (const ItemMetrics& row : log) total += row.breakdown.total;
    std::printf("trained on %zu items; mean R_total %s\n", log.size(),
                format_double(log.empty() ? 0.0 : total / log.size()).c_str());
    std::printf("metrics: %s\n", (cfg.output_dir / "metrics.csv").string().c_str());
    std::printf("checkpoint: %s\n", (cfg.output_dir / "checkpoint.json").string().c_str());
    return 0;
}

json weights_suite(const RunConfig& cfg, bool& ok) {
    json suite;
    const RewardSchedule& s = cfg.reward_schedule;
    const Weights w0 = weights_at(s, 0.0);
    suite["t0_weights"] = {w0.div, w0.cons, w0.mi};
    bool pass = w0.div == 1.0 && w0.cons == 0.0 && w0.mi == 0.5;

    bool monotone = true;
    Weights prev = w0;
    for (int i = 1; i <= 200; ++i) {
        const Weights w = weights_at(s, 0.1 * i);
        monotone = monotone && w.div < prev.div && w.cons > prev.cons && w.mi < prev.mi;
        prev = w;
    }
    suite["monotone"] = monotone;
    pass = pass && monotone;

    const EqualWeightProbe probe = equal_weight_probe(s);
    if (probe.div_cons_crossing) {
        suite["div_cons_crossing"] = *probe.div_cons_crossing;
        const Weights wc = weights_at(s, *probe.div_cons_crossing);
        pass = pass && std::abs(wc.div - wc.cons) < 1e-9;
    } else {
        suite["div_cons_crossing"] = nullptr;
        pass = false;
    }
    suite["pass"] = pass;
    ok = ok && pass;
    return suite;
}

json pareto_suite(const RunConfig& cfg, bool& ok) {
    json suite;
    SeededRng rng = split_stream(cfg.seed, Stream::Convergence).split(42);
    int hits = 0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        CandidateSet cands;
        const int n = 1 + static_cast<int>(rng.next_int(0, 49));
        for (int i = 0; i < n; ++i)
            cands.points.push_back({rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()});
        const std::array<double, 3> w{0.01 + rng.next_double(), 0.01 + rng.next_double(),
                                      0.01 + rng.next_double()};
        const std::size_t best = scalarization_argmax(cands, w);
        const auto front = pareto_front(cands);
        if (std::find(front.begin(), front.end(), best) != front.end()) ++hits;
    }
    suite["membership_trials"] = trials;
    suite["membership_hits"] = hits;

    const EqualWeightProbe probe = equal_weight_probe(cfg.reward_schedule);
    suite["common_t0"] = probe.common_t0 ? json(*probe.common_t0) : json(nullptr);
    suite["div_mi_crossing"] = probe.div_mi_crossing ? json(*probe.div_mi_crossing) : json(nullptr);
    suite["cons_mi_crossing"] =
        probe.cons_mi_crossing ? json(*probe.cons_mi_crossing) : json(nullptr);
    suite["best_residual"] = probe.best_residual;

    // Slide the schedule weights over a canonical objective-vertex set and
    // record where the scalarization argmax switches.
    CandidateSet demo;
    demo.points = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {0.4, 0.4, 0.4}};
    demo.provenance = "objective vertices + balanced point";
    std::vector<double> grid;
    for (double t = 0.0; t <= 20.0; t += 0.05) grid.push_back(t);
    const WeightPathScan scan = weight_path_scan(cfg.reward_schedule, demo, grid);
    json switches = json::array();
    for (std::size_t gi : scan.switch_indices) switches.push_back(scan.path[gi].t);
    suite["weight_path"] = {{"candidates", demo.provenance},
                            {"switch_points", std::move(switches)},
                            {"all_pareto", scan.all_pareto}};

    const bool pass = hits == trials && scan.all_pareto;
    suite["pass"] = pass;
    ok = ok && pass;
    return suite;
}

json convergence_suite(const RunConfig& cfg, bool& ok) {
    json suite;
    const ConvergenceReport rep = run_convergence(cfg.convergence_config());
    suite["final_mean_error"] = rep.final_mean_error;
    suite["final_w2"] = rep.final_w2;
    suite["violation_run"] = rep.violation_run;
    suite["checks"] = {{"prompt_rate", rep.checks.prompt_rate_ok},
                       {"contraction", rep.checks.contraction_ok},
                       {"noise_decay", rep.checks.noise_decay_ok}};
    suite["lipschitz_probe_max"] = rep.lipschitz_probe_max;
    const auto tvs = tv_between_rounds(rep);
    suite["final_round_tv"] = tvs.empty() || !tvs.back() ? json(nullptr) : json(*tvs.back());
    write_convergence_csv(rep, cfg.output_dir / "convergence.csv");

    const bool pass = rep.final_mean_error < 1e-3 && rep.final_w2 < 2e-3 &&
                      rep.checks.prompt_rate_ok && rep.checks.contraction_ok &&
                      rep.checks.noise_decay_ok;
    suite["pass"] = pass;
    ok = ok && pass;
    return suite;
}

json gradients_suite(const RunConfig& cfg, bool& ok) {
    json suite;
    const GradientCheckReport rep = run_gradient_checks(cfg.seed, 50);
    json fams = json::array();
    for (const auto& fam : rep.families)
        fams.push_back({{"name", fam.name}, {"worst", fam.worst}, {"pass", fam.pass}});
    suite["families"] = std::move(fams);
    suite["tolerance"] = rep.tolerance;
    suite["pass"] = rep.all_pass;
    ok = ok && rep.all_pass;
    return suite;
}

int cmd_verify(const RunConfig& cfg, const std::string& which) {
    DirectoryLock lock(cfg.output_dir);
    bool ok = true;
    json report;
    report["format_version"] = 1;
    report["config"] = json::parse(cfg.to_json_text());
    const bool all = which == "all";
    if (all || which == "weights") report["weights"] = weights_suite(cfg, ok);
    if (all || which == "pareto") report["pareto"] = pareto_suite(cfg, ok);
    if (all || which == "convergence") report["convergence"] = convergence_suite(cfg, ok);
    if (all || which == "gradients") report["gradients"] = gradients_suite(cfg, ok);
    report["pass"] = ok;
    detail::write_text_file(cfg.output_dir / "verify_report.json", report.dump(2) + "\n");
    std::printf("verify %s: %s\n", which.c_str(), ok ? "pass" : "FAIL");
    std::printf("report: %s\n", (cfg.output_dir / "verify_report.json").string().c_str());
    for (const auto& [key, value] : report.items()) {
        if (value.is_object() && value.contains("pass"))
            std::printf("  %-12s %s\n", key.c_str(), value["pass"].get<bool>() ? "pass" : "FAIL");
    }
    return ok ? 0 : 1;
}

int cmd_dialogue(const RunConfig& cfg, int rounds) {
    DirectoryLock lock(cfg.output_dir);
    const Denoiser den = make_denoiser(cfg.latent_dim, cfg.prompt_dim, cfg.beta_dm,
                                       split_stream(cfg.seed, Stream::DenoiserInit));
    const LoraAdapter lora = make_lora(cfg.latent_dim, cfg.prompt_dim, cfg.lora_rank,
                                       cfg.lora_alpha, cfg.lora_eta,
                                       split_stream(cfg.seed, Stream::LoraInit));
    const Scorer scorer = Scorer::zeros(cfg.prompt_dim, cfg.feature_dim, cfg.logit_dim,
                                        cfg.scorer_rank, cfg.scorer_alpha, cfg.seed);
    const FeatureExtractor extractor(cfg.feature_dim, cfg.latent_dim, cfg.seed);

    SeededRng setup = split_stream(cfg.seed, Stream::Dialogue);
    SyntheticUser user;
    user.gain = cfg.dialogue_gain;
    user.satisfaction_delta = cfg.dialogue_delta;
    user.psi_target = sample_gaussian(setup, cfg.prompt_dim, 1.0);
    Vec offset = sample_gaussian(setup, cfg.prompt_dim, 1.0);
    offset = scaled(offset, 1.0 / norm(offset)); // |psi_0 - psi*| = 1
    SeededRng loop_rng = setup.split(1);

    const int max_rounds = rounds > 0 ? rounds : cfg.dialogue_max_rounds;
    const DialogueResult result =
        run_dialogue(user, den, lora, scorer, extractor, cfg.noise_schedule,
                     cfg.reward_schedule, add(user.psi_target, offset), cfg.dialogue_blend,
                     max_rounds, loop_rng);

    write_dialogue_csv(result, cfg.output_dir / "dialogue.csv");
    json transcript;
    transcript["format_version"] = 1;
    transcript["config"] = json::parse(cfg.to_json_text());
    transcript["satisfied"] = result.satisfied;
    transcript["rounds_to_satisfaction"] = result.rounds_to_satisfaction;
    json rows = json::array();
    for (const DialogueRoundLog& row : result.rounds) {
        rows.push_back({{"round", row.round},
                        {"psi_distance", row.psi_distance},
                        {"r_div", row.breakdown.r_div},
                        {"r_cons", row.breakdown.r_cons},
                        {"r_mi", row.breakdown.r_mi},
                        {"lambda_div", row.breakdown.weights.div},
                        {"lambda_cons", row.breakdown.weights.cons},
                        {"lambda_mi", row.breakdown.weights.mi},
                        {"r_total", row.breakdown.total}});
    }
    transcript["rounds"] = std::move(rows);
    detail::write_text_file(cfg.output_dir / "dialogue_transcript.json",
                            transcript.dump(2) + "\n");

    std::printf("dialogue: %zu rounds simulated, satisfied=%s, rounds_to_satisfaction=%d\n",
                result.rounds.size(), result.satisfied ? "true" : "false",
                result.rounds_to_satisfaction);
    std::printf("series: %s\n", (cfg.output_dir / "dialogue.csv").string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-round preference-guided diffusion trainer (VCA) - desk-scale"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON run config (defaults apply when omitted)");
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out_dir, "override the output directory");

    CLI::App* synth = app.add_subcommand("synth-data", "write a synthetic dialogue dataset");
    CLI::App* train = app.add_subcommand("train", "train scorer then run the full loop");
    CLI::App* verify = app.add_subcommand(
        "verify", "run the convergence / Pareto / weights / gradients harnesses");
    std::string which = "all";
    verify->add_option("--which", which, "convergence|pareto|weights|gradients|all")
        ->check(CLI::IsMember({"convergence", "pareto", "weights", "gradients", "all"}));
    CLI::App* dialogue = app.add_subcommand("dialogue", "simulate a feedback dialogue");
    int rounds = 0;
    dialogue->add_option("--rounds", rounds, "maximum refinement rounds");

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = resolve_config(config_path, seed, out_dir);
        if (synth->parsed()) return cmd_synth_data(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (verify->parsed()) return cmd_verify(cfg, which);
        if (dialogue->parsed()) return cmd_dialogue(cfg, rounds);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
