#include "vca/dialogue_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vca/json_io.hpp"

namespace vca {

using detail::json;

Vec generate_feedback(const SyntheticUser& user, const Vec& psi) {
    if (psi.size() != user.psi_target.size())
        throw ArgumentError("generate_feedback: embedding length mismatch");
    return scaled(sub(user.psi_target, psi), user.gain);
}

Vec refine_prompt(const Vec& psi_prev, const Vec& feedback, double blend) {
    if (blend < 0.0 || blend > 1.0)
        throw ArgumentError("refine_prompt: blend must lie in [0, 1]");
    if (psi_prev.size() != feedback.size())
        throw ArgumentError("refine_prompt: feedback length mismatch");
    return add(psi_prev, scaled(feedback, blend));
}

DialogueResult run_dialogue(const SyntheticUser& user, const Denoiser& den,
                            const LoraAdapter& lora, const Scorer& scorer,
                            const FeatureExtractor& extractor, const NoiseSchedule& sched,
                            const RewardSchedule& reward_sched, const Vec& psi0,
                            double blend, int max_rounds, SeededRng& rng) {
    if (max_rounds < 1) throw ArgumentError("run_dialogue: max_rounds must be >= 1");
    sched.validate();
    if (sched.window_lo == sched.window_hi)
        throw ConfigError("run_dialogue: [T1, T2] must span at least two steps "
                          "(tau1 and tau2 have to differ)");
    reward_sched.validate();
    if (user.gain <= 0.0 || user.gain > 1.0)
        throw ArgumentError("run_dialogue: user gain must lie in (0, 1]");
    if (user.satisfaction_delta <= 0.0)
        throw ArgumentError("run_dialogue: satisfaction threshold must be > 0");

    const Denoiser den_eff = adapted_denoiser(den, lora);
    const std::size_t d = den.latent_dim();
    const std::size_t m = den.embed_dim();
    if (psi0.size() != m || user.psi_target.size() != m)
        throw ArgumentError("run_dialogue: embedding length mismatch");

    DialogueResult result;
    Vec psi = psi0;
    Vec prev_output; // empty before the first generation
    std::vector<Vec> features;

    for (int t = 1; t <= max_rounds + 1; ++t) {
        if (distance(psi, user.psi_target) < user.satisfaction_delta) {
            result.satisfied = true;
            result.rounds_to_satisfaction = t - 1;
            return result;
        }
        if (t > max_rounds) break;

        psi = refine_prompt(psi, generate_feedback(user, psi), blend);

        RoundConditioning ctx1, ctx2;
        ctx1.round_index = ctx2.round_index = t;
        ctx1.tau1 = static_cast<int>(rng.next_int(sched.window_lo, sched.window_hi));
        int tau2 = static_cast<int>(rng.next_int(sched.window_lo, sched.window_hi));
        while (tau2 == ctx1.tau1)
            tau2 = static_cast<int>(rng.next_int(sched.window_lo, sched.window_hi));
        ctx1.tau2 = ctx2.tau2 = tau2;
        ctx2.tau1 = ctx1.tau1;
        ctx1.code = sample_gaussian(rng, m, 0.1);
        ctx2.code = sample_gaussian(rng, m, 0.1);

        // Round 1 starts from a fresh standard-normal latent; later rounds
        // re-noise the previous output at the round's first noise step.
        Vec z_start;
        if (prev_output.empty()) {
            z_start = sample_gaussian(rng, d, 1.0);
        } else {
            z_start = prev_output;
            const Vec eps = sample_gaussian(rng, d, sched.sigma(ctx1.tau1));
            for (std::size_t i = 0; i < d; ++i) z_start[i] += eps[i];
        }
        const Vec out = compose_two_stage(den_eff, z_start, psi, ctx1, ctx2, sched, rng);
        prev_output = out;

        features.push_back(extractor(out));
        const double r_div = features.size() >= 2 ? diversity_reward(features) : 0.0;
        const double r_cons = features.size() >= 2 ? consistency_reward(features) : 0.0;
        const double r_mi = mi_reward(scorer, psi, features.back());

        DialogueRoundLog row;
        row.round = t;
        row.psi_distance = distance(psi, user.psi_target);
        row.breakdown = total_reward(reward_sched, static_cast<double>(t), r_div, r_cons, r_mi);
        result.rounds.push_back(std::move(row));
    }
    return result;
}

namespace {

json round_to_json(const DialogueRound& r) {
    json j;
    j["prompt_embedding"] = detail::vec_to_json(r.prompt_embedding);
    j["target_feature"] = detail::vec_to_json(r.target_feature);
    if (r.preference_label) j["preference_label"] = *r.preference_label;
    return j;
}

DialogueRecord record_from_json(const json& j) {
    if (!j.is_object()) throw DatasetError("dialogue file: expected a JSON object");
    detail::reject_unknown_keys(j, {"dialogue_id", "rounds"}, "dialogue file");
    if (!j.contains("dialogue_id") || !j["dialogue_id"].is_string())
        throw DatasetError("dialogue file: missing dialogue_id");
    if (!j.contains("rounds") || !j["rounds"].is_array() || j["rounds"].empty())
        throw DatasetError("dialogue file: needs at least one round");

    DialogueRecord rec;
    rec.dialogue_id = j["dialogue_id"].get<std::string>();
    for (const auto& jr : j["rounds"]) {
        detail::reject_unknown_keys(jr, {"prompt_embedding", "target_feature", "preference_label"},
                                    "dialogue round");
        DialogueRound r;
        r.prompt_embedding = detail::vec_from_json(jr.at("prompt_embedding"), "prompt_embedding");
        r.target_feature = detail::vec_from_json(jr.at("target_feature"), "target_feature");
        if (jr.contains("preference_label")) {
            const int label = jr["preference_label"].get<int>();
            if (label != 0 && label != 1)
                throw DatasetError("dialogue round: preference_label must be 0 or 1");
            r.preference_label = label;
        }
        if (r.prompt_embedding.empty() || r.target_feature.empty())
            throw DatasetError("dialogue round: empty vector");
        rec.rounds.push_back(std::move(r));
    }
    for (const DialogueRound& r : rec.rounds) {
        if (r.prompt_embedding.size() != rec.rounds.front().prompt_embedding.size() ||
            r.target_feature.size() != rec.rounds.front().target_feature.size())
            throw DatasetError("dialogue file: inconsistent vector lengths across rounds");
    }
    return rec;
}

} // namespace

void save_dialogue_record(const DialogueRecord& rec, const std::filesystem::path& file) {
    json j;
    j["dialogue_id"] = rec.dialogue_id;
    json rounds = json::array();
    for (const DialogueRound& r : rec.rounds) rounds.push_back(round_to_json(r));
    j["rounds"] = std::move(rounds);
    detail::write_text_file(file, j.dump(2) + "\n");
}

LoadReport load_dialogues(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw IoError("load_dialogues: not a readable directory: " + dir.string());

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json" &&
            entry.path().filename().string().rfind("dlg", 0) == 0)
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    LoadReport report;
    for (const auto& file : files) {
        try {
            report.records.push_back(record_from_json(detail::load_json_file(file)));
        } catch (const std::exception& e) {
            report.issues.push_back(file.filename().string() + ": " + e.what());
        }
    }
    if (report.records.empty())
        throw DatasetError("load_dialogues: no valid dialogue records under " + dir.string());
    return report;
}

void save_preference_pairs(const std::vector<PreferencePair>& pairs,
                           const std::filesystem::path& file) {
    json arr = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        json j;
        char id[32];
        std::snprintf(id, sizeof id, "pref-%05zu", i);
        j["dialogue_id"] = id;
        j["prompt_embedding"] = detail::vec_to_json(pairs[i].prompt_embedding);
        j["positive_feature"] = detail::vec_to_json(pairs[i].positive_feature);
        j["negative_feature"] = detail::vec_to_json(pairs[i].negative_feature);
        arr.push_back(std::move(j));
    }
    detail::write_text_file(file, arr.dump(2) + "\n");
}

std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& file) {
    const json arr = detail::load_json_file(file);
    if (!arr.is_array() || arr.empty())
        throw DatasetError("preference file: expected a non-empty array");
    std::vector<PreferencePair> pairs;
    for (const auto& j : arr) {
        detail::reject_unknown_keys(
            j, {"dialogue_id", "prompt_embedding", "positive_feature", "negative_feature"},
            "preference pair");
        PreferencePair p;
        p.prompt_embedding = detail::vec_from_json(j.at("prompt_embedding"), "prompt_embedding");
        p.positive_feature = detail::vec_from_json(j.at("positive_feature"), "positive_feature");
        p.negative_feature = detail::vec_from_json(j.at("negative_feature"), "negative_feature");
        if (p.positive_feature.size() != p.negative_feature.size())
            throw DatasetError("preference pair: feature length mismatch");
        if (!pairs.empty() &&
            (p.prompt_embedding.size() != pairs.front().prompt_embedding.size() ||
             p.positive_feature.size() != pairs.front().positive_feature.size()))
            throw DatasetError("preference file: inconsistent vector lengths");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

SplitManifest load_split_manifest(const std::filesystem::path& file) {
    const json j = detail::load_json_file(file);
    detail::reject_unknown_keys(j, {"train", "test"}, "split manifest");
    SplitManifest m;
    for (const auto& id : j.at("train")) m.train.push_back(id.get<std::string>());
    for (const auto& id : j.at("test")) m.test.push_back(id.get<std::string>());
    return m;
}

SynthResult synthesize_dataset(const SynthOptions& opts, Vec planted_direction,
                               const FeatureExtractor& extractor,
                               const std::filesystem::path& out_dir, SeededRng& rng) {
    if (opts.n_dialogues < 1) throw ArgumentError("synthesize_dataset: need n >= 1 dialogues");
    if (opts.rounds_per_dialogue < 1)
        throw ArgumentError("synthesize_dataset: need at least one round per dialogue");
    if (opts.planted_margin <= 0.0)
        throw ArgumentError("synthesize_dataset: planted margin must be > 0");
    if (extractor.feature_dim() != opts.feature_dim ||
        extractor.latent_dim() != opts.latent_dim)
        throw ArgumentError("synthesize_dataset: extractor dimensions disagree with options");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw IoError("synthesize_dataset: cannot create " + out_dir.string());

    if (planted_direction.empty())
        planted_direction = sample_gaussian(rng, opts.feature_dim, 1.0);
    if (planted_direction.size() != opts.feature_dim)
        throw ArgumentError("synthesize_dataset: planted direction length mismatch");
    const double dn = norm(planted_direction);
    if (dn == 0.0) throw DegenerateInputError("synthesize_dataset: zero planted direction");
    planted_direction = scaled(planted_direction, 1.0 / dn);

    // Latent direction whose extracted feature leans along the planted one.
    Vec latent_pull = matvec_transposed(extractor.projection(), planted_direction);
    const double lp_norm = norm(latent_pull);
    if (lp_norm > 0.0) latent_pull = scaled(latent_pull, 1.0 / lp_norm);

    // Shared anchor component in every prompt. Real prompt-embedding spaces
    // are not centered, and the anchor is what lets a bias-free linear
    // denoiser express the constant planted component of the targets.
    Vec prompt_anchor = sample_gaussian(rng, opts.prompt_dim, 1.0);
    const double pa_norm = norm(prompt_anchor);
    if (pa_norm > 0.0) prompt_anchor = scaled(prompt_anchor, 1.0 / pa_norm);

    SynthResult result;
    result.planted_direction = planted_direction;

    std::vector<std::string> ids;
    for (std::size_t i = 0; i < opts.n_dialogues; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "dlg-%05zu", i);
        DialogueRecord rec;
        rec.dialogue_id = name;

        Vec psi_base = add(prompt_anchor, sample_gaussian(rng, opts.prompt_dim, 0.5));
        Vec target_base = sample_gaussian(rng, opts.latent_dim, 0.5);
        for (std::size_t c = 0; c < target_base.size(); ++c)
            target_base[c] += opts.planted_pull * latent_pull[c];

        for (std::size_t r = 0; r < opts.rounds_per_dialogue; ++r) {
            DialogueRound round;
            round.prompt_embedding = add(psi_base, sample_gaussian(rng, opts.prompt_dim, 0.05));
            round.target_feature = add(target_base, sample_gaussian(rng, opts.latent_dim, 0.05));
            round.preference_label = 1;
            rec.rounds.push_back(std::move(round));
        }
        save_dialogue_record(rec, out_dir / (std::string(name) + ".json"));
        ids.push_back(name);
        ++result.dialogue_files;
    }

    std::vector<PreferencePair> pairs;
    for (std::size_t i = 0; i < opts.n_preference_pairs; ++i) {
        PreferencePair p;
        p.prompt_embedding = sample_gaussian(rng, opts.prompt_dim, 1.0);
        const Vec base = sample_gaussian(rng, opts.feature_dim, 1.0);
        const double margin = opts.planted_margin * (0.5 + rng.next_double());
        p.positive_feature = add(base, scaled(planted_direction, margin));
        p.negative_feature = sub(base, scaled(planted_direction, margin));
        pairs.push_back(std::move(p));
    }
    result.preference_file = out_dir / "preference_pairs.json";
    save_preference_pairs(pairs, result.preference_file);
    result.preference_pairs = pairs.size();

    // 80/20 split over a shuffled copy of the dialogue ids; manifest last so
    // an interrupted run never leaves a manifest over partial data.
    std::vector<std::string> shuffled = ids;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(shuffled[i - 1], shuffled[j]);
    }
    const std::size_t n_train = static_cast<std::size_t>(
        std::ceil(opts.train_fraction * static_cast<double>(shuffled.size())));
    json manifest;
    manifest["train"] = std::vector<std::string>(shuffled.begin(), shuffled.begin() + n_train);
    manifest["test"] = std::vector<std::string>(shuffled.begin() + n_train, shuffled.end());
    result.manifest_file = out_dir / "split_manifest.json";
    detail::write_text_file(result.manifest_file, manifest.dump(2) + "\n");
    return result;
}

} // namespace vca
