#include "vca/run_config.hpp"

#include "vca/json_io.hpp"
#include "vca/theory_harness.hpp"

namespace vca {

using detail::json;

void RunConfig::validate() const {
    if (latent_dim == 0 || prompt_dim == 0 || feature_dim == 0 || logit_dim == 0)
        throw ConfigError("config: dims must all be >= 1");
    reward_schedule.validate();
    if (conv_allow_violations) {
        // Deliberate violation runs may break the contraction and decay
        // assumptions; only structural sanity is enforced.
        if (beta_dm <= 0.0) throw ConfigError("config: beta_dm must be > 0");
        if (noise_schedule.sigma0 < 0.0) throw ConfigError("config: sigma0 must be >= 0");
        if (noise_schedule.window_lo < 1 || noise_schedule.window_lo > noise_schedule.window_hi ||
            noise_schedule.window_hi > noise_schedule.steps)
            throw ConfigError("config: need 1 <= T1 <= T2 <= T");
    } else {
        noise_schedule.validate();
        if (beta_dm <= 0.0 || beta_dm >= 1.0)
            throw ConfigError("config: beta_dm must lie in (0, 1)");
    }
    if (lora_rank == 0) throw ConfigError("config: lora rank must be >= 1");
    if (lora_eta <= 0.0) throw ConfigError("config: lora eta must be > 0");
    ppo.validate();
    if (scorer_rank == 0) throw ConfigError("config: scorer rank must be >= 1");
    if (beta_dpo <= 0.0) throw ConfigError("config: beta_dpo must be > 0");
    if (scorer_lr <= 0.0) throw ConfigError("config: scorer lr must be > 0");
    if (scorer_epochs < 0) throw ConfigError("config: scorer epochs must be >= 0");
    if (scorer_batch == 0) throw ConfigError("config: scorer batch must be >= 1");
    if (lr_phi <= 0.0) throw ConfigError("config: lr_phi must be > 0");
    if (phi_update_interval < 1) throw ConfigError("config: phi_update_interval must be >= 1");
    if (dialogue_gain <= 0.0 || dialogue_gain > 1.0)
        throw ConfigError("config: dialogue gain must lie in (0, 1]");
    if (dialogue_blend < 0.0 || dialogue_blend > 1.0)
        throw ConfigError("config: dialogue blend must lie in [0, 1]");
    if (dialogue_delta <= 0.0) throw ConfigError("config: dialogue delta must be > 0");
    if (dialogue_max_rounds < 1) throw ConfigError("config: dialogue max rounds must be >= 1");
    if (!conv_allow_violations) {
        if (conv_alpha_p <= 0.0 || conv_alpha_p >= 1.0)
            throw ConfigError("config: convergence prompt rate must lie in (0, 1)");
    }
    if (conv_rounds < 2 || conv_trials < 1)
        throw ConfigError("config: convergence rounds/trials out of range");
    if (synth_dialogues == 0 || synth_rounds == 0)
        throw ConfigError("config: synthesis counts must be >= 1");
    if (synth_planted_margin <= 0.0)
        throw ConfigError("config: planted margin must be > 0");
    if (synth_train_fraction <= 0.0 || synth_train_fraction >= 1.0)
        throw ConfigError("config: train fraction must lie in (0, 1)");
}

namespace {

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_section_dims(const json& j, RunConfig& cfg) {
    detail::reject_unknown_keys(j, {"d", "m", "k", "h"}, "config.dims");
    read_into(j, "d", cfg.latent_dim);
    read_into(j, "m", cfg.prompt_dim);
    read_into(j, "k", cfg.feature_dim);
    read_into(j, "h", cfg.logit_dim);
}

} // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    detail::reject_unknown_keys(j,
                                {"seed", "dims", "reward_schedule", "noise_schedule", "dynamics",
                                 "lora", "ppo", "scorer", "train", "dialogue", "convergence",
                                 "data", "paths"},
                                "config");
    RunConfig cfg;
    read_into(j, "seed", cfg.seed);
    if (j.contains("dims")) parse_section_dims(j["dims"], cfg);
    if (j.contains("reward_schedule")) {
        const json& s = j["reward_schedule"];
        detail::reject_unknown_keys(s, {"alpha", "beta", "gamma"}, "config.reward_schedule");
        read_into(s, "alpha", cfg.reward_schedule.alpha);
        read_into(s, "beta", cfg.reward_schedule.beta);
        read_into(s, "gamma", cfg.reward_schedule.gamma);
    }
    if (j.contains("noise_schedule")) {
        const json& s = j["noise_schedule"];
        detail::reject_unknown_keys(s, {"sigma0", "p", "T", "T1", "T2"}, "config.noise_schedule");
        read_into(s, "sigma0", cfg.noise_schedule.sigma0);
        read_into(s, "p", cfg.noise_schedule.decay_exponent);
        read_into(s, "T", cfg.noise_schedule.steps);
        read_into(s, "T1", cfg.noise_schedule.window_lo);
        read_into(s, "T2", cfg.noise_schedule.window_hi);
    }
    if (j.contains("dynamics")) {
        const json& s = j["dynamics"];
        detail::reject_unknown_keys(s, {"beta_dm"}, "config.dynamics");
        read_into(s, "beta_dm", cfg.beta_dm);
    }
    if (j.contains("lora")) {
        const json& s = j["lora"];
        detail::reject_unknown_keys(s, {"rank", "alpha", "eta"}, "config.lora");
        read_into(s, "rank", cfg.lora_rank);
        read_into(s, "alpha", cfg.lora_alpha);
        read_into(s, "eta", cfg.lora_eta);
    }
    if (j.contains("ppo")) {
        const json& s = j["ppo"];
        detail::reject_unknown_keys(s, {"clip", "sigma_pol", "minibatch", "epochs"}, "config.ppo");
        read_into(s, "clip", cfg.ppo.clip);
        read_into(s, "sigma_pol", cfg.ppo.sigma_pol);
        read_into(s, "minibatch", cfg.ppo.minibatch);
        read_into(s, "epochs", cfg.ppo.epochs);
    }
    if (j.contains("scorer")) {
        const json& s = j["scorer"];
        detail::reject_unknown_keys(s, {"rank", "alpha", "beta_dpo", "lr", "epochs", "batch"},
                                    "config.scorer");
        read_into(s, "rank", cfg.scorer_rank);
        read_into(s, "alpha", cfg.scorer_alpha);
        read_into(s, "beta_dpo", cfg.beta_dpo);
        read_into(s, "lr", cfg.scorer_lr);
        read_into(s, "epochs", cfg.scorer_epochs);
        read_into(s, "batch", cfg.scorer_batch);
    }
    if (j.contains("train")) {
        const json& s = j["train"];
        detail::reject_unknown_keys(s, {"lr_phi", "phi_update_interval"}, "config.train");
        read_into(s, "lr_phi", cfg.lr_phi);
        read_into(s, "phi_update_interval", cfg.phi_update_interval);
    }
    if (j.contains("dialogue")) {
        const json& s = j["dialogue"];
        detail::reject_unknown_keys(s, {"gain", "blend", "delta", "max_rounds"}, "config.dialogue");
        read_into(s, "gain", cfg.dialogue_gain);
        read_into(s, "blend", cfg.dialogue_blend);
        read_into(s, "delta", cfg.dialogue_delta);
        read_into(s, "max_rounds", cfg.dialogue_max_rounds);
    }
    if (j.contains("convergence")) {
        const json& s = j["convergence"];
        detail::reject_unknown_keys(s, {"alpha_p", "psi_offset", "rounds", "trials",
                                        "allow_violations"},
                                    "config.convergence");
        read_into(s, "alpha_p", cfg.conv_alpha_p);
        read_into(s, "psi_offset", cfg.conv_psi_offset);
        read_into(s, "rounds", cfg.conv_rounds);
        read_into(s, "trials", cfg.conv_trials);
        read_into(s, "allow_violations", cfg.conv_allow_violations);
    }
    if (j.contains("data")) {
        const json& s = j["data"];
        detail::reject_unknown_keys(s,
                                    {"n_dialogues", "rounds_per_dialogue", "preference_pairs",
                                     "planted_margin", "planted_pull", "train_fraction"},
                                    "config.data");
        read_into(s, "n_dialogues", cfg.synth_dialogues);
        read_into(s, "rounds_per_dialogue", cfg.synth_rounds);
        read_into(s, "preference_pairs", cfg.synth_preference_pairs);
        read_into(s, "planted_margin", cfg.synth_planted_margin);
        read_into(s, "planted_pull", cfg.synth_planted_pull);
        read_into(s, "train_fraction", cfg.synth_train_fraction);
    }
    if (j.contains("paths")) {
        const json& s = j["paths"];
        detail::reject_unknown_keys(s, {"dataset_dir", "output_dir"}, "config.paths");
        if (s.contains("dataset_dir")) cfg.dataset_dir = s["dataset_dir"].get<std::string>();
        if (s.contains("output_dir")) cfg.output_dir = s["output_dir"].get<std::string>();
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("config: cannot open " + file.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string RunConfig::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["dims"] = {{"d", latent_dim}, {"m", prompt_dim}, {"k", feature_dim}, {"h", logit_dim}};
    j["reward_schedule"] = {{"alpha", reward_schedule.alpha},
                            {"beta", reward_schedule.beta},
                            {"gamma", reward_schedule.gamma}};
    j["noise_schedule"] = {{"sigma0", noise_schedule.sigma0},
                           {"p", noise_schedule.decay_exponent},
                           {"T", noise_schedule.steps},
                           {"T1", noise_schedule.window_lo},
                           {"T2", noise_schedule.window_hi}};
    j["dynamics"] = {{"beta_dm", beta_dm}};
    j["lora"] = {{"rank", lora_rank}, {"alpha", lora_alpha}, {"eta", lora_eta}};
    j["ppo"] = {{"clip", ppo.clip},
                {"sigma_pol", ppo.sigma_pol},
                {"minibatch", ppo.minibatch},
                {"epochs", ppo.epochs}};
    j["scorer"] = {{"rank", scorer_rank}, {"alpha", scorer_alpha}, {"beta_dpo", beta_dpo},
                   {"lr", scorer_lr},     {"epochs", scorer_epochs}, {"batch", scorer_batch}};
    j["train"] = {{"lr_phi", lr_phi}, {"phi_update_interval", phi_update_interval}};
    j["dialogue"] = {{"gain", dialogue_gain},
                     {"blend", dialogue_blend},
                     {"delta", dialogue_delta},
                     {"max_rounds", dialogue_max_rounds}};
    j["convergence"] = {{"alpha_p", conv_alpha_p},
                        {"psi_offset", conv_psi_offset},
                        {"rounds", conv_rounds},
                        {"trials", conv_trials},
                        {"allow_violations", conv_allow_violations}};
    j["data"] = {{"n_dialogues", synth_dialogues},
                 {"rounds_per_dialogue", synth_rounds},
                 {"preference_pairs", synth_preference_pairs},
                 {"planted_margin", synth_planted_margin},
                 {"planted_pull", synth_planted_pull},
                 {"train_fraction", synth_train_fraction}};
    j["paths"] = {{"dataset_dir", dataset_dir.string()}, {"output_dir", output_dir.string()}};
    return j.dump(2);
}

SynthOptions RunConfig::synth_options() const {
    SynthOptions opts;
    opts.n_dialogues = synth_dialogues;
    opts.rounds_per_dialogue = synth_rounds;
    opts.latent_dim = latent_dim;
    opts.prompt_dim = prompt_dim;
    opts.feature_dim = feature_dim;
    opts.n_preference_pairs = synth_preference_pairs;
    opts.planted_margin = synth_planted_margin;
    opts.planted_pull = synth_planted_pull;
    opts.train_fraction = synth_train_fraction;
    return opts;
}

ConvergenceConfig RunConfig::convergence_config() const {
    ConvergenceConfig c;
    c.latent_dim = latent_dim;
    c.embed_dim = prompt_dim;
    c.beta_dm = beta_dm;
    c.alpha_p = conv_alpha_p;
    c.psi_offset = conv_psi_offset;
    c.schedule = noise_schedule;
    c.rounds = conv_rounds;
    c.trials = conv_trials;
    c.seed = seed;
    c.allow_assumption_violations = conv_allow_violations;
    return c;
}

} // namespace vca
