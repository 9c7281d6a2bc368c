#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vca/adaptation.hpp"
#include "vca/dialogue_sim.hpp"
#include "vca/latent_dynamics.hpp"
#include "vca/rewards.hpp"
#include "vca/theory_harness.hpp"

namespace vca {

/// Resolved run configuration. The JSON config file mirrors this structure;
/// unknown keys are hard errors so a typo in a schedule constant cannot
/// silently change a run. All randomness flows from `seed` through the
/// documented stream splits in core_math.
struct RunConfig {
    std::uint64_t seed = 42;

    // dims
    std::size_t latent_dim = 8;  // d
    std::size_t prompt_dim = 16; // m
    std::size_t feature_dim = 16; // k
    std::size_t logit_dim = 8;   // h

    RewardSchedule reward_schedule; // alpha = 0.15, beta = 0.1, gamma = 0.075
    NoiseSchedule noise_schedule;   // sigma0 = 1, p = 1.5, T = 70, [T1, T2] = [1, 40]
    double beta_dm = 0.5;

    // lora (rank 4, alpha 4 -> unit adapter scale)
    std::size_t lora_rank = 4;
    double lora_alpha = 4.0;
    double lora_eta = 0.001;

    PpoConfig ppo;

    // scorer (rank 8 with alpha_s = 2 keeps the reference 16/64 adapter scale)
    std::size_t scorer_rank = 8;
    double scorer_alpha = 2.0;
    double beta_dpo = 1.0;
    double scorer_lr = 0.3;
    int scorer_epochs = 50;
    std::size_t scorer_batch = 32;

    // training loop
    double lr_phi = 0.005;
    int phi_update_interval = 1;

    // dialogue simulation
    double dialogue_gain = 0.2;
    double dialogue_blend = 1.0;
    double dialogue_delta = 0.05;
    int dialogue_max_rounds = 40;

    // convergence harness
    double conv_alpha_p = 0.8;
    double conv_psi_offset = 1.0;
    int conv_rounds = 200;
    int conv_trials = 32;
    bool conv_allow_violations = false;

    // dataset synthesis
    std::size_t synth_dialogues = 10;
    std::size_t synth_rounds = 5;
    std::size_t synth_preference_pairs = 200;
    double synth_planted_margin = 1.0;
    double synth_planted_pull = 2.0;
    double synth_train_fraction = 0.8;

    std::filesystem::path dataset_dir = "data";
    std::filesystem::path output_dir = "out";

    void validate() const;

    static RunConfig from_file(const std::filesystem::path& file);
    static RunConfig from_json_text(const std::string& text);
    /// Full resolved config as JSON text (embedded into every report).
    std::string to_json_text() const;

    SynthOptions synth_options() const;
    ConvergenceConfig convergence_config() const;
};

} // namespace vca
