#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vca/adaptation.hpp"
#include "vca/core_math.hpp"
#include "vca/latent_dynamics.hpp"
#include "vca/preference_model.hpp"
#include "vca/rewards.hpp"

namespace vca {

/// Linear synthetic user: intent is a fixed target embedding, feedback is
/// gain * (target - current). With blend rho the refinement contracts the
/// prompt gap by (1 - rho * gain) per round.
struct SyntheticUser {
    Vec psi_target;
    double gain = 0.2;                // in (0, 1]
    double satisfaction_delta = 0.05; // stop when |psi - target| < delta
};

Vec generate_feedback(const SyntheticUser& user, const Vec& psi);

/// psi_next = psi_prev + blend * feedback, blend in [0, 1].
Vec refine_prompt(const Vec& psi_prev, const Vec& feedback, double blend);

struct DialogueRoundLog {
    int round = 0;
    double psi_distance = 0.0; // |psi_t - psi_target| after refinement
    RewardBreakdown breakdown;
};

struct DialogueResult {
    std::vector<DialogueRoundLog> rounds;
    int rounds_to_satisfaction = -1; // -1 when never satisfied
    bool satisfied = false;
};

/// Multi-round loop: refine the prompt from user feedback, generate via the
/// two-stage composition under the adapted denoiser, score the output, and
/// stop once the prompt gap drops under the user's threshold.
DialogueResult run_dialogue(const SyntheticUser& user, const Denoiser& den,
                            const LoraAdapter& lora, const Scorer& scorer,
                            const FeatureExtractor& extractor, const NoiseSchedule& sched,
                            const RewardSchedule& reward_sched, const Vec& psi0,
                            double blend, int max_rounds, SeededRng& rng);

struct DialogueRound {
    Vec prompt_embedding;
    Vec target_feature;
    std::optional<int> preference_label; // 0 or 1 when present
};

struct DialogueRecord {
    std::string dialogue_id;
    std::vector<DialogueRound> rounds;
};

struct LoadReport {
    std::vector<DialogueRecord> records;
    std::vector<std::string> issues; // "<file>: <first violated invariant>"
};

void save_dialogue_record(const DialogueRecord& rec, const std::filesystem::path& file);

/// Loads every *.json dialogue file under `dir`. Malformed files are
/// reported in issues and skipped; throws DatasetError if nothing valid
/// remains, IoError if the directory cannot be read.
LoadReport load_dialogues(const std::filesystem::path& dir);

void save_preference_pairs(const std::vector<PreferencePair>& pairs,
                           const std::filesystem::path& file);
std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& file);

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

SplitManifest load_split_manifest(const std::filesystem::path& file);

struct SynthOptions {
    std::size_t n_dialogues = 10;
    std::size_t rounds_per_dialogue = 5;
    std::size_t latent_dim = 8;
    std::size_t prompt_dim = 16;
    std::size_t feature_dim = 16;
    std::size_t n_preference_pairs = 200;
    double planted_margin = 1.0;  // preference-pair separation along the direction
    double planted_pull = 2.0;    // how strongly dialogue targets lean that way
    double train_fraction = 0.8;
};

struct SynthResult {
    std::size_t dialogue_files = 0;
    std::size_t preference_pairs = 0;
    Vec planted_direction; // unit vector in feature space
    std::filesystem::path manifest_file;
    std::filesystem::path preference_file;
};

/// Writes n dialogue JSON files, the single preference-pair JSON and the
/// train/test split manifest (written last). Positive features always
/// project higher than negatives onto the planted direction. Dialogue
/// targets lean toward a latent whose extracted feature aligns with the
/// planted direction, so preference-guided training has signal to find.
/// Pass an empty direction to have one drawn from the rng.
SynthResult synthesize_dataset(const SynthOptions& opts, Vec planted_direction,
                               const FeatureExtractor& extractor,
                               const std::filesystem::path& out_dir, SeededRng& rng);

} // namespace vca
