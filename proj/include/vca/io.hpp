#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vca/adaptation.hpp"
#include "vca/dialogue_sim.hpp"
#include "vca/preference_model.hpp"
#include "vca/theory_harness.hpp"

namespace vca {

/// Shortest-round-trip decimal formatting (%.17g) so CSV output is both
/// bit-reproducible and exactly re-parseable.
std::string format_double(double x);

void save_scorer(const Scorer& sc, const std::filesystem::path& file);
Scorer load_scorer(const std::filesystem::path& file);

struct TrainingCheckpoint {
    Denoiser den;
    LoraAdapter lora;
    std::uint64_t seed = 0;
    std::uint64_t items_processed = 0;
};

void save_training_checkpoint(const TrainingCheckpoint& ckpt,
                              const std::filesystem::path& file);
TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& file);

/// Columns: item,t,r_div,r_cons,r_mi,lambda_div,lambda_cons,lambda_mi,
/// r_total,l_noise,l_bce
void write_metrics_csv(const std::vector<ItemMetrics>& log,
                       const std::filesystem::path& file);

/// Per-round dialogue series: round,lambda_div,lambda_cons,lambda_mi,
/// r_div,r_cons,r_mi,r_total,psi_distance
void write_dialogue_csv(const DialogueResult& result, const std::filesystem::path& file);

/// Per-round convergence series: round,mean_error,sigma,w2
void write_convergence_csv(const ConvergenceReport& report,
                           const std::filesystem::path& file);

} // namespace vca
