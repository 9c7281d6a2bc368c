#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vca/core_math.hpp"
#include "vca/latent_dynamics.hpp"
#include "vca/preference_model.hpp"
#include "vca/rewards.hpp"

namespace vca {

struct DialogueRecord; // dialogue_sim.hpp

/// Low-rank adapter on the denoiser weights. up (B, d x r) starts at zero and
/// down (A, r x (d+m)) at a small Gaussian, so the initial update is zero.
/// The product enters as (alpha_lora / r) * B * A.
struct LoraAdapter {
    Mat up;             // B
    Mat down;           // A
    double alpha_lora = 4.0;
    double learning_rate = 0.05; // eta

    std::size_t rank() const { return up.cols(); }
    double scale() const { return alpha_lora / static_cast<double>(rank()); }
};

LoraAdapter make_lora(std::size_t d, std::size_t m, std::size_t rank, double alpha_lora,
                      double learning_rate, SeededRng rng);

struct PpoConfig {
    double clip = 0.2;       // epsilon, in (0, 1)
    double sigma_pol = 0.1;  // policy stddev around the denoiser output
    std::size_t minibatch = 8;
    int epochs = 4;

    void validate() const;
};

/// PPO bookkeeping for one collected step. old_logprob is the Gaussian
/// log-density of `action` under the behavior policy at collection time.
struct TransitionRecord {
    Vec z;
    Vec psi;
    RoundConditioning ctx;
    Vec action;
    double old_logprob = 0.0;
    double advantage = 0.0;
};

/// phi + (alpha_lora / r) * B * A.
Mat effective_weights(const Mat& phi, const LoraAdapter& lora);

/// Denoiser view with the adapter folded into phi. The contraction bound is
/// not re-imposed here: it governs the base weights, and rescaling the
/// adapted map would silently distort the policy.
Denoiser adapted_denoiser(const Denoiser& den, const LoraAdapter& lora);

/// Log-density of `action` under N(denoise_step(den_eff, ...), sigma_pol^2 I).
double policy_logprob(const Denoiser& den_eff, const Vec& z, const Vec& psi,
                      const RoundConditioning& ctx, const Vec& action, double sigma_pol);

struct AdapterGrads {
    double value = 0.0;
    Mat d_up;
    Mat d_down;
};

/// policy_logprob together with its gradient through the adapter factors.
AdapterGrads policy_logprob_adapter_grads(const Denoiser& den, const LoraAdapter& lora,
                                          const Vec& z, const Vec& psi,
                                          const RoundConditioning& ctx, const Vec& action,
                                          double sigma_pol);

/// Clipped surrogate min(rho * adv, clip(rho, 1-eps, 1+eps) * adv) with
/// rho = exp(new_lp - old_lp).
double ppo_surrogate(double new_lp, double old_lp, double advantage, double eps);

/// Surrogate value and its gradient through (B, A) for one transition,
/// evaluated at the current adapter. Zero gradient on the flat clipped branch.
AdapterGrads ppo_surrogate_adapter_grads(const Denoiser& den, const LoraAdapter& lora,
                                         const TransitionRecord& tr, const PpoConfig& cfg);

/// One PPO update: ascends the mean clipped surrogate over the batch for
/// cfg.epochs passes (minibatches taken in order). Only (B, A) change; the
/// base weights are read-only here.
LoraAdapter apply_reward_step(const LoraAdapter& lora, const Denoiser& den,
                              std::span<const TransitionRecord> batch, const PpoConfig& cfg);

/// Reconstruction distance |target_prev - DM(z, psi, ctx)| under the
/// effective (adapted) weights. Reduces to one_step_loss for a zero adapter.
double bce_reconstruction_loss(const Vec& target_prev, const Denoiser& den,
                               const LoraAdapter& lora, const Vec& z, const Vec& psi,
                               const RoundConditioning& ctx);

AdapterGrads bce_adapter_grads(const Vec& target_prev, const Denoiser& den,
                               const LoraAdapter& lora, const Vec& z, const Vec& psi,
                               const RoundConditioning& ctx);

/// One descent step on |x0_pred - target|^2 with respect to phi, with the
/// adapter held fixed (the gradient flows through the effective weights, in
/// which phi enters additively). Updates den.phi in place and re-imposes
/// the contraction bound on the z-block. Returns the pre-update loss.
double noise_loss_step(Denoiser& den, const LoraAdapter& lora, const Vec& z,
                       const Vec& psi, const RoundConditioning& ctx, const Vec& x0_pred,
                       const Vec& target, double lr_phi);

struct TrainLoopConfig {
    PpoConfig ppo;
    double lr_phi = 0.005;
    int phi_update_interval = 1; // noise-loss step every N items
};

/// Per-item training log row. round lives inside the breakdown.
struct ItemMetrics {
    std::size_t item = 0;
    RewardBreakdown breakdown;
    double l_noise = 0.0;
    double l_bce = 0.0;
};

/// Called after each processed item with the post-update parameters.
using TrainObserver = std::function<void(const Denoiser&, const LoraAdapter&, std::size_t)>;

/// Full training pass over the dialogue dataset. Each dialogue round is one
/// item: draw a timestep t uniform in the schedule window, roll z down from
/// z_T ~ N(0, I) under the adapted denoiser, sample the final step from the
/// Gaussian policy, score the realized latent with the dialogue-so-far
/// diversity/consistency features and the preference scorer, PPO-update the
/// adapter against a running-mean baseline, then take the phi noise-loss
/// step toward the round's target feature.
std::vector<ItemMetrics> training_loop(const std::vector<DialogueRecord>& dataset,
                                       Denoiser& den, LoraAdapter& lora,
                                       const Scorer& scorer,
                                       const FeatureExtractor& extractor,
                                       const NoiseSchedule& sched,
                                       const RewardSchedule& reward_sched,
                                       const TrainLoopConfig& cfg, SeededRng& rng,
                                       const TrainObserver& on_item = {});

} // namespace vca
