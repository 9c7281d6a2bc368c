#include "vca/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vca/dialogue_sim.hpp"

namespace vca {

void PpoConfig::validate() const {
    if (clip <= 0.0 || clip >= 1.0) throw ConfigError("ppo: clip must lie in (0, 1)");
    if (sigma_pol <= 0.0) throw ConfigError("ppo: sigma_pol must be > 0");
    if (minibatch == 0) throw ConfigError("ppo: minibatch must be >= 1");
    if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
}

LoraAdapter make_lora(std::size_t d, std::size_t m, std::size_t rank, double alpha_lora,
                      double learning_rate, SeededRng rng) {
    if (rank == 0) throw ArgumentError("make_lora: rank must be >= 1");
    if (learning_rate <= 0.0) throw ArgumentError("make_lora: learning rate must be > 0");
    LoraAdapter lora;
    lora.alpha_lora = alpha_lora;
    lora.learning_rate = learning_rate;
    lora.up = Mat(d, rank, 0.0);
    lora.down = Mat(rank, d + m);
    for (double& x : lora.down.data()) x = 0.05 * rng.next_gaussian();
    return lora;
}

Mat effective_weights(const Mat& phi, const LoraAdapter& lora) {
    if (lora.up.rows() != phi.rows() || lora.down.cols() != phi.cols())
        throw ArgumentError("effective_weights: adapter shape mismatch");
    return mat_add(phi, mat_scaled(matmul(lora.up, lora.down), lora.scale()));
}

Denoiser adapted_denoiser(const Denoiser& den, const LoraAdapter& lora) {
    Denoiser out = den;
    out.phi = effective_weights(den.phi, lora);
    return out;
}

double policy_logprob(const Denoiser& den_eff, const Vec& z, const Vec& psi,
                      const RoundConditioning& ctx, const Vec& action, double sigma_pol) {
    if (sigma_pol <= 0.0) throw ArgumentError("policy_logprob: sigma_pol must be > 0");
    const Vec mean = denoise_step(den_eff, z, psi, ctx);
    if (action.size() != mean.size()) throw ArgumentError("policy_logprob: action length mismatch");
    const double d = static_cast<double>(mean.size());
    const double var = sigma_pol * sigma_pol;
    double sq = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double r = action[i] - mean[i];
        sq += r * r;
    }
    return -0.5 * d * std::log(2.0 * std::numbers::pi * var) - sq / (2.0 * var);
}

AdapterGrads policy_logprob_adapter_grads(const Denoiser& den, const LoraAdapter& lora,
                                          const Vec& z, const Vec& psi,
                                          const RoundConditioning& ctx, const Vec& action,
                                          double sigma_pol) {
    const Denoiser den_eff = adapted_denoiser(den, lora);
    const Vec u = denoiser_input(den_eff, z, psi, ctx);
    const Vec mean = denoise_step(den_eff, z, psi, ctx);
    const double var = sigma_pol * sigma_pol;

    AdapterGrads g;
    g.value = policy_logprob(den_eff, z, psi, ctx, action, sigma_pol);
    // d lp / d mean = (action - mean) / var; mean = (phi + s B A) u + bias.
    Vec gmean(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) gmean[i] = (action[i] - mean[i]) / var;
    const Vec a_u = matvec(lora.down, u);
    const Vec bt_g = matvec_transposed(lora.up, gmean);
    g.d_up = mat_scaled(outer(gmean, a_u), lora.scale());
    g.d_down = mat_scaled(outer(bt_g, u), lora.scale());
    return g;
}

double ppo_surrogate(double new_lp, double old_lp, double advantage, double eps) {
    if (eps <= 0.0 || eps >= 1.0) throw ArgumentError("ppo_surrogate: eps must lie in (0, 1)");
    const double rho = std::exp(new_lp - old_lp);
    const double unclipped = rho * advantage;
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps) * advantage;
    return std::min(unclipped, clipped);
}

AdapterGrads ppo_surrogate_adapter_grads(const Denoiser& den, const LoraAdapter& lora,
                                         const TransitionRecord& tr, const PpoConfig& cfg) {
    AdapterGrads lp = policy_logprob_adapter_grads(den, lora, tr.z, tr.psi, tr.ctx,
                                                   tr.action, cfg.sigma_pol);
    const double rho = std::exp(lp.value - tr.old_logprob);
    const double unclipped = rho * tr.advantage;
    const double clipped = std::clamp(rho, 1.0 - cfg.clip, 1.0 + cfg.clip) * tr.advantage;

    AdapterGrads g;
    g.value = std::min(unclipped, clipped);
    // d surrogate / d new_lp is rho * adv on the unclipped branch and exactly
    // zero on the flat clipped branch.
    const double dsurr_dlp = unclipped <= clipped ? rho * tr.advantage : 0.0;
    g.d_up = mat_scaled(lp.d_up, dsurr_dlp);
    g.d_down = mat_scaled(lp.d_down, dsurr_dlp);
    return g;
}

LoraAdapter apply_reward_step(const LoraAdapter& lora, const Denoiser& den,
                              std::span<const TransitionRecord> batch, const PpoConfig& cfg) {
    cfg.validate();
    if (batch.empty()) throw ArgumentError("apply_reward_step: empty batch");
    LoraAdapter out = lora;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < batch.size(); start += cfg.minibatch) {
            const std::size_t end = std::min(batch.size(), start + cfg.minibatch);
            Mat g_up(out.up.rows(), out.up.cols());
            Mat g_down(out.down.rows(), out.down.cols());
            for (std::size_t i = start; i < end; ++i) {
                const AdapterGrads g = ppo_surrogate_adapter_grads(den, out, batch[i], cfg);
                g_up = mat_add(g_up, g.d_up);
                g_down = mat_add(g_down, g.d_down);
            }
            const double step = out.learning_rate / static_cast<double>(end - start);
            for (std::size_t i = 0; i < g_up.data().size(); ++i)
                out.up.data()[i] += step * g_up.data()[i];
            for (std::size_t i = 0; i < g_down.data().size(); ++i)
                out.down.data()[i] += step * g_down.data()[i];
        }
    }
    return out;
}

double bce_reconstruction_loss(const Vec& target_prev, const Denoiser& den,
                               const LoraAdapter& lora, const Vec& z, const Vec& psi,
                               const RoundConditioning& ctx) {
    const Denoiser den_eff = adapted_denoiser(den, lora);
    return one_step_loss(target_prev, den_eff, z, psi, ctx);
}

AdapterGrads bce_adapter_grads(const Vec& target_prev, const Denoiser& den,
                               const LoraAdapter& lora, const Vec& z, const Vec& psi,
                               const RoundConditioning& ctx) {
    const Denoiser den_eff = adapted_denoiser(den, lora);
    const Vec u = denoiser_input(den_eff, z, psi, ctx);
    const Vec pred = denoise_step(den_eff, z, psi, ctx);
    Vec r = sub(target_prev, pred);
    const double rn = norm(r);

    AdapterGrads g;
    g.value = rn;
    g.d_up = Mat(lora.up.rows(), lora.up.cols());
    g.d_down = Mat(lora.down.rows(), lora.down.cols());
    if (rn == 0.0) return g;
    Vec dmu(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) dmu[i] = -r[i] / rn;
    const Vec a_u = matvec(lora.down, u);
    const Vec bt_g = matvec_transposed(lora.up, dmu);
    g.d_up = mat_scaled(outer(dmu, a_u), lora.scale());
    g.d_down = mat_scaled(outer(bt_g, u), lora.scale());
    return g;
}

double noise_loss_step(Denoiser& den, const LoraAdapter& lora, const Vec& z,
                       const Vec& psi, const RoundConditioning& ctx, const Vec& x0_pred,
                       const Vec& target, double lr_phi) {
    if (lr_phi <= 0.0) throw ArgumentError("noise_loss_step: lr_phi must be > 0");
    if (x0_pred.size() != target.size() || x0_pred.size() != den.latent_dim())
        throw ArgumentError("noise_loss_step: dimension mismatch");
    const Denoiser den_eff = adapted_denoiser(den, lora);
    const Vec u = denoiser_input(den_eff, z, psi, ctx);

    double loss = 0.0;
    Vec r(x0_pred.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = x0_pred[i] - target[i];
        loss += r[i] * r[i];
    }
    if (loss == 0.0) return 0.0; // zero gradient, phi bit-identical

    // d |x0 - target|^2 / d phi = 2 r u^T (adapter fixed, additive in phi).
    for (std::size_t row = 0; row < den.phi.rows(); ++row)
        for (std::size_t col = 0; col < den.phi.cols(); ++col)
            den.phi(row, col) -= lr_phi * 2.0 * r[row] * u[col];
    enforce_contraction(den);
    return loss;
}

std::vector<ItemMetrics> training_loop(const std::vector<DialogueRecord>& dataset,
                                       Denoiser& den, LoraAdapter& lora,
                                       const Scorer& scorer,
                                       const FeatureExtractor& extractor,
                                       const NoiseSchedule& sched,
                                       const RewardSchedule& reward_sched,
                                       const TrainLoopConfig& cfg, SeededRng& rng,
                                       const TrainObserver& on_item) {
    cfg.ppo.validate();
    sched.validate();
    reward_sched.validate();
    if (cfg.phi_update_interval < 1)
        throw ConfigError("training_loop: phi_update_interval must be >= 1");

    std::vector<ItemMetrics> log;
    const std::size_t d = den.latent_dim();
    double baseline_sum = 0.0;
    std::size_t baseline_count = 0;
    std::size_t item = 0;

    for (const DialogueRecord& rec : dataset) {
        std::vector<Vec> features; // f(x0) history within this dialogue
        for (std::size_t r = 0; r < rec.rounds.size(); ++r) {
            const DialogueRound& round = rec.rounds[r];
            RoundConditioning ctx;
            ctx.round_index = static_cast<int>(r) + 1;
            ctx.tau1 = sched.window_lo;
            ctx.tau2 = sched.window_lo + 1;

            const int t = static_cast<int>(rng.next_int(sched.window_lo, sched.window_hi));
            const Denoiser den_eff = adapted_denoiser(den, lora);
            // z_T ~ N(0, I), denoised down to t under the adapted weights
            Vec z = rollout(den_eff, sample_gaussian(rng, d, 1.0), round.prompt_embedding,
                            ctx, sched.steps, t + 1);

            // Final step: sample the realized latent from the Gaussian policy.
            const Vec mean = denoise_step(den_eff, z, round.prompt_embedding, ctx);
            Vec action = mean;
            const Vec eps = sample_gaussian(rng, d, cfg.ppo.sigma_pol);
            for (std::size_t i = 0; i < d; ++i) action[i] += eps[i];
            const double old_lp =
                policy_logprob(den_eff, z, round.prompt_embedding, ctx, action, cfg.ppo.sigma_pol);

            features.push_back(extractor(action));
            const double r_div = features.size() >= 2 ? diversity_reward(features) : 0.0;
            const double r_cons = features.size() >= 2 ? consistency_reward(features) : 0.0;
            const double r_mi = mi_reward(scorer, round.prompt_embedding, features.back());
            const RewardBreakdown bd =
                total_reward(reward_sched, static_cast<double>(ctx.round_index), r_div, r_cons, r_mi);

            const double baseline = baseline_count == 0 ? 0.0 : baseline_sum / baseline_count;
            TransitionRecord tr{z, round.prompt_embedding, ctx, action, old_lp,
                                bd.total - baseline};
            baseline_sum += bd.total;
            ++baseline_count;

            lora = apply_reward_step(lora, den, std::span(&tr, 1), cfg.ppo);
            const double l_bce =
                bce_reconstruction_loss(round.target_feature, den, lora, z,
                                        round.prompt_embedding, ctx);
            double l_noise = distance(action, round.target_feature);
            l_noise *= l_noise;
            if (item % static_cast<std::size_t>(cfg.phi_update_interval) == 0) {
                noise_loss_step(den, lora, z, round.prompt_embedding, ctx, action,
                                round.target_feature, cfg.lr_phi);
            }

            log.push_back({item, bd, l_noise, l_bce});
            if (on_item) on_item(den, lora, item);
            ++item;
        }
    }
    return log;
}

} // namespace vca
