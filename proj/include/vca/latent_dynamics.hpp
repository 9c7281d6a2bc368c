#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vca/core_math.hpp"

namespace vca {

/// Per-round noise scale sigma_t = sigma0 * t^(-p) for t >= 1. p > 1 makes
/// t * sigma_t strictly decreasing; sigma0 = 0 gives a noise-free run (used
/// by deterministic probes). [T1, T2] is the fine-tune timestep window.
struct NoiseSchedule {
    double sigma0 = 1.0;
    double decay_exponent = 1.5;
    int steps = 70;         // T
    int window_lo = 1;      // T1
    int window_hi = 40;     // T2

    double sigma(int t) const;
    void validate() const;
};

/// Conditioning for one dialogue round: an opaque code c combined with the
/// prompt embedding as psi + c, the round index, and the round's two noise
/// step counts (tau1 != tau2). An empty code is treated as zeros.
struct RoundConditioning {
    Vec code;
    int round_index = 1;
    int tau1 = 1;
    int tau2 = 2;

    void validate(const NoiseSchedule& sched) const;
};

/// Affine toy denoiser: DM(z, psi, ctx) = phi * [z; psi + c] + bias.
/// The z-block (first d columns of phi) keeps spectral norm <= beta_dm,
/// enforced at construction and re-enforced after every phi update, which
/// makes the map a contraction in z with constant beta_dm.
struct Denoiser {
    Mat phi;        // d x (d + m)
    Vec bias;       // d
    double beta_dm = 0.5;

    std::size_t latent_dim() const { return bias.size(); }
    std::size_t embed_dim() const { return phi.cols() - bias.size(); }
};

/// Random denoiser with the contraction bound installed on the z-block.
/// allow_noncontractive permits beta_dm >= 1 for deliberate violation runs.
Denoiser make_denoiser(std::size_t d, std::size_t m, double beta_dm, SeededRng rng,
                       bool allow_noncontractive = false);

/// Spectral norm of the z-block of phi.
double z_block_spectral_norm(const Denoiser& den);

/// Rescales the z-block down to beta_dm if it exceeds the bound; a no-op
/// (bit-identical phi) when the bound already holds.
void enforce_contraction(Denoiser& den);

Vec denoise_step(const Denoiser& den, const Vec& z, const Vec& psi,
                 const RoundConditioning& ctx);

/// One noisy recursion step: denoise_step(...) + N(0, sigma_t^2 I) with
/// t = ctx.round_index.
Vec noisy_round_update(const Denoiser& den, const Vec& z, const Vec& psi,
                       const RoundConditioning& ctx, const NoiseSchedule& sched,
                       SeededRng& rng);

/// Two-stage composition: run ctx1.tau1 denoise steps with code c1, add
/// Gaussian noise at scale sigma(ctx2.tau2), then run ctx2.tau2 denoise
/// steps with code c2.
Vec compose_two_stage(const Denoiser& den, const Vec& z_start, const Vec& psi,
                      const RoundConditioning& ctx1, const RoundConditioning& ctx2,
                      const NoiseSchedule& sched, SeededRng& rng);

/// Euclidean reconstruction distance between the target latent and the
/// composed output.
double multi_round_loss(const Vec& z0_target, const Vec& composed);

/// One-step reconstruction distance |target_prev - DM(z, psi, ctx)|.
double one_step_loss(const Vec& z_target_prev, const Denoiser& den, const Vec& z,
                     const Vec& psi, const RoundConditioning& ctx);

/// Analytic gradient of one_step_loss with respect to phi.
Mat one_step_loss_grad_phi(const Vec& z_target_prev, const Denoiser& den, const Vec& z,
                           const Vec& psi, const RoundConditioning& ctx);

/// Rollout record: (timestep, state) pairs ordered by decreasing timestep
/// within a round and by increasing round index across rounds.
struct LatentTrajectory {
    std::vector<std::pair<int, Vec>> states;
    std::vector<Vec> prompts;
    std::vector<double> round_losses;
};

/// Iterated denoising from timestep from_t down to to_t (inclusive), i.e.
/// from_t - to_t + 1 applications. When traj is given, each produced state is
/// appended as (timestep - 1, state) along with the round's prompt.
Vec rollout(const Denoiser& den, Vec z, const Vec& psi, const RoundConditioning& ctx,
            int from_t, int to_t, LatentTrajectory* traj = nullptr);

/// Builds the full input [z; psi + c] for the affine denoiser.
Vec denoiser_input(const Denoiser& den, const Vec& z, const Vec& psi,
                   const RoundConditioning& ctx);

} // namespace vca
