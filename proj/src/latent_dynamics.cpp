#include "vca/latent_dynamics.hpp"

#include <cmath>

namespace vca {

double NoiseSchedule::sigma(int t) const {
    if (t < 1) throw ArgumentError("NoiseSchedule::sigma: t must be >= 1");
    return sigma0 * std::pow(static_cast<double>(t), -decay_exponent);
}

void NoiseSchedule::validate() const {
    if (sigma0 < 0.0) throw ConfigError("noise schedule: sigma0 must be >= 0");
    if (decay_exponent <= 1.0) throw ConfigError("noise schedule: decay exponent must be > 1");
    if (steps < 1) throw ConfigError("noise schedule: T must be >= 1");
    if (window_lo < 1 || window_lo > window_hi || window_hi > steps)
        throw ConfigError("noise schedule: need 1 <= T1 <= T2 <= T");
}

void RoundConditioning::validate(const NoiseSchedule& sched) const {
    if (round_index < 1) throw ArgumentError("RoundConditioning: round index must be >= 1");
    if (tau1 == tau2) throw ArgumentError("RoundConditioning: tau1 and tau2 must differ");
    if (tau1 < 1 || tau1 > sched.steps || tau2 < 1 || tau2 > sched.steps)
        throw ArgumentError("RoundConditioning: noise step out of schedule range");
}

Denoiser make_denoiser(std::size_t d, std::size_t m, double beta_dm, SeededRng rng,
                       bool allow_noncontractive) {
    if (d == 0 || m == 0) throw ArgumentError("make_denoiser: zero dimension");
    if (beta_dm <= 0.0 || (!allow_noncontractive && beta_dm >= 1.0))
        throw ArgumentError("make_denoiser: beta_dm must lie in (0, 1)");
    Denoiser den;
    den.beta_dm = beta_dm;
    den.phi = Mat(d, d + m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d + m));
    for (double& x : den.phi.data()) x = scale * rng.next_gaussian();
    den.bias = Vec(d, 0.0);
    for (double& x : den.bias) x = 0.2 * rng.next_gaussian();

    // Install the bound exactly on the z-block; the psi-block is untouched.
    Mat zblock(d, d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) zblock(r, c) = den.phi(r, c);
    zblock = spectral_rescale(zblock, beta_dm);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) den.phi(r, c) = zblock(r, c);
    enforce_contraction(den); // trim any residual power-iteration slack
    return den;
}

double z_block_spectral_norm(const Denoiser& den) {
    const std::size_t d = den.latent_dim();
    Mat zblock(d, d);
    bool nonzero = false;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            zblock(r, c) = den.phi(r, c);
            nonzero = nonzero || zblock(r, c) != 0.0;
        }
    // Training rescales pile several singular values up at the bound, which
    // kills the spectral gap and stalls power iteration; the Jacobi route is
    // gap-independent.
    return nonzero ? spectral_norm_exact(zblock) : 0.0;
}

void enforce_contraction(Denoiser& den) {
    const double top = z_block_spectral_norm(den);
    if (top <= den.beta_dm) return;
    const std::size_t d = den.latent_dim();
    const double f = den.beta_dm / top;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) den.phi(r, c) *= f;
}

Vec denoiser_input(const Denoiser& den, const Vec& z, const Vec& psi,
                   const RoundConditioning& ctx) {
    const std::size_t d = den.latent_dim();
    const std::size_t m = den.embed_dim();
    if (z.size() != d) throw ArgumentError("denoiser: latent length mismatch");
    if (psi.size() != m) throw ArgumentError("denoiser: embedding length mismatch");
    if (!ctx.code.empty() && ctx.code.size() != m)
        throw ArgumentError("denoiser: conditioning code length mismatch");
    Vec u(d + m);
    for (std::size_t i = 0; i < d; ++i) u[i] = z[i];
    for (std::size_t i = 0; i < m; ++i)
        u[d + i] = psi[i] + (ctx.code.empty() ? 0.0 : ctx.code[i]);
    return u;
}

Vec denoise_step(const Denoiser& den, const Vec& z, const Vec& psi,
                 const RoundConditioning& ctx) {
    const Vec u = denoiser_input(den, z, psi, ctx);
    Vec out = matvec(den.phi, u);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += den.bias[i];
    return out;
}

Vec rollout(const Denoiser& den, Vec z, const Vec& psi, const RoundConditioning& ctx,
            int from_t, int to_t, LatentTrajectory* traj) {
    if (from_t < to_t) throw ArgumentError("rollout: from_t must be >= to_t");
    if (traj) traj->prompts.push_back(psi);
    for (int t = from_t; t >= to_t; --t) {
        z = denoise_step(den, z, psi, ctx);
        if (traj) traj->states.emplace_back(t - 1, z);
    }
    return z;
}

Vec noisy_round_update(const Denoiser& den, const Vec& z, const Vec& psi,
                       const RoundConditioning& ctx, const NoiseSchedule& sched,
                       SeededRng& rng) {
    Vec out = denoise_step(den, z, psi, ctx);
    const Vec eps = sample_gaussian(rng, out.size(), sched.sigma(ctx.round_index));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += eps[i];
    return out;
}

Vec compose_two_stage(const Denoiser& den, const Vec& z_start, const Vec& psi,
                      const RoundConditioning& ctx1, const RoundConditioning& ctx2,
                      const NoiseSchedule& sched, SeededRng& rng) {
    ctx1.validate(sched);
    ctx2.validate(sched);
    Vec z = z_start;
    for (int i = 0; i < ctx1.tau1; ++i) z = denoise_step(den, z, psi, ctx1);
    const Vec eps = sample_gaussian(rng, z.size(), sched.sigma(ctx2.tau2));
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += eps[i];
    for (int i = 0; i < ctx2.tau2; ++i) z = denoise_step(den, z, psi, ctx2);
    return z;
}

double multi_round_loss(const Vec& z0_target, const Vec& composed) {
    if (z0_target.size() != composed.size())
        throw ArgumentError("multi_round_loss: length mismatch");
    return distance(z0_target, composed);
}

double one_step_loss(const Vec& z_target_prev, const Denoiser& den, const Vec& z,
                     const Vec& psi, const RoundConditioning& ctx) {
    return distance(z_target_prev, denoise_step(den, z, psi, ctx));
}

Mat one_step_loss_grad_phi(const Vec& z_target_prev, const Denoiser& den, const Vec& z,
                           const Vec& psi, const RoundConditioning& ctx) {
    // L = |r|, r = target - (phi u + b)  =>  dL/dphi = -(r / |r|) u^T
    const Vec u = denoiser_input(den, z, psi, ctx);
    const Vec pred = denoise_step(den, z, psi, ctx);
    Vec r = sub(z_target_prev, pred);
    const double rn = norm(r);
    if (rn == 0.0) return Mat(den.phi.rows(), den.phi.cols(), 0.0);
    for (double& x : r) x /= -rn;
    return outer(r, u);
}

} // namespace vca
