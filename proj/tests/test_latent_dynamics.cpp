#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vca/latent_dynamics.hpp"

using namespace vca;

namespace {

Denoiser contraction_toy(std::size_t d, std::size_t m, double beta, Vec bias = {}) {
    Denoiser den;
    den.beta_dm = beta;
    den.phi = Mat(d, d + m);
    for (std::size_t i = 0; i < d; ++i) den.phi(i, i) = beta; // z-block = beta * I
    den.bias = bias.empty() ? Vec(d, 0.0) : bias;
    return den;
}

} // namespace

TEST_SUITE_BEGIN("latent_dynamics");

TEST_CASE("noise schedule: decay law and window validation") {
    NoiseSchedule sched;
    CHECK(sched.sigma(1) == doctest::Approx(1.0));
    CHECK(sched.sigma(4) == doctest::Approx(std::pow(4.0, -1.5)));
    CHECK_THROWS_AS(sched.sigma(0), ArgumentError);

    // t * sigma_t strictly decreasing for p > 1
    for (int t = 1; t < 100; ++t)
        CHECK((t + 1) * sched.sigma(t + 1) < t * sched.sigma(t));

    NoiseSchedule bad = sched;
    bad.window_lo = 50;
    bad.window_hi = 40;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = sched;
    bad.decay_exponent = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("denoise_step: pure contraction anchor") {
    const Denoiser den = contraction_toy(2, 3, 0.5);
    RoundConditioning ctx;
    const Vec out = denoise_step(den, {2.0, 0.0}, {0.0, 0.0, 0.0}, ctx);
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(0.0));

    // determinism
    const Vec again = denoise_step(den, {2.0, 0.0}, {0.0, 0.0, 0.0}, ctx);
    CHECK(out == again);

    CHECK_THROWS_AS(denoise_step(den, {1.0}, {0.0, 0.0, 0.0}, ctx), ArgumentError);
}

TEST_CASE("denoise_step: Monte-Carlo Lipschitz probe stays under beta_dm") {
    const Denoiser den = make_denoiser(6, 8, 0.7, SeededRng(3));
    SeededRng rng(11);
    RoundConditioning ctx;
    const Vec psi = sample_gaussian(rng, 8, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec z1 = sample_gaussian(rng, 6, 1.0);
        const Vec z2 = sample_gaussian(rng, 6, 1.0);
        const double dz = distance(z1, z2);
        if (dz == 0.0) continue;
        worst = std::max(worst, distance(denoise_step(den, z1, psi, ctx),
                                         denoise_step(den, z2, psi, ctx)) / dz);
    }
    CHECK(worst <= den.beta_dm + 1e-9);
}

TEST_CASE("noisy_round_update: sigma 0 reduces to denoise_step; seeded mean test") {
    const Denoiser den = make_denoiser(4, 4, 0.5, SeededRng(5));
    NoiseSchedule sched;
    sched.sigma0 = 0.0;
    RoundConditioning ctx;
    ctx.round_index = 3;
    SeededRng rng(1);
    const Vec z{0.3, -0.2, 0.8, 0.1};
    const Vec psi{0.5, 0.5, -0.5, 0.0};
    CHECK(noisy_round_update(den, z, psi, ctx, sched, rng) == denoise_step(den, z, psi, ctx));

    // same seed twice -> identical output
    NoiseSchedule noisy; // sigma0 = 1
    SeededRng r1(9), r2(9);
    CHECK(noisy_round_update(den, z, psi, ctx, noisy, r1) ==
          noisy_round_update(den, z, psi, ctx, noisy, r2));

    // mean of repeated draws approaches the noiseless output
    const Vec clean = denoise_step(den, z, psi, ctx);
    const double sigma_t = noisy.sigma(3);
    const int n = 100000;
    Vec acc(4, 0.0);
    SeededRng rmc(17);
    for (int i = 0; i < n; ++i) {
        const Vec out = noisy_round_update(den, z, psi, ctx, noisy, rmc);
        for (std::size_t j = 0; j < 4; ++j) acc[j] += out[j];
    }
    const double tol = 3.0 * sigma_t / std::sqrt(static_cast<double>(n));
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::abs(acc[j] / n - clean[j]) < tol + 1e-12);
}

TEST_CASE("compose_two_stage: fixed point in one step; shape; contraction bound") {
    // phi = 0 everywhere, bias = b*: output is b* regardless of input
    Denoiser den = contraction_toy(3, 2, 0.5, {1.0, -2.0, 0.5});
    for (std::size_t i = 0; i < 3; ++i) den.phi(i, i) = 0.0;
    NoiseSchedule sched;
    sched.sigma0 = 0.0;
    RoundConditioning ctx1, ctx2;
    ctx1.tau1 = 3;
    ctx1.tau2 = 5;
    ctx2.tau1 = 3;
    ctx2.tau2 = 5;
    SeededRng rng(2);
    const Vec out =
        compose_two_stage(den, {7.0, -4.0, 2.0}, {0.1, 0.2}, ctx1, ctx2, sched, rng);
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(-2.0));
    CHECK(out[2] == doctest::Approx(0.5));
    CHECK(out.size() == 3);

    // noise-free contraction bound: |F(x) - F(y)| <= beta^(tau1+tau2) |x - y|
    const Denoiser rden = make_denoiser(5, 4, 0.5, SeededRng(8));
    SeededRng r2(3);
    const Vec psi = sample_gaussian(r2, 4, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec x = sample_gaussian(r2, 5, 10.0);
        const Vec y = sample_gaussian(r2, 5, 10.0);
        SeededRng ra(0), rb(0);
        const Vec fx = compose_two_stage(rden, x, psi, ctx1, ctx2, sched, ra);
        const Vec fy = compose_two_stage(rden, y, psi, ctx1, ctx2, sched, rb);
        const double bound =
            std::pow(rden.beta_dm, ctx1.tau1 + ctx2.tau2) * distance(x, y) + 1e-9;
        CHECK(distance(fx, fy) <= bound);
    }

    // tau out of range / equal taus refused
    RoundConditioning bad = ctx1;
    bad.tau1 = 0;
    CHECK_THROWS_AS(compose_two_stage(den, {0, 0, 0}, {0, 0}, bad, ctx2, sched, rng),
                    ArgumentError);
    bad = ctx1;
    bad.tau2 = bad.tau1;
    CHECK_THROWS_AS(compose_two_stage(den, {0, 0, 0}, {0, 0}, bad, ctx2, sched, rng),
                    ArgumentError);
}

TEST_CASE("multi_round_loss: metric anchors and fuzzed triangle inequality") {
    CHECK(multi_round_loss({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
    CHECK(multi_round_loss({3, 4}, {0, 0}) == doctest::Approx(5.0));
    CHECK_THROWS_AS(multi_round_loss({1, 2}, {1, 2, 3}), ArgumentError);

    SeededRng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const Vec a = sample_gaussian(rng, 4, 1.0);
        const Vec b = sample_gaussian(rng, 4, 1.0);
        const Vec c = sample_gaussian(rng, 4, 1.0);
        CHECK(multi_round_loss(a, b) == doctest::Approx(multi_round_loss(b, a)));
        CHECK(multi_round_loss(a, c) <=
              multi_round_loss(a, b) + multi_round_loss(b, c) + 1e-12);
    }
}

TEST_CASE("one_step_loss: zero at perfect prediction; gradient matches finite differences") {
    const Denoiser den = make_denoiser(4, 5, 0.6, SeededRng(10));
    SeededRng rng(12);
    RoundConditioning ctx;
    ctx.code = sample_gaussian(rng, 5, 0.3);
    const Vec z = sample_gaussian(rng, 4, 1.0);
    const Vec psi = sample_gaussian(rng, 5, 1.0);
    CHECK(one_step_loss(denoise_step(den, z, psi, ctx), den, z, psi, ctx) ==
          doctest::Approx(0.0));

    const Vec target = add(denoise_step(den, z, psi, ctx), sample_gaussian(rng, 4, 1.0));
    const Mat analytic = one_step_loss_grad_phi(target, den, z, psi, ctx);
    const auto field = [&](const Mat& phi) {
        Denoiser d2 = den;
        d2.phi = phi;
        return one_step_loss(target, d2, z, psi, ctx);
    };
    const Mat fd = oracles::fd_matrix_gradient(field, den.phi, 1e-5);
    CHECK(oracles::mat_rel_err(analytic, fd) < 1e-5);
}

TEST_CASE("one_step_loss: plain gradient descent decreases monotonically") {
    Denoiser den = make_denoiser(4, 5, 0.6, SeededRng(44));
    SeededRng rng(45);
    RoundConditioning ctx;
    const Vec z = sample_gaussian(rng, 4, 1.0);
    const Vec psi = sample_gaussian(rng, 5, 1.0);
    // keep the start far from the minimum: the norm loss has a constant-size
    // gradient, so 50 fixed steps must not cross it
    Vec target = sample_gaussian(rng, 4, 2.0);
    while (one_step_loss(target, den, z, psi, ctx) < 2.0)
        target = sample_gaussian(rng, 4, 2.0);
    double prev = one_step_loss(target, den, z, psi, ctx);
    for (int it = 0; it < 50; ++it) {
        const Mat g = one_step_loss_grad_phi(target, den, z, psi, ctx);
        for (std::size_t i = 0; i < den.phi.data().size(); ++i)
            den.phi.data()[i] -= 5e-4 * g.data()[i];
        const double cur = one_step_loss(target, den, z, psi, ctx);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("noise-free repeated updates converge geometrically to the fixed point") {
    const Denoiser den = make_denoiser(6, 4, 0.5, SeededRng(77));
    NoiseSchedule sched;
    sched.sigma0 = 0.0;
    SeededRng rng(1);
    RoundConditioning ctx;
    const Vec psi = sample_gaussian(rng, 4, 1.0);

    // fixed point by long iteration
    Vec zstar = sample_gaussian(rng, 6, 1.0);
    ctx.round_index = 1;
    for (int i = 0; i < 400; ++i) zstar = denoise_step(den, zstar, psi, ctx);

    Vec z = sample_gaussian(rng, 6, 5.0);
    double prev = distance(z, zstar);
    for (int t = 1; t <= 40; ++t) {
        ctx.round_index = t;
        z = noisy_round_update(den, z, psi, ctx, sched, rng);
        const double cur = distance(z, zstar);
        CHECK(cur <= (den.beta_dm + 1e-12) * prev);
        prev = cur;
    }
}

TEST_CASE("rollout: trajectory states ordered by decreasing timestep, rounds ascending") {
    const Denoiser den = make_denoiser(3, 2, 0.5, SeededRng(1));
    SeededRng rng(2);
    LatentTrajectory traj;
    RoundConditioning ctx;
    Vec z = sample_gaussian(rng, 3, 1.0);
    const Vec psi1 = sample_gaussian(rng, 2, 1.0);
    ctx.round_index = 1;
    z = rollout(den, z, psi1, ctx, 10, 4, &traj);
    const Vec psi2 = sample_gaussian(rng, 2, 1.0);
    ctx.round_index = 2;
    z = rollout(den, z, psi2, ctx, 8, 1, &traj);

    REQUIRE(traj.states.size() == 7 + 8);
    REQUIRE(traj.prompts.size() == 2);
    for (std::size_t i = 0; i + 1 < 7; ++i)
        CHECK(traj.states[i].first > traj.states[i + 1].first); // round 1 descending
    for (std::size_t i = 7; i + 1 < traj.states.size(); ++i)
        CHECK(traj.states[i].first > traj.states[i + 1].first); // round 2 descending
    CHECK(traj.states[6].first == 3);
    CHECK(traj.states.back().first == 0);
    CHECK(traj.states.back().second == z);
    CHECK_THROWS_AS(rollout(den, z, psi1, ctx, 1, 5), ArgumentError);
}

TEST_CASE("make_denoiser installs the contraction bound; enforce_contraction is conservative") {
    Denoiser den = make_denoiser(8, 8, 0.5, SeededRng(2));
    CHECK(z_block_spectral_norm(den) == doctest::Approx(0.5).epsilon(1e-9));

    // under the bound: enforcement must not touch phi
    Denoiser copy = den;
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) copy.phi(r, c) *= 0.5;
    const Mat before = copy.phi;
    enforce_contraction(copy);
    CHECK(copy.phi == before);

    // above the bound: rescaled back to beta_dm
    for (std::size_t i = 0; i < 8; ++i) den.phi(i, i) += 1.0;
    enforce_contraction(den);
    CHECK(z_block_spectral_norm(den) <= den.beta_dm + 1e-9);

    CHECK_THROWS_AS(make_denoiser(4, 4, 1.2, SeededRng(0)), ArgumentError);
    CHECK_NOTHROW(make_denoiser(4, 4, 1.2, SeededRng(0), true));
}

TEST_SUITE_END();
