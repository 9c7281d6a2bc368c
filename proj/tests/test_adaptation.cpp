#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "vca/adaptation.hpp"
#include "vca/dialogue_sim.hpp"

using namespace vca;

namespace {

constexpr std::size_t kD = 6, kM = 8;

struct Fixture {
    Denoiser den = make_denoiser(kD, kM, 0.6, SeededRng(100));
    LoraAdapter lora = make_lora(kD, kM, 3, 4.0, 0.01, SeededRng(101));
    RoundConditioning ctx;
    SeededRng rng{102};
    Vec z, psi;

    Fixture() {
        for (double& x : lora.up.data()) x = 0.2 * rng.next_gaussian();
        z = sample_gaussian(rng, kD, 1.0);
        psi = sample_gaussian(rng, kM, 1.0);
    }
};

std::vector<DialogueRecord> tiny_dataset(std::size_t dialogues, std::size_t rounds,
                                         std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<DialogueRecord> out;
    for (std::size_t i = 0; i < dialogues; ++i) {
        DialogueRecord rec;
        rec.dialogue_id = "d" + std::to_string(i);
        const Vec base_psi = sample_gaussian(rng, kM, 1.0);
        const Vec base_tgt = sample_gaussian(rng, kD, 1.0);
        for (std::size_t r = 0; r < rounds; ++r) {
            DialogueRound round;
            round.prompt_embedding = add(base_psi, sample_gaussian(rng, kM, 0.05));
            round.target_feature = add(base_tgt, sample_gaussian(rng, kD, 0.05));
            rec.rounds.push_back(std::move(round));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace

TEST_SUITE_BEGIN("adaptation");

TEST_CASE("effective_weights: zero adapter and zero scaling return phi exactly") {
    Fixture fx;
    LoraAdapter zero = make_lora(kD, kM, 3, 4.0, 0.01, SeededRng(1));
    CHECK(effective_weights(fx.den.phi, zero) == fx.den.phi); // up starts at zero

    LoraAdapter noscale = fx.lora;
    noscale.alpha_lora = 0.0;
    CHECK(effective_weights(fx.den.phi, noscale) == fx.den.phi);

    const LoraAdapter wrong = make_lora(kD + 1, kM, 3, 4.0, 0.01, SeededRng(2));
    CHECK_THROWS_AS(effective_weights(fx.den.phi, wrong), ArgumentError);
}

TEST_CASE("effective_weights: update rank bounded by adapter rank") {
    SeededRng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        LoraAdapter lora = make_lora(kD, kM, 3, 4.0, 0.01, SeededRng(rng.next_u64()));
        for (double& x : lora.up.data()) x = rng.next_gaussian();
        for (double& x : lora.down.data()) x = rng.next_gaussian();
        Denoiser den = make_denoiser(kD, kM, 0.5, SeededRng(rng.next_u64()));
        Mat delta = effective_weights(den.phi, lora);
        for (std::size_t i = 0; i < delta.data().size(); ++i)
            delta.data()[i] -= den.phi.data()[i];
        const auto sv = oracles::jacobi_singular_values(delta);
        for (std::size_t i = 3; i < sv.size(); ++i) CHECK(sv[i] < 1e-10);
    }
}

TEST_CASE("policy_logprob: peak density, translation invariance, normalization") {
    // d = 1, sigma = 1, action at the mean: -0.5 ln(2 pi)
    Denoiser den1;
    den1.phi = Mat(1, 2, 0.0);
    den1.bias = {0.0};
    den1.beta_dm = 0.5;
    RoundConditioning ctx;
    CHECK(policy_logprob(den1, {0.0}, {0.0}, ctx, {0.0}, 1.0) ==
          doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
    CHECK_THROWS_AS(policy_logprob(den1, {0.0}, {0.0}, ctx, {0.0}, 0.0), ArgumentError);

    // shifting action and mean together leaves the density unchanged
    Fixture fx;
    const Vec mean = denoise_step(fx.den, fx.z, fx.psi, fx.ctx);
    const Vec action = add(mean, sample_gaussian(fx.rng, kD, 0.2));
    const double lp = policy_logprob(fx.den, fx.z, fx.psi, fx.ctx, action, 0.3);
    Denoiser shifted = fx.den;
    const Vec offset = sample_gaussian(fx.rng, kD, 1.0);
    for (std::size_t i = 0; i < kD; ++i) shifted.bias[i] += offset[i];
    CHECK(policy_logprob(shifted, fx.z, fx.psi, fx.ctx, add(action, offset), 0.3) ==
          doctest::Approx(lp).epsilon(1e-12));

    // 1-D trapezoid quadrature of exp(logprob) integrates to 1
    const double sigma = 0.7;
    double integral = 0.0;
    const double lo = -8.0, hi = 8.0, step = 1e-3;
    for (double x = lo; x < hi; x += step) {
        const double l1 = policy_logprob(den1, {0.0}, {0.0}, ctx, {x}, sigma);
        const double l2 = policy_logprob(den1, {0.0}, {0.0}, ctx, {x + step}, sigma);
        integral += 0.5 * (std::exp(l1) + std::exp(l2)) * step;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("ppo_surrogate: anchor values and clip behavior") {
    CHECK(ppo_surrogate(0.0, 0.0, 3.25, 0.2) == doctest::Approx(3.25)); // rho = 1
    CHECK(ppo_surrogate(std::log(1.5), 0.0, 1.0, 0.2) == doctest::Approx(1.2)); // clipped
    CHECK_THROWS_AS(ppo_surrogate(0.0, 0.0, 1.0, 0.0), ArgumentError);
    CHECK_THROWS_AS(ppo_surrogate(0.0, 0.0, 1.0, 1.0), ArgumentError);

    // negative advantage, rho below the band: the pessimistic min picks the
    // clipped branch, (1 - 0.2) * -2
    CHECK(ppo_surrogate(std::log(0.5), 0.0, -2.0, 0.2) == doctest::Approx(-1.6));
}

TEST_CASE("ppo clip property: adverse out-of-band transitions get exactly zero gradient") {
    Fixture fx;
    PpoConfig cfg;
    TransitionRecord tr;
    tr.z = fx.z;
    tr.psi = fx.psi;
    tr.ctx = fx.ctx;
    const Denoiser den_eff = adapted_denoiser(fx.den, fx.lora);
    tr.action = denoise_step(den_eff, fx.z, fx.psi, fx.ctx);
    const double lp = policy_logprob(den_eff, fx.z, fx.psi, fx.ctx, tr.action, cfg.sigma_pol);

    // rho >> 1 + eps with positive advantage
    tr.old_logprob = lp - 1.0;
    tr.advantage = 2.0;
    AdapterGrads g = ppo_surrogate_adapter_grads(fx.den, fx.lora, tr, cfg);
    for (double x : g.d_up.data()) CHECK(x == 0.0);
    for (double x : g.d_down.data()) CHECK(x == 0.0);

    // rho << 1 - eps with negative advantage
    tr.old_logprob = lp + 1.0;
    tr.advantage = -2.0;
    g = ppo_surrogate_adapter_grads(fx.den, fx.lora, tr, cfg);
    for (double x : g.d_up.data()) CHECK(x == 0.0);
    for (double x : g.d_down.data()) CHECK(x == 0.0);
}

TEST_CASE("apply_reward_step: zero advantages leave the adapter untouched") {
    Fixture fx;
    PpoConfig cfg;
    TransitionRecord tr;
    tr.z = fx.z;
    tr.psi = fx.psi;
    tr.ctx = fx.ctx;
    const Denoiser den_eff = adapted_denoiser(fx.den, fx.lora);
    tr.action = add(denoise_step(den_eff, fx.z, fx.psi, fx.ctx),
                    sample_gaussian(fx.rng, kD, 0.1));
    tr.old_logprob = policy_logprob(den_eff, fx.z, fx.psi, fx.ctx, tr.action, cfg.sigma_pol);
    tr.advantage = 0.0;
    const LoraAdapter out = apply_reward_step(fx.lora, fx.den, std::span(&tr, 1), cfg);
    CHECK(out.up == fx.lora.up);
    CHECK(out.down == fx.lora.down);
    CHECK_THROWS_AS(apply_reward_step(fx.lora, fx.den, std::span<const TransitionRecord>{}, cfg),
                    ArgumentError);
}

TEST_CASE("apply_reward_step: on-policy unit-advantage step equals eta * grad logprob") {
    Fixture fx;
    PpoConfig cfg;
    cfg.epochs = 1;
    TransitionRecord tr;
    tr.z = fx.z;
    tr.psi = fx.psi;
    tr.ctx = fx.ctx;
    const Denoiser den_eff = adapted_denoiser(fx.den, fx.lora);
    tr.action = add(denoise_step(den_eff, fx.z, fx.psi, fx.ctx),
                    sample_gaussian(fx.rng, kD, cfg.sigma_pol));
    tr.old_logprob = policy_logprob(den_eff, fx.z, fx.psi, fx.ctx, tr.action, cfg.sigma_pol);
    tr.advantage = 1.0; // rho = 1 at the current adapter

    const AdapterGrads lp = policy_logprob_adapter_grads(fx.den, fx.lora, fx.z, fx.psi,
                                                         fx.ctx, tr.action, cfg.sigma_pol);
    const LoraAdapter out = apply_reward_step(fx.lora, fx.den, std::span(&tr, 1), cfg);
    for (std::size_t i = 0; i < out.up.data().size(); ++i)
        CHECK(out.up.data()[i] ==
              doctest::Approx(fx.lora.up.data()[i] + fx.lora.learning_rate * lp.d_up.data()[i])
                  .epsilon(1e-12));
    for (std::size_t i = 0; i < out.down.data().size(); ++i)
        CHECK(out.down.data()[i] ==
              doctest::Approx(fx.lora.down.data()[i] + fx.lora.learning_rate * lp.d_down.data()[i])
                  .epsilon(1e-12));

    // and the logprob gradient itself agrees with finite differences
    const auto f_up = [&](const Mat& b) {
        LoraAdapter l2 = fx.lora;
        l2.up = b;
        return policy_logprob(adapted_denoiser(fx.den, l2), fx.z, fx.psi, fx.ctx, tr.action,
                              cfg.sigma_pol);
    };
    CHECK(oracles::mat_rel_err(lp.d_up, oracles::fd_matrix_gradient(f_up, fx.lora.up, 1e-5)) <
          1e-5);
}

TEST_CASE("apply_reward_step: mean surrogate non-decreasing over 10 epochs on a frozen batch") {
    Fixture fx;
    PpoConfig cfg;
    cfg.epochs = 1;
    std::vector<TransitionRecord> batch;
    const Denoiser den_eff = adapted_denoiser(fx.den, fx.lora);
    for (int i = 0; i < 8; ++i) {
        TransitionRecord tr;
        tr.z = sample_gaussian(fx.rng, kD, 1.0);
        tr.psi = fx.psi;
        tr.ctx = fx.ctx;
        tr.action = add(denoise_step(den_eff, tr.z, fx.psi, fx.ctx),
                        sample_gaussian(fx.rng, kD, cfg.sigma_pol));
        tr.old_logprob =
            policy_logprob(den_eff, tr.z, fx.psi, fx.ctx, tr.action, cfg.sigma_pol);
        tr.advantage = fx.rng.next_gaussian();
        batch.push_back(std::move(tr));
    }
    const auto mean_surrogate = [&](const LoraAdapter& lora) {
        double s = 0.0;
        for (const TransitionRecord& tr : batch)
            s += ppo_surrogate_adapter_grads(fx.den, lora, tr, cfg).value;
        return s / static_cast<double>(batch.size());
    };
    LoraAdapter lora = fx.lora;
    lora.learning_rate = 1e-3;
    double prev = mean_surrogate(lora);
    for (int epoch = 0; epoch < 10; ++epoch) {
        lora = apply_reward_step(lora, fx.den, batch, cfg);
        const double cur = mean_surrogate(lora);
        CHECK(cur >= prev - 1e-12);
        prev = cur;
    }
}

TEST_CASE("apply_reward_step never touches phi; noise_loss_step never touches the adapter") {
    Fixture fx;
    PpoConfig cfg;
    TransitionRecord tr;
    tr.z = fx.z;
    tr.psi = fx.psi;
    tr.ctx = fx.ctx;
    tr.action = denoise_step(adapted_denoiser(fx.den, fx.lora), fx.z, fx.psi, fx.ctx);
    tr.old_logprob = policy_logprob(adapted_denoiser(fx.den, fx.lora), fx.z, fx.psi, fx.ctx,
                                    tr.action, cfg.sigma_pol);
    tr.advantage = 1.3;
    const Mat phi_before = fx.den.phi;
    (void)apply_reward_step(fx.lora, fx.den, std::span(&tr, 1), cfg);
    CHECK(fx.den.phi == phi_before);

    const Mat up_before = fx.lora.up;
    const Mat down_before = fx.lora.down;
    const Vec target = sample_gaussian(fx.rng, kD, 1.0);
    noise_loss_step(fx.den, fx.lora, fx.z, fx.psi, fx.ctx, tr.action, target, 0.01);
    CHECK(fx.lora.up == up_before);
    CHECK(fx.lora.down == down_before);
}

TEST_CASE("bce_reconstruction_loss: zero at perfect prediction; reduces to one_step_loss") {
    Fixture fx;
    const Denoiser den_eff = adapted_denoiser(fx.den, fx.lora);
    const Vec pred = denoise_step(den_eff, fx.z, fx.psi, fx.ctx);
    CHECK(bce_reconstruction_loss(pred, fx.den, fx.lora, fx.z, fx.psi, fx.ctx) ==
          doctest::Approx(0.0));

    LoraAdapter zero = make_lora(kD, kM, 3, 4.0, 0.01, SeededRng(1));
    const Vec target = sample_gaussian(fx.rng, kD, 1.0);
    CHECK(bce_reconstruction_loss(target, fx.den, zero, fx.z, fx.psi, fx.ctx) ==
          doctest::Approx(one_step_loss(target, fx.den, fx.z, fx.psi, fx.ctx)));
}

TEST_CASE("bce gradients through the adapter match finite differences") {
    Fixture fx;
    const Vec target = add(denoise_step(adapted_denoiser(fx.den, fx.lora), fx.z, fx.psi, fx.ctx),
                           sample_gaussian(fx.rng, kD, 1.0));
    const AdapterGrads g = bce_adapter_grads(target, fx.den, fx.lora, fx.z, fx.psi, fx.ctx);
    const auto f_up = [&](const Mat& b) {
        LoraAdapter l2 = fx.lora;
        l2.up = b;
        return bce_reconstruction_loss(target, fx.den, l2, fx.z, fx.psi, fx.ctx);
    };
    const auto f_down = [&](const Mat& a) {
        LoraAdapter l2 = fx.lora;
        l2.down = a;
        return bce_reconstruction_loss(target, fx.den, l2, fx.z, fx.psi, fx.ctx);
    };
    CHECK(oracles::mat_rel_err(g.d_up, oracles::fd_matrix_gradient(f_up, fx.lora.up, 1e-5)) < 1e-5);
    CHECK(oracles::mat_rel_err(g.d_down, oracles::fd_matrix_gradient(f_down, fx.lora.down, 1e-5)) <
          1e-5);
}

TEST_CASE("noise_loss_step: zero residual is a bit-identical no-op; descent reduces the loss") {
    Fixture fx;
    const Vec x0 = denoise_step(adapted_denoiser(fx.den, fx.lora), fx.z, fx.psi, fx.ctx);
    const Mat phi_before = fx.den.phi;
    const double l0 = noise_loss_step(fx.den, fx.lora, fx.z, fx.psi, fx.ctx, x0, x0, 0.01);
    CHECK(l0 == 0.0);
    CHECK(fx.den.phi == phi_before);

    const Vec target = add(x0, sample_gaussian(fx.rng, kD, 1.0));
    CHECK_THROWS_AS(noise_loss_step(fx.den, fx.lora, fx.z, fx.psi, fx.ctx, x0, target, 0.0),
                    ArgumentError);
    const auto sqloss = [&](const Denoiser& den) {
        const double l =
            bce_reconstruction_loss(target, den, fx.lora, fx.z, fx.psi, fx.ctx);
        return l * l;
    };
    const double before = sqloss(fx.den);
    noise_loss_step(fx.den, fx.lora, fx.z, fx.psi, fx.ctx, x0, target, 1e-3);
    CHECK(sqloss(fx.den) < before);

    // contraction bound re-imposed after the update (independent SVD oracle)
    Mat zb(kD, kD);
    for (std::size_t r = 0; r < kD; ++r)
        for (std::size_t c = 0; c < kD; ++c) zb(r, c) = fx.den.phi(r, c);
    CHECK(oracles::jacobi_singular_values(zb).front() <= fx.den.beta_dm + 1e-9);
}

TEST_CASE("training_loop: empty dataset is a no-op; runs are seed-deterministic") {
    Denoiser den = make_denoiser(kD, kM, 0.5, SeededRng(200));
    LoraAdapter lora = make_lora(kD, kM, 3, 4.0, 0.01, SeededRng(201));
    const Scorer scorer = Scorer::zeros(kM, kD, 4, 4, 2.0, 202);
    const FeatureExtractor extractor(kD, kD, 203); // k = d keeps the fixture small
    NoiseSchedule sched;
    sched.steps = 12;
    sched.window_lo = 1;
    sched.window_hi = 6;
    const RewardSchedule rsched;
    TrainLoopConfig cfg;

    const Mat phi_before = den.phi;
    SeededRng rng(204);
    const auto empty_log = training_loop({}, den, lora, scorer, extractor, sched, rsched, cfg, rng);
    CHECK(empty_log.empty());
    CHECK(den.phi == phi_before);

    NoiseSchedule bad_window = sched;
    bad_window.window_lo = 9;
    bad_window.window_hi = 3;
    CHECK_THROWS_AS(training_loop({}, den, lora, scorer, extractor, bad_window, rsched, cfg, rng),
                    ConfigError);

    const auto data = tiny_dataset(4, 3, 300);
    auto run = [&](std::uint64_t seed) {
        Denoiser d2 = make_denoiser(kD, kM, 0.5, SeededRng(200));
        LoraAdapter l2 = make_lora(kD, kM, 3, 4.0, 0.01, SeededRng(201));
        SeededRng r(seed);
        return training_loop(data, d2, l2, scorer, extractor, sched, rsched, cfg, r);
    };
    const auto log1 = run(7);
    const auto log2 = run(7);
    REQUIRE(log1.size() == log2.size());
    REQUIRE(log1.size() == 12);
    for (std::size_t i = 0; i < log1.size(); ++i) {
        CHECK(log1[i].breakdown.total == log2[i].breakdown.total);
        CHECK(log1[i].l_noise == log2[i].l_noise);
        CHECK(log1[i].l_bce == log2[i].l_bce);
    }
    // a different seed takes a different path
    const auto log3 = run(8);
    bool any_diff = false;
    for (std::size_t i = 0; i < log1.size(); ++i)
        any_diff = any_diff || log1[i].breakdown.total != log3[i].breakdown.total;
    CHECK(any_diff);
}

TEST_SUITE_END();
