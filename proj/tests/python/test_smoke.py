"""Smoke tests for the python bindings."""

import math
import random

import pytest

import vca


def test_weight_schedule_anchors():
    s = vca.RewardSchedule()
    assert s.weights_at(0.0) == (1.0, 0.0, 0.5)
    div, cons, mi = s.weights_at(10.0)
    assert div == pytest.approx(0.22313, abs=1e-5)
    assert cons == pytest.approx(0.63212, abs=1e-5)
    assert mi == pytest.approx(0.23618, abs=1e-5)
    assert s.total_reward(10.0, 1.0, 1.0, 1.0)["total"] == pytest.approx(1.09143, abs=1e-5)
    assert s.value_derivative(0.0, 1.0, 1.0, 1.0) == pytest.approx(-0.0875)
    assert s.value_second_derivative(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.0153125)
    with pytest.raises(ValueError):
        s.weights_at(-1.0)


def test_reward_anchors():
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    assert vca.diversity_reward([e1, e1, e1]) == 0.0
    assert vca.diversity_reward([e1, e2]) == 1.0
    assert vca.diversity_reward([e1, [-1.0, 0.0]]) == 2.0
    assert vca.consistency_reward([e1, e1, e1, e1]) == 3.0
    assert vca.cosine_similarity(e1, e2) == 0.0
    with pytest.raises(ValueError):
        vca.diversity_reward([e1])


def test_scorer_learns_planted_direction():
    rng = random.Random(7)
    k = 8
    direction = [rng.gauss(0.0, 1.0) for _ in range(k)]
    nrm = math.sqrt(sum(x * x for x in direction))
    direction = [x / nrm for x in direction]

    pairs = []
    for _ in range(100):
        prompt = [rng.gauss(0.0, 1.0) for _ in range(k)]
        base = [rng.gauss(0.0, 1.0) for _ in range(k)]
        margin = 0.5 + rng.random()
        pos = [b + margin * d for b, d in zip(base, direction)]
        neg = [b - margin * d for b, d in zip(base, direction)]
        pairs.append((prompt, pos, neg))

    scorer = vca.Scorer.zeros(k, k, seed=3)
    assert scorer.pairwise_accuracy(pairs) == 0.5
    curve = scorer.train(pairs, epochs=30, lr=0.3, seed=3)
    assert len(curve) == 30
    assert curve[-1] < curve[0]
    assert scorer.pairwise_accuracy(pairs) >= 0.9


def test_pareto_membership():
    rng = random.Random(11)
    for _ in range(100):
        pts = [(rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1))
               for _ in range(rng.randint(1, 30))]
        weights = (0.01 + rng.random(), 0.01 + rng.random(), 0.01 + rng.random())
        assert vca.scalarization_argmax(pts, weights) in vca.pareto_front(pts)
    four = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0.4, 0.4, 0.4)]
    assert vca.pareto_front(four) == [0, 1, 2, 3]
    assert vca.scalarization_argmax(four, (1, 1, 1)) == 3


def test_equal_weight_probe_reference_constants():
    probe = vca.equal_weight_probe(vca.RewardSchedule())
    assert probe["common_t0"] is None
    assert probe["div_mi_crossing"] == pytest.approx(math.log(2.0) / 0.075, abs=1e-3)
    assert probe["div_cons_crossing"] == pytest.approx(5.62399, abs=1e-3)


def test_gaussian_tv_matches_closed_form():
    def phi(x):
        return 0.5 * math.erfc(-x / math.sqrt(2.0))

    for mu1, mu2, sigma in [(0.0, 1.0, 1.0), (-2.0, 0.5, 0.7), (3.0, 3.0, 2.0)]:
        expected = 2.0 * phi(abs(mu1 - mu2) / (2.0 * sigma)) - 1.0
        assert vca.gaussian_tv_1d(mu1, sigma, mu2, sigma) == pytest.approx(expected, abs=1e-6)


def test_convergence_run():
    report = vca.run_convergence(rounds=150, trials=8, seed=4)
    assert report["checks"] == {"prompt_rate": True, "contraction": True, "noise_decay": True}
    assert not report["violation_run"]
    assert report["final_mean_error"] < 1e-2
    assert report["w2"][-1] < report["w2"][0]

    bad = vca.run_convergence(beta_dm=1.05, rounds=100, trials=8, allow_violations=True)
    assert bad["violation_run"]
    assert bad["final_mean_error"] > report["final_mean_error"]


def test_denoiser_contraction():
    den = vca.Denoiser.random(4, 6, beta_dm=0.5, seed=9)
    assert den.contraction_norm() <= 0.5 + 1e-9
    z, psi = [1.0, -1.0, 0.5, 2.0], [0.1] * 6
    out1 = den.step(z, psi)
    out2 = den.step(z, psi)
    assert out1 == out2
    assert len(out1) == 4
