#pragma once

#include <vector>

#include "vca/core_math.hpp"

namespace vca {

/// Decay rates of the round-dependent reward weights:
///   lambda_div(t)  = exp(-alpha t)
///   lambda_cons(t) = 1 - exp(-beta t)
///   lambda_mi(t)   = exp(-gamma t) / 2
/// t is treated as a real so the crossing-point and calculus probes can
/// evaluate between integer rounds.
struct RewardSchedule {
    double alpha = 0.15;
    double beta = 0.1;
    double gamma = 0.075;

    void validate() const;
};

struct Weights {
    double div = 0.0;
    double cons = 0.0;
    double mi = 0.0;
};

struct RewardBreakdown {
    double r_div = 0.0;
    double r_cons = 0.0;
    double r_mi = 0.0;
    Weights weights;
    double total = 0.0;
    double round = 0.0;
};

Weights weights_at(const RewardSchedule& s, double t);

/// Mean of (1 - cos) over ordered pairs i != j of the sample features;
/// needs at least two samples, all with nonzero norm.
double diversity_reward(const std::vector<Vec>& features);

/// Sum of cosine similarities of consecutive trajectory features.
double consistency_reward(const std::vector<Vec>& trajectory);

/// Gradient of diversity_reward with respect to features[index].
Vec diversity_reward_grad(const std::vector<Vec>& features, std::size_t index);

/// Gradient of consistency_reward with respect to trajectory[index].
Vec consistency_reward_grad(const std::vector<Vec>& trajectory, std::size_t index);

RewardBreakdown total_reward(const RewardSchedule& s, double t, double r_div,
                             double r_cons, double r_mi);

/// dV/dt with the component rewards held constant in t:
///   -alpha e^{-alpha t} r_div + beta e^{-beta t} r_cons - (gamma/2) e^{-gamma t} r_mi
double value_derivative(const RewardSchedule& s, double t, double r_div, double r_cons,
                        double r_mi);

/// d2V/dt2 under the same assumption:
///   alpha^2 e^{-alpha t} r_div - beta^2 e^{-beta t} r_cons + (gamma^2/2) e^{-gamma t} r_mi
double value_second_derivative(const RewardSchedule& s, double t, double r_div,
                               double r_cons, double r_mi);

} // namespace vca
