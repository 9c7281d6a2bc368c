#include "vca/rewards.hpp"

#include <cmath>

namespace vca {

namespace {

// d cos(u, v) / du = (v_hat - cos * u_hat) / |u|
Vec cosine_grad_u(const Vec& u, const Vec& v) {
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0)
        throw DegenerateInputError("cosine gradient: zero-norm input");
    const double c = dot(u, v) / (nu * nv);
    Vec g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        g[i] = (v[i] / nv - c * u[i] / nu) / nu;
    return g;
}

void check_features(const std::vector<Vec>& features, std::size_t min_count,
                    const char* who) {
    if (features.size() < min_count)
        throw ArgumentError(std::string(who) + ": too few feature vectors");
    for (const Vec& f : features) {
        ensure_finite(f, who);
        if (norm(f) == 0.0)
            throw DegenerateInputError(std::string(who) + ": zero-norm feature");
    }
}

} // namespace

void RewardSchedule::validate() const {
    if (alpha <= 0.0 || beta <= 0.0 || gamma <= 0.0)
        throw ConfigError("reward schedule: decay rates must be > 0");
}

Weights weights_at(const RewardSchedule& s, double t) {
    if (t < 0.0) throw ArgumentError("weights_at: t must be >= 0");
    return {std::exp(-s.alpha * t), 1.0 - std::exp(-s.beta * t),
            0.5 * std::exp(-s.gamma * t)};
}

double diversity_reward(const std::vector<Vec>& features) {
    check_features(features, 2, "diversity_reward");
    const std::size_t n = features.size();
    // Normalize once, then accumulate 1 - n_i . n_j over ordered pairs.
    std::vector<Vec> unit(n);
    for (std::size_t i = 0; i < n; ++i)
        unit[i] = scaled(features[i], 1.0 / norm(features[i]));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) sum += 1.0 - dot(unit[i], unit[j]);
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double consistency_reward(const std::vector<Vec>& trajectory) {
    check_features(trajectory, 2, "consistency_reward");
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < trajectory.size(); ++t)
        sum += cosine_similarity(trajectory[t], trajectory[t + 1]);
    return sum;
}

Vec diversity_reward_grad(const std::vector<Vec>& features, std::size_t index) {
    check_features(features, 2, "diversity_reward_grad");
    if (index >= features.size())
        throw ArgumentError("diversity_reward_grad: index out of range");
    const std::size_t n = features.size();
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
    Vec g(features[index].size(), 0.0);
    // Ordered pairs (index, j) and (j, index) each contribute -d cos; the two
    // contributions are equal by symmetry of cosine.
    for (std::size_t j = 0; j < n; ++j) {
        if (j == index) continue;
        const Vec dc = cosine_grad_u(features[index], features[j]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= 2.0 * scale * dc[i];
    }
    return g;
}

Vec consistency_reward_grad(const std::vector<Vec>& trajectory, std::size_t index) {
    check_features(trajectory, 2, "consistency_reward_grad");
    if (index >= trajectory.size())
        throw ArgumentError("consistency_reward_grad: index out of range");
    Vec g(trajectory[index].size(), 0.0);
    if (index > 0) {
        const Vec dc = cosine_grad_u(trajectory[index], trajectory[index - 1]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
    }
    if (index + 1 < trajectory.size()) {
        const Vec dc = cosine_grad_u(trajectory[index], trajectory[index + 1]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
    }
    return g;
}

RewardBreakdown total_reward(const RewardSchedule& s, double t, double r_div,
                             double r_cons, double r_mi) {
    if (!std::isfinite(r_div) || !std::isfinite(r_cons) || !std::isfinite(r_mi))
        throw NumericError("total_reward: non-finite component reward");
    RewardBreakdown b;
    b.r_div = r_div;
    b.r_cons = r_cons;
    b.r_mi = r_mi;
    b.weights = weights_at(s, t);
    b.round = t;
    b.total = b.weights.div * r_div + b.weights.cons * r_cons + b.weights.mi * r_mi;
    return b;
}

double value_derivative(const RewardSchedule& s, double t, double r_div, double r_cons,
                        double r_mi) {
    return -s.alpha * std::exp(-s.alpha * t) * r_div +
           s.beta * std::exp(-s.beta * t) * r_cons -
           0.5 * s.gamma * std::exp(-s.gamma * t) * r_mi;
}

double value_second_derivative(const RewardSchedule& s, double t, double r_div,
                               double r_cons, double r_mi) {
    return s.alpha * s.alpha * std::exp(-s.alpha * t) * r_div -
           s.beta * s.beta * std::exp(-s.beta * t) * r_cons +
           0.5 * s.gamma * s.gamma * std::exp(-s.gamma * t) * r_mi;
}

} // namespace vca
