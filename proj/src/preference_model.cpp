#include "vca/preference_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace vca {

namespace {

// log(1 + e^x) without overflow.
double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vec concat(const Vec& a, const Vec& b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace

Scorer Scorer::zeros(std::size_t prompt_dim, std::size_t feature_dim,
                     std::size_t logit_dim, std::size_t rank, double alpha_s,
                     std::uint64_t seed) {
    if (prompt_dim == 0 || feature_dim == 0 || logit_dim == 0 || rank == 0)
        throw ArgumentError("Scorer: zero dimension");
    Scorer sc;
    sc.prompt_dim_ = prompt_dim;
    sc.alpha_s_ = alpha_s;
    sc.seed_ = seed;
    const std::size_t in = prompt_dim + feature_dim;
    sc.base_ = Mat(logit_dim, in, 0.0);
    sc.adapter_up_ = Mat(logit_dim, rank, 0.0);
    sc.adapter_down_ = Mat(rank, in);
    SeededRng rng = split_stream(seed, Stream::ScorerInit);
    const double a_scale = 0.05;
    for (double& x : sc.adapter_down_.data()) x = a_scale * rng.next_gaussian();
    return sc;
}

Scorer Scorer::seeded(std::size_t prompt_dim, std::size_t feature_dim,
                      std::size_t logit_dim, std::size_t rank, double alpha_s,
                      std::uint64_t seed) {
    Scorer sc = zeros(prompt_dim, feature_dim, logit_dim, rank, alpha_s, seed);
    SeededRng rng = split_stream(seed, Stream::ScorerInit).split(17);
    const double scale = 1.0 / std::sqrt(static_cast<double>(sc.base_.cols()));
    for (double& x : sc.base_.data()) x = scale * rng.next_gaussian();
    return sc;
}

Scorer Scorer::from_parts(Mat base, Mat adapter_up, Mat adapter_down,
                          std::size_t prompt_dim, double alpha_s, std::uint64_t seed) {
    if (adapter_up.rows() != base.rows() || adapter_down.cols() != base.cols() ||
        adapter_up.cols() != adapter_down.rows() || prompt_dim >= base.cols())
        throw ArgumentError("Scorer::from_parts: inconsistent shapes");
    Scorer sc;
    sc.base_ = std::move(base);
    sc.adapter_up_ = std::move(adapter_up);
    sc.adapter_down_ = std::move(adapter_down);
    sc.prompt_dim_ = prompt_dim;
    sc.alpha_s_ = alpha_s;
    sc.seed_ = seed;
    return sc;
}

double Scorer::score(const Vec& prompt, const Vec& feature) const {
    if (prompt.size() != prompt_dim_ || feature.size() != feature_dim())
        throw ArgumentError("Scorer::score: dimension mismatch");
    const Vec u = concat(prompt, feature);
    const Vec base_out = matvec(base_, u);
    const Vec down = matvec(adapter_down_, u);
    const Vec up = matvec(adapter_up_, down);
    const double s = adapter_scale();
    double mean = 0.0;
    for (std::size_t i = 0; i < base_out.size(); ++i) mean += base_out[i] + s * up[i];
    return mean / static_cast<double>(base_out.size());
}

double dpo_loss(const Scorer& sc, const PreferencePair& pair, double beta_dpo) {
    if (beta_dpo <= 0.0) throw ArgumentError("dpo_loss: beta_dpo must be > 0");
    const double margin = sc.score(pair.prompt_embedding, pair.positive_feature) -
                          sc.score(pair.prompt_embedding, pair.negative_feature);
    return softplus(-beta_dpo * margin);
}

DpoGrads dpo_adapter_grads(const Scorer& sc, const PreferencePair& pair, double beta_dpo) {
    if (beta_dpo <= 0.0) throw ArgumentError("dpo_adapter_grads: beta_dpo must be > 0");
    const Vec u_pos = concat(pair.prompt_embedding, pair.positive_feature);
    const Vec u_neg = concat(pair.prompt_embedding, pair.negative_feature);
    const Vec du = sub(u_pos, u_neg);

    const double margin = sc.score(pair.prompt_embedding, pair.positive_feature) -
                          sc.score(pair.prompt_embedding, pair.negative_feature);
    const double dloss_dmargin = -beta_dpo * logistic(-beta_dpo * margin);

    // margin = (1/h) ones^T (base + s B A) du; base is constant.
    const double h = static_cast<double>(sc.logit_dim());
    const double c = dloss_dmargin * sc.adapter_scale() / h;

    const Vec a_du = matvec(sc.adapter_down(), du); // r
    Vec ones(sc.logit_dim(), 1.0);
    const Vec bt_ones = matvec_transposed(sc.adapter_up(), ones); // r

    DpoGrads g;
    g.loss = softplus(-beta_dpo * margin);
    g.d_up = mat_scaled(outer(ones, a_du), c);
    g.d_down = mat_scaled(outer(bt_ones, du), c);
    return g;
}

std::vector<double> train_scorer(Scorer& sc, const std::vector<PreferencePair>& data,
                                 int epochs, double lr, SeededRng& rng, double beta_dpo,
                                 std::size_t batch_size) {
    if (data.empty()) throw ArgumentError("train_scorer: empty data");
    if (lr <= 0.0) throw ArgumentError("train_scorer: lr must be > 0");
    if (batch_size == 0) throw ArgumentError("train_scorer: batch size must be >= 1");
    std::vector<double> curve;
    if (epochs <= 0) return curve;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batches_per_epoch = (data.size() + batch_size - 1) / batch_size;
    const double total_steps = static_cast<double>(epochs) * batches_per_epoch;
    std::size_t step = 0;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Fisher-Yates shuffle from the training stream.
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            Mat g_up(sc.adapter_up().rows(), sc.adapter_up().cols());
            Mat g_down(sc.adapter_down().rows(), sc.adapter_down().cols());
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const DpoGrads g = dpo_adapter_grads(sc, data[order[i]], beta_dpo);
                batch_loss += g.loss;
                g_up = mat_add(g_up, g.d_up);
                g_down = mat_add(g_down, g.d_down);
            }
            const double n = static_cast<double>(end - start);
            const double step_lr =
                lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
            for (std::size_t i = 0; i < g_up.data().size(); ++i)
                sc.adapter_up().data()[i] -= step_lr * g_up.data()[i] / n;
            for (std::size_t i = 0; i < g_down.data().size(); ++i)
                sc.adapter_down().data()[i] -= step_lr * g_down.data()[i] / n;
            epoch_loss += batch_loss;
            ++step;
        }
        curve.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return curve;
}

double pairwise_accuracy(const Scorer& sc, const std::vector<PreferencePair>& data) {
    if (data.empty()) throw ArgumentError("pairwise_accuracy: empty data");
    double hits = 0.0;
    for (const PreferencePair& p : data) {
        const double pos = sc.score(p.prompt_embedding, p.positive_feature);
        const double neg = sc.score(p.prompt_embedding, p.negative_feature);
        if (pos > neg) hits += 1.0;
        else if (pos == neg) hits += 0.5;
    }
    return hits / static_cast<double>(data.size());
}

} // namespace vca
