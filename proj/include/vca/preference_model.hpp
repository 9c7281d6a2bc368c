#pragma once

#include <cstdint>
#include <vector>

#include "vca/core_math.hpp"

namespace vca {

/// One preference tuple: a prompt embedding with a preferred and a
/// dispreferred feature vector (labels fixed as 1 = positive, 0 = negative).
struct PreferencePair {
    Vec prompt_embedding;   // length m
    Vec positive_feature;   // length k
    Vec negative_feature;   // length k
};

/// Pairwise preference scorer on [prompt; feature] inputs. The frozen base
/// map is never trained; only the adapter factors (B_s, A_s) move, so the
/// learned update has rank at most `rank`. The adapter enters scaled by
/// alpha_s / rank. The score is the mean of the h output logits.
class Scorer {
public:
    /// Zero base, zero B_s, small Gaussian A_s: scores are exactly 0 until
    /// trained, so pairwise accuracy starts at exactly 0.5 (all ties).
    static Scorer zeros(std::size_t prompt_dim, std::size_t feature_dim,
                        std::size_t logit_dim, std::size_t rank, double alpha_s,
                        std::uint64_t seed);
    /// Random frozen base, zero B_s, small Gaussian A_s.
    static Scorer seeded(std::size_t prompt_dim, std::size_t feature_dim,
                         std::size_t logit_dim, std::size_t rank, double alpha_s,
                         std::uint64_t seed);

    double score(const Vec& prompt, const Vec& feature) const;

    std::size_t prompt_dim() const { return prompt_dim_; }
    std::size_t feature_dim() const { return base_.cols() - prompt_dim_; }
    std::size_t logit_dim() const { return base_.rows(); }
    std::size_t rank() const { return adapter_down_.rows(); }
    double adapter_scale() const { return alpha_s_ / static_cast<double>(rank()); }
    double alpha_s() const { return alpha_s_; }
    std::uint64_t seed() const { return seed_; }

    const Mat& base() const { return base_; }
    const Mat& adapter_up() const { return adapter_up_; }     // B_s: h x r
    const Mat& adapter_down() const { return adapter_down_; } // A_s: r x (m+k)
    Mat& adapter_up() { return adapter_up_; }
    Mat& adapter_down() { return adapter_down_; }

    /// Reconstructs a scorer from checkpointed matrices.
    static Scorer from_parts(Mat base, Mat adapter_up, Mat adapter_down,
                             std::size_t prompt_dim, double alpha_s, std::uint64_t seed);

private:
    Scorer() = default;
    Mat base_;
    Mat adapter_up_;
    Mat adapter_down_;
    std::size_t prompt_dim_ = 0;
    double alpha_s_ = 2.0;
    std::uint64_t seed_ = 0;
};

/// -log sigmoid(beta_dpo * (score+ - score-)), overflow-safe for any margin.
double dpo_loss(const Scorer& sc, const PreferencePair& pair, double beta_dpo);

struct DpoGrads {
    double loss = 0.0;
    Mat d_up;   // d loss / d B_s
    Mat d_down; // d loss / d A_s
};

DpoGrads dpo_adapter_grads(const Scorer& sc, const PreferencePair& pair, double beta_dpo);

/// Mini-batch gradient descent on the mean dpo_loss with a cosine learning
/// rate decay from lr to 0 across the whole run. Only the adapter factors
/// are updated. Returns the per-epoch mean loss.
std::vector<double> train_scorer(Scorer& sc, const std::vector<PreferencePair>& data,
                                 int epochs, double lr, SeededRng& rng,
                                 double beta_dpo = 1.0, std::size_t batch_size = 32);

/// Fraction of pairs scoring positive above negative; ties count 0.5.
double pairwise_accuracy(const Scorer& sc, const std::vector<PreferencePair>& data);

/// The preference score exposed under its reward name.
inline double mi_reward(const Scorer& sc, const Vec& prompt, const Vec& feature) {
    return sc.score(prompt, feature);
}

} // namespace vca
