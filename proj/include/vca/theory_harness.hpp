#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vca/core_math.hpp"
#include "vca/latent_dynamics.hpp"
#include "vca/rewards.hpp"

namespace vca {

/// Configuration of the multi-round convergence simulation. Defaults satisfy
/// all three convergence assumptions (contraction < 1, prompt rate < 1,
/// noise decay exponent > 1). Violating configs are refused unless
/// allow_assumption_violations is set, in which case the run is flagged.
struct ConvergenceConfig {
    std::size_t latent_dim = 8;
    std::size_t embed_dim = 16;
    double beta_dm = 0.5;
    double alpha_p = 0.8;    // geometric prompt-convergence rate
    double psi_offset = 1.0; // |psi_0 - psi*|
    NoiseSchedule schedule;  // per-round noise sigma(t)
    int rounds = 200;
    int trials = 32;
    std::uint64_t seed = 0;
    bool allow_assumption_violations = false;
};

struct AssumptionChecks {
    bool prompt_rate_ok = false;    // rate < 1 and the geometric bound holds
    bool contraction_ok = false;    // z-block spectral norm < 1
    bool noise_decay_ok = false;    // t * sigma_t strictly decreasing (or sigma == 0)
};

/// Per-round series of the simulated recursion. mean_error is the empirical
/// |mu_t - z*| over trials; sigma is sqrt(tr(Cov_t)/d) from the exact
/// covariance propagation Cov_t = A Cov_{t-1} A^T + sigma_t^2 I; and
/// w2 = sqrt(mean_error^2 + d sigma^2), the Wasserstein-2 distance to the
/// point mass at z*. Entry i covers round i+1. TV between any fixed-variance
/// Gaussian and a point mass is identically 1, so w2 together with the
/// successive-round TV sequence (tv_between_rounds) are the convergence
/// metrics reported for the Dirac-limit regime.
struct ConvergenceReport {
    ConvergenceConfig config;
    Vec z_target;
    std::vector<double> mean_error;
    std::vector<double> sigma;
    std::vector<double> w2;
    std::vector<Vec> mean;     // empirical per-round mean vectors (over trials)
    std::vector<Vec> law_mean; // exact per-round law means (deterministic recursion)
    AssumptionChecks checks;
    double lipschitz_probe_max = 0.0; // max |DM(z)-DM(z')|/|z-z'| over random pairs
    bool violation_run = false;
    double final_mean_error = 0.0;
    double final_w2 = 0.0;
    double w2_decreasing_fraction_last_half = 0.0;
};

ConvergenceReport run_convergence(const ConvergenceConfig& cfg);
/// Same, but simulating a caller-supplied denoiser (e.g. a scaled identity).
ConvergenceReport run_convergence(const ConvergenceConfig& cfg, const Denoiser& den);

/// Total variation distance between two 1-D Gaussians, by adaptive Simpson
/// quadrature of |p - q| / 2 to absolute accuracy ~1e-8.
double gaussian_tv_1d(double mu1, double sigma1, double mu2, double sigma2);

/// Per-coordinate TV between the Gaussian laws of consecutive rounds,
/// aggregated by the maximum over coordinates. Rounds where either law has
/// zero variance are skipped (nullopt): TV against a point mass is not a
/// usable number here.
std::vector<std::optional<double>> tv_between_rounds(const ConvergenceReport& report);

/// Objective-space candidate set: (r_div, r_cons, r_mi) triples.
struct CandidateSet {
    std::vector<std::array<double, 3>> points;
    std::string provenance;
};

/// Exact O(n^2) dominance filter. A point is kept unless some other point is
/// >= in every component and > in at least one. Duplicates are all kept.
std::vector<std::size_t> pareto_front(const CandidateSet& cands);

/// Index maximizing w . r over the set; ties broken by lowest index. All
/// weights must be strictly positive (the scalarization-soundness
/// hypothesis).
std::size_t scalarization_argmax(const CandidateSet& cands,
                                 const std::array<double, 3>& weights);

struct WeightPathEntry {
    double t = 0.0;
    std::size_t argmax = 0;
    Weights weights;
};

struct WeightPathScan {
    std::vector<WeightPathEntry> path;
    std::vector<std::size_t> switch_indices; // grid positions where the argmax changes
    bool all_pareto = false;
};

/// Evaluates the schedule weights on the grid, records the scalarization
/// argmax at each t, verifies every recorded index is Pareto-optimal and
/// reports where the argmax switches.
WeightPathScan weight_path_scan(const RewardSchedule& s, const CandidateSet& cands,
                                const std::vector<double>& t_grid);

struct EqualWeightProbe {
    std::optional<double> common_t0;
    std::optional<double> div_cons_crossing;
    std::optional<double> div_mi_crossing;
    std::optional<double> cons_mi_crossing;
    double best_t = 0.0;         // candidate minimizing the weight spread
    double best_residual = 0.0;  // max pairwise weight gap at best_t
};

/// Root-finds all pairwise weight equalities; reports a common t0 only when
/// all three coincide within 1e-9.
EqualWeightProbe equal_weight_probe(const RewardSchedule& s);

struct GradientCheckFamily {
    std::string name;
    double worst = 0.0; // worst relative error (or worst absolute, see exact)
    bool exact = false; // family asserts exact zeros rather than relative error
    bool pass = false;
};

struct GradientCheckReport {
    std::vector<GradientCheckFamily> families;
    double tolerance = 1e-5;
    bool all_pass = false;
};

/// Checks every analytic gradient in the library (reward gradients, DPO,
/// reconstruction losses, policy log-density and the PPO surrogate path)
/// against central finite differences at h = 1e-5 on random instances.
GradientCheckReport run_gradient_checks(std::uint64_t seed, int points_per_family = 50);

} // namespace vca
