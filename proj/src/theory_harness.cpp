#include "vca/theory_harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vca/adaptation.hpp"
#include "vca/preference_model.hpp"

namespace vca {

namespace {

Mat z_block(const Denoiser& den) {
    const std::size_t d = den.latent_dim();
    Mat a(d, d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) a(r, c) = den.phi(r, c);
    return a;
}

void check_convergence_config(const ConvergenceConfig& cfg) {
    if (cfg.latent_dim == 0 || cfg.embed_dim == 0)
        throw ConfigError("convergence: zero dimension");
    if (cfg.rounds < 2 || cfg.trials < 1)
        throw ConfigError("convergence: need rounds >= 2 and trials >= 1");
    if (cfg.allow_assumption_violations) return;
    if (cfg.beta_dm <= 0.0 || cfg.beta_dm >= 1.0)
        throw ConfigError("convergence: contraction bound must lie in (0, 1) "
                          "(set allow_assumption_violations for deliberate violation runs)");
    if (cfg.alpha_p <= 0.0 || cfg.alpha_p >= 1.0)
        throw ConfigError("convergence: prompt rate must lie in (0, 1) "
                          "(set allow_assumption_violations for deliberate violation runs)");
    if (cfg.schedule.sigma0 > 0.0 && cfg.schedule.decay_exponent <= 1.0)
        throw ConfigError("convergence: noise decay exponent must be > 1 "
                          "(set allow_assumption_violations for deliberate violation runs)");
    if (cfg.schedule.sigma0 < 0.0) throw ConfigError("convergence: sigma0 must be >= 0");
}

} // namespace

ConvergenceReport run_convergence(const ConvergenceConfig& cfg) {
    check_convergence_config(cfg);
    Denoiser den = make_denoiser(cfg.latent_dim, cfg.embed_dim,
                                 std::min(cfg.beta_dm, 0.999),
                                 split_stream(cfg.seed, Stream::DenoiserInit));
    den.beta_dm = cfg.beta_dm;
    if (cfg.beta_dm >= 1.0) {
        // Expansive violation runs use a uniform expansion (beta * I): a random
        // matrix rescaled to top singular value beta can still have spectral
        // radius below 1 and converge, which would mask the violation.
        for (std::size_t r = 0; r < cfg.latent_dim; ++r)
            for (std::size_t c = 0; c < cfg.latent_dim; ++c)
                den.phi(r, c) = r == c ? cfg.beta_dm : 0.0;
    }
    return run_convergence(cfg, den);
}

ConvergenceReport run_convergence(const ConvergenceConfig& cfg, const Denoiser& den) {
    check_convergence_config(cfg);
    const std::size_t d = cfg.latent_dim;
    const std::size_t m = cfg.embed_dim;
    if (den.latent_dim() != d || den.embed_dim() != m)
        throw ArgumentError("run_convergence: denoiser dimensions disagree with config");

    SeededRng root = split_stream(cfg.seed, Stream::Convergence);
    ConvergenceReport report;
    report.config = cfg;

    // Prompt path: psi_t = psi* + alpha_p^t * delta, |delta| = psi_offset.
    SeededRng prng = root.split(0);
    Vec psi_target = sample_gaussian(prng, m, 1.0);
    Vec delta = sample_gaussian(prng, m, 1.0);
    const double deltan = norm(delta);
    if (deltan > 0.0) delta = scaled(delta, cfg.psi_offset / deltan);

    // Fixed point of z -> A z + B psi* + bias from the linear system.
    const Mat a = z_block(den);
    RoundConditioning ctx; // zero conditioning code
    Vec rhs = denoise_step(den, Vec(d, 0.0), psi_target, ctx); // B psi* + bias
    Mat i_minus_a = Mat::identity(d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) i_minus_a(r, c) -= a(r, c);
    report.z_target = solve_linear(i_minus_a, rhs);

    // Empirical means over trials.
    std::vector<Vec> sum(static_cast<std::size_t>(cfg.rounds), Vec(d, 0.0));
    for (int trial = 0; trial < cfg.trials; ++trial) {
        SeededRng rng = root.split(100 + static_cast<std::uint64_t>(trial));
        Vec z = sample_gaussian(rng, d, 1.0);
        for (int t = 1; t <= cfg.rounds; ++t) {
            Vec psi = psi_target;
            const double rate = std::pow(cfg.alpha_p, t);
            for (std::size_t i = 0; i < m; ++i) psi[i] += rate * delta[i];
            ctx.round_index = t;
            z = denoise_step(den, z, psi, ctx);
            const double s = cfg.schedule.sigma0 == 0.0 ? 0.0 : cfg.schedule.sigma(t);
            if (s > 0.0) {
                const Vec eps = sample_gaussian(rng, d, s);
                for (std::size_t i = 0; i < d; ++i) z[i] += eps[i];
            }
            for (std::size_t i = 0; i < d; ++i) sum[t - 1][i] += z[i];
        }
    }

    // Exact law propagation: the mean follows the deterministic recursion and
    // Cov_t = A Cov A^T + sigma_t^2 I.
    Mat cov = Mat::identity(d);
    const Mat at = transpose(a);
    Vec law_mean(d, 0.0); // z_start ~ N(0, I)
    report.mean_error.resize(cfg.rounds);
    report.sigma.resize(cfg.rounds);
    report.w2.resize(cfg.rounds);
    report.mean.resize(cfg.rounds);
    report.law_mean.resize(cfg.rounds);
    for (int t = 1; t <= cfg.rounds; ++t) {
        Vec mu = scaled(sum[t - 1], 1.0 / cfg.trials);
        report.mean[t - 1] = mu;
        report.mean_error[t - 1] = distance(mu, report.z_target);

        Vec psi = psi_target;
        const double rate = std::pow(cfg.alpha_p, t);
        for (std::size_t i = 0; i < m; ++i) psi[i] += rate * delta[i];
        ctx.round_index = t;
        law_mean = denoise_step(den, law_mean, psi, ctx);
        report.law_mean[t - 1] = law_mean;

        cov = matmul(matmul(a, cov), at);
        const double s = cfg.schedule.sigma0 == 0.0 ? 0.0 : cfg.schedule.sigma(t);
        for (std::size_t i = 0; i < d; ++i) cov(i, i) += s * s;
        double tr = 0.0;
        for (std::size_t i = 0; i < d; ++i) tr += cov(i, i);
        report.sigma[t - 1] = std::sqrt(tr / static_cast<double>(d));
        // W2 to the point mass: err^2 + tr(Cov) = err^2 + d * sigma^2.
        report.w2[t - 1] =
            std::sqrt(report.mean_error[t - 1] * report.mean_error[t - 1] + tr);
    }
    report.final_mean_error = report.mean_error.back();
    report.final_w2 = report.w2.back();

    // Assumption checks.
    report.checks.contraction_ok = z_block_spectral_norm(den) < 1.0;
    report.checks.prompt_rate_ok = cfg.alpha_p > 0.0 && cfg.alpha_p < 1.0;
    if (cfg.schedule.sigma0 == 0.0) {
        report.checks.noise_decay_ok = true;
    } else {
        bool decreasing = true;
        for (int t = 1; t < cfg.rounds; ++t)
            if ((t + 1) * cfg.schedule.sigma(t + 1) >= t * cfg.schedule.sigma(t))
                decreasing = false;
        report.checks.noise_decay_ok = decreasing;
    }

    SeededRng lrng = root.split(7);
    double probe = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec z1 = sample_gaussian(lrng, d, 1.0);
        const Vec z2 = sample_gaussian(lrng, d, 1.0);
        const double dz = distance(z1, z2);
        if (dz == 0.0) continue;
        ctx.round_index = 1;
        probe = std::max(probe, distance(denoise_step(den, z1, psi_target, ctx),
                                         denoise_step(den, z2, psi_target, ctx)) / dz);
    }
    report.lipschitz_probe_max = probe;
    report.violation_run = !(report.checks.contraction_ok && report.checks.prompt_rate_ok &&
                             report.checks.noise_decay_ok);

    int dec = 0, total = 0;
    for (std::size_t i = report.w2.size() / 2; i + 1 < report.w2.size(); ++i) {
        ++total;
        if (report.w2[i + 1] < report.w2[i]) ++dec;
    }
    report.w2_decreasing_fraction_last_half =
        total == 0 ? 0.0 : static_cast<double>(dec) / total;
    return report;
}

namespace {

double gaussian_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double fa, double fm, double fb, double whole, double eps,
                        int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, eps * 0.5, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, eps * 0.5, depth - 1);
}

} // namespace

double gaussian_tv_1d(double mu1, double sigma1, double mu2, double sigma2) {
    if (sigma1 <= 0.0 || sigma2 <= 0.0)
        throw ArgumentError("gaussian_tv_1d: standard deviations must be > 0");
    if (mu1 == mu2 && sigma1 == sigma2) return 0.0;
    const auto integrand = [&](double x) {
        return std::abs(gaussian_pdf(x, mu1, sigma1) - gaussian_pdf(x, mu2, sigma2));
    };
    const double smax = std::max(sigma1, sigma2);
    const double lo = std::min(mu1, mu2) - 12.0 * smax;
    const double hi = std::max(mu1, mu2) + 12.0 * smax;
    const double mid = 0.5 * (lo + hi);
    const double flo = integrand(lo), fmid = integrand(mid), fhi = integrand(hi);
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    const double tv =
        0.5 * adaptive_simpson(integrand, lo, hi, flo, fmid, fhi, whole, 1e-9, 48);
    return std::clamp(tv, 0.0, 1.0);
}

std::vector<std::optional<double>> tv_between_rounds(const ConvergenceReport& report) {
    std::vector<std::optional<double>> out;
    for (std::size_t t = 0; t + 1 < report.law_mean.size(); ++t) {
        const double s1 = report.sigma[t];
        const double s2 = report.sigma[t + 1];
        if (s1 <= 0.0 || s2 <= 0.0) {
            out.push_back(std::nullopt);
            continue;
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < report.law_mean[t].size(); ++i)
            worst = std::max(worst, gaussian_tv_1d(report.law_mean[t][i], s1,
                                                   report.law_mean[t + 1][i], s2));
        out.push_back(worst);
    }
    return out;
}

std::vector<std::size_t> pareto_front(const CandidateSet& cands) {
    if (cands.points.empty()) throw ArgumentError("pareto_front: empty candidate set");
    for (const auto& p : cands.points)
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
            throw NumericError("pareto_front: non-finite candidate");
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < cands.points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < cands.points.size() && !dominated; ++j) {
            if (i == j) continue;
            const auto& pi = cands.points[i];
            const auto& pj = cands.points[j];
            const bool geq = pj[0] >= pi[0] && pj[1] >= pi[1] && pj[2] >= pi[2];
            const bool strict = pj[0] > pi[0] || pj[1] > pi[1] || pj[2] > pi[2];
            dominated = geq && strict;
        }
        if (!dominated) front.push_back(i);
    }
    return front;
}

std::size_t scalarization_argmax(const CandidateSet& cands,
                                 const std::array<double, 3>& weights) {
    if (cands.points.empty()) throw ArgumentError("scalarization_argmax: empty candidate set");
    if (weights[0] <= 0.0 || weights[1] <= 0.0 || weights[2] <= 0.0)
        throw ArgumentError("scalarization_argmax: weights must be strictly positive");
    std::size_t best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cands.points.size(); ++i) {
        const auto& p = cands.points[i];
        const double v = weights[0] * p[0] + weights[1] * p[1] + weights[2] * p[2];
        if (v > best_val) { // ties keep the lowest index
            best_val = v;
            best = i;
        }
    }
    return best;
}

WeightPathScan weight_path_scan(const RewardSchedule& s, const CandidateSet& cands,
                                const std::vector<double>& t_grid) {
    WeightPathScan scan;
    const std::vector<std::size_t> front = pareto_front(cands);
    scan.all_pareto = true;
    for (std::size_t gi = 0; gi < t_grid.size(); ++gi) {
        const Weights w = weights_at(s, t_grid[gi]);
        WeightPathEntry e;
        e.t = t_grid[gi];
        e.weights = w;
        // lambda_cons(0) = 0: nudge zero weights to the smallest positive
        // double so the scalarization hypothesis (strict positivity) holds
        // on the grid boundary.
        const double tiny = std::numeric_limits<double>::min();
        e.argmax = scalarization_argmax(
            cands, {std::max(w.div, tiny), std::max(w.cons, tiny), std::max(w.mi, tiny)});
        if (std::find(front.begin(), front.end(), e.argmax) == front.end())
            scan.all_pareto = false;
        if (!scan.path.empty() && scan.path.back().argmax != e.argmax)
            scan.switch_indices.push_back(gi);
        scan.path.push_back(e);
    }
    return scan;
}

namespace {

// Bisection on [0, hi] with hi doubled until a sign change appears.
std::optional<double> find_crossing(const std::function<double(double)>& g) {
    double lo = 0.0;
    double glo = g(lo);
    if (glo == 0.0) return 0.0;
    double hi = 1.0;
    double ghi = g(hi);
    int expand = 0;
    while (glo * ghi > 0.0) {
        lo = hi;
        glo = ghi;
        hi *= 2.0;
        ghi = g(hi);
        if (++expand > 60) return std::nullopt;
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm == 0.0) return mid;
        if (glo * gm < 0.0) {
            hi = mid;
            ghi = gm;
        } else {
            lo = mid;
            glo = gm;
        }
        if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

} // namespace

EqualWeightProbe equal_weight_probe(const RewardSchedule& s) {
    s.validate();
    EqualWeightProbe probe;
    const auto spread = [&](double t) {
        const Weights w = weights_at(s, t);
        const double lo = std::min({w.div, w.cons, w.mi});
        const double hi = std::max({w.div, w.cons, w.mi});
        return hi - lo;
    };
    probe.div_cons_crossing =
        find_crossing([&](double t) { const Weights w = weights_at(s, t); return w.div - w.cons; });
    probe.div_mi_crossing =
        find_crossing([&](double t) { const Weights w = weights_at(s, t); return w.div - w.mi; });
    probe.cons_mi_crossing =
        find_crossing([&](double t) { const Weights w = weights_at(s, t); return w.cons - w.mi; });

    probe.best_residual = std::numeric_limits<double>::infinity();
    for (const auto& c : {probe.div_cons_crossing, probe.div_mi_crossing, probe.cons_mi_crossing}) {
        if (!c) continue;
        const double r = spread(*c);
        if (r < probe.best_residual) {
            probe.best_residual = r;
            probe.best_t = *c;
        }
    }
    if (!std::isfinite(probe.best_residual)) probe.best_residual = 0.0;
    if (probe.div_cons_crossing && probe.div_mi_crossing && probe.cons_mi_crossing &&
        probe.best_residual < 1e-9) {
        probe.common_t0 = probe.best_t;
    }
    return probe;
}

namespace {

// Central finite difference over the flat entries of a matrix field.
Mat fd_grad_mat(const std::function<double(const Mat&)>& f, const Mat& at, double h) {
    Mat g(at.rows(), at.cols());
    Mat probe = at;
    for (std::size_t i = 0; i < at.data().size(); ++i) {
        probe.data()[i] = at.data()[i] + h;
        const double fp = f(probe);
        probe.data()[i] = at.data()[i] - h;
        const double fm = f(probe);
        probe.data()[i] = at.data()[i];
        g.data()[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double rel_err(const Mat& analytic, const Mat& fd) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < analytic.data().size(); ++i) {
        const double d = analytic.data()[i] - fd.data()[i];
        num += d * d;
        den += fd.data()[i] * fd.data()[i];
    }
    return std::sqrt(num) / (std::sqrt(den) + 1e-12);
}

double rel_err_vec(const Vec& analytic, const Vec& fd) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = analytic[i] - fd[i];
        num += d * d;
        den += fd[i] * fd[i];
    }
    return std::sqrt(num) / (std::sqrt(den) + 1e-12);
}

} // namespace

GradientCheckReport run_gradient_checks(std::uint64_t seed, int points_per_family) {
    constexpr double kH = 1e-5;
    GradientCheckReport report;
    report.tolerance = 1e-5;
    SeededRng root(seed);

    const std::size_t d = 6, m = 8, k = 8, h = 4;

    const auto random_features = [&](SeededRng& rng, std::size_t n) {
        std::vector<Vec> fs;
        for (std::size_t i = 0; i < n; ++i) {
            Vec f = sample_gaussian(rng, k, 1.0);
            while (norm(f) < 0.3) f = sample_gaussian(rng, k, 1.0);
            fs.push_back(std::move(f));
        }
        return fs;
    };

    // Reward gradients with respect to one feature vector.
    {
        GradientCheckFamily fam{"diversity_reward", 0.0, false, false};
        GradientCheckFamily famc{"consistency_reward", 0.0, false, false};
        SeededRng rng = root.split(1);
        for (int p = 0; p < points_per_family; ++p) {
            auto fs = random_features(rng, 2 + static_cast<std::size_t>(rng.next_int(0, 4)));
            const std::size_t idx =
                static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(fs.size()) - 1));
            const auto field_div = [&](const Vec& x) {
                auto copy = fs;
                copy[idx] = x;
                return diversity_reward(copy);
            };
            const auto field_cons = [&](const Vec& x) {
                auto copy = fs;
                copy[idx] = x;
                return consistency_reward(copy);
            };
            fam.worst = std::max(fam.worst, rel_err_vec(diversity_reward_grad(fs, idx),
                                                        finite_diff_gradient(field_div, fs[idx], kH)));
            famc.worst = std::max(famc.worst, rel_err_vec(consistency_reward_grad(fs, idx),
                                                          finite_diff_gradient(field_cons, fs[idx], kH)));
        }
        fam.pass = fam.worst <= report.tolerance;
        famc.pass = famc.worst <= report.tolerance;
        report.families.push_back(fam);
        report.families.push_back(famc);
    }

    // DPO loss through the adapter factors.
    {
        GradientCheckFamily fam{"dpo_adapter", 0.0, false, false};
        SeededRng rng = root.split(2);
        for (int p = 0; p < points_per_family; ++p) {
            Scorer sc = Scorer::seeded(m, k, h, 4, 2.0, rng.next_u64());
            for (double& x : sc.adapter_up().data()) x = 0.3 * rng.next_gaussian();
            for (double& x : sc.adapter_down().data()) x = 0.3 * rng.next_gaussian();
            PreferencePair pair{sample_gaussian(rng, m, 1.0), sample_gaussian(rng, k, 1.0),
                                sample_gaussian(rng, k, 1.0)};
            const double beta_dpo = 0.5 + rng.next_double();
            const DpoGrads g = dpo_adapter_grads(sc, pair, beta_dpo);
            const auto f_up = [&](const Mat& b) {
                Scorer s2 = Scorer::from_parts(sc.base(), b, sc.adapter_down(), m, sc.alpha_s(), 0);
                return dpo_loss(s2, pair, beta_dpo);
            };
            const auto f_down = [&](const Mat& a) {
                Scorer s2 = Scorer::from_parts(sc.base(), sc.adapter_up(), a, m, sc.alpha_s(), 0);
                return dpo_loss(s2, pair, beta_dpo);
            };
            fam.worst = std::max(fam.worst, rel_err(g.d_up, fd_grad_mat(f_up, sc.adapter_up(), kH)));
            fam.worst = std::max(fam.worst, rel_err(g.d_down, fd_grad_mat(f_down, sc.adapter_down(), kH)));
        }
        fam.pass = fam.worst <= report.tolerance;
        report.families.push_back(fam);
    }

    // Reconstruction losses: one-step loss wrt phi, adapted loss wrt (B, A).
    {
        GradientCheckFamily fam{"one_step_loss_phi", 0.0, false, false};
        GradientCheckFamily famb{"reconstruction_adapter", 0.0, false, false};
        SeededRng rng = root.split(3);
        for (int p = 0; p < points_per_family; ++p) {
            Denoiser den = make_denoiser(d, m, 0.7, SeededRng(rng.next_u64()));
            LoraAdapter lora = make_lora(d, m, 3, 4.0, 0.01, SeededRng(rng.next_u64()));
            for (double& x : lora.up.data()) x = 0.2 * rng.next_gaussian();
            RoundConditioning ctx;
            ctx.code = sample_gaussian(rng, m, 0.5);
            const Vec z = sample_gaussian(rng, d, 1.0);
            const Vec psi = sample_gaussian(rng, m, 1.0);
            Vec target = sample_gaussian(rng, d, 1.0);
            // keep the residual away from zero: |r| in the denominator
            while (one_step_loss(target, den, z, psi, ctx) < 0.2)
                target = sample_gaussian(rng, d, 1.0);

            const auto f_phi = [&](const Mat& phi) {
                Denoiser d2 = den;
                d2.phi = phi;
                return one_step_loss(target, d2, z, psi, ctx);
            };
            fam.worst = std::max(fam.worst, rel_err(one_step_loss_grad_phi(target, den, z, psi, ctx),
                                                    fd_grad_mat(f_phi, den.phi, kH)));

            const AdapterGrads g = bce_adapter_grads(target, den, lora, z, psi, ctx);
            const auto f_up = [&](const Mat& b) {
                LoraAdapter l2 = lora;
                l2.up = b;
                return bce_reconstruction_loss(target, den, l2, z, psi, ctx);
            };
            const auto f_down = [&](const Mat& a) {
                LoraAdapter l2 = lora;
                l2.down = a;
                return bce_reconstruction_loss(target, den, l2, z, psi, ctx);
            };
            famb.worst = std::max(famb.worst, rel_err(g.d_up, fd_grad_mat(f_up, lora.up, kH)));
            famb.worst = std::max(famb.worst, rel_err(g.d_down, fd_grad_mat(f_down, lora.down, kH)));
        }
        fam.pass = fam.worst <= report.tolerance;
        famb.pass = famb.worst <= report.tolerance;
        report.families.push_back(fam);
        report.families.push_back(famb);
    }

    // Policy log-density and the PPO surrogate path through (B, A).
    {
        GradientCheckFamily fam{"policy_logprob_adapter", 0.0, false, false};
        GradientCheckFamily fams{"ppo_surrogate_adapter", 0.0, false, false};
        GradientCheckFamily famz{"ppo_clipped_flat_zero", 0.0, true, false};
        SeededRng rng = root.split(4);
        PpoConfig cfg;
        for (int p = 0; p < points_per_family; ++p) {
            Denoiser den = make_denoiser(d, m, 0.6, SeededRng(rng.next_u64()));
            LoraAdapter lora = make_lora(d, m, 3, 4.0, 0.01, SeededRng(rng.next_u64()));
            for (double& x : lora.up.data()) x = 0.2 * rng.next_gaussian();
            RoundConditioning ctx;
            TransitionRecord tr;
            tr.z = sample_gaussian(rng, d, 1.0);
            tr.psi = sample_gaussian(rng, m, 1.0);
            tr.ctx = ctx;
            const Denoiser den_eff = adapted_denoiser(den, lora);
            tr.action = denoise_step(den_eff, tr.z, tr.psi, ctx);
            const Vec eps = sample_gaussian(rng, d, cfg.sigma_pol);
            for (std::size_t i = 0; i < d; ++i) tr.action[i] += eps[i];
            const double lp = policy_logprob(den_eff, tr.z, tr.psi, ctx, tr.action, cfg.sigma_pol);

            const AdapterGrads lg = policy_logprob_adapter_grads(den, lora, tr.z, tr.psi, ctx,
                                                                 tr.action, cfg.sigma_pol);
            const auto lp_up = [&](const Mat& b) {
                LoraAdapter l2 = lora;
                l2.up = b;
                return policy_logprob(adapted_denoiser(den, l2), tr.z, tr.psi, ctx, tr.action,
                                      cfg.sigma_pol);
            };
            const auto lp_down = [&](const Mat& a) {
                LoraAdapter l2 = lora;
                l2.down = a;
                return policy_logprob(adapted_denoiser(den, l2), tr.z, tr.psi, ctx, tr.action,
                                      cfg.sigma_pol);
            };
            fam.worst = std::max(fam.worst, rel_err(lg.d_up, fd_grad_mat(lp_up, lora.up, kH)));
            fam.worst = std::max(fam.worst, rel_err(lg.d_down, fd_grad_mat(lp_down, lora.down, kH)));

            // On-policy-ish transition: rho near 1, surrogate differentiable.
            tr.old_logprob = lp + 0.05 * rng.next_gaussian();
            tr.advantage = rng.next_gaussian();
            const double rho = std::exp(lp - tr.old_logprob);
            if (rho > 1.0 - cfg.clip + 0.02 && rho < 1.0 + cfg.clip - 0.02) {
                const AdapterGrads sg = ppo_surrogate_adapter_grads(den, lora, tr, cfg);
                const auto s_up = [&](const Mat& b) {
                    LoraAdapter l2 = lora;
                    l2.up = b;
                    const double nlp = policy_logprob(adapted_denoiser(den, l2), tr.z, tr.psi,
                                                      ctx, tr.action, cfg.sigma_pol);
                    return ppo_surrogate(nlp, tr.old_logprob, tr.advantage, cfg.clip);
                };
                const auto s_down = [&](const Mat& a) {
                    LoraAdapter l2 = lora;
                    l2.down = a;
                    const double nlp = policy_logprob(adapted_denoiser(den, l2), tr.z, tr.psi,
                                                      ctx, tr.action, cfg.sigma_pol);
                    return ppo_surrogate(nlp, tr.old_logprob, tr.advantage, cfg.clip);
                };
                fams.worst = std::max(fams.worst, rel_err(sg.d_up, fd_grad_mat(s_up, lora.up, kH)));
                fams.worst = std::max(fams.worst, rel_err(sg.d_down, fd_grad_mat(s_down, lora.down, kH)));
            }

            // Clip-flat region: advantage pushes rho further outside the band,
            // so the per-transition gradient must vanish identically.
            tr.old_logprob = lp - std::log(1.0 + cfg.clip + 0.3); // rho well above 1+eps
            tr.advantage = 1.0 + rng.next_double();
            const AdapterGrads zg = ppo_surrogate_adapter_grads(den, lora, tr, cfg);
            for (double x : zg.d_up.data()) famz.worst = std::max(famz.worst, std::abs(x));
            for (double x : zg.d_down.data()) famz.worst = std::max(famz.worst, std::abs(x));
        }
        fam.pass = fam.worst <= report.tolerance;
        fams.pass = fams.worst <= report.tolerance;
        famz.pass = famz.worst == 0.0;
        report.families.push_back(fam);
        report.families.push_back(fams);
        report.families.push_back(famz);
    }

    report.all_pass = std::all_of(report.families.begin(), report.families.end(),
                                  [](const GradientCheckFamily& f) { return f.pass; });
    return report;
}

} // namespace vca
