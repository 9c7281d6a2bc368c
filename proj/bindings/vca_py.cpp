// Python bindings for the main operations: rewards and the dynamic weight
// schedule, the preference scorer, the Pareto / convergence harnesses and
// the toy denoiser.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vca/adaptation.hpp"
#include "vca/dialogue_sim.hpp"
#include "vca/preference_model.hpp"
#include "vca/rewards.hpp"
#include "vca/theory_harness.hpp"

namespace py = pybind11;
using namespace vca;

namespace {

std::vector<PreferencePair> to_pairs(
    const std::vector<std::tuple<Vec, Vec, Vec>>& tuples) {
    std::vector<PreferencePair> pairs;
    pairs.reserve(tuples.size());
    for (const auto& [prompt, pos, neg] : tuples)
        pairs.push_back({prompt, pos, neg});
    return pairs;
}

py::dict breakdown_to_dict(const RewardBreakdown& b) {
    py::dict d;
    d["r_div"] = b.r_div;
    d["r_cons"] = b.r_cons;
    d["r_mi"] = b.r_mi;
    d["lambda_div"] = b.weights.div;
    d["lambda_cons"] = b.weights.cons;
    d["lambda_mi"] = b.weights.mi;
    d["total"] = b.total;
    d["round"] = b.round;
    return d;
}

} // namespace

PYBIND11_MODULE(_vca, m) {
    m.doc() = "multi-round preference-guided diffusion training loop (desk scale)";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("cosine_similarity", &cosine_similarity, py::arg("u"), py::arg("v"));
    m.def("diversity_reward", &diversity_reward, py::arg("features"));
    m.def("consistency_reward", &consistency_reward, py::arg("trajectory"));
    m.def("gaussian_tv_1d", &gaussian_tv_1d, py::arg("mu1"), py::arg("sigma1"),
          py::arg("mu2"), py::arg("sigma2"));

    py::class_<RewardSchedule>(m, "RewardSchedule")
        .def(py::init([](double alpha, double beta, double gamma) {
                 RewardSchedule s{alpha, beta, gamma};
                 s.validate();
                 return s;
             }),
             py::arg("alpha") = 0.15, py::arg("beta") = 0.1, py::arg("gamma") = 0.075)
        .def_readonly("alpha", &RewardSchedule::alpha)
        .def_readonly("beta", &RewardSchedule::beta)
        .def_readonly("gamma", &RewardSchedule::gamma)
        .def("weights_at",
             [](const RewardSchedule& s, double t) {
                 const Weights w = weights_at(s, t);
                 return py::make_tuple(w.div, w.cons, w.mi);
             },
             py::arg("t"))
        .def("total_reward",
             [](const RewardSchedule& s, double t, double r_div, double r_cons, double r_mi) {
                 return breakdown_to_dict(total_reward(s, t, r_div, r_cons, r_mi));
             },
             py::arg("t"), py::arg("r_div"), py::arg("r_cons"), py::arg("r_mi"))
        .def("value_derivative",
             [](const RewardSchedule& s, double t, double rd, double rc, double rm) {
                 return value_derivative(s, t, rd, rc, rm);
             },
             py::arg("t"), py::arg("r_div"), py::arg("r_cons"), py::arg("r_mi"))
        .def("value_second_derivative",
             [](const RewardSchedule& s, double t, double rd, double rc, double rm) {
                 return value_second_derivative(s, t, rd, rc, rm);
             },
             py::arg("t"), py::arg("r_div"), py::arg("r_cons"), py::arg("r_mi"));

    m.def("equal_weight_probe",
          [](const RewardSchedule& s) {
              const EqualWeightProbe p = equal_weight_probe(s);
              py::dict d;
              d["common_t0"] = p.common_t0 ? py::object(py::float_(*p.common_t0)) : py::none();
              d["div_cons_crossing"] =
                  p.div_cons_crossing ? py::object(py::float_(*p.div_cons_crossing)) : py::none();
              d["div_mi_crossing"] =
                  p.div_mi_crossing ? py::object(py::float_(*p.div_mi_crossing)) : py::none();
              d["cons_mi_crossing"] =
                  p.cons_mi_crossing ? py::object(py::float_(*p.cons_mi_crossing)) : py::none();
              d["best_t"] = p.best_t;
              d["best_residual"] = p.best_residual;
              return d;
          },
          py::arg("schedule"));

    m.def("pareto_front",
          [](const std::vector<std::array<double, 3>>& points) {
              return pareto_front(CandidateSet{points, "python"});
          },
          py::arg("points"));
    m.def("scalarization_argmax",
          [](const std::vector<std::array<double, 3>>& points,
             const std::array<double, 3>& weights) {
              return scalarization_argmax(CandidateSet{points, "python"}, weights);
          },
          py::arg("points"), py::arg("weights"));

    py::class_<Scorer>(m, "Scorer")
        .def_static("zeros", &Scorer::zeros, py::arg("prompt_dim"), py::arg("feature_dim"),
                    py::arg("logit_dim") = 8, py::arg("rank") = 8, py::arg("alpha_s") = 2.0,
                    py::arg("seed") = 0)
        .def_static("seeded", &Scorer::seeded, py::arg("prompt_dim"), py::arg("feature_dim"),
                    py::arg("logit_dim") = 8, py::arg("rank") = 8, py::arg("alpha_s") = 2.0,
                    py::arg("seed") = 0)
        .def("score", &Scorer::score, py::arg("prompt"), py::arg("feature"))
        .def("dpo_loss",
             [](const Scorer& sc, const std::tuple<Vec, Vec, Vec>& pair, double beta_dpo) {
                 const auto& [prompt, pos, neg] = pair;
                 return dpo_loss(sc, {prompt, pos, neg}, beta_dpo);
             },
             py::arg("pair"), py::arg("beta_dpo") = 1.0)
        .def("train",
             [](Scorer& sc, const std::vector<std::tuple<Vec, Vec, Vec>>& tuples, int epochs,
                double lr, std::uint64_t seed, double beta_dpo, std::size_t batch_size) {
                 SeededRng rng(seed);
                 return train_scorer(sc, to_pairs(tuples), epochs, lr, rng, beta_dpo,
                                     batch_size);
             },
             py::arg("pairs"), py::arg("epochs") = 50, py::arg("lr") = 0.3,
             py::arg("seed") = 0, py::arg("beta_dpo") = 1.0, py::arg("batch_size") = 32)
        .def("pairwise_accuracy",
             [](const Scorer& sc, const std::vector<std::tuple<Vec, Vec, Vec>>& tuples) {
                 return pairwise_accuracy(sc, to_pairs(tuples));
             },
             py::arg("pairs"));

    py::class_<Denoiser>(m, "Denoiser")
        .def_static("random",
                    [](std::size_t latent_dim, std::size_t embed_dim, double beta_dm,
                       std::uint64_t seed) {
                        return make_denoiser(latent_dim, embed_dim, beta_dm, SeededRng(seed));
                    },
                    py::arg("latent_dim"), py::arg("embed_dim"), py::arg("beta_dm") = 0.5,
                    py::arg("seed") = 0)
        .def_property_readonly("beta_dm", [](const Denoiser& d) { return d.beta_dm; })
        .def("step",
             [](const Denoiser& den, const Vec& z, const Vec& psi) {
                 return denoise_step(den, z, psi, RoundConditioning{});
             },
             py::arg("z"), py::arg("psi"))
        .def("contraction_norm", &z_block_spectral_norm);

    m.def("run_convergence",
          [](double beta_dm, double alpha_p, double sigma0, double decay_exponent, int rounds,
             int trials, std::size_t latent_dim, std::size_t embed_dim, std::uint64_t seed,
             bool allow_violations) {
              ConvergenceConfig cfg;
              cfg.beta_dm = beta_dm;
              cfg.alpha_p = alpha_p;
              cfg.schedule.sigma0 = sigma0;
              cfg.schedule.decay_exponent = decay_exponent;
              cfg.rounds = rounds;
              cfg.trials = trials;
              cfg.latent_dim = latent_dim;
              cfg.embed_dim = embed_dim;
              cfg.seed = seed;
              cfg.allow_assumption_violations = allow_violations;
              const ConvergenceReport rep = run_convergence(cfg);
              py::dict d;
              d["mean_error"] = rep.mean_error;
              d["sigma"] = rep.sigma;
              d["w2"] = rep.w2;
              d["final_mean_error"] = rep.final_mean_error;
              d["final_w2"] = rep.final_w2;
              d["violation_run"] = rep.violation_run;
              d["checks"] = py::dict(
                  py::arg("prompt_rate") = rep.checks.prompt_rate_ok,
                  py::arg("contraction") = rep.checks.contraction_ok,
                  py::arg("noise_decay") = rep.checks.noise_decay_ok);
              return d;
          },
          py::arg("beta_dm") = 0.5, py::arg("alpha_p") = 0.8, py::arg("sigma0") = 1.0,
          py::arg("decay_exponent") = 1.5, py::arg("rounds") = 200, py::arg("trials") = 32,
          py::arg("latent_dim") = 8, py::arg("embed_dim") = 16, py::arg("seed") = 0,
          py::arg("allow_violations") = false);
}
