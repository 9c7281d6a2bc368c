#include "vca/io.hpp"

#include <cstdio>
#include <sstream>

#include "vca/json_io.hpp"

namespace vca {

using detail::json;

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void save_scorer(const Scorer& sc, const std::filesystem::path& file) {
    json j;
    j["format_version"] = 1;
    j["dims"] = {{"m", sc.prompt_dim()},
                 {"k", sc.feature_dim()},
                 {"h", sc.logit_dim()},
                 {"rank", sc.rank()}};
    j["alpha_s"] = sc.alpha_s();
    j["seed"] = sc.seed();
    j["base"] = detail::mat_to_json(sc.base());
    j["adapter_up"] = detail::mat_to_json(sc.adapter_up());
    j["adapter_down"] = detail::mat_to_json(sc.adapter_down());
    detail::write_text_file(file, j.dump(2) + "\n");
}

Scorer load_scorer(const std::filesystem::path& file) {
    const json j = detail::load_json_file(file);
    detail::reject_unknown_keys(
        j, {"format_version", "dims", "alpha_s", "seed", "base", "adapter_up", "adapter_down"},
        "scorer file");
    const std::size_t m = j.at("dims").at("m").get<std::size_t>();
    return Scorer::from_parts(detail::mat_from_json(j.at("base"), "scorer base"),
                              detail::mat_from_json(j.at("adapter_up"), "scorer adapter_up"),
                              detail::mat_from_json(j.at("adapter_down"), "scorer adapter_down"),
                              m, j.at("alpha_s").get<double>(),
                              j.at("seed").get<std::uint64_t>());
}

void save_training_checkpoint(const TrainingCheckpoint& ckpt,
                              const std::filesystem::path& file) {
    json j;
    j["format_version"] = 1;
    j["phi"] = detail::mat_to_json(ckpt.den.phi);
    j["bias"] = detail::vec_to_json(ckpt.den.bias);
    j["beta_dm"] = ckpt.den.beta_dm;
    j["lora_up"] = detail::mat_to_json(ckpt.lora.up);
    j["lora_down"] = detail::mat_to_json(ckpt.lora.down);
    j["lora_alpha"] = ckpt.lora.alpha_lora;
    j["lora_eta"] = ckpt.lora.learning_rate;
    j["lora_rank"] = ckpt.lora.rank();
    j["seed"] = ckpt.seed;
    j["items_processed"] = ckpt.items_processed;
    detail::write_text_file(file, j.dump(2) + "\n");
}

TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& file) {
    const json j = detail::load_json_file(file);
    detail::reject_unknown_keys(j,
                                {"format_version", "phi", "bias", "beta_dm", "lora_up",
                                 "lora_down", "lora_alpha", "lora_eta", "lora_rank", "seed",
                                 "items_processed"},
                                "checkpoint file");
    TrainingCheckpoint ckpt;
    ckpt.den.phi = detail::mat_from_json(j.at("phi"), "checkpoint phi");
    ckpt.den.bias = detail::vec_from_json(j.at("bias"), "checkpoint bias");
    ckpt.den.beta_dm = j.at("beta_dm").get<double>();
    ckpt.lora.up = detail::mat_from_json(j.at("lora_up"), "checkpoint lora_up");
    ckpt.lora.down = detail::mat_from_json(j.at("lora_down"), "checkpoint lora_down");
    ckpt.lora.alpha_lora = j.at("lora_alpha").get<double>();
    ckpt.lora.learning_rate = j.at("lora_eta").get<double>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.items_processed = j.at("items_processed").get<std::uint64_t>();
    return ckpt;
}

void write_metrics_csv(const std::vector<ItemMetrics>& log,
                       const std::filesystem::path& file) {
    std::ostringstream out;
    out << "item,t,r_div,r_cons,r_mi,lambda_div,lambda_cons,lambda_mi,r_total,l_noise,l_bce\n";
    for (const ItemMetrics& row : log) {
        const RewardBreakdown& b = row.breakdown;
        out << row.item << ',' << format_double(b.round) << ',' << format_double(b.r_div)
            << ',' << format_double(b.r_cons) << ',' << format_double(b.r_mi) << ','
            << format_double(b.weights.div) << ',' << format_double(b.weights.cons) << ','
            << format_double(b.weights.mi) << ',' << format_double(b.total) << ','
            << format_double(row.l_noise) << ',' << format_double(row.l_bce) << '\n';
    }
    detail::write_text_file(file, out.str());
}

void write_dialogue_csv(const DialogueResult& result, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "round,lambda_div,lambda_cons,lambda_mi,r_div,r_cons,r_mi,r_total,psi_distance\n";
    for (const DialogueRoundLog& row : result.rounds) {
        const RewardBreakdown& b = row.breakdown;
        out << row.round << ',' << format_double(b.weights.div) << ','
            << format_double(b.weights.cons) << ',' << format_double(b.weights.mi) << ','
            << format_double(b.r_div) << ',' << format_double(b.r_cons) << ','
            << format_double(b.r_mi) << ',' << format_double(b.total) << ','
            << format_double(row.psi_distance) << '\n';
    }
    detail::write_text_file(file, out.str());
}

void write_convergence_csv(const ConvergenceReport& report,
                           const std::filesystem::path& file) {
    std::ostringstream out;
    out << "round,mean_error,sigma,w2\n";
    for (std::size_t t = 0; t < report.mean_error.size(); ++t) {
        out << (t + 1) << ',' << format_double(report.mean_error[t]) << ','
            << format_double(report.sigma[t]) << ',' << format_double(report.w2[t]) << '\n';
    }
    detail::write_text_file(file, out.str());
}

} // namespace vca
