#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vca/io.hpp"

using namespace vca;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("vca_io_" + name);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("scorer checkpoint round trip is exact") {
    TempDir dir("scorer");
    Scorer sc = Scorer::seeded(6, 5, 4, 3, 2.0, 77);
    SeededRng rng(1);
    for (double& x : sc.adapter_up().data()) x = rng.next_gaussian();
    save_scorer(sc, dir.path / "scorer.json");
    const Scorer back = load_scorer(dir.path / "scorer.json");
    CHECK(back.base() == sc.base());
    CHECK(back.adapter_up() == sc.adapter_up());
    CHECK(back.adapter_down() == sc.adapter_down());
    CHECK(back.prompt_dim() == sc.prompt_dim());
    CHECK(back.alpha_s() == sc.alpha_s());
    CHECK(back.seed() == sc.seed());
}

TEST_CASE("training checkpoint round trip is exact") {
    TempDir dir("ckpt");
    TrainingCheckpoint ckpt;
    ckpt.den = make_denoiser(4, 3, 0.5, SeededRng(5));
    ckpt.lora = make_lora(4, 3, 2, 4.0, 0.05, SeededRng(6));
    ckpt.seed = 99;
    ckpt.items_processed = 123;
    save_training_checkpoint(ckpt, dir.path / "ckpt.json");
    const TrainingCheckpoint back = load_training_checkpoint(dir.path / "ckpt.json");
    CHECK(back.den.phi == ckpt.den.phi);
    CHECK(back.den.bias == ckpt.den.bias);
    CHECK(back.den.beta_dm == ckpt.den.beta_dm);
    CHECK(back.lora.up == ckpt.lora.up);
    CHECK(back.lora.down == ckpt.lora.down);
    CHECK(back.lora.rank() == ckpt.lora.rank());
    CHECK(back.seed == ckpt.seed);
    CHECK(back.items_processed == ckpt.items_processed);
}

TEST_CASE("metrics CSV carries exactly the documented 11 columns") {
    TempDir dir("csv");
    RewardSchedule s;
    std::vector<ItemMetrics> log;
    ItemMetrics row;
    row.item = 0;
    row.breakdown = total_reward(s, 2.0, 0.5, 1.5, -0.25);
    row.l_noise = 0.125;
    row.l_bce = 0.5;
    log.push_back(row);
    write_metrics_csv(log, dir.path / "metrics.csv");

    std::ifstream in(dir.path / "metrics.csv");
    std::string header, line;
    std::getline(in, header);
    CHECK(header ==
          "item,t,r_div,r_cons,r_mi,lambda_div,lambda_cons,lambda_mi,r_total,l_noise,l_bce");
    std::getline(in, line);
    CHECK(std::count(line.begin(), line.end(), ',') == 10);
    CHECK(std::count(header.begin(), header.end(), ',') == 10);
}

TEST_CASE("format_double survives a parse round trip") {
    SeededRng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double x = std::exp(6.0 * rng.next_gaussian()) * rng.next_gaussian();
        CHECK(std::stod(format_double(x)) == x);
    }
}

TEST_SUITE_END();
