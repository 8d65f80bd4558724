// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// fails. `rssl_acceptance 1 3 8` runs a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rssl/config.hpp"
#include "rssl/datagen.hpp"
#include "rssl/gradcheck.hpp"
#include "rssl/io.hpp"
#include "rssl/losses.hpp"
#include "rssl/pipeline.hpp"
#include "rssl/simulation.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace rssl;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigDir = RSSL_CONFIG_DIR;
const std::string kCli = RSSL_CLI_PATH;

struct Outcome {
    bool pass = false;
    std::string detail;
};

char buf[512];

template <class... Args>
std::string fmt(const char* f, Args... args) {
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string points(double accuracy) { return fmt("%.2f", 100.0 * accuracy); }

ExperimentSetup toy_setup() {
    auto setup = load_experiment_config(kConfigDir / "toy_acceptance.json");
    setup.load_data();
    return setup;
}

double arm_mean(const ExperimentResult& r, const std::string& arm) {
    return r.arm(arm).summary.at("accuracy").mean;
}

// 1. analytic score gradients vs central differences
Outcome gradient_oracle() {
    constexpr double h = 1e-5, rel = 1e-5, floor = 1e-8;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> score(0.0, 1.5);
    std::size_t checked = 0, bad = 0;
    double worst = 0.0;
    std::string first;
    for (const auto& cfg : default_gradcheck_losses()) {
        for (std::size_t k : {2, 3, 10}) {
            std::uniform_int_distribution<std::size_t> pick(0, k - 1);
            for (int pt = 0; pt < 100; ++pt) {
                std::vector<double> s(k);
                for (auto& v : s) v = score(rng);
                const OneHotLabel y(pick(rng), k);
                const auto analytic = loss_grad_scores(cfg, s, y);
                const auto numeric = testing::central_differences(
                    [&](const std::vector<double>& x) { return loss_value(cfg, softmax(x), y); }, s, h);
                for (std::size_t i = 0; i < k; ++i) {
                    ++checked;
                    const double a = analytic[i], n = numeric[i];
                    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor / rel}));
                    if (!testing::close_enough(a, n, rel, floor)) {
                        if (bad++ == 0) first = fmt(" first: %s K=%zu point %d", cfg.describe().c_str(), k, pt);
                    }
                }
            }
        }
    }
    return {bad == 0, fmt("%zu coordinates, %zu outside tolerance, max rel err %.2g", checked, bad, worst) + first};
}

// 2. limit identities
Outcome limit_identities() {
    std::mt19937_64 rng(2);
    double gce_gap = 0.0, bce_gap = 0.0;
    bool gce_exact = true, rce_exact = true;
    for (int i = 0; i < 100; ++i) {
        const std::size_t k = std::array<std::size_t, 3>{2, 3, 10}[i % 3];
        const auto p = ProbDist::from_probabilities(testing::random_simplex(rng, k));
        const OneHotLabel y(static_cast<std::size_t>(i) % k, k);
        const double ce = ce_loss(p, y);
        gce_gap = std::max(gce_gap, std::abs(gce_loss(p, y, 1e-6) - ce));
        bce_gap = std::max(bce_gap, std::abs(bce_loss(p, y, 1e-6) - (ce + 1.0)));
        gce_exact = gce_exact && gce_loss(p, y, 1.0) == 1.0 - p[y.class_index()];
        rce_exact = rce_exact && rce_loss(p, y, -2.0) == mae_loss(p, y);
    }
    return {gce_gap <= 1e-4 && bce_gap <= 1e-4 && gce_exact && rce_exact,
            fmt("max|GCE(1e-6)-CE| %.2g, max|BCE(1e-6)-CE-1| %.2g, GCE(1)=1-p %s, RCE(-2)=MAE %s", gce_gap,
                bce_gap, gce_exact ? "exact" : "NOT exact", rce_exact ? "exact" : "NOT exact")};
}

// 3. linear model, mislabelled cluster: BCE(beta=1) beats CE on clean test data
Outcome perceptron_demo() {
    SimulationConfig cfg;
    cfg.grid_resolution = 2;
    const auto r = run_simulation(cfg);
    const double gain = r.mean_robust_accuracy - r.mean_ce_accuracy;
    return {gain >= 0.03, "CE " + points(r.mean_ce_accuracy) + ", BCE " + points(r.mean_robust_accuracy) +
                              " over " + std::to_string(r.runs.size()) + " seeds, gain " + points(gain) +
                              " points (need >= 3)"};
}

// 4. arm ordering at p = 0.1
Outcome arm_ordering() {
    const auto setup = toy_setup();
    const auto r = run_experiment(setup.config);
    const double lo = arm_mean(r, "lower_bound"), ce = arm_mean(r, "student_ce"), up = arm_mean(r, "upper_bound");
    bool ok = lo <= ce;
    std::string d = "lower " + points(lo) + ", ce " + points(ce);
    for (const auto& name : robust_arm_names(setup.config.robust_losses)) {
        const double x = arm_mean(r, name);
        ok = ok && x - ce >= 0.01 && x <= up + 0.005;
        d += ", " + name.substr(8) + " " + points(x) + " (+" + points(x - ce) + ")";
    }
    d += ", upper " + points(up) + fmt("; %zu seeds, p=%.1f, flips %.1f", r.repeats, r.labeled_fraction,
                                      setup.config.pseudo_flip_rate);
    return {ok, d};
}

// 5. teacher pseudo-label error and robust gap shrink as p grows
Outcome labeled_fraction_trend() {
    const auto setup = toy_setup();
    const auto robust = robust_arm_names(setup.config.robust_losses);
    std::vector<double> err, gap;
    std::string d;
    for (double p : {0.3, 0.5, 0.7}) {
        auto cfg = setup.config;
        cfg.labeled_fraction = p;
        cfg.repeats = 3;
        const auto r = run_experiment(cfg);
        double mean_robust = 0.0;
        for (const auto& name : robust) mean_robust += arm_mean(r, name) / static_cast<double>(robust.size());
        err.push_back(r.teacher_error_summary.mean);
        gap.push_back(mean_robust - arm_mean(r, "student_ce"));
        d += fmt("p=%.1f err %.4f (%.4f after flips) gap %s; ", p, err.back(), r.pseudo_error_summary.mean,
                 points(gap.back()).c_str());
    }
    const bool ok = err[0] > err[1] && err[1] > err[2] && gap[0] > gap[1] && gap[1] > gap[2];
    d.resize(d.size() - 2);
    return {ok, d};
}

// 6. Dice
Outcome dice() {
    using V = std::vector<std::size_t>;
    const V c1{1};
    const bool perfect = dice_score(V{1, 1, 0, 2}, V{1, 1, 0, 2}, c1) == 1.0;
    const bool disjoint = dice_score(V{1, 1, 0, 0}, V{0, 0, 1, 1}, c1) == 0.0;
    const bool half = dice_score(V{1, 1, 0, 0}, V{1, 0, 1, 0}, c1) == 0.5;
    const bool empty = dice_score(V{0, 2, 0}, V{2, 0, 0}, c1) == 1.0;
    const auto scenes = gen_toy_segmentation(20, SegmentationSpec{}, 6);
    const auto groupings = default_groupings();
    const auto scores =
        evaluate_segmentation([](const SegScene& s) { return s.label_grid; }, scenes, groupings);
    bool oracle = true;
    auto ok = [](bool b) { return b ? "ok" : "WRONG"; };
    std::string d = fmt("perfect %s, disjoint %s, hand case 0.5 %s, both-empty %s; oracle on 20 scenes:",
                        ok(perfect), ok(disjoint), ok(half), ok(empty));
    for (std::size_t g = 0; g < groupings.size(); ++g) {
        oracle = oracle && scores[g] == 1.0;
        d += fmt(" %s %.4f", groupings[g].name.c_str(), scores[g]);
    }
    return {perfect && disjoint && half && empty && oracle, d};
}

int run_cli(const std::string& args) {
    const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 7. byte-identical results from two CLI runs
Outcome determinism() {
    testing::TempDir t;
    const std::string cfg = "experiment --config " + (kConfigDir / "toy_acceptance.json").string() + " --out ";
    const int a = run_cli(cfg + (t / "a").string());
    const int b = run_cli(cfg + (t / "b").string());
    if (a != 0 || b != 0) return {false, fmt("experiment exited %d and %d", a, b)};
    const auto ja = read_text_file(t / "a" / "results.json");
    const auto jb = read_text_file(t / "b" / "results.json");
    return {ja == jb, fmt("results.json %zu bytes, ", ja.size()) + (ja == jb ? "identical" : "DIFFERENT") +
                          ", sha256 " + sha256_hex(ja).substr(0, 16)};
}

// 8. symmetric label noise
Outcome noise_statistics() {
    LabeledDataset ds;
    ds.num_classes = 4;
    ds.features = FeatureMatrix::Zero(10000, 1);
    for (std::size_t i = 0; i < 10000; ++i) {
        ds.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
        ds.labels.push_back(i % 4);
        ds.provenance.push_back(Provenance::TrueLabel);
    }
    const auto noisy = inject_label_noise(ds, {0.4}, 8);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) flipped += noisy.labels[i] != ds.labels[i];
    const double rate = static_cast<double>(flipped) / static_cast<double>(ds.size());
    const auto same = inject_label_noise(ds, {0.0}, 8);
    const bool identity = same.labels == ds.labels && same.features == ds.features;
    return {std::abs(rate - 0.4) <= 0.02 && identity,
            fmt("eta=0.4 flipped %.4f of 10000 (need 0.40 +- 0.02), eta=0 identity %s", rate,
                identity ? "yes" : "NO")};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "gradient oracle", 10, gradient_oracle},
        {2, "limit identities", 1, limit_identities},
        {3, "perceptron demo", 120, perceptron_demo},
        {4, "arm ordering", 600, arm_ordering},
        {5, "labeled-fraction trend", 900, labeled_fraction_trend},
        {6, "dice", 30, dice},
        {7, "determinism", 1200, determinism},
        {8, "noise injection", 60, noise_statistics},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.budget_seconds;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("criterion %d %-24s %s  %s; %.1f s (budget %.0f s%s)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", EXCEEDED");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
