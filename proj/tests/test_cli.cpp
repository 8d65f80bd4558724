#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rssl/config.hpp"
#include "rssl/io.hpp"
#include "support/temp_dir.hpp"

using namespace rssl;
using rssl::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const std::string kCli = RSSL_CLI_PATH;
const fs::path kConfigDir = RSSL_CONFIG_DIR;

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(const std::string& args, const TempDir& scratch) {
    const auto out = scratch / "stdout.txt";
    const auto err = scratch / "stderr.txt";
    const std::string cmd = kCli + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(out);
    r.err = read_text_file(err);
    return r;
}

std::size_t count_lines(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

/// Small, quick experiment config written into `dir`.
fs::path quick_config(const TempDir& dir) {
    Json j = Json::parse(read_text_file(kConfigDir / "classification.json"));
    j["data"] = {{"train", {{"preset", "toy"}, {"scale", 0.1}}}};
    j["repeats"] = 2;
    j["teacher"]["epochs"] = 5;
    j["student"]["epochs"] = 5;
    const auto path = dir / "quick.json";
    write_text_file(path, j.dump(2));
    return path;
}

}  // namespace

TEST(CliGradcheck, DefaultRunPassesAndReportsEveryFamily) {
    TempDir t;
    const auto r = cli("gradcheck", t);
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    for (const char* fam : {"ce ", "gce", "bce", "rce", "sce", "mae"}) {
        EXPECT_NE(r.out.find(std::string("\n") + fam), std::string::npos) << fam;
    }
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(CliGradcheck, TinyToleranceFailsWithLocation) {
    TempDir t;
    const auto r = cli("gradcheck --tolerance 1e-12", t);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("FAIL"), std::string::npos);
    EXPECT_NE(r.out.find("failing point: loss="), std::string::npos);
    EXPECT_NE(r.out.find("point="), std::string::npos);
}

TEST(CliGradcheck, FamilyFilter) {
    TempDir t;
    const auto r = cli("gradcheck --families gce --q 0.7 --out " + (t / "gc").string(), t);
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\ngce"), std::string::npos);
    EXPECT_EQ(r.out.find("\nbce"), std::string::npos);
    const Json doc = Json::parse(read_text_file(t / "gc" / "gradcheck.json"));
    ASSERT_EQ(doc["families"].size(), 1u);
    EXPECT_EQ(doc["families"][0]["configs"], Json::array({"gce(q=0.7)"}));
    EXPECT_TRUE(fs::exists(t / "gc" / "run_manifest.json"));
}

TEST(CliGradcheck, UnknownFamilyIsConfigError) {
    TempDir t;
    const auto r = cli("gradcheck --families huber", t);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--families"), std::string::npos);
}

TEST(CliSimulate, WritesGridDatasetAndSummary) {
    TempDir t;
    const auto r = cli("simulate --runs 2 --out " + (t / "a").string(), t);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto grid = read_text_file(t / "a" / "decision_grid.csv");
    EXPECT_EQ(grid.substr(0, grid.find('\n')), "x,y,pred_ce,pred_robust");
    EXPECT_EQ(count_lines(grid), 1u + 200u * 200u);
    const Json summary = Json::parse(read_text_file(t / "a" / "summary.json"));
    EXPECT_EQ(summary["runs"].size(), 2u);
    EXPECT_EQ(load_dataset(t / "a" / "dataset.manifest.json").size(), default_fig2_spec().total_count());
}

TEST(CliSimulate, SameConfigTwiceIsByteIdentical) {
    TempDir t;
    const std::string args = "simulate --runs 2 --resolution 50 --checkpoints --config " +
                             (kConfigDir / "simulate_fig2.json").string() + " --out ";
    ASSERT_EQ(cli(args + (t / "a").string(), t).code, 0);
    ASSERT_EQ(cli(args + (t / "b").string(), t).code, 0);
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(t / "a")) {
        if (!entry.is_regular_file() || entry.path().filename() == "run_manifest.json") continue;
        const auto rel = fs::relative(entry.path(), t / "a");
        EXPECT_EQ(read_text_file(entry.path()), read_text_file(t / "b" / rel)) << rel;
        ++compared;
    }
    EXPECT_EQ(compared, 8u);  // dataset csv + manifest, grid, summary, 4 checkpoints
}

TEST(CliSimulate, RobustOverride) {
    TempDir t;
    const auto r = cli("simulate --runs 1 --resolution 10 --robust gce --q 0.5 --out " + (t / "a").string(), t);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json summary = Json::parse(read_text_file(t / "a" / "summary.json"));
    EXPECT_EQ(summary["robust_loss"], "gce(q=0.5)");
}

TEST(CliExperiment, WritesResultsCsvAndManifest) {
    TempDir t;
    const auto r = cli("experiment --config " + quick_config(t).string() + " --out " + (t / "a").string(), t);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json doc = Json::parse(read_text_file(t / "a" / "results.json"));
    EXPECT_EQ(doc["results"].size(), 1u);
    EXPECT_EQ(doc["config_digest"], json_digest(doc["config"]));
    const auto csv = read_text_file(t / "a" / "results.csv");
    EXPECT_EQ(count_lines(csv), 1u + 2u * 6u);
    const Json manifest = Json::parse(read_text_file(t / "a" / "run_manifest.json"));
    EXPECT_EQ(manifest["config_digest"], doc["config_digest"]);
    EXPECT_EQ(manifest["timings"].size(), 2u * 6u);
    EXPECT_EQ(manifest["seed"], 7);
}

TEST(CliExperiment, FlagsOverrideFile) {
    TempDir t;
    const auto r = cli("experiment --config " + quick_config(t).string() +
                           " --p 0.1 --robust bce --beta 1.0 --seed 12 --out " + (t / "a").string(),
                       t);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json doc = Json::parse(read_text_file(t / "a" / "results.json"));
    EXPECT_EQ(doc["config"]["labeled_fraction"], 0.1);
    EXPECT_EQ(doc["config"]["seed"], 12);
    EXPECT_EQ(doc["config"]["robust_losses"], Json::parse(R"([{"family": "bce", "beta": 1.0}])"));
    EXPECT_EQ(doc["results"][0]["arms"].size(), 4u);
}

TEST(CliExperiment, SweepWritesOneBlockPerFraction) {
    TempDir t;
    const auto r = cli("experiment --config " + quick_config(t).string() + " --p 0.3,0.5,0.7 --out " +
                           (t / "a").string(),
                       t);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json doc = Json::parse(read_text_file(t / "a" / "results.json"));
    ASSERT_EQ(doc["results"].size(), 3u);
    EXPECT_EQ(doc["results"][2]["labeled_fraction"], 0.7);
    for (const char* name : {"results_p0.3.csv", "results_p0.5.csv", "results_p0.7.csv"}) {
        EXPECT_TRUE(fs::exists(t / "a" / name)) << name;
    }
}

TEST(CliExperiment, DeterministicResultJson) {
    TempDir t;
    const auto cfg = quick_config(t).string();
    ASSERT_EQ(cli("experiment --config " + cfg + " --out " + (t / "a").string(), t).code, 0);
    ASSERT_EQ(cli("experiment --config " + cfg + " --out " + (t / "b").string(), t).code, 0);
    EXPECT_EQ(read_text_file(t / "a" / "results.json"), read_text_file(t / "b" / "results.json"));
    EXPECT_EQ(read_text_file(t / "a" / "results.csv"), read_text_file(t / "b" / "results.csv"));
}

TEST(CliExperiment, MissingFieldIsExitTwoWithPath) {
    TempDir t;
    Json j = Json::parse(read_text_file(quick_config(t)));
    j["student"].erase("epochs");
    write_text_file(t / "bad.json", j.dump());
    const auto r = cli("experiment --config " + (t / "bad.json").string() + " --out " + (t / "a").string(), t);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("student.epochs"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(t / "a" / "results.json"));
}

TEST(CliExperiment, ConfigErrorsExitTwo) {
    TempDir t;
    const auto out = " --out " + (t / "a").string();
    write_text_file(t / "broken.json", "{ not json");
    EXPECT_EQ(cli("experiment --config " + (t / "broken.json").string() + out, t).code, 2);
    EXPECT_EQ(cli("experiment --config " + (t / "absent.json").string() + out, t).code, 2);
    EXPECT_EQ(cli("experiment --config " + quick_config(t).string() + " --p 1.5" + out, t).code, 2);
    EXPECT_EQ(cli("experiment --config " + quick_config(t).string() + " --beta -1 --robust bce" + out, t).code, 2);
    EXPECT_EQ(cli("experiment" + out, t).code, 2);
    EXPECT_EQ(cli("frobnicate", t).code, 2);
}

TEST(CliExperiment, RuntimeFailureExitsOne) {
    TempDir t;
    Json j = Json::parse(read_text_file(quick_config(t)));
    j["student"]["learning_rate"] = 1e305;
    write_text_file(t / "diverge.json", j.dump());
    const auto r = cli("experiment --config " + (t / "diverge.json").string() + " --out " + (t / "a").string(), t);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("repeat 0"), std::string::npos) << r.err;
}

TEST(CliDatagen, MixtureRoundTripsAndCountsRows) {
    TempDir t;
    const auto r = cli("datagen --config " + (kConfigDir / "datagen_toy.json").string() + " --out " +
                           (t / "a").string(),
                       t);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = read_text_file(t / "a" / "dataset.csv");
    EXPECT_EQ(count_lines(csv), 1u + default_toy_classification_spec().total_count());
    // write -> read -> write
    std::ostringstream again;
    write_dataset_csv(again, load_dataset(t / "a" / "dataset.manifest.json"));
    EXPECT_EQ(again.str(), csv);
}

TEST(CliDatagen, DigestChangesIffSpecChanges) {
    TempDir t;
    auto digest = [&](const std::string& args, const std::string& sub) {
        EXPECT_EQ(cli("datagen " + args + " --out " + (t / sub).string(), t).code, 0);
        return manifest_from_json(read_text_file(t / sub / "dataset.manifest.json")).spec_digest;
    };
    const auto toy = digest("--preset toy --seed 1", "a");
    EXPECT_EQ(digest("--preset toy --seed 2", "b"), toy);
    EXPECT_NE(digest("--preset fig2 --seed 1", "c"), toy);
    write_text_file(t / "scaled.json", R"({"schema_version": 1, "data": {"preset": "toy", "scale": 0.5}})");
    EXPECT_NE(digest("--config " + (t / "scaled.json").string(), "d"), toy);
}

TEST(CliDatagen, SameSeedSameBytes) {
    TempDir t;
    ASSERT_EQ(cli("datagen --preset fig2 --seed 4 --out " + (t / "a").string(), t).code, 0);
    ASSERT_EQ(cli("datagen --preset fig2 --seed 4 --out " + (t / "b").string(), t).code, 0);
    EXPECT_EQ(read_text_file(t / "a" / "dataset.csv"), read_text_file(t / "b" / "dataset.csv"));
}

TEST(CliDatagen, Scenes) {
    TempDir t;
    const auto r = cli("datagen --config " + (kConfigDir / "datagen_scenes.json").string() + " --out " +
                           (t / "a").string(),
                       t);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_scenes(t / "a" / "scenes.manifest.json").size(), 20u);
}

TEST(CliDatagen, SpecErrorExitsTwo) {
    TempDir t;
    write_text_file(t / "bad.json", R"({"schema_version": 1, "kind": "mixture", "data": {"preset": "nope"}})");
    const auto r = cli("datagen --config " + (t / "bad.json").string() + " --out " + (t / "a").string(), t);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("data.preset"), std::string::npos);
}
