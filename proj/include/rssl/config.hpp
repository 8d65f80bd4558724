#pragma once

// JSON configuration (schema version 1), result files and run manifests.
//
// Every parser reports problems as ConfigError with a JSON path such as
// `teacher.learning_rate` or `robust_losses[1].family`. Serialisers emit
// canonical JSON (sorted keys, shortest round-trip numbers), so the digest of
// an echoed config is stable under key reordering and formatting changes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rssl/datagen.hpp"
#include "rssl/gradcheck.hpp"
#include "rssl/losses.hpp"
#include "rssl/model.hpp"
#include "rssl/pipeline.hpp"
#include "rssl/simulation.hpp"

namespace rssl {

inline constexpr const char* kToolName = "rssl";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

/// Invalid configuration. `path()` is the offending field ("" for the root).
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message);
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

Json parse_json_text(const std::string& text, const std::string& origin);

/// sha256 of the compact dump of `canonical`.
std::string json_digest(const Json& canonical);

// --- building blocks --------------------------------------------------------

/// {"family": "bce", "beta": 5, ...}. Missing hyperparameters take the
/// RobustLossConfig defaults.
RobustLossConfig loss_from_json(const Json& j, const std::string& path);
/// Echoes only the fields the family uses.
Json loss_to_json(const RobustLossConfig& loss);

/// learning_rate and epochs are required; seeds come from the experiment.
SgdConfig sgd_from_json(const Json& j, const std::string& path);
Json sgd_to_json(const SgdConfig& sgd);

Architecture architecture_from_json(const Json& j, const std::string& path);
Json architecture_to_json(const Architecture& arch);

/// {"num_classes", "components": [...], "outliers": [...]}; each component has
/// mean, count, label, optional source_class and either covariance or variance.
MixtureSpec mixture_from_json(const Json& j, const std::string& path);
Json mixture_to_json(const MixtureSpec& spec);

/// Named generator: "toy", "fig2" or "fig2_clean".
MixtureSpec mixture_preset(const std::string& name, const std::string& path);

SegmentationSpec segmentation_from_json(const Json& j, const std::string& path);
Json segmentation_to_json(const SegmentationSpec& spec);

/// A generated or file-backed data set.
struct DataSource {
    std::optional<MixtureSpec> mixture;
    std::optional<std::filesystem::path> manifest;  // dataset manifest, resolved to an absolute path
};

/// {"preset": name, "scale": s} | {"mixture": {...}} | {"manifest": path}.
/// Relative manifest paths resolve against `base_dir`.
DataSource data_source_from_json(const Json& j, const std::string& path,
                                 const std::filesystem::path& base_dir);

// --- experiment -------------------------------------------------------------

/// Parsed experiment config. A list-valued labeled_fraction turns the run
/// into a sweep with one result block per value.
struct ExperimentSetup {
    ExperimentConfig config;  // config.labeled_fraction == labeled_fractions.front()
    std::vector<double> labeled_fractions;
    DataSource train_source;
    DataSource test_source;

    /// Loads file-backed data into config.train_data / config.test_data.
    void load_data();
};

ExperimentSetup experiment_from_json(const Json& j, const std::filesystem::path& base_dir);
ExperimentSetup load_experiment_config(const std::filesystem::path& path);

/// Effective config. File-backed data is echoed as its path plus a content digest.
Json experiment_to_json(const ExperimentSetup& setup);

/// Command-line overrides; unset fields leave the file value alone.
struct ExperimentOverrides {
    std::optional<std::vector<double>> labeled_fractions;
    std::optional<std::vector<std::string>> robust_families;  // replaces robust_losses
    std::optional<double> q_exponent;
    std::optional<double> beta;
    std::optional<double> A;
    std::optional<double> alpha;
    std::optional<double> gamma;
    std::optional<std::size_t> repeats;
    std::optional<std::uint64_t> seed;
};

/// Throws ConfigError for a bad family name or hyperparameter.
void apply_overrides(ExperimentSetup& setup, const ExperimentOverrides& overrides);

Json metric_summary_to_json(std::span<const double> values, const MetricSummary& summary);
Json result_block_to_json(const ExperimentResult& result);

/// {"schema_version", "config", "config_digest", "results": [...]}. No timings.
Json results_document(const Json& config_echo, const std::vector<ExperimentResult>& blocks);

/// Header `repeat,arm,metric,value`.
std::string results_csv(const ExperimentResult& result);

// --- simulation / datagen ---------------------------------------------------

/// Optional keys: seed, runs, data, test_scale, architecture, sgd, robust, grid.
SimulationConfig simulation_from_json(const Json& j, const std::filesystem::path& base_dir);
Json simulation_to_json(const SimulationConfig& cfg);

/// Optional keys: losses, class_counts, points, step, tolerance, abs_floor, seed.
GradcheckOptions gradcheck_from_json(const Json& j);

enum class DatagenKind { Mixture, Segmentation };

struct DatagenSpec {
    DatagenKind kind = DatagenKind::Mixture;
    std::uint64_t seed = 0;
    MixtureSpec mixture = default_toy_classification_spec();
    SegmentationSpec segmentation;
    std::size_t num_scenes = 20;

    /// Digest of the generator description, seed excluded.
    std::string spec_digest() const;
};

DatagenSpec datagen_from_json(const Json& j, const std::filesystem::path& base_dir);

// --- run manifest -----------------------------------------------------------

struct RunManifest {
    std::string command;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::string started_at;   // ISO-8601 UTC
    std::string finished_at;
    std::vector<std::string> outputs;
    Json timings = Json::array();  // see timings_to_json
    Json extra = Json::object();

    Json to_json() const;
};

/// [{"labeled_fraction", "repeat", "arm", "seconds"}, ...]
Json timings_to_json(double labeled_fraction, const std::vector<ArmTiming>& timings);

std::string utc_timestamp();

}  // namespace rssl
