#pragma once

/**
 * Teacher-student semi-supervised protocol.
 *
 *   1. split the training pool into a labeled part (fraction p) and an
 *      unlabeled part whose labels are withheld;
 *   2. train a teacher with CE on the labeled part (this is also the lower
 *      bound arm);
 *   3. label the unlabeled part with the teacher's argmax;
 *   4. train fresh students on labeled + pseudo-labeled data, CE on the true
 *      labels and the configured loss on the pseudo-labels;
 *   5. train the upper bound with CE on the whole pool with true labels.
 *
 * All arms are scored on one shared test set.
 */

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rssl/datagen.hpp"
#include "rssl/losses.hpp"
#include "rssl/model.hpp"

namespace rssl {

/// Hidden layer widths and activation. Input and output widths come from the data.
struct Architecture {
    std::vector<std::size_t> hidden;
    Activation activation = Activation::Relu;

    std::vector<std::size_t> layer_dims(std::size_t input_dim, std::size_t num_classes) const;
    bool operator==(const Architecture&) const = default;
};

struct PseudoLabeledSet {
    FeatureMatrix features;
    std::vector<std::size_t> pseudo_labels;
    std::vector<double> confidence;  // teacher's max softmax probability
    std::size_t num_classes = 0;

    std::size_t size() const { return pseudo_labels.size(); }
    /// Rows flagged Provenance::PseudoLabel.
    LabeledDataset as_dataset() const;
};

/// CE-only training on true labels. Initialised and shuffled from cfg.seed.
MlpClassifier train_teacher(const LabeledDataset& labeled, const Architecture& arch,
                            const SgdConfig& cfg);

/// Hard argmax labels with confidences; no filtering.
PseudoLabeledSet generate_pseudo_labels(const MlpClassifier& teacher, const UnlabeledPool& unlabeled);

/// Symmetric flips on the pseudo-labels, simulating a worse teacher.
PseudoLabeledSet corrupt_pseudo_labels(const PseudoLabeledSet& pseudo, double flip_rate,
                                       std::uint64_t seed);

/// Fraction of pseudo-labels that disagree with the withheld truth.
double pseudo_label_error_rate(const PseudoLabeledSet& pseudo, const HeldBackTruth& truth);

/// Fresh model trained on the union: CE for true labels, `robust` for pseudo-labels.
MlpClassifier train_student(const LabeledDataset& labeled, const PseudoLabeledSet& pseudo,
                            const RobustLossConfig& robust, const Architecture& arch,
                            const SgdConfig& cfg);

struct BoundModels {
    MlpClassifier lower;
    MlpClassifier upper;
};

/// lower: CE on the ceil(N p) labeled rows; upper: CE on all N rows.
BoundModels run_bounds(const LabeledDataset& full, double labeled_fraction, const Architecture& arch,
                       const SgdConfig& cfg, std::uint64_t split_seed);

/// A named set of classes scored together, e.g. {"TC", {1, 3}}.
struct ClassGrouping {
    std::string name;
    std::vector<std::size_t> classes;
    bool operator==(const ClassGrouping&) const = default;
};

/// 2|P n T| / (|P| + |T|) over pixels whose label is in `class_set`;
/// 1 when both sets are empty.
double dice_score(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                  std::span<const std::size_t> class_set);

/// Maps a scene to a predicted label grid.
using Segmenter = std::function<std::vector<std::size_t>(const SegScene&)>;

/// Per-pixel MLP prediction on pixel_features().
Segmenter model_segmenter(const MlpClassifier& model);

/// Mean over scenes of the per-scene Dice, one value per grouping.
std::vector<double> evaluate_segmentation(const Segmenter& segmenter,
                                          const std::vector<SegScene>& scenes,
                                          std::span<const ClassGrouping> groupings);
std::vector<double> evaluate_segmentation(const MlpClassifier& model,
                                          const std::vector<SegScene>& scenes,
                                          std::span<const ClassGrouping> groupings);

enum class TaskKind { Classification, Segmentation };

/// Whole-tumour / tumour-core / enhancing groupings over toy classes 1..3.
std::vector<ClassGrouping> default_groupings();

struct ExperimentConfig {
    TaskKind task = TaskKind::Classification;

    // Classification: training pool and clean test distribution.
    MixtureSpec train_spec = default_toy_classification_spec();
    MixtureSpec test_spec = default_toy_classification_spec();
    // Loaded data; when set, replaces the corresponding generated set.
    std::optional<LabeledDataset> train_data;
    std::optional<LabeledDataset> test_data;

    // Segmentation: scenes are the unit of the labeled/unlabeled split.
    SegmentationSpec seg_spec;
    std::size_t train_scenes = 40;
    std::size_t test_scenes = 20;
    std::vector<ClassGrouping> groupings = default_groupings();

    double labeled_fraction = 0.1;
    Architecture architecture{{16}, Activation::Relu};
    SgdConfig teacher;
    SgdConfig student;
    std::vector<RobustLossConfig> robust_losses;
    double pseudo_flip_rate = 0.0;
    std::size_t repeats = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricSummary {
    double mean = 0.0;
    std::optional<double> stddev;  // sample std, absent for fewer than 2 values
};

MetricSummary summarize(std::span<const double> values);

struct ArmResult {
    std::string name;
    std::map<std::string, std::vector<double>> values;  // metric -> per-repeat
    std::map<std::string, MetricSummary> summary;
};

struct ArmTiming {
    std::size_t repeat = 0;
    std::string arm;
    double seconds = 0.0;
};

struct ExperimentResult {
    double labeled_fraction = 0.0;
    std::size_t repeats = 0;
    std::vector<std::string> metrics;
    std::vector<ArmResult> arms;  // lower_bound, student_ce, robust students..., upper_bound
    std::vector<double> teacher_error_rate;  // teacher pseudo-labels vs withheld truth
    std::vector<double> pseudo_error_rate;   // after injected flips
    MetricSummary teacher_error_summary;
    MetricSummary pseudo_error_summary;
    std::vector<ArmTiming> timings;  // wall-clock, not part of the deterministic output

    const ArmResult& arm(std::string_view name) const;
};

/// Arm name of a robust student, e.g. "student_bce".
std::vector<std::string> robust_arm_names(std::span<const RobustLossConfig> losses);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace rssl
