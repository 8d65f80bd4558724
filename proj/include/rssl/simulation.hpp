#pragma once

// Three-class perceptron demo: the same linear model trained with CE and with
// a robust loss on data containing a mislabelled cluster, scored on the clean
// distribution, plus a prediction lattice for plotting the two boundaries.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rssl/datagen.hpp"
#include "rssl/losses.hpp"
#include "rssl/model.hpp"
#include "rssl/pipeline.hpp"

namespace rssl {

struct SimulationConfig {
    MixtureSpec spec = default_fig2_spec();
    double test_scale = 10.0;  // clean test set is spec.without_outliers().scaled(test_scale)
    std::size_t runs = 10;
    std::uint64_t seed = 0;
    Architecture architecture{{}, Activation::Identity};
    SgdConfig sgd{0.05, 0.9, 1e-4, {}, 100, 32, 0};  // sgd.seed is replaced per run
    RobustLossConfig robust = RobustLossConfig::bce(1.0);
    std::size_t grid_resolution = 200;  // points per axis
    double grid_margin = 1.0;           // added around the training data's bounding box

    void validate() const;
};

struct SimulationRun {
    std::uint64_t seed = 0;
    MlpClassifier ce_model;
    MlpClassifier robust_model;
    double ce_accuracy = 0.0;
    double robust_accuracy = 0.0;
};

struct GridPoint {
    double x = 0.0;
    double y = 0.0;
    std::size_t pred_ce = 0;
    std::size_t pred_robust = 0;
};

struct SimulationResult {
    LabeledDataset train_set;  // first run's training data
    std::vector<SimulationRun> runs;
    double mean_ce_accuracy = 0.0;
    double mean_robust_accuracy = 0.0;
    std::vector<GridPoint> grid;  // first run's models, x varies fastest
};

SimulationResult run_simulation(const SimulationConfig& cfg);

/// resolution x resolution lattice over the bounding box of `data` (2-D only).
std::vector<GridPoint> decision_grid(const MlpClassifier& ce, const MlpClassifier& robust,
                                     const LabeledDataset& data, std::size_t resolution, double margin);

}  // namespace rssl
