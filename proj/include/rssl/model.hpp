#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rssl/dataset.hpp"
#include "rssl/losses.hpp"

namespace rssl {

enum class Activation { Identity, Relu };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view name);

/// Fully connected layer: out = weights * in + bias.
struct DenseLayer {
    Eigen::MatrixXd weights;  // out_dim x in_dim
    Eigen::VectorXd bias;     // out_dim

    std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
    bool operator==(const DenseLayer& other) const;
};

/// Dense feed-forward classifier. The hidden activation is applied between
/// layers, never after the last one; outputs are pre-softmax scores.
class MlpClassifier {
public:
    MlpClassifier(std::vector<DenseLayer> layers, Activation hidden_activation);

    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t num_classes() const { return layers_.back().out_dim(); }
    Activation hidden_activation() const { return activation_; }
    std::vector<std::size_t> layer_dims() const;

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() { return layers_; }

    std::vector<double> forward(std::span<const double> x) const;
    /// Scores for every row of `x` (n x K).
    Eigen::MatrixXd forward_batch(const FeatureMatrix& x) const;

    std::size_t predict(std::span<const double> x) const;
    std::vector<std::size_t> predict_batch(const FeatureMatrix& x) const;

    bool operator==(const MlpClassifier& other) const;

private:
    std::vector<DenseLayer> layers_;
    Activation activation_;
};

/// Index of the largest score, lowest index on ties.
std::size_t argmax(std::span<const double> scores);

/// Glorot-uniform weights, zero biases.
MlpClassifier init_model(std::span<const std::size_t> layer_dims, Activation activation,
                         std::uint64_t seed);

/// Same shapes as the model's layers.
struct Gradients {
    std::vector<DenseLayer> layers;
    double loss = 0.0;  // batch-mean loss at the point of differentiation
};

/// Gradient of the batch-mean loss. `losses` holds one config per row.
Gradients backward(const MlpClassifier& model, const FeatureMatrix& x,
                   std::span<const std::size_t> labels,
                   std::span<const RobustLossConfig> losses);

/// Batch-mean loss, the quantity `backward` differentiates.
double batch_loss(const MlpClassifier& model, const FeatureMatrix& x,
                  std::span<const std::size_t> labels, std::span<const RobustLossConfig> losses);

struct LrStep {
    std::size_t epoch = 0;  // first epoch that uses `rate`
    double rate = 0.0;
    bool operator==(const LrStep&) const = default;
};

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<LrStep> lr_schedule;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    /// Throws InvalidHyperparameter.
    void validate() const;
    double rate_at(std::size_t epoch) const;
    bool operator==(const SgdConfig&) const = default;
};

/// Momentum buffers, lazily shaped on the first step.
struct SgdState {
    std::vector<DenseLayer> velocity;
};

/// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v.
/// Weight decay applies to biases as well.
void sgd_step(MlpClassifier& model, const Gradients& grads, SgdState& state,
              const SgdConfig& config, double learning_rate);

struct EpochRecord {
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    double learning_rate = 0.0;
    bool operator==(const EpochRecord&) const = default;
};

struct TrainRecord {
    std::vector<EpochRecord> epochs;
    bool operator==(const TrainRecord&) const = default;
};

using LossMap = std::map<Provenance, RobustLossConfig>;

struct TrainResult {
    MlpClassifier model;
    TrainRecord record;
};

/// Minibatch SGD over shuffled epochs. Each sample's loss is looked up by its
/// provenance flag. Shuffling depends only on config.seed.
TrainResult train(MlpClassifier model, const LabeledDataset& dataset, const LossMap& loss_map,
                  const SgdConfig& config);

/// Fraction of rows whose prediction equals the stored label.
double evaluate_accuracy(const MlpClassifier& model, const LabeledDataset& dataset);

}  // namespace rssl
