#include "rssl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "rssl/errors.hpp"
#include "rssl/random.hpp"

namespace rssl {

namespace {

constexpr std::uint64_t kShuffleStream = 1;

void apply_activation(Eigen::MatrixXd& z, Activation activation) {
    if (activation == Activation::Relu) z = z.cwiseMax(0.0);
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& in, const DenseLayer& layer) {
    Eigen::MatrixXd z = in * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

void require_finite(const Eigen::MatrixXd& m, const char* what, std::size_t layer) {
    if (!m.allFinite()) {
        throw NumericError(std::string(what) + ": non-finite value in layer " + std::to_string(layer));
    }
}

void require_finite(const Eigen::VectorXd& v, const char* what, std::size_t layer) {
    if (!v.allFinite()) {
        throw NumericError(std::string(what) + ": non-finite value in layer " + std::to_string(layer));
    }
}

void check_batch(const MlpClassifier& model, const FeatureMatrix& x,
                 std::span<const std::size_t> labels, std::span<const RobustLossConfig> losses) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (n == 0) throw InvalidInput("empty batch");
    if (static_cast<std::size_t>(x.cols()) != model.input_dim()) {
        throw InvalidInput("batch has " + std::to_string(x.cols()) + " features, model expects " +
                           std::to_string(model.input_dim()));
    }
    if (labels.size() != n || losses.size() != n) {
        throw InvalidInput("batch: features, labels and loss configs lengths differ");
    }
}

}  // namespace

std::string_view to_string(Activation activation) {
    return activation == Activation::Relu ? "relu" : "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw InvalidInput("unknown activation '" + std::string(name) + "'");
}

bool DenseLayer::operator==(const DenseLayer& other) const {
    return weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
           bias.size() == other.bias.size() && weights == other.weights && bias == other.bias;
}

MlpClassifier::MlpClassifier(std::vector<DenseLayer> layers, Activation hidden_activation)
    : layers_(std::move(layers)), activation_(hidden_activation) {
    if (layers_.empty()) throw InvalidInput("MlpClassifier: no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.in_dim() == 0 || layer.out_dim() == 0 ||
            static_cast<std::size_t>(layer.bias.size()) != layer.out_dim()) {
            throw InvalidInput("MlpClassifier: malformed layer " + std::to_string(l));
        }
        if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim()) {
            throw InvalidInput("MlpClassifier: layer " + std::to_string(l) +
                               " input does not match previous output");
        }
    }
}

std::vector<std::size_t> MlpClassifier::layer_dims() const {
    std::vector<std::size_t> dims{input_dim()};
    for (const auto& layer : layers_) dims.push_back(layer.out_dim());
    return dims;
}

std::vector<double> MlpClassifier::forward(std::span<const double> x) const {
    if (x.size() != input_dim()) {
        throw InvalidInput("forward: input has " + std::to_string(x.size()) +
                           " features, model expects " + std::to_string(input_dim()));
    }
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        a = layers_[l].weights * a + layers_[l].bias;
        if (l + 1 < layers_.size() && activation_ == Activation::Relu) a = a.cwiseMax(0.0);
    }
    return {a.data(), a.data() + a.size()};
}

Eigen::MatrixXd MlpClassifier::forward_batch(const FeatureMatrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
        throw InvalidInput("forward_batch: feature dimension mismatch");
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        a = affine(a, layers_[l]);
        if (l + 1 < layers_.size()) apply_activation(a, activation_);
    }
    return a;
}

std::size_t MlpClassifier::predict(std::span<const double> x) const {
    return argmax(forward(x));
}

std::vector<std::size_t> MlpClassifier::predict_batch(const FeatureMatrix& x) const {
    const Eigen::MatrixXd scores = forward_batch(x);
    std::vector<std::size_t> out(static_cast<std::size_t>(scores.rows()));
    std::vector<double> row(static_cast<std::size_t>(scores.cols()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        for (Eigen::Index k = 0; k < scores.cols(); ++k) row[static_cast<std::size_t>(k)] = scores(i, k);
        out[static_cast<std::size_t>(i)] = argmax(row);
    }
    return out;
}

bool MlpClassifier::operator==(const MlpClassifier& other) const {
    return activation_ == other.activation_ && layers_ == other.layers_;
}

std::size_t argmax(std::span<const double> scores) {
    if (scores.empty()) throw InvalidInput("argmax: empty scores");
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
        if (scores[k] > scores[best]) best = k;
    }
    return best;
}

MlpClassifier init_model(std::span<const std::size_t> layer_dims, Activation activation,
                         std::uint64_t seed) {
    if (layer_dims.size() < 2) throw InvalidInput("init_model: need at least two layer dims");
    if (std::any_of(layer_dims.begin(), layer_dims.end(), [](std::size_t d) { return d == 0; })) {
        throw InvalidInput("init_model: layer dims must be positive");
    }
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(layer_dims[l]);
        const auto out = static_cast<Eigen::Index>(layer_dims[l + 1]);
        const double s = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-s, s);
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = dist(rng);
        }
        layers.push_back(std::move(layer));
    }
    return MlpClassifier(std::move(layers), activation);
}

Gradients backward(const MlpClassifier& model, const FeatureMatrix& x,
                   std::span<const std::size_t> labels,
                   std::span<const RobustLossConfig> losses) {
    check_batch(model, x, labels, losses);
    const auto& layers = model.layers();
    const std::size_t L = layers.size();
    const auto n = x.rows();
    const std::size_t K = model.num_classes();

    // Keep the input of every layer and the pre-activations of hidden layers.
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::MatrixXd> pre;
    inputs.reserve(L);
    pre.reserve(L);
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < L; ++l) {
        inputs.push_back(a);
        Eigen::MatrixXd z = affine(a, layers[l]);
        require_finite(z, "forward", l);
        pre.push_back(z);
        if (l + 1 < L) apply_activation(z, model.hidden_activation());
        a = std::move(z);
    }

    Gradients grads;
    Eigen::MatrixXd delta(n, static_cast<Eigen::Index>(K));
    std::vector<double> scores(K);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        for (std::size_t k = 0; k < K; ++k) scores[k] = a(i, static_cast<Eigen::Index>(k));
        const OneHotLabel y(labels[idx], K);
        const auto g = loss_grad_scores(losses[idx], scores, y);
        for (std::size_t k = 0; k < K; ++k) delta(i, static_cast<Eigen::Index>(k)) = g[k] * inv_n;
        grads.loss += loss_value(losses[idx], softmax(scores), y) * inv_n;
    }

    grads.layers.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        grads.layers[l].weights = delta.transpose() * inputs[l];
        grads.layers[l].bias = delta.colwise().sum().transpose();
        require_finite(grads.layers[l].weights, "backward", l);
        require_finite(grads.layers[l].bias, "backward", l);
        if (l == 0) break;
        delta = delta * layers[l].weights;
        if (model.hidden_activation() == Activation::Relu) {
            delta = delta.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return grads;
}

double batch_loss(const MlpClassifier& model, const FeatureMatrix& x,
                  std::span<const std::size_t> labels, std::span<const RobustLossConfig> losses) {
    check_batch(model, x, labels, losses);
    const Eigen::MatrixXd scores = model.forward_batch(x);
    const std::size_t K = model.num_classes();
    std::vector<double> row(K);
    double total = 0.0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        for (std::size_t k = 0; k < K; ++k) row[k] = scores(i, static_cast<Eigen::Index>(k));
        const auto idx = static_cast<std::size_t>(i);
        total += loss_value(losses[idx], softmax(row), OneHotLabel(labels[idx], K));
    }
    return total / static_cast<double>(scores.rows());
}

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidHyperparameter("learning_rate must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw InvalidHyperparameter("momentum must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw InvalidHyperparameter("weight_decay must be non-negative");
    }
    if (batch_size == 0) throw InvalidHyperparameter("batch_size must be positive");
    for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
        const auto& step = lr_schedule[i];
        if (i > 0 && step.epoch <= lr_schedule[i - 1].epoch) {
            throw InvalidHyperparameter("lr_schedule epochs must be strictly increasing");
        }
        if (step.epoch >= epochs) {
            throw InvalidHyperparameter("lr_schedule epoch " + std::to_string(step.epoch) +
                                        " is not below epochs=" + std::to_string(epochs));
        }
        if (!(step.rate > 0.0) || !std::isfinite(step.rate)) {
            throw InvalidHyperparameter("lr_schedule rates must be positive");
        }
    }
}

double SgdConfig::rate_at(std::size_t epoch) const {
    double rate = learning_rate;
    for (const auto& step : lr_schedule) {
        if (step.epoch <= epoch) rate = step.rate;
    }
    return rate;
}

void sgd_step(MlpClassifier& model, const Gradients& grads, SgdState& state,
              const SgdConfig& config, double learning_rate) {
    auto& layers = model.mutable_layers();
    if (grads.layers.size() != layers.size()) throw InvalidInput("sgd_step: layer count mismatch");
    if (state.velocity.empty()) {
        for (const auto& layer : layers) {
            state.velocity.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                                      Eigen::VectorXd::Zero(layer.bias.size())});
        }
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& w = layers[l];
        auto& v = state.velocity[l];
        const auto& g = grads.layers[l];
        if (g.weights.rows() != w.weights.rows() || g.weights.cols() != w.weights.cols() ||
            g.bias.size() != w.bias.size() || v.weights.rows() != w.weights.rows() ||
            v.weights.cols() != w.weights.cols()) {
            throw InvalidInput("sgd_step: shape mismatch in layer " + std::to_string(l));
        }
        v.weights = config.momentum * v.weights + g.weights + config.weight_decay * w.weights;
        v.bias = config.momentum * v.bias + g.bias + config.weight_decay * w.bias;
        w.weights -= learning_rate * v.weights;
        w.bias -= learning_rate * v.bias;
        require_finite(w.weights, "sgd_step", l);
        require_finite(w.bias, "sgd_step", l);
    }
}

TrainResult train(MlpClassifier model, const LabeledDataset& dataset, const LossMap& loss_map,
                  const SgdConfig& config) {
    config.validate();
    dataset.validate();
    if (dataset.empty()) throw InvalidInput("train: empty dataset");
    if (dataset.dim() != model.input_dim() || dataset.num_classes != model.num_classes()) {
        throw InvalidInput("train: dataset shape does not match the model");
    }

    const std::size_t n = dataset.size();
    std::vector<RobustLossConfig> per_sample;
    per_sample.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto it = loss_map.find(dataset.provenance[i]);
        if (it == loss_map.end()) {
            throw InvalidInput("train: no loss configured for provenance '" +
                               std::string(to_string(dataset.provenance[i])) + "'");
        }
        it->second.validate();
        per_sample.push_back(it->second);
    }

    TrainResult result{std::move(model), {}};
    SgdState state;
    Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
    std::vector<std::size_t> order(n);

    FeatureMatrix batch_x;
    std::vector<std::size_t> batch_y;
    std::vector<RobustLossConfig> batch_loss_cfg;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double rate = config.rate_at(epoch);
        double loss_sum = 0.0;

        for (std::size_t start = 0, batch = 0; start < n; start += config.batch_size, ++batch) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const auto b = static_cast<Eigen::Index>(stop - start);
            batch_x.resize(b, static_cast<Eigen::Index>(dataset.dim()));
            batch_y.clear();
            batch_loss_cfg.clear();
            for (std::size_t r = start; r < stop; ++r) {
                const std::size_t i = order[r];
                batch_x.row(static_cast<Eigen::Index>(r - start)) =
                    dataset.features.row(static_cast<Eigen::Index>(i));
                batch_y.push_back(dataset.labels[i]);
                batch_loss_cfg.push_back(per_sample[i]);
            }
            try {
                const Gradients grads = backward(result.model, batch_x, batch_y, batch_loss_cfg);
                loss_sum += grads.loss * static_cast<double>(b);
                sgd_step(result.model, grads, state, config, rate);
            } catch (const NumericError& e) {
                std::ostringstream os;
                os << "train: epoch " << epoch << ", batch " << batch << ": " << e.what();
                throw NumericError(os.str());
            }
        }
        result.record.epochs.push_back(
            {loss_sum / static_cast<double>(n), evaluate_accuracy(result.model, dataset), rate});
    }
    return result;
}

double evaluate_accuracy(const MlpClassifier& model, const LabeledDataset& dataset) {
    if (dataset.empty()) throw InvalidInput("evaluate_accuracy: empty dataset");
    const auto predictions = model.predict_batch(dataset.features);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == dataset.labels[i];
    return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

}  // namespace rssl
