#pragma once

/**
 * Robust classification losses on probability vectors.
 *
 * Every loss takes a clamped probability vector p (the softmax output) and a
 * hard label y. The gradient entry point differentiates loss(softmax(s), y)
 * with respect to the raw scores s in closed form.
 *
 *   CE   -log p_y
 *   GCE  (1 - p_y^q) / q                                  CE as q->0, 1-p_y at q=1
 *   BCE  (b+1)/b * (1 - p_y^b) + sum_k p_k^(b+1)          CE + 1 as b->0
 *   RCE  -A (1 - p_y)                                     A stands in for log 0
 *   MAE  sum_k |p_k - onehot_k| = 2 (1 - p_y)
 *   SCE  alpha CE + gamma RCE
 */

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rssl {

/// Floor applied to every probability before a log or a power.
inline constexpr double kProbFloor = 1e-12;

/// Tolerance on |sum(p) - 1| accepted when building a ProbDist.
inline constexpr double kSimplexTolerance = 1e-9;

/// A point on the K-simplex, stored with entries clamped to [kProbFloor, 1].
class ProbDist {
public:
    /// Validates the simplex constraint on the raw values, then clamps.
    static ProbDist from_probabilities(std::vector<double> probs);

    std::size_t num_classes() const { return probs_.size(); }
    double operator[](std::size_t k) const { return probs_[k]; }
    std::span<const double> probs() const { return probs_; }

private:
    explicit ProbDist(std::vector<double> probs) : probs_(std::move(probs)) {}
    std::vector<double> probs_;
};

/// Hard label y with its class count K.
class OneHotLabel {
public:
    OneHotLabel(std::size_t class_index, std::size_t num_classes);

    std::size_t class_index() const { return class_index_; }
    std::size_t num_classes() const { return num_classes_; }

private:
    std::size_t class_index_;
    std::size_t num_classes_;
};

enum class LossFamily { CE, GCE, BCE, RCE, SCE, MAE };

std::string_view to_string(LossFamily family);
/// Case-insensitive; throws InvalidInput on an unknown name.
LossFamily parse_loss_family(std::string_view name);

/// Loss selector plus hyperparameters. Only the fields relevant to `family`
/// are consulted or validated.
struct RobustLossConfig {
    LossFamily family = LossFamily::CE;
    double q_exponent = 0.7;  // GCE
    double beta = 1.0;        // BCE
    double A = -2.0;          // RCE, SCE
    double alpha = 1.0;       // SCE
    double gamma = 1.0;       // SCE
    // Evaluate BCE with the (1 - p_y)^beta power instead of the Box-Cox
    // form. Diverges as beta -> 0; kept only for comparison runs.
    bool bce_verbatim = false;

    /// Throws InvalidHyperparameter.
    void validate() const;

    /// Compact human-readable tag, e.g. "gce(q=0.7)".
    std::string describe() const;

    static RobustLossConfig ce();
    static RobustLossConfig gce(double q_exponent);
    static RobustLossConfig bce(double beta);
    static RobustLossConfig rce(double A = -2.0);
    static RobustLossConfig sce(double alpha, double gamma, double A = -2.0);
    static RobustLossConfig mae();

    bool operator==(const RobustLossConfig&) const = default;
};

/// Numerically stable softmax. Requires K >= 2 and finite scores.
ProbDist softmax(std::span<const double> scores);

double ce_loss(const ProbDist& p, const OneHotLabel& y);
double gce_loss(const ProbDist& p, const OneHotLabel& y, double q_exponent);
double bce_loss(const ProbDist& p, const OneHotLabel& y, double beta);
double bce_loss_verbatim(const ProbDist& p, const OneHotLabel& y, double beta);
double rce_loss(const ProbDist& p, const OneHotLabel& y, double A);
double mae_loss(const ProbDist& p, const OneHotLabel& y);
double sce_loss(const ProbDist& p, const OneHotLabel& y, double alpha, double gamma, double A);

double loss_value(const RobustLossConfig& config, const ProbDist& p, const OneHotLabel& y);

/// d loss(softmax(scores), y) / d scores, analytic.
std::vector<double> loss_grad_scores(const RobustLossConfig& config,
                                     std::span<const double> scores,
                                     const OneHotLabel& y);

}  // namespace rssl
