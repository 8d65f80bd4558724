#pragma once

// Finite-difference self-check of the analytic loss gradients, shared by the
// CLI `gradcheck` command.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rssl/losses.hpp"

namespace rssl {

struct GradcheckOptions {
    std::vector<RobustLossConfig> losses;  // empty: default_gradcheck_losses()
    std::vector<std::size_t> class_counts{2, 3, 10};
    std::size_t points = 100;  // per loss config and class count
    double step = 1e-5;
    // A coordinate passes when |a - n| <= max(abs_floor, tolerance * max(|a|, |n|)).
    double tolerance = 1e-5;
    double abs_floor = 1e-8;
    double score_scale = 1.5;  // scores ~ N(0, score_scale^2)
    std::uint64_t seed = 0;
};

struct GradcheckFailure {
    std::string loss;  // RobustLossConfig::describe()
    std::size_t num_classes = 0;
    std::size_t point = 0;
    std::size_t coordinate = 0;
    std::vector<double> scores;
    std::size_t label = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct FamilyReport {
    LossFamily family = LossFamily::CE;
    std::vector<std::string> configs;
    std::size_t checked = 0;      // gradient coordinates compared
    double max_rel_error = 0.0;   // |a - n| / max(|a|, |n|, abs_floor / tolerance)
    std::size_t failures = 0;
    std::optional<GradcheckFailure> first_failure;
};

struct GradcheckReport {
    std::vector<FamilyReport> families;  // in first-seen order
    bool passed() const;
};

/// CE; GCE q in {0.1, 0.7, 0.9}; BCE beta in {0.001, 1, 5}; RCE A in {-2, -4};
/// SCE (alpha, gamma) in {(0.1, 0.01), (0.01, 1)}; MAE.
std::vector<RobustLossConfig> default_gradcheck_losses();

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace rssl
