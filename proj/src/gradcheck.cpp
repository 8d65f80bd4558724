#include "rssl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rssl/errors.hpp"
#include "rssl/random.hpp"

namespace rssl {

bool GradcheckReport::passed() const {
    return std::all_of(families.begin(), families.end(), [](const FamilyReport& f) { return f.failures == 0; });
}

std::vector<RobustLossConfig> default_gradcheck_losses() {
    return {RobustLossConfig::ce(),         RobustLossConfig::gce(0.1),        RobustLossConfig::gce(0.7),
            RobustLossConfig::gce(0.9),     RobustLossConfig::bce(0.001),      RobustLossConfig::bce(1.0),
            RobustLossConfig::bce(5.0),     RobustLossConfig::rce(-2.0),       RobustLossConfig::rce(-4.0),
            RobustLossConfig::sce(0.1, 0.01), RobustLossConfig::sce(0.01, 1.0), RobustLossConfig::mae()};
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
    if (!(options.step > 0.0) || !(options.tolerance >= 0.0) || !(options.abs_floor >= 0.0)) {
        throw InvalidInput("gradcheck: step must be positive, tolerances non-negative");
    }
    if (options.points == 0 || options.class_counts.empty()) throw InvalidInput("gradcheck: nothing to check");
    for (auto k : options.class_counts) {
        if (k < 2) throw InvalidInput("gradcheck: class counts must be at least 2");
    }
    const auto losses = options.losses.empty() ? default_gradcheck_losses() : options.losses;
    for (const auto& l : losses) l.validate();

    // The denominator is floored where the absolute floor takes over, so the
    // reported ratio only exceeds the tolerance at genuinely failing points.
    const double denom_floor = options.tolerance > 0.0 ? options.abs_floor / options.tolerance : 0.0;
    auto relative_error = [&](double diff, double scale) {
        const double d = std::max(scale, denom_floor);
        return d > 0.0 ? diff / d : 0.0;
    };

    GradcheckReport report;
    auto family_slot = [&](LossFamily f) -> FamilyReport& {
        for (auto& r : report.families) {
            if (r.family == f) return r;
        }
        report.families.push_back({});
        report.families.back().family = f;
        return report.families.back();
    };

    for (std::size_t li = 0; li < losses.size(); ++li) {
        const auto& loss = losses[li];
        FamilyReport& fam = family_slot(loss.family);
        fam.configs.push_back(loss.describe());
        Rng rng(derive_seed(options.seed, li));
        std::normal_distribution<double> normal(0.0, options.score_scale);

        for (std::size_t K : options.class_counts) {
            std::uniform_int_distribution<std::size_t> pick(0, K - 1);
            for (std::size_t t = 0; t < options.points; ++t) {
                std::vector<double> s(K);
                for (auto& v : s) v = normal(rng);
                const OneHotLabel y(pick(rng), K);
                const auto analytic = loss_grad_scores(loss, s, y);
                for (std::size_t k = 0; k < K; ++k) {
                    auto shifted = s;
                    shifted[k] = s[k] + options.step;
                    const double up = loss_value(loss, softmax(shifted), y);
                    shifted[k] = s[k] - options.step;
                    const double down = loss_value(loss, softmax(shifted), y);
                    const double numeric = (up - down) / (2.0 * options.step);

                    const double diff = std::abs(analytic[k] - numeric);
                    const double rel = relative_error(diff, std::max(std::abs(analytic[k]), std::abs(numeric)));
                    ++fam.checked;
                    fam.max_rel_error = std::max(fam.max_rel_error, rel);
                    if (diff > options.abs_floor && rel > options.tolerance) {
                        if (fam.failures++ == 0) {
                            fam.first_failure = GradcheckFailure{loss.describe(), K, t, k, s, y.class_index(),
                                                                 analytic[k], numeric};
                        }
                    }
                }
            }
        }
    }
    return report;
}

}  // namespace rssl
