#include "rssl/simulation.hpp"

#include <algorithm>
#include <limits>

#include "rssl/errors.hpp"
#include "rssl/random.hpp"

namespace rssl {

namespace {
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kModelStream = 3;
}  // namespace

void SimulationConfig::validate() const {
    spec.validate();
    if (spec.dim() != 2) throw InvalidInput("simulation: the mixture must be two-dimensional");
    if (!(test_scale > 0.0)) throw InvalidInput("simulation: test_scale must be positive");
    if (runs == 0) throw InvalidInput("simulation: runs must be at least 1");
    if (grid_resolution < 2) throw InvalidInput("simulation: grid_resolution must be at least 2");
    if (!(grid_margin >= 0.0)) throw InvalidInput("simulation: grid_margin must be non-negative");
    sgd.validate();
    robust.validate();
}

std::vector<GridPoint> decision_grid(const MlpClassifier& ce, const MlpClassifier& robust,
                                     const LabeledDataset& data, std::size_t resolution, double margin) {
    if (data.dim() != 2 || data.empty()) throw InvalidInput("decision_grid: need non-empty 2-D data");
    if (resolution < 2) throw InvalidInput("decision_grid: resolution must be at least 2");
    const Eigen::RowVector2d lo = data.features.colwise().minCoeff().array() - margin;
    const Eigen::RowVector2d hi = data.features.colwise().maxCoeff().array() + margin;
    const double step_x = (hi(0) - lo(0)) / static_cast<double>(resolution - 1);
    const double step_y = (hi(1) - lo(1)) / static_cast<double>(resolution - 1);

    FeatureMatrix points(static_cast<Eigen::Index>(resolution * resolution), 2);
    for (std::size_t j = 0; j < resolution; ++j)
        for (std::size_t i = 0; i < resolution; ++i) {
            const auto row = static_cast<Eigen::Index>(j * resolution + i);
            points(row, 0) = lo(0) + step_x * static_cast<double>(i);
            points(row, 1) = lo(1) + step_y * static_cast<double>(j);
        }
    const auto a = ce.predict_batch(points);
    const auto b = robust.predict_batch(points);
    std::vector<GridPoint> grid(a.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        grid[k] = {points(r, 0), points(r, 1), a[k], b[k]};
    }
    return grid;
}

SimulationResult run_simulation(const SimulationConfig& cfg) {
    cfg.validate();
    const MixtureSpec test_spec = cfg.spec.without_outliers().scaled(cfg.test_scale);
    const auto dims = cfg.architecture.layer_dims(cfg.spec.dim(), cfg.spec.num_classes);

    SimulationResult result;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        const std::uint64_t run_seed = derive_seed(cfg.seed, r);
        auto train_set = gen_gaussian_mixture(cfg.spec, derive_seed(run_seed, kTrainStream));
        auto test_set = gen_gaussian_mixture(test_spec, derive_seed(run_seed, kTestStream));

        SgdConfig sgd = cfg.sgd;
        sgd.seed = derive_seed(run_seed, kModelStream);
        const auto init = init_model(dims, cfg.architecture.activation, sgd.seed);
        auto ce = train(init, train_set, {{Provenance::TrueLabel, RobustLossConfig::ce()}}, sgd);
        auto rb = train(init, train_set, {{Provenance::TrueLabel, cfg.robust}}, sgd);

        SimulationRun run{run_seed, std::move(ce.model), std::move(rb.model), 0.0, 0.0};
        run.ce_accuracy = evaluate_accuracy(run.ce_model, test_set);
        run.robust_accuracy = evaluate_accuracy(run.robust_model, test_set);
        result.mean_ce_accuracy += run.ce_accuracy / static_cast<double>(cfg.runs);
        result.mean_robust_accuracy += run.robust_accuracy / static_cast<double>(cfg.runs);
        if (r == 0) result.train_set = std::move(train_set);
        result.runs.push_back(std::move(run));
    }
    result.grid = decision_grid(result.runs[0].ce_model, result.runs[0].robust_model, result.train_set,
                                cfg.grid_resolution, cfg.grid_margin);
    return result;
}

}  // namespace rssl
