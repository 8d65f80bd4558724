#include "rssl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "rssl/errors.hpp"
#include "rssl/random.hpp"

namespace rssl {

namespace {

// Seed streams of the master seed.
constexpr std::uint64_t kPoolStream = 100;
constexpr std::uint64_t kTestStream = 101;
constexpr std::uint64_t kRepeatStreamBase = 1000;

enum RepeatStream : std::uint64_t { kSplit = 0, kTeacher = 1, kStudent = 2, kNoise = 3 };

std::string arm_context(std::size_t repeat, const std::string& arm) {
    return "repeat " + std::to_string(repeat) + ", arm " + arm + ": ";
}

std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat, RepeatStream stream) {
    return derive_seed(master, kRepeatStreamBase + 16 * repeat + stream);
}

SgdConfig with_seed(SgdConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    return cfg;
}

// The data a single repeat works on, independent of the task kind.
struct RepeatData {
    LabeledDataset labeled;
    UnlabeledPool unlabeled;
    HeldBackTruth held_back;
    LabeledDataset full;
};

// Scores a trained model on the shared test set, one value per metric.
using Scorer = std::function<std::vector<double>(const MlpClassifier&)>;

}  // namespace

std::vector<std::size_t> Architecture::layer_dims(std::size_t input_dim,
                                                  std::size_t num_classes) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(num_classes);
    return dims;
}

LabeledDataset PseudoLabeledSet::as_dataset() const {
    LabeledDataset ds;
    ds.features = features;
    ds.labels = pseudo_labels;
    ds.provenance.assign(pseudo_labels.size(), Provenance::PseudoLabel);
    ds.num_classes = num_classes;
    return ds;
}

MlpClassifier train_teacher(const LabeledDataset& labeled, const Architecture& arch,
                            const SgdConfig& cfg) {
    if (labeled.empty()) throw InvalidInput("train_teacher: empty labeled set");
    if (std::any_of(labeled.provenance.begin(), labeled.provenance.end(),
                    [](Provenance p) { return p != Provenance::TrueLabel; })) {
        throw InvalidInput("train_teacher: teacher data must carry true labels only");
    }
    const auto dims = arch.layer_dims(labeled.dim(), labeled.num_classes);
    auto model = init_model(dims, arch.activation, cfg.seed);
    return train(std::move(model), labeled, {{Provenance::TrueLabel, RobustLossConfig::ce()}}, cfg)
        .model;
}

PseudoLabeledSet generate_pseudo_labels(const MlpClassifier& teacher, const UnlabeledPool& unlabeled) {
    if (unlabeled.size() > 0 && static_cast<std::size_t>(unlabeled.features.cols()) != teacher.input_dim()) {
        throw InvalidInput("generate_pseudo_labels: feature dimension does not match the teacher");
    }
    PseudoLabeledSet out;
    out.features = unlabeled.features;
    out.num_classes = teacher.num_classes();
    if (unlabeled.size() == 0) return out;

    const Eigen::MatrixXd scores = teacher.forward_batch(unlabeled.features);
    std::vector<double> row(teacher.num_classes());
    out.pseudo_labels.reserve(unlabeled.size());
    out.confidence.reserve(unlabeled.size());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = scores(i, static_cast<Eigen::Index>(k));
        const std::size_t label = argmax(row);
        out.pseudo_labels.push_back(label);
        out.confidence.push_back(softmax(row)[label]);
    }
    return out;
}

PseudoLabeledSet corrupt_pseudo_labels(const PseudoLabeledSet& pseudo, double flip_rate,
                                       std::uint64_t seed) {
    PseudoLabeledSet out = pseudo;
    if (pseudo.size() == 0) return out;
    out.pseudo_labels = inject_label_noise(pseudo.as_dataset(), {flip_rate}, seed).labels;
    return out;
}

double pseudo_label_error_rate(const PseudoLabeledSet& pseudo, const HeldBackTruth& truth) {
    if (pseudo.size() != truth.labels.size()) {
        throw InvalidInput("pseudo_label_error_rate: size mismatch");
    }
    if (pseudo.size() == 0) return 0.0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pseudo.size(); ++i) wrong += pseudo.pseudo_labels[i] != truth.labels[i];
    return static_cast<double>(wrong) / static_cast<double>(pseudo.size());
}

MlpClassifier train_student(const LabeledDataset& labeled, const PseudoLabeledSet& pseudo,
                            const RobustLossConfig& robust, const Architecture& arch,
                            const SgdConfig& cfg) {
    robust.validate();
    if (std::any_of(labeled.provenance.begin(), labeled.provenance.end(),
                    [](Provenance p) { return p != Provenance::TrueLabel; })) {
        throw InvalidInput("train_student: labeled part must carry true labels only");
    }
    const LabeledDataset combined = LabeledDataset::concat(labeled, pseudo.as_dataset());
    if (combined.empty()) throw InvalidInput("train_student: no training data");
    const auto dims = arch.layer_dims(combined.dim(), combined.num_classes);
    auto model = init_model(dims, arch.activation, cfg.seed);
    const LossMap losses{{Provenance::TrueLabel, RobustLossConfig::ce()},
                         {Provenance::PseudoLabel, robust}};
    return train(std::move(model), combined, losses, cfg).model;
}

BoundModels run_bounds(const LabeledDataset& full, double labeled_fraction, const Architecture& arch,
                       const SgdConfig& cfg, std::uint64_t split_seed) {
    const auto split = split_labeled_unlabeled(full, labeled_fraction, split_seed);
    return {train_teacher(split.labeled, arch, cfg), train_teacher(full, arch, cfg)};
}

double dice_score(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                  std::span<const std::size_t> class_set) {
    if (pred.size() != truth.size()) throw InvalidInput("dice_score: grids differ in size");
    auto member = [&](std::size_t label) {
        return std::find(class_set.begin(), class_set.end(), label) != class_set.end();
    };
    std::size_t p_count = 0, t_count = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool in_p = member(pred[i]);
        const bool in_t = member(truth[i]);
        p_count += in_p;
        t_count += in_t;
        both += in_p && in_t;
    }
    if (p_count + t_count == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p_count + t_count);
}

Segmenter model_segmenter(const MlpClassifier& model) {
    return [model](const SegScene& scene) { return model.predict_batch(pixel_features(scene)); };
}

std::vector<double> evaluate_segmentation(const Segmenter& segmenter,
                                          const std::vector<SegScene>& scenes,
                                          std::span<const ClassGrouping> groupings) {
    if (scenes.empty()) throw InvalidInput("evaluate_segmentation: no scenes");
    std::vector<double> totals(groupings.size(), 0.0);
    for (const auto& scene : scenes) {
        const auto pred = segmenter(scene);
        if (pred.size() != scene.label_grid.size()) {
            throw InvalidInput("evaluate_segmentation: prediction grid has the wrong size");
        }
        for (std::size_t g = 0; g < groupings.size(); ++g) {
            totals[g] += dice_score(pred, scene.label_grid, groupings[g].classes);
        }
    }
    for (double& t : totals) t /= static_cast<double>(scenes.size());
    return totals;
}

std::vector<double> evaluate_segmentation(const MlpClassifier& model,
                                          const std::vector<SegScene>& scenes,
                                          std::span<const ClassGrouping> groupings) {
    return evaluate_segmentation(model_segmenter(model), scenes, groupings);
}

std::vector<ClassGrouping> default_groupings() {
    return {{"WT", {1, 2, 3}}, {"TC", {1, 3}}, {"ET", {1}}};
}

void ExperimentConfig::validate() const {
    if (!(labeled_fraction > 0.0 && labeled_fraction < 1.0)) {
        throw InvalidInput("labeled_fraction must lie in (0, 1)");
    }
    if (repeats < 1) throw InvalidInput("repeats must be at least 1");
    if (!(pseudo_flip_rate >= 0.0 && pseudo_flip_rate < 1.0)) {
        throw InvalidInput("pseudo_flip_rate must lie in [0, 1)");
    }
    teacher.validate();
    student.validate();
    for (const auto& loss : robust_losses) loss.validate();
    if (task == TaskKind::Classification) {
        std::size_t train_dim = train_spec.dim(), train_k = train_spec.num_classes;
        std::size_t test_dim = test_spec.dim(), test_k = test_spec.num_classes;
        if (train_data) {
            train_data->validate();
            if (train_data->size() < 2) throw InvalidInput("train_data needs at least two rows");
            for (auto prov : train_data->provenance) {
                if (prov != Provenance::TrueLabel) throw InvalidInput("train_data must hold true labels only");
            }
            train_dim = train_data->dim();
            train_k = train_data->num_classes;
        } else {
            train_spec.validate();
        }
        if (test_data) {
            test_data->validate();
            if (test_data->empty()) throw InvalidInput("test_data is empty");
            test_dim = test_data->dim();
            test_k = test_data->num_classes;
        } else {
            test_spec.validate();
        }
        if (train_dim != test_dim || train_k != test_k) {
            throw InvalidInput("training and test data describe different problems");
        }
    } else {
        seg_spec.validate();
        if (train_scenes < 2 || test_scenes < 1) throw InvalidInput("too few scenes");
        if (groupings.empty()) throw InvalidInput("segmentation needs at least one grouping");
        for (const auto& g : groupings) {
            for (std::size_t c : g.classes) {
                if (c >= seg_spec.num_classes) {
                    throw InvalidInput("grouping '" + g.name + "' names an unknown class");
                }
            }
        }
    }
}

MetricSummary summarize(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("summarize: no values");
    MetricSummary s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

const ArmResult& ExperimentResult::arm(std::string_view name) const {
    for (const auto& a : arms) {
        if (a.name == name) return a;
    }
    throw InvalidInput("no arm named '" + std::string(name) + "'");
}

std::vector<std::string> robust_arm_names(std::span<const RobustLossConfig> losses) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::string name = "student_" + std::string(to_string(losses[i].family));
        const auto same = static_cast<std::size_t>(
            std::count_if(losses.begin(), losses.end(),
                          [&](const RobustLossConfig& c) { return c.family == losses[i].family; }));
        if (same > 1) name += "_" + std::to_string(i);
        names.push_back(std::move(name));
    }
    return names;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    // Training pool and test set are fixed for the whole experiment; repeats
    // differ in which rows (or scenes) are labeled and in training seeds.
    std::function<RepeatData(std::size_t)> make_repeat;
    Scorer score;
    std::vector<std::string> metrics;

    LabeledDataset pool;
    LabeledDataset test_set;
    std::vector<SegScene> pool_scenes;
    std::vector<SegScene> test_scenes;

    if (cfg.task == TaskKind::Classification) {
        pool = cfg.train_data ? *cfg.train_data
                              : gen_gaussian_mixture(cfg.train_spec, derive_seed(cfg.seed, kPoolStream));
        test_set = cfg.test_data ? *cfg.test_data
                                 : gen_gaussian_mixture(cfg.test_spec, derive_seed(cfg.seed, kTestStream));
        metrics = {"accuracy"};
        make_repeat = [&](std::size_t r) {
            auto split = split_labeled_unlabeled(pool, cfg.labeled_fraction,
                                                 repeat_seed(cfg.seed, r, kSplit));
            return RepeatData{std::move(split.labeled), std::move(split.unlabeled),
                              std::move(split.held_back), pool};
        };
        score = [&](const MlpClassifier& m) {
            return std::vector<double>{evaluate_accuracy(m, test_set)};
        };
    } else {
        pool_scenes = gen_toy_segmentation(cfg.train_scenes, cfg.seg_spec,
                                           derive_seed(cfg.seed, kPoolStream));
        test_scenes = gen_toy_segmentation(cfg.test_scenes, cfg.seg_spec,
                                           derive_seed(cfg.seed, kTestStream));
        for (const auto& g : cfg.groupings) metrics.push_back("dice_" + g.name);
        make_repeat = [&](std::size_t r) {
            const auto idx = split_indices(pool_scenes.size(), cfg.labeled_fraction,
                                           repeat_seed(cfg.seed, r, kSplit));
            std::vector<SegScene> labeled, unlabeled;
            for (std::size_t i : idx.labeled) labeled.push_back(pool_scenes[i]);
            for (std::size_t i : idx.unlabeled) unlabeled.push_back(pool_scenes[i]);
            RepeatData data;
            data.labeled = scenes_to_dataset(labeled, Provenance::TrueLabel);
            if (!unlabeled.empty()) {
                LabeledDataset hidden = scenes_to_dataset(unlabeled, Provenance::TrueLabel);
                data.unlabeled = {std::move(hidden.features), hidden.num_classes};
                data.held_back.labels = std::move(hidden.labels);
            }
            data.full = scenes_to_dataset(pool_scenes, Provenance::TrueLabel);
            return data;
        };
        score = [&](const MlpClassifier& m) {
            return evaluate_segmentation(m, test_scenes, cfg.groupings);
        };
    }

    const auto robust_names = robust_arm_names(cfg.robust_losses);
    ExperimentResult result;
    result.labeled_fraction = cfg.labeled_fraction;
    result.repeats = cfg.repeats;
    result.metrics = metrics;
    result.arms.push_back({"lower_bound", {}, {}});
    result.arms.push_back({"student_ce", {}, {}});
    for (const auto& name : robust_names) result.arms.push_back({name, {}, {}});
    result.arms.push_back({"upper_bound", {}, {}});

    using Clock = std::chrono::steady_clock;
    auto record = [&](std::size_t r, std::size_t arm_index, const MlpClassifier& model,
                      Clock::time_point started) {
        const auto values = score(model);
        auto& arm = result.arms[arm_index];
        for (std::size_t m = 0; m < metrics.size(); ++m) arm.values[metrics[m]].push_back(values[m]);
        result.timings.push_back(
            {r, arm.name, std::chrono::duration<double>(Clock::now() - started).count()});
    };

    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const RepeatData data = make_repeat(r);
        const SgdConfig teacher_cfg = with_seed(cfg.teacher, repeat_seed(cfg.seed, r, kTeacher));
        const SgdConfig student_cfg = with_seed(cfg.student, repeat_seed(cfg.seed, r, kStudent));

        // Trains and scores one arm; failures are rethrown naming the repeat and arm.
        auto run_arm = [&](std::size_t arm_index, const std::function<MlpClassifier()>& fit) {
            const auto t0 = Clock::now();
            try {
                MlpClassifier model = fit();
                record(r, arm_index, model, t0);
                return model;
            } catch (const NumericError& e) {
                throw NumericError(arm_context(r, result.arms[arm_index].name) + e.what());
            } catch (const InvalidHyperparameter& e) {
                throw InvalidHyperparameter(arm_context(r, result.arms[arm_index].name) + e.what());
            } catch (const InvalidInput& e) {
                throw InvalidInput(arm_context(r, result.arms[arm_index].name) + e.what());
            }
        };

        const MlpClassifier teacher =
            run_arm(0, [&] { return train_teacher(data.labeled, cfg.architecture, teacher_cfg); });

        const PseudoLabeledSet clean_pseudo = generate_pseudo_labels(teacher, data.unlabeled);
        const PseudoLabeledSet pseudo =
            cfg.pseudo_flip_rate > 0.0
                ? corrupt_pseudo_labels(clean_pseudo, cfg.pseudo_flip_rate,
                                        repeat_seed(cfg.seed, r, kNoise))
                : clean_pseudo;
        result.teacher_error_rate.push_back(pseudo_label_error_rate(clean_pseudo, data.held_back));
        result.pseudo_error_rate.push_back(pseudo_label_error_rate(pseudo, data.held_back));

        run_arm(1, [&] {
            return train_student(data.labeled, pseudo, RobustLossConfig::ce(), cfg.architecture,
                                 student_cfg);
        });
        for (std::size_t i = 0; i < cfg.robust_losses.size(); ++i) {
            run_arm(2 + i, [&] {
                return train_student(data.labeled, pseudo, cfg.robust_losses[i], cfg.architecture,
                                     student_cfg);
            });
        }
        run_arm(result.arms.size() - 1,
                [&] { return train_teacher(data.full, cfg.architecture, student_cfg); });
    }

    for (auto& arm : result.arms) {
        for (const auto& [metric, values] : arm.values) arm.summary[metric] = summarize(values);
    }
    result.teacher_error_summary = summarize(result.teacher_error_rate);
    result.pseudo_error_summary = summarize(result.pseudo_error_rate);
    return result;
}

}  // namespace rssl
