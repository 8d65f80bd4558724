#include "rssl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rssl/errors.hpp"
#include "rssl/random.hpp"

namespace rssl {

namespace {

void validate_component(const MixtureComponent& c, std::size_t dim, std::size_t num_classes,
                        const std::string& where) {
    if (static_cast<std::size_t>(c.mean.size()) != dim) {
        throw InvalidInput(where + ": mean has the wrong dimension");
    }
    if (c.covariance.rows() != c.mean.size() || c.covariance.cols() != c.mean.size()) {
        throw InvalidInput(where + ": covariance has the wrong shape");
    }
    if (c.count == 0) throw InvalidInput(where + ": count must be positive");
    if (c.assigned_label >= num_classes || c.source_class >= num_classes) {
        throw InvalidInput(where + ": label out of range");
    }
    if (!c.mean.allFinite() || !c.covariance.allFinite()) {
        throw InvalidInput(where + ": non-finite parameter");
    }
    if (!c.covariance.isApprox(c.covariance.transpose(), 1e-12)) {
        throw InvalidInput(where + ": covariance is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
    if (llt.info() != Eigen::Success) {
        throw InvalidInput(where + ": covariance is not positive definite");
    }
}

Eigen::MatrixXd isotropic(double variance, Eigen::Index dim = 2) {
    return Eigen::MatrixXd::Identity(dim, dim) * variance;
}

MixtureComponent blob(double x, double y, double variance, std::size_t count, std::size_t label) {
    return {Eigen::Vector2d(x, y), isotropic(variance), count, label, label};
}

bool boxes_overlap(const Lesion& a, const Lesion& b) {
    const double margin = 1.0;
    return std::abs(a.center_row - b.center_row) < a.radius_row + b.radius_row + margin &&
           std::abs(a.center_col - b.center_col) < a.radius_col + b.radius_col + margin;
}

}  // namespace

std::size_t MixtureSpec::dim() const {
    if (components.empty()) return 0;
    return static_cast<std::size_t>(components.front().mean.size());
}

std::size_t MixtureSpec::total_count() const {
    std::size_t n = 0;
    for (const auto& c : components) n += c.count;
    for (const auto& c : outliers) n += c.count;
    return n;
}

void MixtureSpec::validate() const {
    if (num_classes < 2) throw InvalidInput("MixtureSpec: need at least two classes");
    if (components.empty()) throw InvalidInput("MixtureSpec: no components");
    const std::size_t d = dim();
    if (d == 0) throw InvalidInput("MixtureSpec: zero-dimensional mean");
    for (std::size_t i = 0; i < components.size(); ++i) {
        validate_component(components[i], d, num_classes, "component " + std::to_string(i));
        if (components[i].assigned_label != components[i].source_class) {
            throw InvalidInput("component " + std::to_string(i) +
                               ": regular components must keep their source class");
        }
    }
    for (std::size_t i = 0; i < outliers.size(); ++i) {
        validate_component(outliers[i], d, num_classes, "outlier " + std::to_string(i));
        if (outliers[i].assigned_label == outliers[i].source_class) {
            throw InvalidInput("outlier " + std::to_string(i) +
                               ": assigned label must differ from the source class");
        }
    }
}

MixtureSpec MixtureSpec::without_outliers() const {
    MixtureSpec out = *this;
    out.outliers.clear();
    return out;
}

MixtureSpec MixtureSpec::scaled(double factor) const {
    if (!(factor > 0.0)) throw InvalidInput("MixtureSpec::scaled: factor must be positive");
    MixtureSpec out = *this;
    auto rescale = [factor](MixtureComponent& c) {
        c.count = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(c.count) * factor)));
    };
    std::for_each(out.components.begin(), out.components.end(), rescale);
    std::for_each(out.outliers.begin(), out.outliers.end(), rescale);
    return out;
}

LabeledDataset gen_gaussian_mixture(const MixtureSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t d = spec.dim();
    LabeledDataset ds;
    ds.num_classes = spec.num_classes;
    ds.features.resize(static_cast<Eigen::Index>(spec.total_count()), static_cast<Eigen::Index>(d));
    ds.labels.reserve(spec.total_count());
    ds.provenance.assign(spec.total_count(), Provenance::TrueLabel);

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(static_cast<Eigen::Index>(d));
    Eigen::Index row = 0;
    auto emit = [&](const MixtureComponent& c) {
        const Eigen::MatrixXd L = c.covariance.llt().matrixL();
        for (std::size_t i = 0; i < c.count; ++i) {
            for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(rng);
            ds.features.row(row++) = (c.mean + L * z).transpose();
            ds.labels.push_back(c.assigned_label);
        }
    };
    std::for_each(spec.components.begin(), spec.components.end(), emit);
    std::for_each(spec.outliers.begin(), spec.outliers.end(), emit);
    return ds;
}

MixtureSpec default_fig2_spec() {
    // Side-6 triangle centred on the origin.
    const double r = std::sqrt(3.0);
    MixtureSpec spec;
    spec.num_classes = 3;
    spec.components = {blob(-3.0, -r, 1.0, 300, 0), blob(3.0, -r, 1.0, 300, 1),
                       blob(0.0, 2.0 * r, 1.0, 300, 2)};
    MixtureComponent outlier = blob(-5.5, -r - 2.5, 0.25, 60, 1);
    outlier.source_class = 0;
    spec.outliers = {outlier};
    return spec;
}

MixtureSpec default_toy_classification_spec() {
    constexpr Eigen::Index kNoiseDims = 80;
    constexpr double kMeans[3][2] = {{-1.7676295376624458, -2.5277674004245601},
                                     {0.86719027117342928, 2.7493061213734307},
                                     {-2.0666941555431348, 0.52638750469958939}};
    MixtureSpec spec;
    spec.num_classes = 3;
    for (std::size_t c = 0; c < 3; ++c) {
        MixtureComponent m = blob(kMeans[c][0], kMeans[c][1], 1.0, 800, c);
        m.mean.conservativeResizeLike(Eigen::VectorXd::Zero(2 + kNoiseDims));
        m.covariance = isotropic(1.0, 2 + kNoiseDims);
        spec.components.push_back(std::move(m));
    }
    return spec;
}

LabeledDataset inject_label_noise(const LabeledDataset& dataset, const NoiseSpec& noise,
                                  std::uint64_t seed) {
    if (!(noise.flip_rate >= 0.0 && noise.flip_rate < 1.0)) {
        throw InvalidInput("inject_label_noise: flip rate must lie in [0, 1)");
    }
    if (dataset.num_classes < 2) throw InvalidInput("inject_label_noise: need at least two classes");
    LabeledDataset out = dataset;
    if (noise.flip_rate == 0.0) return out;
    Rng rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> other(0, dataset.num_classes - 2);
    for (auto& label : out.labels) {
        if (coin(rng) < noise.flip_rate) {
            const std::size_t pick = other(rng);
            label = pick >= label ? pick + 1 : pick;
        }
    }
    return out;
}

IndexSplit split_indices(std::size_t n, double labeled_fraction, std::uint64_t seed) {
    if (!(labeled_fraction > 0.0 && labeled_fraction < 1.0)) {
        throw InvalidInput("labeled fraction must lie in (0, 1), got " + std::to_string(labeled_fraction));
    }
    if (static_cast<double>(n) * labeled_fraction < 1.0) {
        throw InvalidInput("labeled part would be empty for n=" + std::to_string(n));
    }
    // The epsilon keeps 960 * 0.1 at 96 rather than 97.
    const auto m = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * labeled_fraction - 1e-9));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    IndexSplit split;
    split.labeled.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    split.unlabeled.assign(order.begin() + static_cast<std::ptrdiff_t>(m), order.end());
    std::sort(split.labeled.begin(), split.labeled.end());
    std::sort(split.unlabeled.begin(), split.unlabeled.end());
    return split;
}

LabeledSplit split_labeled_unlabeled(const LabeledDataset& dataset, double labeled_fraction,
                                     std::uint64_t seed) {
    auto [labeled_idx, unlabeled_idx] = split_indices(dataset.size(), labeled_fraction, seed);
    LabeledSplit split;
    split.labeled_indices = std::move(labeled_idx);
    split.unlabeled_indices = std::move(unlabeled_idx);

    split.labeled = dataset.subset(split.labeled_indices);
    split.unlabeled.num_classes = dataset.num_classes;
    split.unlabeled.features.resize(static_cast<Eigen::Index>(split.unlabeled_indices.size()),
                                    dataset.features.cols());
    for (std::size_t r = 0; r < split.unlabeled_indices.size(); ++r) {
        const std::size_t i = split.unlabeled_indices[r];
        split.unlabeled.features.row(static_cast<Eigen::Index>(r)) =
            dataset.features.row(static_cast<Eigen::Index>(i));
        split.held_back.labels.push_back(dataset.labels[i]);
    }
    return split;
}

bool Lesion::contains(std::size_t row, std::size_t col) const {
    const double dr = (static_cast<double>(row) - center_row) / radius_row;
    const double dc = (static_cast<double>(col) - center_col) / radius_col;
    return dr * dr + dc * dc <= 1.0;
}

void SegmentationSpec::validate() const {
    if (height < 8 || width < 8) throw InvalidInput("SegmentationSpec: grid must be at least 8x8");
    if (num_classes < 2) throw InvalidInput("SegmentationSpec: need background plus one class");
    if (min_lesions > max_lesions) throw InvalidInput("SegmentationSpec: min_lesions > max_lesions");
    if (!(min_radius > 0.0) || min_radius > max_radius) {
        throw InvalidInput("SegmentationSpec: invalid lesion radius range");
    }
    if (2.0 * max_radius + 2.0 > static_cast<double>(std::min(height, width))) {
        throw InvalidInput("SegmentationSpec: lesions do not fit in the grid");
    }
    if (!(noise_sigma >= 0.0)) throw InvalidInput("SegmentationSpec: noise_sigma must be >= 0");
}

std::vector<SegScene> gen_toy_segmentation(std::size_t num_scenes, const SegmentationSpec& spec,
                                           std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> lesion_count(spec.min_lesions, spec.max_lesions);
    std::uniform_int_distribution<std::size_t> lesion_class(1, spec.num_classes - 1);
    std::uniform_real_distribution<double> radius(spec.min_radius, spec.max_radius);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> pixel_noise(0.0, spec.noise_sigma);
    constexpr int kPlacementAttempts = 100;

    std::vector<SegScene> scenes;
    scenes.reserve(num_scenes);
    for (std::size_t s = 0; s < num_scenes; ++s) {
        SegScene scene;
        scene.height = spec.height;
        scene.width = spec.width;
        scene.num_classes = spec.num_classes;

        const std::size_t wanted = lesion_count(rng);
        for (int attempt = 0; attempt < kPlacementAttempts && scene.lesions.size() < wanted; ++attempt) {
            Lesion lesion;
            lesion.radius_row = radius(rng);
            lesion.radius_col = radius(rng);
            const double rows = static_cast<double>(spec.height - 1) - 2.0 * lesion.radius_row;
            const double cols = static_cast<double>(spec.width - 1) - 2.0 * lesion.radius_col;
            lesion.center_row = lesion.radius_row + unit(rng) * rows;
            lesion.center_col = lesion.radius_col + unit(rng) * cols;
            lesion.label = lesion_class(rng);
            const bool clash = std::any_of(scene.lesions.begin(), scene.lesions.end(),
                                           [&](const Lesion& o) { return boxes_overlap(o, lesion); });
            if (!clash) scene.lesions.push_back(lesion);
        }

        scene.label_grid.assign(spec.height * spec.width, 0);
        scene.image.resize(spec.height * spec.width);
        for (std::size_t r = 0; r < spec.height; ++r) {
            for (std::size_t c = 0; c < spec.width; ++c) {
                std::size_t label = 0;
                for (const auto& lesion : scene.lesions) {
                    if (lesion.contains(r, c)) label = lesion.label;
                }
                const std::size_t idx = r * spec.width + c;
                scene.label_grid[idx] = label;
                scene.image[idx] = spec.background_intensity +
                                   static_cast<double>(label) * spec.class_offset + pixel_noise(rng);
            }
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

FeatureMatrix pixel_features(const SegScene& scene) {
    FeatureMatrix f(static_cast<Eigen::Index>(scene.height * scene.width), 3);
    for (std::size_t r = 0; r < scene.height; ++r) {
        for (std::size_t c = 0; c < scene.width; ++c) {
            const auto idx = static_cast<Eigen::Index>(r * scene.width + c);
            f(idx, 0) = scene.image[static_cast<std::size_t>(idx)];
            f(idx, 1) = static_cast<double>(r) / static_cast<double>(scene.height);
            f(idx, 2) = static_cast<double>(c) / static_cast<double>(scene.width);
        }
    }
    return f;
}

LabeledDataset scenes_to_dataset(const std::vector<SegScene>& scenes, Provenance provenance) {
    if (scenes.empty()) throw InvalidInput("scenes_to_dataset: no scenes");
    std::size_t total = 0;
    for (const auto& s : scenes) total += s.height * s.width;
    LabeledDataset ds;
    ds.num_classes = scenes.front().num_classes;
    ds.features.resize(static_cast<Eigen::Index>(total), 3);
    ds.labels.reserve(total);
    ds.provenance.assign(total, provenance);
    Eigen::Index row = 0;
    for (const auto& s : scenes) {
        const FeatureMatrix f = pixel_features(s);
        ds.features.middleRows(row, f.rows()) = f;
        row += f.rows();
        ds.labels.insert(ds.labels.end(), s.label_grid.begin(), s.label_grid.end());
    }
    return ds;
}

}  // namespace rssl
