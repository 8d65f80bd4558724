#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "rssl/dataset.hpp"

namespace rssl {

/// One Gaussian blob. Points are drawn around `mean` and labelled
/// `assigned_label`; `source_class` names the class whose territory the blob
/// sits in. The two differ only for outlier components.
struct MixtureComponent {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    std::size_t count = 0;
    std::size_t assigned_label = 0;
    std::size_t source_class = 0;
};

struct MixtureSpec {
    std::size_t num_classes = 0;
    std::vector<MixtureComponent> components;
    std::vector<MixtureComponent> outliers;

    std::size_t dim() const;
    std::size_t total_count() const;
    /// Throws InvalidInput (including non-SPD covariances).
    void validate() const;
    /// Same components, no outlier blobs: the clean distribution.
    MixtureSpec without_outliers() const;
    /// Every component count multiplied by `factor` (rounded, at least 1).
    MixtureSpec scaled(double factor) const;
};

/// Rows are emitted component by component (regular components first, then
/// outliers), each drawn as mean + L z with L the Cholesky factor.
LabeledDataset gen_gaussian_mixture(const MixtureSpec& spec, std::uint64_t seed);

/// Three unit-covariance classes at the corners of a side-6 triangle centred
/// on the origin (300 points each), plus 60 points (variance 0.25) drawn
/// 2.5 units left of and below the class-0 mean and labelled class 1.
MixtureSpec default_fig2_spec();

/// Three-class task used by the semi-supervised experiments. Each class is a
/// unit-variance blob (800 points) in the first two coordinates; 80 further
/// coordinates are pure N(0, 1) noise, so a teacher fit on a small labeled
/// subset overfits and its pseudo-labels carry real errors.
MixtureSpec default_toy_classification_spec();

enum class NoiseScheme { UniformSymmetric };

struct NoiseSpec {
    double flip_rate = 0.0;
    NoiseScheme scheme = NoiseScheme::UniformSymmetric;
};

/// Each label flips with probability flip_rate to a uniformly chosen
/// different class. Features and provenance are copied unchanged.
LabeledDataset inject_label_noise(const LabeledDataset& dataset, const NoiseSpec& noise,
                                  std::uint64_t seed);

/// Features of the unlabeled part. Carries no labels, so nothing trained from
/// it can see ground truth.
struct UnlabeledPool {
    FeatureMatrix features;
    std::size_t num_classes = 0;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

/// Ground truth withheld from the unlabeled pool; for diagnostics only.
struct HeldBackTruth {
    std::vector<std::size_t> labels;
};

struct LabeledSplit {
    LabeledDataset labeled;
    UnlabeledPool unlabeled;
    HeldBackTruth held_back;
    std::vector<std::size_t> labeled_indices;    // ascending
    std::vector<std::size_t> unlabeled_indices;  // ascending
};

struct IndexSplit {
    std::vector<std::size_t> labeled;    // ascending
    std::vector<std::size_t> unlabeled;  // ascending
};

/// Random partition of 0..n-1 putting ceil(n * p) indices in the labeled part.
IndexSplit split_indices(std::size_t n, double labeled_fraction, std::uint64_t seed);

/// Random partition keeping ceil(n * p) labeled rows. Both parts preserve the
/// original row order.
LabeledSplit split_labeled_unlabeled(const LabeledDataset& dataset, double labeled_fraction,
                                     std::uint64_t seed);

/// Axis-aligned ellipse with its class.
struct Lesion {
    double center_row = 0.0;
    double center_col = 0.0;
    double radius_row = 1.0;
    double radius_col = 1.0;
    std::size_t label = 1;

    bool contains(std::size_t row, std::size_t col) const;
};

struct SegmentationSpec {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t num_classes = 4;  // class 0 is background
    std::size_t min_lesions = 1;
    std::size_t max_lesions = 3;
    double min_radius = 2.5;
    double max_radius = 6.0;
    double background_intensity = 0.0;
    double class_offset = 1.0;  // lesion class c adds c * class_offset
    double noise_sigma = 0.35;

    void validate() const;
};

/// Intensity image plus per-pixel labels, both row-major height x width.
struct SegScene {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;
    std::vector<double> image;
    std::vector<std::size_t> label_grid;
    std::vector<Lesion> lesions;

    std::size_t at(std::size_t row, std::size_t col) const { return label_grid[row * width + col]; }
};

std::vector<SegScene> gen_toy_segmentation(std::size_t num_scenes, const SegmentationSpec& spec,
                                           std::uint64_t seed);

/// Per-pixel features (intensity, row / height, col / width) in row-major
/// pixel order.
FeatureMatrix pixel_features(const SegScene& scene);

/// All pixels of all scenes as one labelled dataset with the given provenance.
LabeledDataset scenes_to_dataset(const std::vector<SegScene>& scenes, Provenance provenance);

}  // namespace rssl
