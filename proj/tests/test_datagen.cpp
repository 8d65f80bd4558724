#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rssl/datagen.hpp"
#include "rssl/errors.hpp"

using namespace rssl;

namespace {

MixtureComponent blob(Eigen::VectorXd mean, double var, std::size_t count, std::size_t label) {
    const auto d = mean.size();
    return {std::move(mean), Eigen::MatrixXd::Identity(d, d) * var, count, label, label};
}

LabeledDataset labelled_rows(std::size_t n, std::size_t k) {
    LabeledDataset ds;
    ds.num_classes = k;
    ds.features.resize(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        ds.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
        ds.features(static_cast<Eigen::Index>(i), 1) = -0.5 * static_cast<double>(i);
        ds.labels.push_back(i % k);
        ds.provenance.push_back(i % 2 ? Provenance::PseudoLabel : Provenance::TrueLabel);
    }
    return ds;
}

}  // namespace

TEST(Mixture, ComponentCountsAndLabels) {
    MixtureSpec spec{2, {blob(Eigen::Vector2d(0, 0), 1.0, 100, 0), blob(Eigen::Vector2d(5, 5), 1.0, 40, 1)}, {}};
    auto ds = gen_gaussian_mixture(spec, 1);
    ASSERT_EQ(ds.size(), 140u);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 0u), 100);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 1u), 40);
    for (auto p : ds.provenance) EXPECT_EQ(p, Provenance::TrueLabel);
    EXPECT_NO_THROW(ds.validate());
}

TEST(Mixture, DegenerateCovarianceCollapsesToMean) {
    MixtureSpec spec{2, {blob(Eigen::Vector2d(1.5, -2.0), 1e-12, 50, 0), blob(Eigen::Vector2d(0, 0), 1.0, 5, 1)}, {}};
    auto ds = gen_gaussian_mixture(spec, 2);
    for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_NEAR(ds.row(i)[0], 1.5, 1e-4);
        EXPECT_NEAR(ds.row(i)[1], -2.0, 1e-4);
    }
}

TEST(Mixture, SampleMeanAndCovariance) {
    Eigen::Matrix2d cov;
    cov << 2.0, 0.6, 0.6, 0.5;
    MixtureSpec spec{2, {{Eigen::Vector2d(3, -1), cov, 10000, 0, 0}, blob(Eigen::Vector2d(0, 0), 1.0, 1, 1)}, {}};
    auto ds = gen_gaussian_mixture(spec, 3);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < 10000; ++i) mean += Eigen::Vector2d(ds.row(i)[0], ds.row(i)[1]);
    mean /= 10000.0;
    EXPECT_LE(std::abs(mean(0) - 3.0), 3.0 * std::sqrt(2.0 / 10000.0));
    EXPECT_LE(std::abs(mean(1) + 1.0), 3.0 * std::sqrt(0.5 / 10000.0));
    Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < 10000; ++i) {
        Eigen::Vector2d d(ds.row(i)[0] - mean(0), ds.row(i)[1] - mean(1));
        s += d * d.transpose();
    }
    s /= 9999.0;
    EXPECT_NEAR(s(0, 0), 2.0, 0.1);
    EXPECT_NEAR(s(0, 1), 0.6, 0.05);
    EXPECT_NEAR(s(1, 1), 0.5, 0.03);
}

TEST(Mixture, DeterministicPerSeed) {
    auto spec = default_fig2_spec();
    auto a = gen_gaussian_mixture(spec, 9), b = gen_gaussian_mixture(spec, 9), c = gen_gaussian_mixture(spec, 10);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.features, c.features);
}

TEST(Mixture, RejectsInvalidSpecs) {
    Eigen::Matrix2d not_spd;
    not_spd << 1.0, 2.0, 2.0, 1.0;
    MixtureSpec bad{2, {{Eigen::Vector2d(0, 0), not_spd, 10, 0, 0}, blob(Eigen::Vector2d(1, 1), 1.0, 10, 1)}, {}};
    EXPECT_THROW(gen_gaussian_mixture(bad, 0), InvalidInput);
    Eigen::Matrix2d asym;
    asym << 1.0, 0.1, 0.0, 1.0;
    bad.components[0].covariance = asym;
    EXPECT_THROW(bad.validate(), InvalidInput);
    MixtureSpec zero_count{2, {blob(Eigen::Vector2d(0, 0), 1.0, 0, 0)}, {}};
    EXPECT_THROW(zero_count.validate(), InvalidInput);
    MixtureSpec bad_label{2, {blob(Eigen::Vector2d(0, 0), 1.0, 3, 2)}, {}};
    EXPECT_THROW(bad_label.validate(), InvalidInput);
}

TEST(Fig2Spec, Shape) {
    auto spec = default_fig2_spec();
    EXPECT_NO_THROW(spec.validate());
    EXPECT_EQ(spec.total_count(), 960u);
    EXPECT_EQ(spec.num_classes, 3u);
    ASSERT_EQ(spec.outliers.size(), 1u);
    const auto& out = spec.outliers[0];
    EXPECT_NE(out.assigned_label, out.source_class);
    // The outlier blob sits nearest to the class it was drawn from.
    std::size_t nearest = 0;
    double best = INFINITY;
    for (const auto& c : spec.components) {
        const double d = (c.mean - out.mean).norm();
        if (d < best) {
            best = d;
            nearest = c.assigned_label;
        }
    }
    EXPECT_EQ(nearest, out.source_class);
    EXPECT_NE(nearest, out.assigned_label);
    EXPECT_EQ(spec.without_outliers().total_count(), 900u);
    auto ds = gen_gaussian_mixture(spec, 0);
    EXPECT_EQ(ds.size(), 960u);
}

TEST(ToySpec, Valid) {
    auto spec = default_toy_classification_spec();
    EXPECT_NO_THROW(spec.validate());
    EXPECT_TRUE(spec.outliers.empty());
    auto big = spec.scaled(3.0);
    EXPECT_EQ(big.total_count(), 3 * spec.total_count());
}

TEST(Noise, ZeroRateIsIdentity) {
    auto ds = labelled_rows(500, 4);
    auto out = inject_label_noise(ds, {0.0}, 3);
    EXPECT_EQ(out.labels, ds.labels);
    EXPECT_EQ(out.features, ds.features);
    EXPECT_EQ(out.provenance, ds.provenance);
}

TEST(Noise, FlipFractionConcentrates) {
    auto ds = labelled_rows(10000, 5);
    auto out = inject_label_noise(ds, {0.4}, 4);
    std::size_t flipped = 0;
    std::vector<std::size_t> targets(5, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (out.labels[i] != ds.labels[i]) {
            ++flipped;
            ++targets[(out.labels[i] + 5 - ds.labels[i]) % 5];
        }
    }
    EXPECT_NEAR(static_cast<double>(flipped) / 10000.0, 0.4, 0.02);
    // Uniform over the four other classes: each offset takes about a quarter.
    for (std::size_t off = 1; off < 5; ++off)
        EXPECT_NEAR(static_cast<double>(targets[off]) / static_cast<double>(flipped), 0.25, 0.03);
    EXPECT_EQ(out.features, ds.features);
    EXPECT_EQ(out.provenance, ds.provenance);
}

TEST(Noise, DeterministicAndValidated) {
    auto ds = labelled_rows(200, 3);
    EXPECT_EQ(inject_label_noise(ds, {0.3}, 8).labels, inject_label_noise(ds, {0.3}, 8).labels);
    EXPECT_THROW(inject_label_noise(ds, {1.0}, 0), InvalidInput);
    EXPECT_THROW(inject_label_noise(ds, {-0.1}, 0), InvalidInput);
    auto one = labelled_rows(10, 1);
    EXPECT_THROW(inject_label_noise(one, {0.1}, 0), InvalidInput);
}

TEST(Split, SizesFollowCeilingRule) {
    EXPECT_EQ(split_indices(100, 0.5, 1).labeled.size(), 50u);
    EXPECT_EQ(split_indices(960, 0.1, 1).labeled.size(), 96u);
    EXPECT_EQ(split_indices(10, 0.25, 1).labeled.size(), 3u);
    EXPECT_EQ(split_indices(3, 0.7, 1).labeled.size(), 3u);
}

TEST(Split, IsAPartition) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto s = split_indices(137, 0.3, seed);
        std::set<std::size_t> all(s.labeled.begin(), s.labeled.end());
        for (auto i : s.unlabeled) EXPECT_TRUE(all.insert(i).second);
        EXPECT_EQ(all.size(), 137u);
        EXPECT_EQ(*all.rbegin(), 136u);
        EXPECT_TRUE(std::is_sorted(s.labeled.begin(), s.labeled.end()));
        EXPECT_TRUE(std::is_sorted(s.unlabeled.begin(), s.unlabeled.end()));
    }
}

TEST(Split, RejectsDegenerateFractions) {
    EXPECT_THROW(split_indices(10, 0.0, 0), InvalidInput);
    EXPECT_THROW(split_indices(10, 1.0, 0), InvalidInput);
    EXPECT_THROW(split_indices(10, 0.05, 0), InvalidInput);
}

TEST(Split, LabeledUnlabeledCarriesTruthAside) {
    auto ds = labelled_rows(50, 3);
    auto s = split_labeled_unlabeled(ds, 0.2, 6);
    ASSERT_EQ(s.labeled.size(), 10u);
    ASSERT_EQ(s.unlabeled.size(), 40u);
    EXPECT_EQ(s.unlabeled.num_classes, 3u);
    for (std::size_t r = 0; r < s.labeled_indices.size(); ++r) {
        EXPECT_EQ(s.labeled.labels[r], ds.labels[s.labeled_indices[r]]);
        EXPECT_EQ(s.labeled.row(r)[0], ds.row(s.labeled_indices[r])[0]);
    }
    for (std::size_t r = 0; r < s.unlabeled_indices.size(); ++r) {
        EXPECT_EQ(s.held_back.labels[r], ds.labels[s.unlabeled_indices[r]]);
        EXPECT_EQ(s.unlabeled.features(static_cast<Eigen::Index>(r), 1), ds.row(s.unlabeled_indices[r])[1]);
    }
    auto again = split_labeled_unlabeled(ds, 0.2, 6);
    EXPECT_EQ(again.labeled_indices, s.labeled_indices);
}

TEST(Segmentation, DeterministicAndWellFormed) {
    SegmentationSpec spec;
    auto a = gen_toy_segmentation(10, spec, 5), b = gen_toy_segmentation(10, spec, 5);
    ASSERT_EQ(a.size(), 10u);
    for (std::size_t s = 0; s < a.size(); ++s) {
        EXPECT_EQ(a[s].image, b[s].image);
        EXPECT_EQ(a[s].label_grid, b[s].label_grid);
        EXPECT_EQ(a[s].image.size(), 32u * 32u);
        EXPECT_EQ(a[s].label_grid.size(), 32u * 32u);
        EXPECT_GE(a[s].lesions.size(), 1u);
        EXPECT_LE(a[s].lesions.size(), 3u);
        for (auto l : a[s].label_grid) EXPECT_LT(l, 4u);
    }
}

TEST(Segmentation, LesionPixelsMatchEllipseScan) {
    SegmentationSpec spec;
    for (const auto& scene : gen_toy_segmentation(20, spec, 6)) {
        for (std::size_t r = 0; r < scene.height; ++r) {
            for (std::size_t c = 0; c < scene.width; ++c) {
                std::size_t expected = 0;
                int hits = 0;
                for (const auto& l : scene.lesions) {
                    const double dr = (static_cast<double>(r) - l.center_row) / l.radius_row;
                    const double dc = (static_cast<double>(c) - l.center_col) / l.radius_col;
                    if (dr * dr + dc * dc <= 1.0) {
                        expected = l.label;
                        ++hits;
                    }
                }
                EXPECT_LE(hits, 1) << "lesions overlap";
                EXPECT_EQ(scene.at(r, c), expected);
            }
        }
    }
}

TEST(Segmentation, NoLesionsMeansBackground) {
    SegmentationSpec spec;
    spec.min_lesions = 0;
    spec.max_lesions = 0;
    for (const auto& scene : gen_toy_segmentation(3, spec, 7))
        for (auto l : scene.label_grid) EXPECT_EQ(l, 0u);
}

TEST(Segmentation, RejectsSmallGrid) {
    SegmentationSpec spec;
    spec.height = 4;
    EXPECT_THROW(gen_toy_segmentation(1, spec, 0), InvalidInput);
}

TEST(Segmentation, PixelFeaturesAndDataset) {
    SegmentationSpec spec;
    spec.height = 8;
    spec.width = 16;
    spec.min_radius = 1.5;
    spec.max_radius = 2.5;
    auto scenes = gen_toy_segmentation(2, spec, 8);
    auto f = pixel_features(scenes[0]);
    ASSERT_EQ(f.rows(), 128);
    ASSERT_EQ(f.cols(), 3);
    const Eigen::Index p = 3 * 16 + 5;
    EXPECT_EQ(f(p, 0), scenes[0].image[static_cast<std::size_t>(p)]);
    EXPECT_DOUBLE_EQ(f(p, 1), 3.0 / 8.0);
    EXPECT_DOUBLE_EQ(f(p, 2), 5.0 / 16.0);
    auto ds = scenes_to_dataset(scenes, Provenance::PseudoLabel);
    EXPECT_EQ(ds.size(), 256u);
    EXPECT_EQ(ds.labels[128 + 7], scenes[1].label_grid[7]);
    EXPECT_EQ(ds.provenance[0], Provenance::PseudoLabel);
}
