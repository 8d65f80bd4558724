#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace rssl {

/// Row-major so that a sample is a contiguous span.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Where a label came from. Drives per-sample loss selection during training.
enum class Provenance : std::uint8_t { TrueLabel, PseudoLabel };

std::string_view to_string(Provenance provenance);
Provenance parse_provenance(std::string_view text);

/// Features (n x d), one label and one provenance flag per row.
struct LabeledDataset {
    FeatureMatrix features;
    std::vector<std::size_t> labels;
    std::vector<Provenance> provenance;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
    bool empty() const { return labels.empty(); }

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dim(), dim()};
    }

    /// Throws InvalidInput when lengths disagree, a label is out of range or a
    /// feature is non-finite.
    void validate() const;

    /// Rows in the given order.
    LabeledDataset subset(std::span<const std::size_t> indices) const;

    /// Rows of `a` followed by rows of `b`. Dimensions and K must agree.
    static LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);
};

}  // namespace rssl
