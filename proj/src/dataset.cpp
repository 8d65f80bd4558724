#include "rssl/dataset.hpp"

#include <cmath>
#include <string>

#include "rssl/errors.hpp"

namespace rssl {

std::string_view to_string(Provenance provenance) {
    return provenance == Provenance::TrueLabel ? "true" : "pseudo";
}

Provenance parse_provenance(std::string_view text) {
    if (text == "true") return Provenance::TrueLabel;
    if (text == "pseudo") return Provenance::PseudoLabel;
    throw InvalidInput("unknown provenance '" + std::string(text) + "'");
}

void LabeledDataset::validate() const {
    const auto n = static_cast<std::size_t>(features.rows());
    if (labels.size() != n || provenance.size() != n) {
        throw InvalidInput("LabeledDataset: features, labels and provenance lengths differ");
    }
    if (num_classes == 0) throw InvalidInput("LabeledDataset: num_classes must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= num_classes) {
            throw InvalidInput("LabeledDataset: label " + std::to_string(labels[i]) + " at row " +
                               std::to_string(i) + " is out of range");
        }
    }
    if (!features.allFinite()) throw InvalidInput("LabeledDataset: non-finite feature");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.num_classes = num_classes;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.labels.reserve(indices.size());
    out.provenance.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t i = indices[r];
        if (i >= size()) throw InvalidInput("LabeledDataset::subset: index out of range");
        out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(i));
        out.labels.push_back(labels[i]);
        out.provenance.push_back(provenance[i]);
    }
    return out;
}

LabeledDataset LabeledDataset::concat(const LabeledDataset& a, const LabeledDataset& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.dim() != b.dim() || a.num_classes != b.num_classes) {
        throw InvalidInput("LabeledDataset::concat: incompatible datasets");
    }
    LabeledDataset out;
    out.num_classes = a.num_classes;
    out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
    out.features << a.features, b.features;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.provenance = a.provenance;
    out.provenance.insert(out.provenance.end(), b.provenance.begin(), b.provenance.end());
    return out;
}

}  // namespace rssl
