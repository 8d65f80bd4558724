#pragma once

// Plain-text file formats: dataset CSV, segmentation scene CSV, model
// checkpoints. Numbers are written in shortest round-trip form, so
// write -> read -> write reproduces the same bytes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "rssl/datagen.hpp"
#include "rssl/dataset.hpp"
#include "rssl/model.hpp"

namespace rssl {

/// Filesystem or parse failure while reading/writing artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);
/// Strict parse of a whole token; throws IoError.
double parse_double(std::string_view text);
std::size_t parse_index(std::string_view text);

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Header `f0,...,f{d-1},label,provenance`, one row per sample.
void write_dataset_csv(std::ostream& out, const LabeledDataset& dataset);
/// K is not stored in the CSV, so it is passed in (usually from the manifest).
LabeledDataset read_dataset_csv(std::istream& in, std::size_t num_classes);

/// Sidecar describing a dataset file.
struct DatasetManifest {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;
    std::string spec_digest;  // sha256 of the canonical generator spec
    std::string data_file;    // CSV name, relative to the manifest
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text);

/// Writes `<stem>.csv` and `<stem>.manifest.json` into `dir`; returns both paths.
std::vector<std::filesystem::path> save_dataset(const std::filesystem::path& dir, const std::string& stem,
                                                const LabeledDataset& dataset, std::uint64_t seed,
                                                const std::string& spec_digest);
/// Loads through a manifest path; checks n, d and K against the CSV.
LabeledDataset load_dataset(const std::filesystem::path& manifest_path);

/// Header `row,col,intensity,label`, one row per pixel in row-major order.
void write_scene_csv(std::ostream& out, const SegScene& scene);

/// `scene_000.csv`, ... plus `scenes.manifest.json` listing them with the
/// grid shape, K, seed and spec digest. Lesion geometry is not stored.
std::vector<std::filesystem::path> save_scenes(const std::filesystem::path& dir,
                                               const std::vector<SegScene>& scenes, std::uint64_t seed,
                                               const std::string& spec_digest);
std::vector<SegScene> load_scenes(const std::filesystem::path& manifest_path);

/// Text checkpoint:
///   rssl-checkpoint 1
///   activation <name>
///   dims <d0> <d1> ... <dL>
///   then per layer: `layer <l>`, out_dim rows of weights, one `bias` line.
void write_checkpoint(std::ostream& out, const MlpClassifier& model);
MlpClassifier read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const MlpClassifier& model);
MlpClassifier load_checkpoint(const std::filesystem::path& path);

/// Whole-file helpers that throw IoError with the path on failure.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace rssl
