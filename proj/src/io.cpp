#include "rssl/io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include <openssl/evp.h>

#include "rssl/errors.hpp"

namespace rssl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw IoError("format_double: conversion failed");
    return {buf, end};
}

double parse_double(std::string_view text) {
    double value = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || text.empty())
        throw IoError("not a number: '" + std::string(text) + "'");
    return value;
}

std::size_t parse_index(std::string_view text) {
    std::size_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || text.empty())
        throw IoError("not a non-negative integer: '" + std::string(text) + "'");
    return value;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 failed");
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
    return out.str();
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

}  // namespace

void write_dataset_csv(std::ostream& out, const LabeledDataset& dataset) {
    dataset.validate();
    const std::size_t d = dataset.dim();
    for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
    out << "label,provenance\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto row = dataset.row(i);
        for (double v : row) out << format_double(v) << ',';
        out << dataset.labels[i] << ',' << to_string(dataset.provenance[i]) << '\n';
    }
}

LabeledDataset read_dataset_csv(std::istream& in, std::size_t num_classes) {
    std::string line;
    if (!next_line(in, line)) throw IoError("dataset csv: missing header");
    auto header = split_fields(line);
    if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "provenance")
        throw IoError("dataset csv: header must end with label,provenance");
    const std::size_t d = header.size() - 2;
    for (std::size_t j = 0; j < d; ++j)
        if (header[j] != "f" + std::to_string(j))
            throw IoError("dataset csv: expected column f" + std::to_string(j) + ", got '" +
                          std::string(header[j]) + "'");

    std::vector<double> values;
    LabeledDataset out;
    out.num_classes = num_classes;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != d + 2)
            throw IoError("dataset csv " + at_line(line_no) + "expected " + std::to_string(d + 2) +
                          " fields, got " + std::to_string(fields.size()));
        try {
            for (std::size_t j = 0; j < d; ++j) values.push_back(parse_double(fields[j]));
            out.labels.push_back(parse_index(fields[d]));
            out.provenance.push_back(parse_provenance(fields[d + 1]));
        } catch (const std::exception& e) {
            throw IoError("dataset csv " + at_line(line_no) + e.what());
        }
    }
    const auto n = static_cast<Eigen::Index>(out.labels.size());
    out.features = Eigen::Map<FeatureMatrix>(values.data(), n, static_cast<Eigen::Index>(d));
    try {
        out.validate();
    } catch (const InvalidInput& e) {
        throw IoError(std::string("dataset csv: ") + e.what());
    }
    return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
    json j = {{"n", m.n},
              {"d", m.d},
              {"num_classes", m.num_classes},
              {"seed", m.seed},
              {"spec_digest", m.spec_digest},
              {"data_file", m.data_file}};
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(std::string_view text) {
    try {
        json j = json::parse(text);
        DatasetManifest m;
        m.n = j.at("n").get<std::size_t>();
        m.d = j.at("d").get<std::size_t>();
        m.num_classes = j.at("num_classes").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.spec_digest = j.at("spec_digest").get<std::string>();
        m.data_file = j.at("data_file").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw IoError(std::string("dataset manifest: ") + e.what());
    }
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<fs::path> save_dataset(const fs::path& dir, const std::string& stem,
                                   const LabeledDataset& dataset, std::uint64_t seed,
                                   const std::string& spec_digest) {
    std::ostringstream csv;
    write_dataset_csv(csv, dataset);
    DatasetManifest m{dataset.size(), dataset.dim(), dataset.num_classes, seed, spec_digest,
                      stem + ".csv"};
    const fs::path csv_path = dir / (stem + ".csv");
    const fs::path manifest_path = dir / (stem + ".manifest.json");
    write_text_file(csv_path, csv.str());
    write_text_file(manifest_path, manifest_to_json(m));
    return {csv_path, manifest_path};
}

LabeledDataset load_dataset(const fs::path& manifest_path) {
    const auto m = manifest_from_json(read_text_file(manifest_path));
    const fs::path csv_path = manifest_path.parent_path() / m.data_file;
    std::istringstream in(read_text_file(csv_path));
    auto data = read_dataset_csv(in, m.num_classes);
    if (data.size() != m.n || data.dim() != m.d)
        throw IoError(csv_path.string() + ": shape " + std::to_string(data.size()) + "x" +
                      std::to_string(data.dim()) + " does not match manifest " + std::to_string(m.n) +
                      "x" + std::to_string(m.d));
    return data;
}

void write_scene_csv(std::ostream& out, const SegScene& scene) {
    out << "row,col,intensity,label\n";
    for (std::size_t r = 0; r < scene.height; ++r)
        for (std::size_t c = 0; c < scene.width; ++c) {
            const std::size_t k = r * scene.width + c;
            out << r << ',' << c << ',' << format_double(scene.image[k]) << ',' << scene.label_grid[k]
                << '\n';
        }
}

namespace {

std::string scene_file(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%03zu.csv", i);
    return buf;
}

SegScene read_scene_csv(std::istream& in, std::size_t height, std::size_t width, std::size_t k,
                        const std::string& where) {
    SegScene scene;
    scene.height = height;
    scene.width = width;
    scene.num_classes = k;
    scene.image.assign(height * width, 0.0);
    scene.label_grid.assign(height * width, 0);
    std::string line;
    if (!next_line(in, line) || line != "row,col,intensity,label")
        throw IoError(where + ": bad header");
    std::size_t expected = 0;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 4) throw IoError(where + " " + at_line(line_no) + "expected 4 fields");
        try {
            const std::size_t r = parse_index(f[0]);
            const std::size_t c = parse_index(f[1]);
            if (expected >= height * width || r * width + c != expected)
                throw IoError("pixels must be listed in row-major order");
            scene.image[expected] = parse_double(f[2]);
            const std::size_t label = parse_index(f[3]);
            if (label >= k) throw IoError("label out of range");
            scene.label_grid[expected] = label;
        } catch (const std::exception& e) {
            throw IoError(where + " " + at_line(line_no) + e.what());
        }
        ++expected;
    }
    if (expected != height * width)
        throw IoError(where + ": expected " + std::to_string(height * width) + " pixels, got " +
                      std::to_string(expected));
    return scene;
}

}  // namespace

std::vector<fs::path> save_scenes(const fs::path& dir, const std::vector<SegScene>& scenes,
                                  std::uint64_t seed, const std::string& spec_digest) {
    if (scenes.empty()) throw InvalidInput("save_scenes: no scenes");
    std::vector<fs::path> written;
    json files = json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        if (s.height != scenes[0].height || s.width != scenes[0].width)
            throw InvalidInput("save_scenes: scenes differ in size");
        std::ostringstream csv;
        write_scene_csv(csv, s);
        written.push_back(dir / scene_file(i));
        write_text_file(written.back(), csv.str());
        files.push_back(scene_file(i));
    }
    json m = {{"num_scenes", scenes.size()},
              {"height", scenes[0].height},
              {"width", scenes[0].width},
              {"num_classes", scenes[0].num_classes},
              {"seed", seed},
              {"spec_digest", spec_digest},
              {"files", files}};
    written.push_back(dir / "scenes.manifest.json");
    write_text_file(written.back(), m.dump(2) + "\n");
    return written;
}

std::vector<SegScene> load_scenes(const fs::path& manifest_path) {
    json m;
    try {
        m = json::parse(read_text_file(manifest_path));
        const auto h = m.at("height").get<std::size_t>();
        const auto w = m.at("width").get<std::size_t>();
        const auto k = m.at("num_classes").get<std::size_t>();
        std::vector<SegScene> scenes;
        for (const auto& f : m.at("files")) {
            const fs::path p = manifest_path.parent_path() / f.get<std::string>();
            std::istringstream in(read_text_file(p));
            scenes.push_back(read_scene_csv(in, h, w, k, p.string()));
        }
        if (scenes.size() != m.at("num_scenes").get<std::size_t>())
            throw IoError("scene manifest: num_scenes does not match files");
        return scenes;
    } catch (const json::exception& e) {
        throw IoError("scene manifest " + manifest_path.string() + ": " + e.what());
    }
}

void write_checkpoint(std::ostream& out, const MlpClassifier& model) {
    out << "rssl-checkpoint 1\n";
    out << "activation " << to_string(model.hidden_activation()) << '\n';
    out << "dims";
    for (auto d : model.layer_dims()) out << ' ' << d;
    out << '\n';
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        out << "layer " << l << '\n';
        const auto& w = layers[l].weights;
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                out << (c ? " " : "") << format_double(w(r, c));
            out << '\n';
        }
        out << "bias";
        for (Eigen::Index r = 0; r < layers[l].bias.size(); ++r)
            out << ' ' << format_double(layers[l].bias(r));
        out << '\n';
    }
}

namespace {

std::vector<std::string> tokens(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

}  // namespace

MlpClassifier read_checkpoint(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto expect_line = [&](const char* what) {
        if (!next_line(in, line)) throw IoError(std::string("checkpoint: unexpected end, wanted ") + what);
        ++line_no;
        return tokens(line);
    };
    try {
        auto t = expect_line("magic");
        if (t != std::vector<std::string>{"rssl-checkpoint", "1"})
            throw IoError("not an rssl checkpoint (version 1)");
        t = expect_line("activation");
        if (t.size() != 2 || t[0] != "activation") throw IoError("expected 'activation <name>'");
        const Activation act = parse_activation(t[1]);
        t = expect_line("dims");
        if (t.size() < 3 || t[0] != "dims") throw IoError("expected 'dims' with at least two sizes");
        std::vector<std::size_t> dims;
        for (std::size_t i = 1; i < t.size(); ++i) dims.push_back(parse_index(t[i]));

        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            t = expect_line("layer");
            if (t.size() != 2 || t[0] != "layer" || parse_index(t[1]) != l)
                throw IoError("expected 'layer " + std::to_string(l) + "'");
            const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
            const auto cols = static_cast<Eigen::Index>(dims[l]);
            DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
            for (Eigen::Index r = 0; r < rows; ++r) {
                t = expect_line("weight row");
                if (static_cast<Eigen::Index>(t.size()) != cols)
                    throw IoError("weight row has " + std::to_string(t.size()) + " values, expected " +
                                  std::to_string(cols));
                for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = parse_double(t[c]);
            }
            t = expect_line("bias");
            if (static_cast<Eigen::Index>(t.size()) != rows + 1 || t[0] != "bias")
                throw IoError("expected 'bias' with " + std::to_string(rows) + " values");
            for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = parse_double(t[r + 1]);
            layers.push_back(std::move(layer));
        }
        while (next_line(in, line)) {
            ++line_no;
            if (!tokens(line).empty()) throw IoError("trailing content");
        }
        return MlpClassifier(std::move(layers), act);
    } catch (const IoError& e) {
        throw IoError("checkpoint " + at_line(line_no) + e.what());
    } catch (const std::invalid_argument& e) {
        throw IoError("checkpoint " + at_line(line_no) + e.what());
    }
}

void save_checkpoint(const fs::path& path, const MlpClassifier& model) {
    std::ostringstream out;
    write_checkpoint(out, model);
    write_text_file(path, out.str());
}

MlpClassifier load_checkpoint(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    return read_checkpoint(in);
}

}  // namespace rssl
