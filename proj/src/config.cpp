#include "rssl/config.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <initializer_list>
#include <sstream>

#include "rssl/errors.hpp"
#include "rssl/io.hpp"

namespace rssl {

namespace fs = std::filesystem;

ConfigError::ConfigError(std::string path, const std::string& message)
    : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError("", origin + ": invalid JSON: " + e.what());
    }
}

std::string json_digest(const Json& canonical) { return sha256_hex(canonical.dump()); }

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

void expect_object(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
}

void allow_keys(const Json& j, const std::string& path, std::initializer_list<const char*> keys) {
    expect_object(j, path);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
            throw ConfigError(join(path, it.key()), "unknown field");
        }
    }
}

const Json& require(const Json& j, const std::string& path, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(join(path, key), "missing required field");
    return *it;
}

const Json* find(const Json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double as_number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
    return v;
}

std::uint64_t as_uint(const Json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
        if (j.get<std::int64_t>() < 0) throw ConfigError(path, "must be non-negative");
        return static_cast<std::uint64_t>(j.get<std::int64_t>());
    }
    if (j.is_number_float()) {
        const double v = j.get<double>();
        if (v >= 0.0 && v == std::floor(v) && v < 9.007199254740992e15) return static_cast<std::uint64_t>(v);
    }
    throw ConfigError(path, "expected a non-negative integer");
}

std::string as_string(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    return j.get<std::string>();
}

bool as_bool(const Json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
    return j.get<bool>();
}

template <class T, class F>
void read_opt(const Json& j, const std::string& path, const char* key, T& out, F convert) {
    if (const Json* v = find(j, key)) out = static_cast<T>(convert(*v, join(path, key)));
}

std::vector<double> number_list(const Json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], index_path(path, i)));
    return out;
}

/// Runs `f`, turning library validation errors into ConfigError at `path`.
template <class F>
void validated(const std::string& path, F f) {
    try {
        f();
    } catch (const InvalidHyperparameter& e) {
        throw ConfigError(path, e.what());
    } catch (const InvalidInput& e) {
        throw ConfigError(path, e.what());
    }
}

}  // namespace

// --- losses, optimiser, architecture -----------------------------------------

RobustLossConfig loss_from_json(const Json& j, const std::string& path) {
    allow_keys(j, path, {"family", "q", "beta", "A", "alpha", "gamma", "bce_verbatim"});
    RobustLossConfig loss;
    const std::string family = as_string(require(j, path, "family"), join(path, "family"));
    try {
        loss.family = parse_loss_family(family);
    } catch (const InvalidInput&) {
        throw ConfigError(join(path, "family"), "unknown loss family '" + family + "'");
    }
    read_opt(j, path, "q", loss.q_exponent, as_number);
    read_opt(j, path, "beta", loss.beta, as_number);
    read_opt(j, path, "A", loss.A, as_number);
    read_opt(j, path, "alpha", loss.alpha, as_number);
    read_opt(j, path, "gamma", loss.gamma, as_number);
    read_opt(j, path, "bce_verbatim", loss.bce_verbatim, as_bool);
    validated(path, [&] { loss.validate(); });
    return loss;
}

Json loss_to_json(const RobustLossConfig& loss) {
    Json j = {{"family", std::string(to_string(loss.family))}};
    switch (loss.family) {
        case LossFamily::GCE: j["q"] = loss.q_exponent; break;
        case LossFamily::BCE:
            j["beta"] = loss.beta;
            if (loss.bce_verbatim) j["bce_verbatim"] = true;
            break;
        case LossFamily::RCE: j["A"] = loss.A; break;
        case LossFamily::SCE:
            j["alpha"] = loss.alpha;
            j["gamma"] = loss.gamma;
            j["A"] = loss.A;
            break;
        case LossFamily::CE:
        case LossFamily::MAE: break;
    }
    return j;
}

SgdConfig sgd_from_json(const Json& j, const std::string& path) {
    allow_keys(j, path, {"learning_rate", "epochs", "momentum", "weight_decay", "batch_size", "lr_schedule"});
    SgdConfig sgd;
    sgd.learning_rate = as_number(require(j, path, "learning_rate"), join(path, "learning_rate"));
    sgd.epochs = as_uint(require(j, path, "epochs"), join(path, "epochs"));
    read_opt(j, path, "momentum", sgd.momentum, as_number);
    read_opt(j, path, "weight_decay", sgd.weight_decay, as_number);
    read_opt(j, path, "batch_size", sgd.batch_size, as_uint);
    if (const Json* s = find(j, "lr_schedule")) {
        const std::string sp = join(path, "lr_schedule");
        if (!s->is_array()) throw ConfigError(sp, "expected an array");
        for (std::size_t i = 0; i < s->size(); ++i) {
            const std::string ip = index_path(sp, i);
            allow_keys((*s)[i], ip, {"epoch", "rate"});
            sgd.lr_schedule.push_back({as_uint(require((*s)[i], ip, "epoch"), join(ip, "epoch")),
                                       as_number(require((*s)[i], ip, "rate"), join(ip, "rate"))});
        }
    }
    validated(path, [&] { sgd.validate(); });
    return sgd;
}

Json sgd_to_json(const SgdConfig& sgd) {
    Json schedule = Json::array();
    for (const auto& step : sgd.lr_schedule) schedule.push_back({{"epoch", step.epoch}, {"rate", step.rate}});
    return {{"learning_rate", sgd.learning_rate}, {"epochs", sgd.epochs},
            {"momentum", sgd.momentum},           {"weight_decay", sgd.weight_decay},
            {"batch_size", sgd.batch_size},       {"lr_schedule", schedule}};
}

Architecture architecture_from_json(const Json& j, const std::string& path) {
    allow_keys(j, path, {"hidden", "activation"});
    Architecture arch;
    if (const Json* h = find(j, "hidden")) {
        const std::string hp = join(path, "hidden");
        if (!h->is_array()) throw ConfigError(hp, "expected an array of layer widths");
        arch.hidden.clear();
        for (std::size_t i = 0; i < h->size(); ++i) {
            const auto width = as_uint((*h)[i], index_path(hp, i));
            if (width == 0) throw ConfigError(index_path(hp, i), "layer width must be positive");
            arch.hidden.push_back(width);
        }
    }
    if (const Json* a = find(j, "activation")) {
        const std::string ap = join(path, "activation");
        try {
            arch.activation = parse_activation(as_string(*a, ap));
        } catch (const InvalidInput& e) {
            throw ConfigError(ap, e.what());
        }
    }
    return arch;
}

Json architecture_to_json(const Architecture& arch) {
    return {{"hidden", arch.hidden}, {"activation", std::string(to_string(arch.activation))}};
}

// --- data -------------------------------------------------------------------

namespace {

MixtureComponent component_from_json(const Json& j, const std::string& path) {
    allow_keys(j, path, {"mean", "covariance", "variance", "count", "label", "source_class"});
    MixtureComponent c;
    const auto mean = number_list(require(j, path, "mean"), join(path, "mean"));
    if (mean.empty()) throw ConfigError(join(path, "mean"), "must not be empty");
    c.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const auto d = c.mean.size();
    const Json* cov = find(j, "covariance");
    const Json* var = find(j, "variance");
    if ((cov != nullptr) == (var != nullptr)) {
        throw ConfigError(path, "give exactly one of covariance or variance");
    }
    if (var) {
        c.covariance = Eigen::MatrixXd::Identity(d, d) * as_number(*var, join(path, "variance"));
    } else {
        const std::string cp = join(path, "covariance");
        if (!cov->is_array() || static_cast<Eigen::Index>(cov->size()) != d) {
            throw ConfigError(cp, "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
        }
        c.covariance.resize(d, d);
        for (Eigen::Index r = 0; r < d; ++r) {
            const auto row = number_list((*cov)[r], index_path(cp, r));
            if (static_cast<Eigen::Index>(row.size()) != d) {
                throw ConfigError(index_path(cp, r), "expected " + std::to_string(d) + " entries");
            }
            for (Eigen::Index k = 0; k < d; ++k) c.covariance(r, k) = row[k];
        }
    }
    c.count = as_uint(require(j, path, "count"), join(path, "count"));
    c.assigned_label = as_uint(require(j, path, "label"), join(path, "label"));
    c.source_class = c.assigned_label;
    read_opt(j, path, "source_class", c.source_class, as_uint);
    return c;
}

Json component_to_json(const MixtureComponent& c) {
    const auto d = c.covariance.rows();
    const double v = c.covariance(0, 0);
    Json out = {{"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                {"count", c.count},
                {"label", c.assigned_label},
                {"source_class", c.source_class}};
    if (c.covariance == Eigen::MatrixXd::Identity(d, d) * v) {
        out["variance"] = v;
        return out;
    }
    Json cov = Json::array();
    for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) row.push_back(c.covariance(r, k));
        cov.push_back(row);
    }
    out["covariance"] = cov;
    return out;
}

}  // namespace

MixtureSpec mixture_from_json(const Json& j, const std::string& path) {
    allow_keys(j, path, {"num_classes", "components", "outliers"});
    MixtureSpec spec;
    spec.num_classes = as_uint(require(j, path, "num_classes"), join(path, "num_classes"));
    auto read_list = [&](const char* key, std::vector<MixtureComponent>& out, bool required) {
        const Json* list = required ? &require(j, path, key) : find(j, key);
        if (!list) return;
        const std::string lp = join(path, key);
        if (!list->is_array()) throw ConfigError(lp, "expected an array");
        for (std::size_t i = 0; i < list->size(); ++i) {
            out.push_back(component_from_json((*list)[i], index_path(lp, i)));
        }
    };
    read_list("components", spec.components, true);
    read_list("outliers", spec.outliers, false);
    validated(path, [&] { spec.validate(); });
    return spec;
}

Json mixture_to_json(const MixtureSpec& spec) {
    Json comps = Json::array();
    for (const auto& c : spec.components) comps.push_back(component_to_json(c));
    Json outs = Json::array();
    for (const auto& c : spec.outliers) outs.push_back(component_to_json(c));
    return {{"num_classes", spec.num_classes}, {"components", comps}, {"outliers", outs}};
}

MixtureSpec mixture_preset(const std::string& name, const std::string& path) {
    if (name == "toy") return default_toy_classification_spec();
    if (name == "fig2") return default_fig2_spec();
    if (name == "fig2_clean") return default_fig2_spec().without_outliers();
    throw ConfigError(path, "unknown preset '" + name + "' (expected toy, fig2 or fig2_clean)");
}

SegmentationSpec segmentation_from_json(const Json& j, const std::string& path) {
    allow_keys(j, path, {"height", "width", "num_classes", "min_lesions", "max_lesions", "min_radius",
                         "max_radius", "background_intensity", "class_offset", "noise_sigma",
                         "train_scenes", "test_scenes", "num_scenes", "groupings"});
    SegmentationSpec s;
    read_opt(j, path, "height", s.height, as_uint);
    read_opt(j, path, "width", s.width, as_uint);
    read_opt(j, path, "num_classes", s.num_classes, as_uint);
    read_opt(j, path, "min_lesions", s.min_lesions, as_uint);
    read_opt(j, path, "max_lesions", s.max_lesions, as_uint);
    read_opt(j, path, "min_radius", s.min_radius, as_number);
    read_opt(j, path, "max_radius", s.max_radius, as_number);
    read_opt(j, path, "background_intensity", s.background_intensity, as_number);
    read_opt(j, path, "class_offset", s.class_offset, as_number);
    read_opt(j, path, "noise_sigma", s.noise_sigma, as_number);
    validated(path, [&] { s.validate(); });
    return s;
}

Json segmentation_to_json(const SegmentationSpec& s) {
    return {{"height", s.height},
            {"width", s.width},
            {"num_classes", s.num_classes},
            {"min_lesions", s.min_lesions},
            {"max_lesions", s.max_lesions},
            {"min_radius", s.min_radius},
            {"max_radius", s.max_radius},
            {"background_intensity", s.background_intensity},
            {"class_offset", s.class_offset},
            {"noise_sigma", s.noise_sigma}};
}

DataSource data_source_from_json(const Json& j, const std::string& path, const fs::path& base_dir) {
    allow_keys(j, path, {"preset", "scale", "mixture", "manifest"});
    const int kinds = int(j.contains("preset")) + int(j.contains("mixture")) + int(j.contains("manifest"));
    if (kinds != 1) throw ConfigError(path, "give exactly one of preset, mixture or manifest");
    if (j.contains("scale") && !j.contains("preset")) throw ConfigError(join(path, "scale"), "only valid with preset");
    DataSource src;
    if (const Json* p = find(j, "preset")) {
        MixtureSpec spec = mixture_preset(as_string(*p, join(path, "preset")), join(path, "preset"));
        if (const Json* s = find(j, "scale")) {
            const double scale = as_number(*s, join(path, "scale"));
            if (!(scale > 0.0)) throw ConfigError(join(path, "scale"), "must be positive");
            spec = spec.scaled(scale);
        }
        src.mixture = std::move(spec);
    } else if (const Json* m = find(j, "mixture")) {
        src.mixture = mixture_from_json(*m, join(path, "mixture"));
    } else {
        fs::path p = as_string(j["manifest"], join(path, "manifest"));
        src.manifest = fs::absolute(p.is_absolute() ? p : base_dir / p).lexically_normal();
    }
    return src;
}

namespace {

Json data_source_to_json(const DataSource& src, const std::optional<LabeledDataset>& loaded) {
    if (src.mixture) return {{"mixture", mixture_to_json(*src.mixture)}};
    Json j = {{"manifest", src.manifest->string()}};
    if (loaded) {
        std::ostringstream csv;
        write_dataset_csv(csv, *loaded);
        j["content_sha256"] = sha256_hex(csv.str());
    }
    return j;
}

std::optional<std::size_t> find_uint(const Json& j, const std::string& path, const char* key) {
    if (const Json* v = find(j, key)) return as_uint(*v, join(path, key));
    return std::nullopt;
}

}  // namespace

// --- experiment -------------------------------------------------------------

void ExperimentSetup::load_data() {
    auto load = [](const DataSource& src, std::optional<LabeledDataset>& out, const char* what) {
        if (!src.manifest || out) return;
        try {
            out = load_dataset(*src.manifest);
        } catch (const IoError& e) {
            throw ConfigError(std::string("data.") + what + ".manifest", e.what());
        }
    };
    load(train_source, config.train_data, "train");
    load(test_source, config.test_data, "test");
}

ExperimentSetup experiment_from_json(const Json& j, const fs::path& base_dir) {
    allow_keys(j, "", {"schema_version", "task", "seed", "labeled_fraction", "repeats", "pseudo_flip_rate",
                       "architecture", "teacher", "student", "robust_losses", "data", "segmentation"});
    const auto version = as_uint(require(j, "", "schema_version"), "schema_version");
    if (version != kSchemaVersion) {
        throw ConfigError("schema_version", "unsupported version " + std::to_string(version) + " (expected 1)");
    }
    ExperimentSetup setup;
    ExperimentConfig& cfg = setup.config;

    const std::string task = as_string(require(j, "", "task"), "task");
    if (task == "classification") {
        cfg.task = TaskKind::Classification;
    } else if (task == "segmentation") {
        cfg.task = TaskKind::Segmentation;
    } else {
        throw ConfigError("task", "expected classification or segmentation, got '" + task + "'");
    }
    cfg.seed = as_uint(require(j, "", "seed"), "seed");

    const Json& p = require(j, "", "labeled_fraction");
    if (p.is_array()) {
        setup.labeled_fractions = number_list(p, "labeled_fraction");
        if (setup.labeled_fractions.empty()) throw ConfigError("labeled_fraction", "sweep list is empty");
    } else {
        setup.labeled_fractions = {as_number(p, "labeled_fraction")};
    }
    for (std::size_t i = 0; i < setup.labeled_fractions.size(); ++i) {
        const double v = setup.labeled_fractions[i];
        if (!(v > 0.0 && v < 1.0)) {
            throw ConfigError(p.is_array() ? index_path("labeled_fraction", i) : "labeled_fraction",
                              "must lie in (0, 1)");
        }
    }
    cfg.labeled_fraction = setup.labeled_fractions.front();

    read_opt(j, "", "repeats", cfg.repeats, as_uint);
    read_opt(j, "", "pseudo_flip_rate", cfg.pseudo_flip_rate, as_number);
    if (const Json* a = find(j, "architecture")) cfg.architecture = architecture_from_json(*a, "architecture");
    cfg.teacher = sgd_from_json(require(j, "", "teacher"), "teacher");
    cfg.student = sgd_from_json(require(j, "", "student"), "student");

    const Json& losses = require(j, "", "robust_losses");
    if (!losses.is_array()) throw ConfigError("robust_losses", "expected an array");
    for (std::size_t i = 0; i < losses.size(); ++i) {
        cfg.robust_losses.push_back(loss_from_json(losses[i], index_path("robust_losses", i)));
    }

    if (cfg.task == TaskKind::Classification) {
        if (j.contains("segmentation")) throw ConfigError("segmentation", "only valid for task segmentation");
        setup.train_source.mixture = default_toy_classification_spec();
        if (const Json* d = find(j, "data")) {
            allow_keys(*d, "data", {"train", "test"});
            if (const Json* t = find(*d, "train")) setup.train_source = data_source_from_json(*t, "data.train", base_dir);
            if (const Json* t = find(*d, "test")) {
                setup.test_source = data_source_from_json(*t, "data.test", base_dir);
            }
        }
        if (!setup.test_source.mixture && !setup.test_source.manifest) {
            if (!setup.train_source.mixture) {
                throw ConfigError("data.test", "required when the training data comes from a file");
            }
            setup.test_source.mixture = setup.train_source.mixture->without_outliers();
        }
        if (setup.train_source.mixture) cfg.train_spec = *setup.train_source.mixture;
        if (setup.test_source.mixture) cfg.test_spec = *setup.test_source.mixture;
    } else {
        if (j.contains("data")) throw ConfigError("data", "only valid for task classification");
        if (const Json* s = find(j, "segmentation")) {
            cfg.seg_spec = segmentation_from_json(*s, "segmentation");
            if (auto v = find_uint(*s, "segmentation", "train_scenes")) cfg.train_scenes = *v;
            if (auto v = find_uint(*s, "segmentation", "test_scenes")) cfg.test_scenes = *v;
            if (s->contains("num_scenes")) throw ConfigError("segmentation.num_scenes", "use train_scenes and test_scenes");
            if (const Json* g = find(*s, "groupings")) {
                const std::string gp = "segmentation.groupings";
                if (!g->is_array()) throw ConfigError(gp, "expected an array");
                cfg.groupings.clear();
                for (std::size_t i = 0; i < g->size(); ++i) {
                    const std::string ip = index_path(gp, i);
                    allow_keys((*g)[i], ip, {"name", "classes"});
                    ClassGrouping grouping;
                    grouping.name = as_string(require((*g)[i], ip, "name"), join(ip, "name"));
                    const Json& cl = require((*g)[i], ip, "classes");
                    if (!cl.is_array()) throw ConfigError(join(ip, "classes"), "expected an array");
                    for (std::size_t k = 0; k < cl.size(); ++k) {
                        grouping.classes.push_back(as_uint(cl[k], index_path(join(ip, "classes"), k)));
                    }
                    cfg.groupings.push_back(std::move(grouping));
                }
            }
        }
    }

    // File-backed data is checked once loaded.
    if (!setup.train_source.manifest && !setup.test_source.manifest) validated("", [&] { cfg.validate(); });
    return setup;
}

ExperimentSetup load_experiment_config(const fs::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const IoError& e) {
        throw ConfigError("", e.what());
    }
    auto setup = experiment_from_json(parse_json_text(text, path.string()), path.parent_path());
    setup.load_data();
    validated("", [&] { setup.config.validate(); });
    return setup;
}

Json experiment_to_json(const ExperimentSetup& setup) {
    const ExperimentConfig& cfg = setup.config;
    Json losses = Json::array();
    for (const auto& l : cfg.robust_losses) losses.push_back(loss_to_json(l));
    Json j = {{"schema_version", kSchemaVersion},
              {"task", cfg.task == TaskKind::Classification ? "classification" : "segmentation"},
              {"seed", cfg.seed},
              {"labeled_fraction", setup.labeled_fractions.size() == 1 ? Json(setup.labeled_fractions[0])
                                                                       : Json(setup.labeled_fractions)},
              {"repeats", cfg.repeats},
              {"pseudo_flip_rate", cfg.pseudo_flip_rate},
              {"architecture", architecture_to_json(cfg.architecture)},
              {"teacher", sgd_to_json(cfg.teacher)},
              {"student", sgd_to_json(cfg.student)},
              {"robust_losses", losses}};
    if (cfg.task == TaskKind::Classification) {
        j["data"] = {{"train", data_source_to_json(setup.train_source, cfg.train_data)},
                     {"test", data_source_to_json(setup.test_source, cfg.test_data)}};
    } else {
        Json seg = segmentation_to_json(cfg.seg_spec);
        seg["train_scenes"] = cfg.train_scenes;
        seg["test_scenes"] = cfg.test_scenes;
        Json groupings = Json::array();
        for (const auto& g : cfg.groupings) groupings.push_back({{"name", g.name}, {"classes", g.classes}});
        seg["groupings"] = groupings;
        j["segmentation"] = seg;
    }
    return j;
}

void apply_overrides(ExperimentSetup& target, const ExperimentOverrides& o) {
    // Work on a copy so a rejected override leaves the target untouched.
    ExperimentSetup setup = target;
    ExperimentConfig& cfg = setup.config;
    if (o.labeled_fractions) {
        if (o.labeled_fractions->empty()) throw ConfigError("--p", "no values given");
        for (double v : *o.labeled_fractions) {
            if (!(v > 0.0 && v < 1.0)) throw ConfigError("--p", "labeled fraction must lie in (0, 1)");
        }
        setup.labeled_fractions = *o.labeled_fractions;
        cfg.labeled_fraction = setup.labeled_fractions.front();
    }
    if (o.robust_families) {
        cfg.robust_losses.clear();
        for (const auto& name : *o.robust_families) {
            RobustLossConfig loss;
            try {
                loss.family = parse_loss_family(name);
            } catch (const InvalidInput&) {
                throw ConfigError("--robust", "unknown loss family '" + name + "'");
            }
            cfg.robust_losses.push_back(loss);
        }
    }
    // Each flag only touches the families that use it.
    for (auto& loss : cfg.robust_losses) {
        const auto f = loss.family;
        if (o.q_exponent && f == LossFamily::GCE) loss.q_exponent = *o.q_exponent;
        if (o.beta && f == LossFamily::BCE) loss.beta = *o.beta;
        if (o.A && (f == LossFamily::RCE || f == LossFamily::SCE)) loss.A = *o.A;
        if (o.alpha && f == LossFamily::SCE) loss.alpha = *o.alpha;
        if (o.gamma && f == LossFamily::SCE) loss.gamma = *o.gamma;
        validated("robust_losses", [&] { loss.validate(); });
    }
    if (o.repeats) {
        if (*o.repeats == 0) throw ConfigError("--repeats", "must be at least 1");
        cfg.repeats = *o.repeats;
    }
    if (o.seed) cfg.seed = *o.seed;
    target = std::move(setup);
}

Json metric_summary_to_json(std::span<const double> values, const MetricSummary& summary) {
    return {{"values", std::vector<double>(values.begin(), values.end())},
            {"mean", summary.mean},
            {"std", summary.stddev ? Json(*summary.stddev) : Json(nullptr)}};
}

Json result_block_to_json(const ExperimentResult& r) {
    Json arms = Json::array();
    for (const auto& arm : r.arms) {
        Json metrics = Json::object();
        for (const auto& m : r.metrics) {
            metrics[m] = metric_summary_to_json(arm.values.at(m), arm.summary.at(m));
        }
        arms.push_back({{"name", arm.name}, {"metrics", metrics}});
    }
    return {{"labeled_fraction", r.labeled_fraction},
            {"repeats", r.repeats},
            {"metrics", r.metrics},
            {"arms", arms},
            {"teacher_error_rate", metric_summary_to_json(r.teacher_error_rate, r.teacher_error_summary)},
            {"pseudo_error_rate", metric_summary_to_json(r.pseudo_error_rate, r.pseudo_error_summary)}};
}

Json results_document(const Json& config_echo, const std::vector<ExperimentResult>& blocks) {
    Json results = Json::array();
    for (const auto& b : blocks) results.push_back(result_block_to_json(b));
    return {{"schema_version", kSchemaVersion},
            {"config", config_echo},
            {"config_digest", json_digest(config_echo)},
            {"results", results}};
}

std::string results_csv(const ExperimentResult& r) {
    std::ostringstream out;
    out << "repeat,arm,metric,value\n";
    for (std::size_t rep = 0; rep < r.repeats; ++rep) {
        for (const auto& arm : r.arms) {
            for (const auto& m : r.metrics) {
                out << rep << ',' << arm.name << ',' << m << ',' << format_double(arm.values.at(m)[rep]) << '\n';
            }
        }
    }
    return out.str();
}

// --- simulation / datagen ---------------------------------------------------

SimulationConfig simulation_from_json(const Json& j, const fs::path& base_dir) {
    allow_keys(j, "", {"schema_version", "seed", "runs", "data", "test_scale", "architecture", "sgd", "robust", "grid"});
    const auto version = as_uint(require(j, "", "schema_version"), "schema_version");
    if (version != kSchemaVersion) throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
    SimulationConfig cfg;
    read_opt(j, "", "seed", cfg.seed, as_uint);
    read_opt(j, "", "runs", cfg.runs, as_uint);
    read_opt(j, "", "test_scale", cfg.test_scale, as_number);
    if (const Json* d = find(j, "data")) {
        auto src = data_source_from_json(*d, "data", base_dir);
        if (!src.mixture) throw ConfigError("data", "simulate needs a generator (preset or mixture)");
        cfg.spec = *src.mixture;
    }
    if (const Json* a = find(j, "architecture")) cfg.architecture = architecture_from_json(*a, "architecture");
    if (const Json* s = find(j, "sgd")) cfg.sgd = sgd_from_json(*s, "sgd");
    if (const Json* r = find(j, "robust")) cfg.robust = loss_from_json(*r, "robust");
    if (const Json* g = find(j, "grid")) {
        allow_keys(*g, "grid", {"resolution", "margin"});
        read_opt(*g, "grid", "resolution", cfg.grid_resolution, as_uint);
        read_opt(*g, "grid", "margin", cfg.grid_margin, as_number);
    }
    validated("", [&] { cfg.validate(); });
    return cfg;
}

Json simulation_to_json(const SimulationConfig& cfg) {
    return {{"schema_version", kSchemaVersion},
            {"seed", cfg.seed},
            {"runs", cfg.runs},
            {"data", {{"mixture", mixture_to_json(cfg.spec)}}},
            {"test_scale", cfg.test_scale},
            {"architecture", architecture_to_json(cfg.architecture)},
            {"sgd", sgd_to_json(cfg.sgd)},
            {"robust", loss_to_json(cfg.robust)},
            {"grid", {{"resolution", cfg.grid_resolution}, {"margin", cfg.grid_margin}}}};
}

GradcheckOptions gradcheck_from_json(const Json& j) {
    allow_keys(j, "", {"schema_version", "losses", "class_counts", "points", "step", "tolerance", "abs_floor", "seed"});
    const auto version = as_uint(require(j, "", "schema_version"), "schema_version");
    if (version != kSchemaVersion) throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
    GradcheckOptions o;
    if (const Json* l = find(j, "losses")) {
        if (!l->is_array()) throw ConfigError("losses", "expected an array");
        for (std::size_t i = 0; i < l->size(); ++i) o.losses.push_back(loss_from_json((*l)[i], index_path("losses", i)));
    }
    if (const Json* k = find(j, "class_counts")) {
        if (!k->is_array() || k->empty()) throw ConfigError("class_counts", "expected a non-empty array");
        o.class_counts.clear();
        for (std::size_t i = 0; i < k->size(); ++i) {
            const auto v = as_uint((*k)[i], index_path("class_counts", i));
            if (v < 2) throw ConfigError(index_path("class_counts", i), "must be at least 2");
            o.class_counts.push_back(v);
        }
    }
    read_opt(j, "", "points", o.points, as_uint);
    read_opt(j, "", "step", o.step, as_number);
    read_opt(j, "", "tolerance", o.tolerance, as_number);
    read_opt(j, "", "abs_floor", o.abs_floor, as_number);
    read_opt(j, "", "seed", o.seed, as_uint);
    if (o.points == 0) throw ConfigError("points", "must be at least 1");
    if (!(o.step > 0.0)) throw ConfigError("step", "must be positive");
    if (!(o.tolerance >= 0.0)) throw ConfigError("tolerance", "must be non-negative");
    if (!(o.abs_floor >= 0.0)) throw ConfigError("abs_floor", "must be non-negative");
    return o;
}

std::string DatagenSpec::spec_digest() const {
    if (kind == DatagenKind::Mixture) return json_digest({{"kind", "mixture"}, {"mixture", mixture_to_json(mixture)}});
    return json_digest(
        {{"kind", "segmentation"}, {"segmentation", segmentation_to_json(segmentation)}, {"num_scenes", num_scenes}});
}

DatagenSpec datagen_from_json(const Json& j, const fs::path& base_dir) {
    allow_keys(j, "", {"schema_version", "seed", "kind", "data", "segmentation"});
    const auto version = as_uint(require(j, "", "schema_version"), "schema_version");
    if (version != kSchemaVersion) throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
    DatagenSpec spec;
    read_opt(j, "", "seed", spec.seed, as_uint);
    const std::string kind = j.contains("kind") ? as_string(j["kind"], "kind") : "mixture";
    if (kind == "mixture") {
        spec.kind = DatagenKind::Mixture;
        if (j.contains("segmentation")) throw ConfigError("segmentation", "only valid for kind segmentation");
        if (const Json* d = find(j, "data")) {
            auto src = data_source_from_json(*d, "data", base_dir);
            if (!src.mixture) throw ConfigError("data", "datagen needs a generator (preset or mixture)");
            spec.mixture = *src.mixture;
        }
    } else if (kind == "segmentation") {
        spec.kind = DatagenKind::Segmentation;
        if (j.contains("data")) throw ConfigError("data", "only valid for kind mixture");
        if (const Json* s = find(j, "segmentation")) {
            spec.segmentation = segmentation_from_json(*s, "segmentation");
            for (const char* k : {"train_scenes", "test_scenes", "groupings"}) {
                if (s->contains(k)) throw ConfigError(join("segmentation", k), "not used by datagen");
            }
            if (auto v = find_uint(*s, "segmentation", "num_scenes")) spec.num_scenes = *v;
            if (spec.num_scenes == 0) throw ConfigError("segmentation.num_scenes", "must be at least 1");
        }
    } else {
        throw ConfigError("kind", "expected mixture or segmentation, got '" + kind + "'");
    }
    return spec;
}

// --- run manifest -----------------------------------------------------------

Json RunManifest::to_json() const {
    Json j = {{"tool", kToolName},     {"version", kToolVersion},       {"command", command},
              {"config_digest", config_digest}, {"seed", seed},        {"started_at", started_at},
              {"finished_at", finished_at},     {"outputs", outputs},  {"timings", timings}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

Json timings_to_json(double labeled_fraction, const std::vector<ArmTiming>& timings) {
    Json out = Json::array();
    for (const auto& t : timings) {
        out.push_back({{"labeled_fraction", labeled_fraction}, {"repeat", t.repeat}, {"arm", t.arm}, {"seconds", t.seconds}});
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace rssl
