// rssl: command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rssl/config.hpp"
#include "rssl/errors.hpp"
#include "rssl/gradcheck.hpp"
#include "rssl/io.hpp"
#include "rssl/pipeline.hpp"
#include "rssl/simulation.hpp"

namespace fs = std::filesystem;
using namespace rssl;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string config;
};

struct LossFlags {
    std::optional<double> q, beta, A, alpha, gamma;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool out_required) {
    cmd->add_option("--seed", o.seed, "Master seed (overrides the config file)");
    auto* out = cmd->add_option("--out", o.out, "Output directory");
    if (out_required) out->required();
    cmd->add_option("--config", o.config, "JSON config file (schema v1)");
}

void add_loss_flags(CLI::App* cmd, LossFlags& f) {
    cmd->add_option("--q", f.q, "GCE exponent");
    cmd->add_option("--beta", f.beta, "BCE beta");
    cmd->add_option("--A", f.A, "RCE/SCE log-zero constant");
    cmd->add_option("--alpha", f.alpha, "SCE weight on CE");
    cmd->add_option("--gamma", f.gamma, "SCE weight on RCE");
}

/// Parses "a,b,c"; a bad token is a config error naming `flag`.
std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        try {
            out.push_back(parse_double(item));
        } catch (const IoError&) {
            throw ConfigError(flag, "not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(flag, "no values given");
    return out;
}

Json read_config_json(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const IoError& e) {
        throw ConfigError("", e.what());
    }
    return parse_json_text(text, path);
}

std::string joined_command(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

void write_json(const fs::path& path, const Json& j, std::vector<std::string>& outputs) {
    write_text_file(path, j.dump(2) + "\n");
    outputs.push_back(path.string());
}

void write_manifest(const fs::path& dir, RunManifest& m) {
    m.finished_at = utc_timestamp();
    const fs::path path = dir / "run_manifest.json";
    m.outputs.push_back(path.string());
    write_text_file(path, m.to_json().dump(2) + "\n");
}

/// Config stage (exit 2) followed by a run stage (exit 1).
template <class Setup, class Run>
int staged(Setup setup, Run run) {
    try {
        setup();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const InvalidHyperparameter& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const InvalidInput& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    try {
        return run();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

// --- gradcheck --------------------------------------------------------------

struct GradcheckFlags {
    CommonOptions common;
    LossFlags loss;
    std::string families;
    std::optional<double> tolerance;
    std::optional<double> abs_floor;
    std::optional<std::size_t> points;
};

/// Keeps the listed families; a hyperparameter flag replaces that family's
/// default grid with a single config.
std::vector<RobustLossConfig> select_losses(std::vector<RobustLossConfig> losses, const GradcheckFlags& f) {
    if (!f.families.empty()) {
        std::vector<LossFamily> keep;
        for (const auto& name : split_list(f.families)) {
            try {
                keep.push_back(parse_loss_family(name));
            } catch (const InvalidInput&) {
                throw ConfigError("--families", "unknown loss family '" + name + "'");
            }
        }
        std::erase_if(losses, [&](const RobustLossConfig& l) {
            return std::find(keep.begin(), keep.end(), l.family) == keep.end();
        });
        // A family asked for but absent from a custom list gets its default config.
        for (auto fam : keep) {
            if (std::none_of(losses.begin(), losses.end(), [&](const auto& l) { return l.family == fam; })) {
                RobustLossConfig l;
                l.family = fam;
                losses.push_back(l);
            }
        }
    }
    auto replace = [&](LossFamily fam, bool flagged, auto&& setter) {
        if (!flagged) return;
        RobustLossConfig base;
        bool present = false;
        for (const auto& l : losses) {
            if (l.family == fam) {
                base = l;
                present = true;
                break;
            }
        }
        if (!present) return;
        setter(base);
        std::erase_if(losses, [&](const RobustLossConfig& l) { return l.family == fam; });
        losses.push_back(base);
    };
    replace(LossFamily::GCE, f.loss.q.has_value(), [&](auto& l) { l.q_exponent = *f.loss.q; });
    replace(LossFamily::BCE, f.loss.beta.has_value(), [&](auto& l) { l.beta = *f.loss.beta; });
    replace(LossFamily::RCE, f.loss.A.has_value(), [&](auto& l) { l.A = *f.loss.A; });
    replace(LossFamily::SCE, f.loss.alpha || f.loss.gamma || f.loss.A, [&](auto& l) {
        if (f.loss.alpha) l.alpha = *f.loss.alpha;
        if (f.loss.gamma) l.gamma = *f.loss.gamma;
        if (f.loss.A) l.A = *f.loss.A;
    });
    for (const auto& l : losses) {
        try {
            l.validate();
        } catch (const InvalidHyperparameter& e) {
            throw ConfigError(l.describe(), e.what());
        }
    }
    return losses;
}

int cmd_gradcheck(const GradcheckFlags& f, const std::string& command) {
    GradcheckOptions options;
    return staged(
        [&] {
            if (!f.common.config.empty()) options = gradcheck_from_json(read_config_json(f.common.config));
            // Without an explicit floor it tracks the tolerance (1e-5 -> 1e-8).
            if (f.tolerance) options.abs_floor = *f.tolerance * 1e-3;
            if (f.tolerance) options.tolerance = *f.tolerance;
            if (f.abs_floor) options.abs_floor = *f.abs_floor;
            if (f.points) options.points = *f.points;
            if (f.common.seed) options.seed = *f.common.seed;
            if (!(options.tolerance >= 0.0)) throw ConfigError("--tolerance", "must be non-negative");
            if (options.points == 0) throw ConfigError("--points", "must be at least 1");
            options.losses = select_losses(options.losses.empty() ? default_gradcheck_losses() : options.losses, f);
        },
        [&] {
            const auto report = run_gradcheck(options);
            std::printf("%-6s %8s %14s  %s\n", "family", "checked", "max_rel_error", "status");
            Json families = Json::array();
            for (const auto& fam : report.families) {
                const bool ok = fam.failures == 0;
                std::printf("%-6s %8zu %14.3e  %s\n", std::string(to_string(fam.family)).c_str(), fam.checked,
                            fam.max_rel_error, ok ? "ok" : "FAIL");
                Json entry = {{"family", std::string(to_string(fam.family))},
                              {"configs", fam.configs},
                              {"checked", fam.checked},
                              {"max_rel_error", fam.max_rel_error},
                              {"failures", fam.failures}};
                if (fam.first_failure) {
                    const auto& x = *fam.first_failure;
                    std::ostringstream scores;
                    for (std::size_t i = 0; i < x.scores.size(); ++i) scores << (i ? "," : "") << format_double(x.scores[i]);
                    std::printf("  failing point: loss=%s K=%zu point=%zu label=%zu coord=%zu analytic=%.17g "
                                "numeric=%.17g scores=[%s] (%zu failures)\n",
                                x.loss.c_str(), x.num_classes, x.point, x.label, x.coordinate, x.analytic, x.numeric,
                                scores.str().c_str(), fam.failures);
                    entry["first_failure"] = {{"loss", x.loss},       {"num_classes", x.num_classes},
                                              {"point", x.point},     {"coordinate", x.coordinate},
                                              {"label", x.label},     {"scores", x.scores},
                                              {"analytic", x.analytic}, {"numeric", x.numeric}};
                }
                families.push_back(entry);
            }
            std::printf("tolerance %.3g (abs floor %.3g), %zu families: %s\n", options.tolerance, options.abs_floor,
                        report.families.size(), report.passed() ? "PASS" : "FAIL");
            if (!f.common.out.empty()) {
                RunManifest m{command, "", options.seed, utc_timestamp(), "", {}, Json::array(), Json::object()};
                Json doc = {{"tolerance", options.tolerance}, {"abs_floor", options.abs_floor},
                            {"points", options.points},       {"class_counts", options.class_counts},
                            {"seed", options.seed},           {"passed", report.passed()},
                            {"families", families}};
                Json losses = Json::array();
                for (const auto& l : options.losses) losses.push_back(loss_to_json(l));
                m.config_digest = json_digest({{"losses", losses},
                                               {"class_counts", options.class_counts},
                                               {"points", options.points},
                                               {"step", options.step},
                                               {"tolerance", options.tolerance},
                                               {"abs_floor", options.abs_floor},
                                               {"seed", options.seed}});
                write_json(fs::path(f.common.out) / "gradcheck.json", doc, m.outputs);
                write_manifest(f.common.out, m);
            }
            return report.passed() ? kOk : kRuntimeError;
        });
}

// --- simulate ---------------------------------------------------------------

struct SimulateFlags {
    CommonOptions common;
    LossFlags loss;
    std::string robust;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> resolution;
    bool checkpoints = false;
};

int cmd_simulate(const SimulateFlags& f, const std::string& command) {
    SimulationConfig cfg;
    return staged(
        [&] {
            if (!f.common.config.empty()) {
                cfg = simulation_from_json(read_config_json(f.common.config), fs::path(f.common.config).parent_path());
            }
            if (f.common.seed) cfg.seed = *f.common.seed;
            if (f.runs) cfg.runs = *f.runs;
            if (f.resolution) cfg.grid_resolution = *f.resolution;
            if (!f.robust.empty()) {
                try {
                    cfg.robust = RobustLossConfig{};
                    cfg.robust.family = parse_loss_family(f.robust);
                } catch (const InvalidInput&) {
                    throw ConfigError("--robust", "unknown loss family '" + f.robust + "'");
                }
            }
            if (f.loss.q) cfg.robust.q_exponent = *f.loss.q;
            if (f.loss.beta) cfg.robust.beta = *f.loss.beta;
            if (f.loss.A) cfg.robust.A = *f.loss.A;
            if (f.loss.alpha) cfg.robust.alpha = *f.loss.alpha;
            if (f.loss.gamma) cfg.robust.gamma = *f.loss.gamma;
            cfg.validate();
        },
        [&] {
            const fs::path out = f.common.out;
            const Json echo = simulation_to_json(cfg);
            RunManifest m{command, json_digest(echo), cfg.seed, utc_timestamp(), "", {}, Json::array(), Json::object()};
            const auto result = run_simulation(cfg);

            for (const auto& p : save_dataset(out, "dataset", result.train_set, result.runs[0].seed,
                                              json_digest(mixture_to_json(cfg.spec)))) {
                m.outputs.push_back(p.string());
            }
            std::string grid = "x,y,pred_ce,pred_robust\n";
            for (const auto& g : result.grid) {
                grid += format_double(g.x) + ',' + format_double(g.y) + ',' + std::to_string(g.pred_ce) + ',' +
                        std::to_string(g.pred_robust) + '\n';
            }
            write_text_file(out / "decision_grid.csv", grid);
            m.outputs.push_back((out / "decision_grid.csv").string());

            Json runs = Json::array();
            for (std::size_t r = 0; r < result.runs.size(); ++r) {
                const auto& run = result.runs[r];
                runs.push_back({{"run", r},
                                {"seed", run.seed},
                                {"ce_accuracy", run.ce_accuracy},
                                {"robust_accuracy", run.robust_accuracy}});
                if (f.checkpoints) {
                    const auto stem = out / "checkpoints" / ("run" + std::to_string(r));
                    save_checkpoint(stem.string() + "_ce.txt", run.ce_model);
                    save_checkpoint(stem.string() + "_robust.txt", run.robust_model);
                    m.outputs.push_back(stem.string() + "_ce.txt");
                    m.outputs.push_back(stem.string() + "_robust.txt");
                }
            }
            Json summary = {{"schema_version", kSchemaVersion},
                            {"config", echo},
                            {"config_digest", json_digest(echo)},
                            {"robust_loss", cfg.robust.describe()},
                            {"runs", runs},
                            {"mean_ce_accuracy", result.mean_ce_accuracy},
                            {"mean_robust_accuracy", result.mean_robust_accuracy},
                            {"robust_minus_ce", result.mean_robust_accuracy - result.mean_ce_accuracy}};
            write_json(out / "summary.json", summary, m.outputs);
            write_manifest(out, m);

            std::printf("runs %zu  mean clean accuracy: ce %.4f  %s %.4f  (diff %+.2f points)\n", cfg.runs,
                        result.mean_ce_accuracy, cfg.robust.describe().c_str(), result.mean_robust_accuracy,
                        100.0 * (result.mean_robust_accuracy - result.mean_ce_accuracy));
            return kOk;
        });
}

// --- experiment -------------------------------------------------------------

struct ExperimentFlags {
    CommonOptions common;
    LossFlags loss;
    std::string p;
    std::string robust;
    std::optional<std::size_t> repeats;
};

std::string fraction_tag(double p) { return format_double(p); }

void print_block(const ExperimentResult& r) {
    std::printf("labeled_fraction %s  (%zu repeats)\n", format_double(r.labeled_fraction).c_str(), r.repeats);
    for (const auto& arm : r.arms) {
        std::printf("  %-18s", arm.name.c_str());
        for (const auto& metric : r.metrics) {
            const auto& s = arm.summary.at(metric);
            if (s.stddev) {
                std::printf("  %s %.4f +- %.4f", metric.c_str(), s.mean, *s.stddev);
            } else {
                std::printf("  %s %.4f", metric.c_str(), s.mean);
            }
        }
        std::printf("\n");
    }
    std::printf("  teacher pseudo-label error %.4f, after injected flips %.4f\n", r.teacher_error_summary.mean,
                r.pseudo_error_summary.mean);
}

int cmd_experiment(const ExperimentFlags& f, const std::string& command) {
    ExperimentSetup setup;
    return staged(
        [&] {
            if (f.common.config.empty()) throw ConfigError("--config", "an experiment config file is required");
            setup = load_experiment_config(f.common.config);
            ExperimentOverrides o;
            if (!f.p.empty()) o.labeled_fractions = parse_number_list(f.p, "--p");
            if (!f.robust.empty()) o.robust_families = split_list(f.robust);
            o.q_exponent = f.loss.q;
            o.beta = f.loss.beta;
            o.A = f.loss.A;
            o.alpha = f.loss.alpha;
            o.gamma = f.loss.gamma;
            o.repeats = f.repeats;
            o.seed = f.common.seed;
            apply_overrides(setup, o);
            setup.config.validate();
        },
        [&] {
            const fs::path out = f.common.out;
            const Json echo = experiment_to_json(setup);
            RunManifest m{command, json_digest(echo), setup.config.seed, utc_timestamp(), "", {}, Json::array(),
                          Json::object()};
            std::vector<ExperimentResult> blocks;
            for (double p : setup.labeled_fractions) {
                ExperimentConfig cfg = setup.config;
                cfg.labeled_fraction = p;
                blocks.push_back(run_experiment(cfg));
                print_block(blocks.back());
                for (auto& t : timings_to_json(p, blocks.back().timings)) m.timings.push_back(t);
            }
            write_json(out / "results.json", results_document(echo, blocks), m.outputs);
            for (const auto& b : blocks) {
                const std::string name =
                    blocks.size() == 1 ? "results.csv" : "results_p" + fraction_tag(b.labeled_fraction) + ".csv";
                write_text_file(out / name, results_csv(b));
                m.outputs.push_back((out / name).string());
            }
            write_manifest(out, m);
            return kOk;
        });
}

// --- datagen ----------------------------------------------------------------

struct DatagenFlags {
    CommonOptions common;
    std::string stem = "dataset";
    std::string preset;
};

int cmd_datagen(const DatagenFlags& f, const std::string& command) {
    DatagenSpec spec;
    return staged(
        [&] {
            if (!f.common.config.empty()) {
                spec = datagen_from_json(read_config_json(f.common.config), fs::path(f.common.config).parent_path());
            }
            if (!f.preset.empty()) {
                if (!f.common.config.empty()) throw ConfigError("--preset", "use either --preset or --config");
                spec.kind = DatagenKind::Mixture;
                spec.mixture = mixture_preset(f.preset, "--preset");
            }
            if (f.common.seed) spec.seed = *f.common.seed;
            if (spec.kind == DatagenKind::Mixture) spec.mixture.validate();
            else spec.segmentation.validate();
        },
        [&] {
            const fs::path out = f.common.out;
            const std::string digest = spec.spec_digest();
            RunManifest m{command, digest, spec.seed, utc_timestamp(), "", {}, Json::array(), Json::object()};
            if (spec.kind == DatagenKind::Mixture) {
                const auto data = gen_gaussian_mixture(spec.mixture, spec.seed);
                const auto paths = save_dataset(out, f.stem, data, spec.seed, digest);
                // Round trip through the loader must reproduce the file exactly.
                std::ostringstream again;
                write_dataset_csv(again, load_dataset(paths[1]));
                if (again.str() != read_text_file(paths[0])) throw IoError("dataset round trip is not byte-identical");
                for (const auto& p : paths) m.outputs.push_back(p.string());
                std::printf("wrote %zu rows (d=%zu, K=%zu) to %s\n", data.size(), data.dim(), data.num_classes,
                            paths[0].string().c_str());
            } else {
                const auto scenes = gen_toy_segmentation(spec.num_scenes, spec.segmentation, spec.seed);
                const auto paths = save_scenes(out, scenes, spec.seed, digest);
                const auto loaded = load_scenes(paths.back());
                for (std::size_t i = 0; i < loaded.size(); ++i) {
                    std::ostringstream again;
                    write_scene_csv(again, loaded[i]);
                    if (again.str() != read_text_file(paths[i])) throw IoError("scene round trip is not byte-identical");
                }
                for (const auto& p : paths) m.outputs.push_back(p.string());
                std::printf("wrote %zu scenes (%zux%zu) to %s\n", scenes.size(), spec.segmentation.height,
                            spec.segmentation.width, out.string().c_str());
            }
            m.extra["spec_digest"] = digest;
            write_manifest(out, m);
            return kOk;
        });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust-loss semi-supervised learning toolkit"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    app.require_subcommand(1);

    GradcheckFlags gf;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
    add_common(gradcheck, gf.common, false);
    add_loss_flags(gradcheck, gf.loss);
    gradcheck->add_option("--families", gf.families, "Comma-separated families to check (default: all)");
    gradcheck->add_option("--tolerance", gf.tolerance, "Relative tolerance (default 1e-5)");
    gradcheck->add_option("--abs-floor", gf.abs_floor, "Absolute differences below this pass (default tolerance / 1000)");
    gradcheck->add_option("--points", gf.points, "Random points per config and class count (default 100)");

    SimulateFlags sf;
    auto* simulate = app.add_subcommand("simulate", "Three-class perceptron demo with decision-grid export");
    add_common(simulate, sf.common, true);
    add_loss_flags(simulate, sf.loss);
    simulate->add_option("--robust", sf.robust, "Robust loss family (default bce)");
    simulate->add_option("--runs", sf.runs, "Number of seeds");
    simulate->add_option("--resolution", sf.resolution, "Grid points per axis (default 200)");
    simulate->add_flag("--checkpoints", sf.checkpoints, "Also write model checkpoints");

    ExperimentFlags ef;
    auto* experiment = app.add_subcommand("experiment", "Teacher-student experiment with bounds");
    add_common(experiment, ef.common, true);
    add_loss_flags(experiment, ef.loss);
    experiment->add_option("--p", ef.p, "Labeled fraction; a comma list runs a sweep");
    experiment->add_option("--robust", ef.robust, "Comma-separated robust families (replaces the config list)");
    experiment->add_option("--repeats", ef.repeats, "Repeats per labeled fraction");

    DatagenFlags df;
    auto* datagen = app.add_subcommand("datagen", "Generate a dataset (CSV + manifest) or segmentation scenes");
    add_common(datagen, df.common, true);
    datagen->add_option("--stem", df.stem, "Dataset file stem (default dataset)");
    datagen->add_option("--preset", df.preset, "toy, fig2 or fig2_clean instead of --config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    const std::string command = joined_command(argc, argv);
    if (*gradcheck) return cmd_gradcheck(gf, command);
    if (*simulate) return cmd_simulate(sf, command);
    if (*experiment) return cmd_experiment(ef, command);
    return cmd_datagen(df, command);
}
