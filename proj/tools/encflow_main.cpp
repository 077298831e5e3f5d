// encflow: feature mining and detection for encrypted malicious traffic.
//
// Stages: extract -> label -> train -> predict/evaluate, with tensorize,
// ablate, and synth alongside. Every output carries a provenance stamp
// (tool version, manifest version, config digest); stages refuse inputs
// whose stamp does not match. Exit codes: 0 ok, 2 usage, 3 data error,
// 4 model error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "encflow/config.hpp"
#include "encflow/framework.hpp"
#include "encflow/labeling.hpp"
#include "encflow/pipeline.hpp"
#include "encflow/synth.hpp"
#include "encflow/synth_corpus.hpp"

using namespace encflow;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;

void print_error(const std::string& kind, const std::string& message) {
    nlohmann::json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
}

int fail(const Error& e, int code) {
    print_error(e.kind(), e.what());
    return code;
}

// Usage problems exit 2, model-compatibility problems 4, everything else
// about the inputs 3.
int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        return fail(e, kExitUsage);
    } catch (const VersionMismatch& e) {
        return fail(e, kExitModel);
    } catch (const Error& e) {
        return fail(e, kExitData);
    } catch (const std::exception& e) {
        print_error("Error", e.what());
        return kExitData;
    }
}

std::string load_text(const std::string& path) {
    Bytes data = load_file(path);
    return std::string(data.begin(), data.end());
}

struct StageOptions {
    std::string config_path;
    CliConfig cfg;

    void finalize() {
        if (!config_path.empty()) {
            cfg = parse_config_text(load_text(config_path));
        }
    }
};

FeatureManifest checked_manifest(const CliConfig& cfg) {
    FeatureManifest manifest = FeatureManifest::builtin();
    if (cfg.manifest_version != manifest.version) {
        throw ManifestMismatch("config expects manifest '" +
                               cfg.manifest_version + "', tool provides '" +
                               manifest.version + "'");
    }
    return manifest;
}

Provenance input_stamp(const std::string& text, const std::string& path) {
    auto stamp = parse_provenance(text);
    if (!stamp) {
        throw SpecInvalid("'" + path + "' carries no provenance stamp");
    }
    return *stamp;
}

void require_manifest(const std::vector<FeatureRecord>& records,
                      const FeatureManifest& manifest) {
    for (const auto& r : records) {
        if (r.manifest_version != manifest.version) {
            throw ManifestMismatch("record '" + r.session_id +
                                   "' uses manifest '" + r.manifest_version +
                                   "', expected '" + manifest.version + "'");
        }
    }
}

uint64_t model_config_digest(const FrameworkModel& model) {
    auto stamp = parse_provenance(model.stamp);
    return stamp ? stamp->config_digest : 0;
}

// predict and evaluate refuse feature files whose config digest is not the
// one the model was trained under.
void require_digest_match(const Provenance& features,
                          const FrameworkModel& model) {
    uint64_t trained = model_config_digest(model);
    if (features.config_digest != trained) {
        throw VersionMismatch(
            "feature file config digest " +
            std::to_string(features.config_digest) +
            " does not match the model's " + std::to_string(trained));
    }
}

FrameworkModel load_model_file(const std::string& path, int& exit_code) {
    try {
        Bytes data = load_file(path);
        return load_framework(data);
    } catch (const Error& e) {
        exit_code = fail(e, kExitModel);
        return {};
    }
}

std::string path_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractArgs {
    StageOptions stage;
    std::vector<std::string> inputs;
    std::string out;
};

int cmd_extract(ExtractArgs& a) {
    a.stage.finalize();
    FeatureManifest manifest = checked_manifest(a.stage.cfg);
    ExtractOptions opts;
    opts.policy = a.stage.cfg.policy;
    opts.idle_timeout_sec = a.stage.cfg.idle_timeout_sec;

    // Captures decode in parallel; results concatenate in input order.
    std::vector<std::future<ExtractResult>> jobs;
    std::vector<Bytes> files;
    files.reserve(a.inputs.size());
    for (const auto& path : a.inputs) files.push_back(load_file(path));
    jobs.reserve(files.size());
    for (const auto& file : files) {
        jobs.push_back(std::async(std::launch::async, [&file, &opts,
                                                       &manifest] {
            return extract_records(file, opts, manifest);
        }));
    }

    std::vector<FeatureRecord> records;
    uint64_t sessions_total = 0, kept = 0, skipped_packets = 0;
    for (auto& job : jobs) {
        ExtractResult r = job.get();
        sessions_total += r.sessions_total;
        kept += r.filter_stats.sessions_kept;
        skipped_packets += r.decode_counters.total_skipped();
        for (auto& rec : r.records) records.push_back(std::move(rec));
    }

    Provenance stamp;
    stamp.manifest_version = manifest.version;
    stamp.config_digest = feature_config_digest(a.stage.cfg);
    save_text(a.out, provenance_line(stamp) + feature_jsonl(records));
    std::printf("extract: %llu of %llu sessions kept, %zu records, "
                "%llu packets skipped\n",
                (unsigned long long)kept, (unsigned long long)sessions_total,
                records.size(), (unsigned long long)skipped_packets);
    return 0;
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

struct LabelArgs {
    StageOptions stage;
    std::string features;
    std::string labels;
    std::string capture;
    std::string out;
};

int cmd_label(LabelArgs& a) {
    a.stage.finalize();
    std::string text = load_text(a.features);
    Provenance stamp = input_stamp(text, a.features);
    auto records = parse_feature_jsonl(text);
    auto manifest = LabelManifest::parse_text(load_text(a.labels));
    apply_labels(records, a.capture, manifest);

    stamp.tool_version = kToolVersion;
    save_text(a.out, provenance_line(stamp) + feature_jsonl(records));
    size_t malicious = 0, benign = 0;
    for (const auto& r : records) {
        if (r.label == Label::malicious) ++malicious;
        if (r.label == Label::benign) ++benign;
    }
    std::printf("label: %zu records, %zu malicious, %zu benign\n",
                records.size(), malicious, benign);
    return 0;
}

// ---------------------------------------------------------------------------
// tensorize
// ---------------------------------------------------------------------------

struct TensorizeArgs {
    StageOptions stage;
    std::string features;
    std::string out;
    std::string scaler_out;
};

int cmd_tensorize(TensorizeArgs& a) {
    a.stage.finalize();
    FeatureManifest manifest = checked_manifest(a.stage.cfg);
    std::string text = load_text(a.features);
    Provenance stamp = input_stamp(text, a.features);
    auto records = parse_feature_jsonl(text);
    require_manifest(records, manifest);
    if (records.empty()) throw EmptyInput("no records to tensorize");

    Scaler scaler = fit_scaler(records, manifest);
    std::vector<TensorBundle> bundles;
    bundles.reserve(records.size());
    for (const auto& r : records) {
        bundles.push_back(tensorize(r, scaler, manifest));
    }
    stamp.tool_version = kToolVersion;
    save_file(a.out, write_bundles(bundles, provenance_json(stamp).dump()));
    if (!a.scaler_out.empty()) {
        nlohmann::json j = provenance_json(stamp);
        j["scaler"] = scaler.to_json();
        save_text(a.scaler_out, j.dump() + "\n");
    }
    std::printf("tensorize: %zu bundles\n", bundles.size());
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    StageOptions stage;
    std::string features;
    std::string model_out;
    std::string report_out;
    std::string layer2;
    uint64_t folds = 0;
    double threshold = -1;
    uint64_t seed = 0;
    bool layer2_set = false, folds_set = false, threshold_set = false,
         seed_set = false;
};

int cmd_train(TrainArgs& a) {
    a.stage.finalize();
    FrameworkConfig& fw = a.stage.cfg.framework;
    if (a.layer2_set) {
        if (a.layer2 == "random_forest") {
            fw.layer2_random_forest = true;
        } else if (a.layer2 == "average") {
            fw.layer2_random_forest = false;
        } else {
            throw ConfigError("--layer2: '" + a.layer2 +
                              "' is neither random_forest nor average");
        }
    }
    if (a.folds_set) fw.stacking_folds = a.folds;
    if (a.threshold_set) fw.decision_threshold = a.threshold;
    if (a.seed_set) fw.seed = a.seed;

    FeatureManifest manifest = checked_manifest(a.stage.cfg);
    std::string text = load_text(a.features);
    Provenance stamp = input_stamp(text, a.features);
    auto records = parse_feature_jsonl(text);
    require_manifest(records, manifest);

    FrameworkModel model = train_framework(records, fw, manifest);
    stamp.tool_version = kToolVersion;
    stamp.manifest_version = model.manifest_version;
    model.stamp = provenance_json(stamp).dump();
    save_file(a.model_out, save_framework(model));

    nlohmann::json report = provenance_json(stamp);
    report["oof"] = report_json(model.oof_report);
    std::printf("%s\n", report.dump().c_str());
    if (!a.report_out.empty()) save_text(a.report_out, report.dump() + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
    StageOptions stage;
    std::string model;
    std::string features;
    std::string out;
};

int cmd_predict(PredictArgs& a) {
    a.stage.finalize();
    int exit_code = 0;
    FrameworkModel model = load_model_file(a.model, exit_code);
    if (exit_code) return exit_code;
    FeatureManifest manifest = checked_manifest(a.stage.cfg);
    std::string text = load_text(a.features);
    Provenance stamp = input_stamp(text, a.features);
    require_digest_match(stamp, model);
    auto records = parse_feature_jsonl(text);
    require_manifest(records, manifest);

    std::string out = provenance_line(stamp);
    size_t malicious = 0;
    for (const auto& r : records) {
        TensorBundle bundle = tensorize(r, model.scaler, manifest);
        PredictOutcome verdict = predict_session(model, bundle);
        nlohmann::json j;
        j["session_id"] = r.session_id;
        j["probability"] = verdict.probability;
        j["verdict"] = verdict.malicious ? "malicious" : "benign";
        nlohmann::json branches;
        for (size_t b = 0; b < verdict.branch_probs.size(); ++b) {
            branches[branch_view_name(model.config.branches[b].view)] =
                verdict.branch_probs[b];
        }
        j["branches"] = branches;
        out += j.dump();
        out += "\n";
        if (verdict.malicious) ++malicious;
    }
    save_text(a.out, out);
    std::printf("predict: %zu sessions, %zu malicious\n", records.size(),
                malicious);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    StageOptions stage;
    std::string model;
    std::string features;
    std::string out;
};

int cmd_evaluate(EvaluateArgs& a) {
    a.stage.finalize();
    int exit_code = 0;
    FrameworkModel model = load_model_file(a.model, exit_code);
    if (exit_code) return exit_code;
    FeatureManifest manifest = checked_manifest(a.stage.cfg);
    std::string text = load_text(a.features);
    Provenance stamp = input_stamp(text, a.features);
    require_digest_match(stamp, model);
    auto records = parse_feature_jsonl(text);
    require_manifest(records, manifest);

    std::vector<double> scores;
    std::vector<int> y;
    for (const auto& r : records) {
        if (r.label == Label::unlabeled) continue;
        TensorBundle bundle = tensorize(r, model.scaler, manifest);
        scores.push_back(predict_session(model, bundle).probability);
        y.push_back(r.label == Label::malicious ? 1 : 0);
    }
    if (y.empty()) throw EmptyInput("no labeled records to evaluate");

    MetricsReport metrics =
        evaluate_scores(scores, y, model.config.decision_threshold);
    nlohmann::json report = provenance_json(stamp);
    report["report"] = report_json(metrics);
    report["sessions"] = {{"total", records.size()},
                          {"labeled", y.size()},
                          {"malicious",
                           size_t(std::count(y.begin(), y.end(), 1))}};
    std::string line = report.dump() + "\n";
    std::printf("%s", line.c_str());
    if (!a.out.empty()) save_text(a.out, line);
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
    StageOptions stage;
    std::string features;
    std::string out;
};

int cmd_ablate(AblateArgs& a) {
    a.stage.finalize();
    FeatureManifest manifest = checked_manifest(a.stage.cfg);
    std::string text = load_text(a.features);
    Provenance stamp = input_stamp(text, a.features);
    auto records = parse_feature_jsonl(text);
    require_manifest(records, manifest);

    auto ablated = ablate_enc(records, manifest);
    stamp.tool_version = kToolVersion;
    stamp.config_digest = ablated_digest(stamp.config_digest);
    save_text(a.out, provenance_line(stamp) + feature_jsonl(ablated));
    std::printf("ablate: %zu records\n", ablated.size());
    return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    StageOptions stage;
    std::string out;
    std::string labels_out;
    std::string kind = "comparison";
    uint64_t sessions = 20;
    uint64_t seed = 1;
    bool seed_set = false;
};

int cmd_synth(SynthArgs& a) {
    a.stage.finalize();
    uint64_t seed = a.seed_set ? a.seed : a.stage.cfg.framework.seed;
    std::vector<SessionSpec> specs;
    if (a.kind == "comparison") {
        specs = comparison_corpus(a.sessions, seed);
    } else if (a.kind == "ratio") {
        specs = comparison_corpus(a.sessions, seed, true);
    } else if (a.kind == "mixed") {
        specs = mixed_corpus(a.sessions, seed);
    } else {
        throw ConfigError("--kind: '" + a.kind +
                          "' is not comparison, ratio, or mixed");
    }
    save_file(a.out, synth_pcap(specs));
    if (!a.labels_out.empty()) {
        Provenance stamp;
        stamp.manifest_version = a.stage.cfg.manifest_version;
        stamp.config_digest = feature_config_digest(a.stage.cfg);
        nlohmann::json j = corpus_label_manifest(path_stem(a.out));
        j["provenance"] = provenance_json(stamp)["provenance"];
        save_text(a.labels_out, j.dump() + "\n");
    }
    std::printf("synth: %zu sessions to %s\n", specs.size(), a.out.c_str());
    return 0;
}

void add_config_flag(CLI::App* cmd, StageOptions& stage) {
    cmd->add_option("--config", stage.config_path,
                    "Config file; explicit flags win over its values");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature mining and detection for encrypted traffic"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    ExtractArgs extract_args;
    auto* extract = app.add_subcommand(
        "extract", "Capture files to session feature records");
    add_config_flag(extract, extract_args.stage);
    extract->add_option("--in", extract_args.inputs, "Input pcap file(s)")
        ->required();
    extract->add_option("--out", extract_args.out, "Output feature JSONL")
        ->required();
    auto* tls_ports = extract->add_option(
        "--tls-ports", "Comma-separated TLS ports for the filter policy");
    auto* ssh_ports = extract->add_option("--ssh-ports",
                                          "Comma-separated SSH ports");
    auto* detect = extract->add_option(
        "--detect-content", "Sniff protocol on off-policy ports (true/false)");
    auto* ambiguous = extract->add_option(
        "--ambiguous", "Class for unparseable payloads off the handshake "
                       "path (plaintext/encrypted)");
    auto* idle = extract->add_option("--idle-timeout",
                                     "Session idle timeout in seconds");

    LabelArgs label_args;
    auto* label = app.add_subcommand(
        "label", "Apply a labeling manifest to a feature file");
    add_config_flag(label, label_args.stage);
    label->add_option("--features", label_args.features, "Input feature JSONL")
        ->required();
    label->add_option("--labels", label_args.labels, "Labeling manifest JSON")
        ->required();
    label->add_option("--capture", label_args.capture,
                      "Capture name the records came from")
        ->required();
    label->add_option("--out", label_args.out, "Output feature JSONL")
        ->required();

    TensorizeArgs tensorize_args;
    auto* tensorize_cmd = app.add_subcommand(
        "tensorize", "Feature records to tensor bundles");
    add_config_flag(tensorize_cmd, tensorize_args.stage);
    tensorize_cmd
        ->add_option("--features", tensorize_args.features,
                     "Input feature JSONL")
        ->required();
    tensorize_cmd->add_option("--out", tensorize_args.out,
                              "Output tensor bundle file")
        ->required();
    tensorize_cmd->add_option("--scaler-out", tensorize_args.scaler_out,
                              "Write the fitted scaler as JSON");

    TrainArgs train_args;
    auto* train = app.add_subcommand(
        "train", "Train the two-layer detection framework");
    add_config_flag(train, train_args.stage);
    train->add_option("--features", train_args.features,
                      "Labeled feature JSONL")
        ->required();
    train->add_option("--model", train_args.model_out, "Output model file")
        ->required();
    train->add_option("--report", train_args.report_out,
                      "Also write the training report here");
    auto* layer2 = train->add_option("--layer2", train_args.layer2,
                                     "Layer-2 detector "
                                     "(random_forest/average)");
    auto* folds = train->add_option("--folds", train_args.folds,
                                    "Stacking folds");
    auto* threshold = train->add_option("--threshold", train_args.threshold,
                                        "Decision threshold in (0,1)");
    auto* train_seed = train->add_option("--seed", train_args.seed,
                                         "Training seed");

    PredictArgs predict_args;
    auto* predict = app.add_subcommand(
        "predict", "Per-session verdicts from a trained model");
    add_config_flag(predict, predict_args.stage);
    predict->add_option("--model", predict_args.model, "Model file")
        ->required();
    predict
        ->add_option("--features", predict_args.features,
                     "Input feature JSONL")
        ->required();
    predict->add_option("--out", predict_args.out, "Output verdict JSONL")
        ->required();

    EvaluateArgs evaluate_args;
    auto* evaluate = app.add_subcommand(
        "evaluate", "Score a model against labeled records");
    add_config_flag(evaluate, evaluate_args.stage);
    evaluate->add_option("--model", evaluate_args.model, "Model file")
        ->required();
    evaluate
        ->add_option("--features", evaluate_args.features,
                     "Labeled feature JSONL")
        ->required();
    evaluate->add_option("--out", evaluate_args.out,
                         "Also write the report here");

    AblateArgs ablate_args;
    auto* ablate = app.add_subcommand(
        "ablate", "Constant-substitute ciphertext-derived features");
    add_config_flag(ablate, ablate_args.stage);
    ablate
        ->add_option("--features", ablate_args.features,
                     "Input feature JSONL")
        ->required();
    ablate->add_option("--out", ablate_args.out, "Output feature JSONL")
        ->required();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand(
        "synth", "Generate a synthetic capture with labels");
    add_config_flag(synth, synth_args.stage);
    synth->add_option("--out", synth_args.out, "Output pcap path")->required();
    synth->add_option("--sessions", synth_args.sessions, "Session count");
    auto* synth_seed = synth->add_option("--seed", synth_args.seed,
                                         "Corpus seed");
    synth->add_option("--kind", synth_args.kind,
                      "comparison, ratio, or mixed");
    synth->add_option("--labels-out", synth_args.labels_out,
                      "Write the matching labeling manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("Usage", e.what());
        return kExitUsage;
    }

    return run_guarded([&]() -> int {
        if (*extract) {
            extract_args.stage.finalize();
            CliConfig& cfg = extract_args.stage.cfg;
            if (*tls_ports) {
                cfg.policy.tls_ports = encflow::detail::parse_ports(
                    "--tls-ports", tls_ports->as<std::string>());
            }
            if (*ssh_ports) {
                cfg.policy.ssh_ports = encflow::detail::parse_ports(
                    "--ssh-ports", ssh_ports->as<std::string>());
            }
            if (*detect) {
                cfg.policy.detect_by_content = encflow::detail::parse_bool(
                    "--detect-content", detect->as<std::string>());
            }
            if (*ambiguous) {
                cfg.policy.treat_ambiguous_as =
                    parse_enc_class(ambiguous->as<std::string>());
            }
            if (*idle) {
                cfg.idle_timeout_sec = encflow::detail::parse_double(
                    "--idle-timeout", idle->as<std::string>());
            }
            if (cfg.idle_timeout_sec <= 0) {
                throw ConfigError("--idle-timeout must be > 0");
            }
            cfg.policy.validate();
            extract_args.stage.config_path.clear();  // already applied
            return cmd_extract(extract_args);
        }
        if (*label) return cmd_label(label_args);
        if (*tensorize_cmd) return cmd_tensorize(tensorize_args);
        if (*train) {
            train_args.layer2_set = layer2->count() > 0;
            train_args.folds_set = folds->count() > 0;
            train_args.threshold_set = threshold->count() > 0;
            train_args.seed_set = train_seed->count() > 0;
            return cmd_train(train_args);
        }
        if (*predict) return cmd_predict(predict_args);
        if (*evaluate) return cmd_evaluate(evaluate_args);
        if (*ablate) return cmd_ablate(ablate_args);
        if (*synth) {
            synth_args.seed_set = synth_seed->count() > 0;
            return cmd_synth(synth_args);
        }
        return kExitUsage;
    });
}
