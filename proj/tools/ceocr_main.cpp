// ceocr - consensus-entropy scoring, ensembling and routing for multi-model
// OCR outputs. Subcommands: score, ensemble, route, eval, sweep, synth.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ceocr/backends.hpp"
#include "ceocr/corpus.hpp"
#include "ceocr/detail/parallel.hpp"
#include "ceocr/ensemble.hpp"
#include "ceocr/entropy.hpp"
#include "ceocr/errors.hpp"
#include "ceocr/eval.hpp"
#include "ceocr/router.hpp"
#include "ceocr/similarity.hpp"

namespace {

using namespace ceocr;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

struct Options {
    std::string metric = "edit";
    std::string aggregate = "mean-distance";
    std::string estimator = "pairwise";
    double theta = 0.5;
    std::size_t grid_n = 64;
    std::optional<double> bandwidth;
    bool adaptive_bandwidth = false;
    std::string tokenize = "word";
    std::string backend_config;
    std::string expert_template_file;
    unsigned concurrency = std::max(1u, std::thread::hardware_concurrency());
    std::uint64_t seed = 0;
    std::string out;
    bool keep_going = false;
    bool no_timing = false;
};

struct BackendSet {
    std::vector<std::shared_ptr<Backend>> candidates;
    std::shared_ptr<Backend> expert;
    std::shared_ptr<Backend> embedder;
    std::string prompt = "Transcribe all text in this image exactly, preserving layout.";
    std::string expert_template = kDefaultExpertTemplate;
};

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

BackendSpec parse_backend_spec(const json& j, const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": backend spec must be an object");
    BackendSpec spec;
    const std::string kind = j.value("kind", "fixture");
    if (kind == "fixture") {
        spec.kind = BackendKind::Fixture;
    } else if (kind == "http") {
        spec.kind = BackendKind::Http;
    } else {
        throw ConfigError(context + ": unknown backend kind '" + kind + "'");
    }
    if (!j.contains("model_name") || !j["model_name"].is_string()) {
        throw ConfigError(context + ": backend spec needs a model_name string");
    }
    spec.model_name = j["model_name"].get<std::string>();
    if (j.contains("endpoint")) spec.endpoint = j["endpoint"].get<std::string>();
    spec.fixture_dir = j.value("fixture_dir", "");
    spec.timeout_s = j.value("timeout_s", spec.timeout_s);
    spec.max_retries = j.value("max_retries", spec.max_retries);
    spec.max_in_flight = j.value("max_in_flight", spec.max_in_flight);
    spec.api_key_env = j.value("api_key_env", spec.api_key_env);
    spec.backoff_base_s = j.value("backoff_base_s", spec.backoff_base_s);
    return spec;
}

BackendSet load_backend_set(const Options& options) {
    BackendSet set;
    if (!options.backend_config.empty()) {
        json j = json::parse(read_text_file(options.backend_config), nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw ConfigError("backend config " + options.backend_config + ": invalid JSON object");
        }
        if (j.contains("candidates")) {
            if (!j["candidates"].is_array()) {
                throw ConfigError("backend config: 'candidates' must be an array");
            }
            for (const auto& cj : j["candidates"]) {
                set.candidates.push_back(
                    std::make_shared<Backend>(parse_backend_spec(cj, "candidates")));
            }
        }
        if (j.contains("expert")) {
            set.expert = std::make_shared<Backend>(parse_backend_spec(j["expert"], "expert"));
        }
        if (j.contains("embedder")) {
            set.embedder = std::make_shared<Backend>(parse_backend_spec(j["embedder"], "embedder"));
        }
        if (j.contains("prompt")) set.prompt = j["prompt"].get<std::string>();
        if (j.contains("expert_template_file")) {
            set.expert_template = read_text_file(j["expert_template_file"].get<std::string>());
        }
    }
    if (!options.expert_template_file.empty()) {
        set.expert_template = read_text_file(options.expert_template_file);
    }
    return set;
}

PipelineConfig make_pipeline_config(const Options& options, const BackendSet& backends) {
    PipelineConfig config;
    config.entropy.metric = divergence_metric_from_string(options.metric);
    config.entropy.aggregator = aggregator_from_string(options.aggregate);
    config.entropy.estimator = estimator_from_string(options.estimator);
    config.entropy.grid_n = options.grid_n;
    config.entropy.bandwidth = options.bandwidth;
    config.entropy.adaptive_bandwidth = options.adaptive_bandwidth;
    if (!(options.theta >= 0.0 && options.theta <= 1.0)) {
        throw ConfigError("--theta must be in [0, 1]");
    }
    config.gate.theta = options.theta;
    config.tokenize = tokenize_mode_from_string(options.tokenize);
    config.expert_template = backends.expert_template;
    return config;
}

// A writable sink: --out file or stdout.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw ConfigError("cannot open output file: " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

enum class RunMode { Score, Ensemble, Route, Eval };

struct SlotResult {
    std::optional<ReportRecord> report;
    std::optional<std::string> error;
    int error_code = kExitData;
};

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const BackendError*>(&e)) return kExitBackend;
    if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
    return kExitData;
}

ReportRecord build_report(RunMode mode, const CorpusRecord& record, const Sample& sample,
                          const PipelineConfig& config, const BackendSet& backends) {
    ReportRecord report;
    report.sample_id = sample.sample_id;

    if (mode == RunMode::Score) {
        const ConsensusReport scored = consensus_report(sample, config.entropy);
        report.delta = scored.profile.delta;
        for (std::size_t i = 0; i < sample.candidates.size(); ++i) {
            report.e_bar.emplace_back(sample.candidates[i].model_id, scored.profile.e_bar[i]);
            report.weights.emplace_back(sample.candidates[i].model_id, scored.weights[i]);
        }
        report.decision = gate(scored.profile.delta, config.gate.theta).route ? "expert" : "ensemble";
        return report;
    }

    FinalOutput output;
    if (mode == RunMode::Route) {
        output = run_sample(sample, config, backends.expert.get(), backends.embedder.get());
    } else {
        // ensemble/eval never call the expert; force the accept path.
        PipelineConfig local = config;
        local.gate.theta = 1.0;
        output = run_sample(sample, local, nullptr, backends.embedder.get());
        output.decision = gate(output.report.profile.delta, config.gate.theta);
    }

    report.delta = output.report.profile.delta;
    for (std::size_t i = 0; i < sample.candidates.size(); ++i) {
        report.e_bar.emplace_back(sample.candidates[i].model_id, output.report.profile.e_bar[i]);
        report.weights.emplace_back(sample.candidates[i].model_id, output.report.weights[i]);
    }
    report.decision = output.decision.route ? "expert" : "ensemble";
    report.ensemble_text = output.ensemble_text;
    report.final_text = mode == RunMode::Route ? output.text : output.ensemble_text;
    report.expert_used = output.expert_used;
    report.warning = output.warning;
    if (mode == RunMode::Eval) report.rover_text = output.rover_text;

    if (record.truth) {
        for (const auto& c : sample.candidates) {
            report.scores.emplace_back(c.model_id, quality_score(c.text, *record.truth));
        }
        report.ensemble_score = quality_score(output.ensemble_text, *record.truth);
        if (mode == RunMode::Eval) {
            report.rover_score = quality_score(output.rover_text, *record.truth);
        }
        if (mode == RunMode::Route) {
            report.ensemble_score = quality_score(*report.final_text, *record.truth);
        }
    }
    return report;
}

std::vector<SlotResult> process_corpus(RunMode mode, const std::vector<CorpusRecord>& records,
                                       const PipelineConfig& config, const BackendSet& backends,
                                       const Options& options) {
    std::vector<SlotResult> results(records.size());
    detail::parallel_for(records.size(), options.concurrency, [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        try {
            const CorpusRecord& record = records[i];
            Sample sample;
            std::optional<std::string> gather_warning;
            if (!record.candidates.empty()) {
                sample = to_sample(record);
            } else {
                if (backends.candidates.size() < 2) {
                    throw DataError("sample '" + record.sample_id +
                                    "': no recorded candidates and fewer than 2 candidate backends configured");
                }
                SampleDescriptor descriptor;
                descriptor.sample_id = record.sample_id;
                descriptor.image_path = record.image_path;
                descriptor.truth = record.truth;
                descriptor.prompt = backends.prompt;
                GatherOutcome outcome = gather_candidates(descriptor, backends.candidates);
                sample = std::move(outcome.sample);
                if (!outcome.failures.empty()) {
                    std::string warn = "candidate fetch failures:";
                    for (const auto& f : outcome.failures) {
                        warn += " [" + f.model_name + "] " + f.error + ";";
                    }
                    gather_warning = warn;
                }
            }
            ReportRecord report = build_report(mode, record, sample, config, backends);
            if (gather_warning) {
                report.warning = report.warning ? *report.warning + " | " + *gather_warning
                                                : *gather_warning;
            }
            report.timing_ms = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
            results[i].report = std::move(report);
        } catch (const std::exception& e) {
            results[i].error = e.what();
            results[i].error_code = exit_code_for(e);
        }
    });
    return results;
}

int emit_results(const std::vector<CorpusRecord>& records, std::vector<SlotResult>& results,
                 const Options& options, std::ostream& out) {
    std::size_t errors = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].report) {
            out << report_to_json(*results[i].report, !options.no_timing).dump() << "\n";
            continue;
        }
        ++errors;
        if (!options.keep_going) {
            std::cerr << "error: " << *results[i].error << "\n";
            return results[i].error_code;
        }
        ordered_json j;
        j["sample_id"] = records[i].sample_id;
        j["error"] = *results[i].error;
        out << j.dump() << "\n";
    }
    std::cerr << "processed " << results.size() << " sample(s), " << errors << " error(s)\n";
    return kExitOk;
}

int run_reporting_command(RunMode mode, const std::string& corpus_path, const Options& options) {
    const std::vector<CorpusRecord> records = load_corpus(corpus_path);
    const BackendSet backends = load_backend_set(options);
    const PipelineConfig config = make_pipeline_config(options, backends);

    if (mode == RunMode::Route && !backends.expert && options.theta < 1.0) {
        throw ConfigError("route: --theta < 1 requires an expert backend in --backend-config");
    }

    std::vector<SlotResult> results = process_corpus(mode, records, config, backends, options);

    Output output(options.out);
    const int code = emit_results(records, results, options, output.stream());
    if (code != kExitOk) return code;

    if (mode == RunMode::Eval) {
        // Aggregate summary: mean scores and, when labels are present,
        // verification precision/recall/F1 at the configured theta.
        std::map<std::string, std::pair<double, std::size_t>> model_scores;
        double ensemble_sum = 0.0, rover_sum = 0.0;
        std::size_t scored = 0;
        std::vector<double> deltas;
        std::vector<int> labels;
        bool all_labeled = true;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (!results[i].report) continue;
            const ReportRecord& r = *results[i].report;
            deltas.push_back(r.delta);
            if (records[i].label) {
                labels.push_back(*records[i].label == "good" ? 1 : 0);
            } else {
                all_labeled = false;
            }
            if (r.ensemble_score) {
                ++scored;
                ensemble_sum += *r.ensemble_score;
                if (r.rover_score) rover_sum += *r.rover_score;
                for (const auto& [model, score] : r.scores) {
                    auto& acc = model_scores[model];
                    acc.first += score;
                    acc.second += 1;
                }
            }
        }
        ordered_json summary;
        summary["samples"] = deltas.size();
        if (scored > 0) {
            ordered_json means;
            for (const auto& [model, acc] : model_scores) {
                means[model] = acc.first / static_cast<double>(acc.second);
            }
            means["ensemble"] = ensemble_sum / static_cast<double>(scored);
            means["rover"] = rover_sum / static_cast<double>(scored);
            summary["mean_scores"] = std::move(means);
        }
        if (all_labeled && !labels.empty()) {
            const F1Result f1 = verification_f1(deltas, labels, options.theta);
            summary["theta"] = options.theta;
            summary["precision"] = f1.precision;
            summary["recall"] = f1.recall;
            summary["f1"] = f1.f1;
        }
        ordered_json wrapper;
        wrapper["summary"] = std::move(summary);
        output.stream() << wrapper.dump() << "\n";
    }

    if (mode == RunMode::Route && backends.expert) {
        std::cerr << "expert calls: " << backends.expert->generate_calls() << "\n";
    }
    return kExitOk;
}

std::vector<double> parse_thetas(const std::string& text) {
    std::vector<double> thetas;
    if (text.find(':') != std::string::npos) {
        double start = 0.0, stop = 1.0, step = 0.05;
        if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0.0) {
            throw ConfigError("--thetas: expected start:stop:step with step > 0");
        }
        for (double t = start; t <= stop + 1e-12; t += step) {
            thetas.push_back(std::min(t, stop));
        }
    } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            thetas.push_back(std::stod(item));
        }
    }
    if (thetas.empty()) throw ConfigError("--thetas: empty grid");
    for (double t : thetas) {
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("--thetas: values must be in [0, 1]");
    }
    for (std::size_t i = 1; i < thetas.size(); ++i) {
        if (thetas[i] < thetas[i - 1]) throw ConfigError("--thetas: must be ascending");
    }
    return thetas;
}

int run_sweep(const std::string& corpus_path, const std::string& thetas_text,
              const Options& options) {
    const std::vector<CorpusRecord> records = load_corpus(corpus_path);
    const BackendSet backends = load_backend_set(options);
    const PipelineConfig config = make_pipeline_config(options, backends);
    const std::vector<double> thetas = parse_thetas(thetas_text);

    // One scoring pass; the theta grid reuses the cached deltas.
    const bool score_available =
        std::all_of(records.begin(), records.end(),
                    [](const CorpusRecord& r) { return r.truth.has_value(); });
    const RunMode mode = score_available ? RunMode::Ensemble : RunMode::Score;
    std::vector<SlotResult> results = process_corpus(mode, records, config, backends, options);

    std::vector<double> deltas;
    std::vector<double> scores;
    std::vector<int> labels;
    bool all_labeled = !records.empty();
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].report) {
            if (!options.keep_going) {
                std::cerr << "error: " << *results[i].error << "\n";
                return results[i].error_code;
            }
            continue;
        }
        deltas.push_back(results[i].report->delta);
        if (score_available) scores.push_back(results[i].report->ensemble_score.value_or(0.0));
        if (records[i].label) {
            labels.push_back(*records[i].label == "good" ? 1 : 0);
        } else {
            all_labeled = false;
        }
    }

    const auto points = threshold_sweep(deltas, all_labeled && !labels.empty() ? &labels : nullptr,
                                        score_available ? &scores : nullptr, thetas);
    Output output(options.out);
    write_sweep_csv(output.stream(), points);
    std::cerr << "swept " << thetas.size() << " threshold(s) over " << deltas.size()
              << " sample(s)\n";
    return kExitOk;
}

int run_synth(const std::string& seed_text_path, const SynthConfig& config,
              const Options& options) {
    const std::string seed_text = read_text_file(seed_text_path);
    std::vector<CorpusRecord> records;
    try {
        records = synth_corpus(seed_text, config);
    } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + " (from " + seed_text_path + ")");
    }
    Output output(options.out);
    for (const auto& record : records) {
        output.stream() << record_to_json(record).dump() << "\n";
    }
    std::cerr << "generated " << records.size() << " sample(s)\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consensus-entropy scoring, ensembling and routing for multi-model OCR outputs"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file; command-line flags win");

    Options options;
    app.add_option("--metric", options.metric, "Divergence metric: edit|cosine")
        ->capture_default_str();
    app.add_option("--aggregate", options.aggregate,
                   "Delta aggregation: mean-distance|sum|max|mean")
        ->capture_default_str();
    app.add_option("--estimator", options.estimator, "Entropy estimator: pairwise|grid")
        ->capture_default_str();
    app.add_option("--theta", options.theta, "Routing threshold in [0, 1]")
        ->capture_default_str();
    app.add_option("--grid-n", options.grid_n, "Grid side length for the grid estimator")
        ->capture_default_str();
    app.add_option("--bandwidth", options.bandwidth,
                   "KDE bandwidth override (default: Silverman's rule)");
    app.add_flag("--adaptive-bandwidth", options.adaptive_bandwidth,
                 "Per-point k-nearest-neighbor bandwidths for the grid estimator");
    app.add_option("--tokenize", options.tokenize, "Voting token granularity: word|char")
        ->capture_default_str();
    app.add_option("--backend-config", options.backend_config,
                   "JSON file describing candidate/expert/embedding backends");
    app.add_option("--expert-template", options.expert_template_file,
                   "Plain-text expert prompt template with {candidates}/{ensemble}/{n}");
    app.add_option("--concurrency", options.concurrency, "Worker pool size")
        ->capture_default_str();
    app.add_option("--seed", options.seed, "Master seed for synthetic generation")
        ->capture_default_str();
    app.add_option("--out", options.out, "Output file (default: stdout)");
    app.add_flag("--keep-going", options.keep_going,
                 "Record per-sample errors and continue instead of exiting");
    app.add_flag("--no-timing", options.no_timing, "Omit timing fields from reports");

    std::string corpus_path;
    std::string thetas_text = "0:1:0.05";
    std::string seed_text_path;
    SynthConfig synth_config;
    std::string synth_profile = "uniform";

    auto add_corpus_command = [&](const char* name, const char* description) {
        CLI::App* cmd = app.add_subcommand(name, description);
        cmd->fallthrough();
        cmd->add_option("corpus", corpus_path, "Corpus JSONL file")->required();
        return cmd;
    };
    CLI::App* score_cmd = add_corpus_command("score", "Per-sample consensus entropy and weights");
    CLI::App* ensemble_cmd =
        add_corpus_command("ensemble", "Score plus weighted token-vote consensus text");
    CLI::App* route_cmd =
        add_corpus_command("route", "Full pipeline: ensemble below theta, expert above");
    CLI::App* eval_cmd =
        add_corpus_command("eval", "Ensemble and ROVER baselines scored against truth");
    CLI::App* sweep_cmd = add_corpus_command("sweep", "Threshold sweep table (CSV)");
    sweep_cmd->add_option("--thetas", thetas_text,
                          "Theta grid: comma list or start:stop:step")
        ->capture_default_str();

    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic corpus");
    synth_cmd->fallthrough();
    synth_cmd->add_option("seed_text", seed_text_path, "Seed text file truths are carved from")
        ->required();
    synth_cmd->add_option("--samples", synth_config.samples, "Number of samples")
        ->capture_default_str();
    synth_cmd->add_option("--candidates", synth_config.candidates, "Candidates per sample")
        ->capture_default_str();
    synth_cmd->add_option("--profile", synth_profile,
                          "Corruption profile: uniform|split|one-clean")
        ->capture_default_str();
    synth_cmd->add_option("--rate", synth_config.rate, "Corruption rate (uniform/one-clean)")
        ->capture_default_str();
    synth_cmd->add_option("--good-rate", synth_config.good_rate,
                          "Split profile: max rate of good candidates")
        ->capture_default_str();
    synth_cmd->add_option("--bad-rate", synth_config.bad_rate,
                          "Split profile: rate of heavily corrupted candidates")
        ->capture_default_str();
    synth_cmd->add_option("--min-len", synth_config.min_len, "Minimum truth length")
        ->capture_default_str();
    synth_cmd->add_option("--max-len", synth_config.max_len, "Maximum truth length")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (score_cmd->parsed()) return run_reporting_command(RunMode::Score, corpus_path, options);
        if (ensemble_cmd->parsed()) {
            return run_reporting_command(RunMode::Ensemble, corpus_path, options);
        }
        if (route_cmd->parsed()) return run_reporting_command(RunMode::Route, corpus_path, options);
        if (eval_cmd->parsed()) return run_reporting_command(RunMode::Eval, corpus_path, options);
        if (sweep_cmd->parsed()) return run_sweep(corpus_path, thetas_text, options);
        if (synth_cmd->parsed()) {
            synth_config.seed = options.seed;
            if (synth_profile == "uniform") {
                synth_config.profile = SynthConfig::Profile::Uniform;
            } else if (synth_profile == "split") {
                synth_config.profile = SynthConfig::Profile::Split;
            } else if (synth_profile == "one-clean") {
                synth_config.profile = SynthConfig::Profile::OneClean;
            } else {
                throw ConfigError("unknown synth profile '" + synth_profile + "'");
            }
            return run_synth(seed_text_path, synth_config, options);
        }
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
