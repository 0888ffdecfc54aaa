#include "ceocr/router.hpp"

#include <algorithm>
#include <span>
#include <string_view>

#include "ceocr/errors.hpp"

namespace ceocr {

const char* const kDefaultExpertTemplate =
    "You are given {n} candidate transcriptions of the same image and a draft consensus. "
    "Produce the single most faithful transcription.\n"
    "\n"
    "Candidate transcriptions:\n"
    "{candidates}\n"
    "\n"
    "Draft consensus:\n"
    "{ensemble}\n";

RoutingDecision gate(double delta, double theta) {
    if (!(delta >= 0.0 && delta <= 1.0)) {
        throw DataError("gate: delta " + std::to_string(delta) + " outside [0, 1]");
    }
    if (!(theta >= 0.0 && theta <= 1.0)) {
        throw DataError("gate: theta " + std::to_string(theta) + " outside [0, 1]");
    }
    return RoutingDecision{delta > theta, delta, theta};
}

namespace {

// Single-pass rendering: placeholders inside substituted values stay literal,
// so candidate texts pass through verbatim.
std::string render_template(std::string_view tmpl,
                            std::span<const std::pair<std::string_view, std::string_view>> values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find('{', pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        const std::size_t close = tmpl.find('}', open);
        if (close == std::string_view::npos) {
            out.append(tmpl.substr(open));
            break;
        }
        const std::string_view name = tmpl.substr(open + 1, close - open - 1);
        bool matched = false;
        for (const auto& [key, value] : values) {
            if (name == key) {
                out.append(value);
                matched = true;
                break;
            }
        }
        if (matched) {
            pos = close + 1;
        } else {
            out.push_back('{');
            pos = open + 1;
        }
    }
    return out;
}

} // namespace

ExpertRequest build_expert_request(const Sample& sample, const std::string& ensemble_text,
                                   const std::string& prompt_template) {
    if (prompt_template.find("{candidates}") == std::string::npos) {
        throw ConfigError("expert template: missing required {candidates} placeholder");
    }
    if (prompt_template.find("{ensemble}") == std::string::npos) {
        throw ConfigError("expert template: missing required {ensemble} placeholder");
    }

    ExpertRequest request;
    request.image_ref = sample.image_ref;
    request.ensemble_text = ensemble_text;

    std::string rendered_candidates;
    for (const auto& c : sample.candidates) {
        request.candidates.emplace_back(c.model_id, c.text);
        if (!rendered_candidates.empty()) rendered_candidates.push_back('\n');
        rendered_candidates += "[" + c.model_id + "]\n" + c.text;
    }

    const std::string n_str = std::to_string(sample.candidates.size());
    const std::pair<std::string_view, std::string_view> values[] = {
        {"n", n_str},
        {"candidates", rendered_candidates},
        {"ensemble", ensemble_text},
    };
    request.prompt = render_template(prompt_template, values);
    return request;
}

FinalOutput run_sample(const Sample& sample, const PipelineConfig& config, Backend* expert,
                       Backend* embedder) {
    validate_sample(sample);

    Sample local = sample;
    const bool needs_embeddings = config.entropy.metric == DivergenceMetric::CosineDistance ||
                                  config.entropy.estimator == Estimator::GridKde;
    if (needs_embeddings) {
        bool missing = false;
        for (const auto& c : local.candidates) {
            if (!c.embedding) missing = true;
        }
        if (missing) {
            if (!embedder) {
                throw DataError("sample '" + local.sample_id +
                                "': cosine metric needs embeddings and no embedding backend is configured");
            }
            EmbeddingRequest request;
            request.sample_id = local.sample_id;
            for (const auto& c : local.candidates) {
                request.texts.push_back(c.text);
                request.model_names.push_back(c.model_id);
            }
            auto vectors = embedder->embed(request);
            for (std::size_t i = 0; i < local.candidates.size(); ++i) {
                local.candidates[i].embedding = std::move(vectors[i]);
            }
        }
    }

    FinalOutput out;
    out.report = consensus_report(local, config.entropy);

    std::vector<std::string> texts;
    texts.reserve(local.candidates.size());
    for (const auto& c : local.candidates) texts.push_back(c.text);
    EnsembleResult ensemble = run_ensemble(texts, out.report.profile.e_bar, config.tokenize);
    out.ensemble_text = std::move(ensemble.text);
    out.rover_text = std::move(ensemble.rover_text);

    out.decision = gate(out.report.profile.delta, config.gate.theta);
    if (!out.decision.route) {
        out.text = out.ensemble_text;
        return out;
    }

    if (!expert) {
        out.text = out.ensemble_text;
        out.warning = "routing requested but no expert backend is configured";
        return out;
    }
    try {
        const ExpertRequest request =
            build_expert_request(local, out.ensemble_text, config.expert_template);
        GenerationRequest generation;
        generation.sample_id = local.sample_id;
        generation.image_path = local.image_ref;
        generation.prompt = request.prompt;
        generation.temperature = 0.0;
        GenerationResult reply = expert->generate(generation);
        out.text = std::move(reply.text);
        out.expert_used = true;
    } catch (const BackendError& e) {
        out.text = out.ensemble_text;
        out.warning = std::string("expert backend failed: ") + e.what();
    }
    return out;
}

} // namespace ceocr
