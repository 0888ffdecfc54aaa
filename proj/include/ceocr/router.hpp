#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ceocr/backends.hpp"
#include "ceocr/ensemble.hpp"
#include "ceocr/entropy.hpp"
#include "ceocr/types.hpp"

namespace ceocr {

struct GateConfig {
    double theta = 0.5; // in [0, 1]
};

struct RoutingDecision {
    bool route = false; // false = use ensemble output, true = route to expert
    double delta = 0.0;
    double theta = 0.0;
};

// Threshold gate: accepts the ensemble when delta <= theta (boundary
// inclusive), routes otherwise. Throws DataError on out-of-range inputs.
RoutingDecision gate(double delta, double theta);

struct ExpertRequest {
    std::optional<std::string> image_ref;
    std::vector<std::pair<std::string, std::string>> candidates; // (model_id, text)
    std::string ensemble_text;
    std::string prompt; // rendered instruction, embeds every text verbatim
};

// Template placeholders: {candidates} and {ensemble} are required, {n} is
// optional. Candidates render as "[model_id]\ntext" blocks in sample order.
extern const char* const kDefaultExpertTemplate;

ExpertRequest build_expert_request(const Sample& sample, const std::string& ensemble_text,
                                   const std::string& prompt_template);

struct PipelineConfig {
    EntropyConfig entropy;
    TokenizeMode tokenize = TokenizeMode::Word;
    GateConfig gate;
    std::string expert_template = kDefaultExpertTemplate;
};

struct FinalOutput {
    std::string text;
    ConsensusReport report;
    RoutingDecision decision;
    bool expert_used = false;
    std::string ensemble_text;
    std::string rover_text;
    std::optional<std::string> warning;
};

// Full per-sample pipeline: score, ensemble, gate, and (on a route decision)
// one expert call. Expert failures degrade to the ensemble text with the
// failure recorded in `warning`; the expert is invoked at most once. When the
// metric needs embeddings that candidates lack, `embedder` fetches them.
FinalOutput run_sample(const Sample& sample, const PipelineConfig& config,
                       Backend* expert = nullptr, Backend* embedder = nullptr);

} // namespace ceocr
