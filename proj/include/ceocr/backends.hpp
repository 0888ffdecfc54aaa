#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "ceocr/types.hpp"

namespace ceocr {

enum class BackendKind { Fixture, Http };

struct BackendSpec {
    BackendKind kind = BackendKind::Fixture;
    std::string model_name;
    std::optional<std::string> endpoint; // base URL, required for Http
    std::string fixture_dir;             // fixture tree root, required for Fixture
    double timeout_s = 60.0;             // per attempt
    int max_retries = 3;
    int max_in_flight = 4;
    std::string api_key_env = "CE_OCR_API_KEY";
    double backoff_base_s = 1.0;
};

struct GenerationRequest {
    std::string sample_id;
    std::optional<std::string> image_path;
    std::string prompt;
    double temperature = 0.0;
};

struct GenerationResult {
    std::string text;
    double latency_s = 0.0;
    std::string model_name;
    int attempts = 0;
};

// Batch embedding lookup. The fixture backend keys on
// (sample_id, model_names[i]); the HTTP backend sends the texts.
struct EmbeddingRequest {
    std::vector<std::string> texts;
    std::string sample_id;
    std::vector<std::string> model_names;
};

// One candidate/expert/embedding service. Thread-safe; enforces its own
// max_in_flight admission limit across all callers.
class Backend {
public:
    explicit Backend(BackendSpec spec);

    // Produces one text for the request. The HTTP backend speaks the
    // chat-completions wire format and retries transport errors and
    // 5xx/429 responses with exponential backoff (base backoff_base_s,
    // factor 2, jitter); other statuses fail immediately. The fixture
    // backend replays <fixture_dir>/<sample_id>/<model_name>.txt verbatim.
    GenerationResult generate(const GenerationRequest& request);

    // One vector per input, consistent dimension. Fixture mode reads
    // <fixture_dir>/<sample_id>/<model>.emb (one real per line).
    std::vector<std::vector<double>> embed(const EmbeddingRequest& request);

    const BackendSpec& spec() const { return spec_; }
    int generate_calls() const { return generate_calls_.load(); }
    int embed_calls() const { return embed_calls_.load(); }

private:
    struct Admission;

    GenerationResult fixture_generate(const GenerationRequest& request);
    GenerationResult http_generate(const GenerationRequest& request);
    std::vector<std::vector<double>> fixture_embed(const EmbeddingRequest& request);
    std::vector<std::vector<double>> http_embed(const EmbeddingRequest& request);

    BackendSpec spec_;
    std::counting_semaphore<> admission_;
    std::atomic<int> generate_calls_{0};
    std::atomic<int> embed_calls_{0};
};

struct SampleDescriptor {
    std::string sample_id;
    std::optional<std::string> image_path;
    std::optional<std::string> truth;
    std::string prompt;
    double temperature = 0.0;
};

struct CandidateFailure {
    std::string model_name;
    std::string error;
};

struct GatherOutcome {
    Sample sample;
    std::vector<CandidateFailure> failures;
};

// Queries all backends concurrently (each limited by its own admission
// semaphore) and assembles a Sample whose candidate order follows the backend
// order regardless of completion order. Failed backends are recorded; fewer
// than two successes raises BackendError.
GatherOutcome gather_candidates(const SampleDescriptor& descriptor,
                                const std::vector<std::shared_ptr<Backend>>& backends);

} // namespace ceocr
