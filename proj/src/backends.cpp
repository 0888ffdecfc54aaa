#include "ceocr/backends.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ceocr/errors.hpp"

namespace ceocr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BackendError("cannot open file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string base64_encode(std::string_view data) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= data.size()) {
        const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                           (static_cast<unsigned char>(data[i + 1]) << 8) |
                           static_cast<unsigned char>(data[i + 2]);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
        i += 3;
    }
    const std::size_t rest = data.size() - i;
    if (rest == 1) {
        const unsigned v = static_cast<unsigned char>(data[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (rest == 2) {
        const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                           (static_cast<unsigned char>(data[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::string image_mime_type(const fs::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "image/png";
}

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

// Raised internally to distinguish "retry this attempt" from terminal
// failures.
struct RetryableFailure {
    std::string reason;
};

double jittered_backoff_s(double base, int attempt) {
    // base * 2^(attempt-1), scaled into [0.5, 1.0] by the jitter draw.
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    const double u = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
    return base * std::pow(2.0, attempt - 1) * u;
}

httplib::Client make_client(const std::string& endpoint, double timeout_s) {
    httplib::Client client(endpoint);
    const auto timeout = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::duration<double>(timeout_s));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    return client;
}

httplib::Headers auth_headers(const BackendSpec& spec) {
    httplib::Headers headers;
    if (!spec.api_key_env.empty()) {
        if (const char* key = std::getenv(spec.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    return headers;
}

} // namespace

struct Backend::Admission {
    explicit Admission(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
    ~Admission() { sem_.release(); }
    Admission(const Admission&) = delete;
    Admission& operator=(const Admission&) = delete;

private:
    std::counting_semaphore<>& sem_;
};

Backend::Backend(BackendSpec spec)
    : spec_(std::move(spec)), admission_(std::max(spec_.max_in_flight, 1)) {
    if (spec_.model_name.empty()) throw ConfigError("backend: model_name must be non-empty");
    if (spec_.max_in_flight < 1) throw ConfigError("backend: max_in_flight must be >= 1");
    if (spec_.max_retries < 0) throw ConfigError("backend: max_retries must be >= 0");
    if (spec_.timeout_s <= 0.0) throw ConfigError("backend: timeout must be positive");
    if (spec_.kind == BackendKind::Http) {
        if (!spec_.endpoint || spec_.endpoint->empty()) {
            throw ConfigError("backend '" + spec_.model_name + "': http kind requires an endpoint");
        }
    } else {
        if (spec_.fixture_dir.empty()) {
            throw ConfigError("backend '" + spec_.model_name +
                              "': fixture kind requires a fixture_dir");
        }
    }
}

GenerationResult Backend::generate(const GenerationRequest& request) {
    Admission slot(admission_);
    generate_calls_.fetch_add(1);
    const auto start = std::chrono::steady_clock::now();
    GenerationResult result = spec_.kind == BackendKind::Fixture ? fixture_generate(request)
                                                                 : http_generate(request);
    result.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.model_name = spec_.model_name;
    return result;
}

std::vector<std::vector<double>> Backend::embed(const EmbeddingRequest& request) {
    Admission slot(admission_);
    embed_calls_.fetch_add(1);
    if (request.texts.empty()) throw DataError("embed: empty text batch");
    auto vectors = spec_.kind == BackendKind::Fixture ? fixture_embed(request)
                                                      : http_embed(request);
    for (const auto& v : vectors) {
        if (v.size() != vectors.front().size()) {
            throw BackendError("embed: dimension mismatch across batch (" +
                               std::to_string(v.size()) + " vs " +
                               std::to_string(vectors.front().size()) + ")");
        }
    }
    return vectors;
}

GenerationResult Backend::fixture_generate(const GenerationRequest& request) {
    const fs::path path = fs::path(spec_.fixture_dir) / request.sample_id /
                          (spec_.model_name + ".txt");
    if (!fs::exists(path)) {
        throw FixtureMissError(request.sample_id, spec_.model_name, path.string());
    }
    GenerationResult result;
    result.text = read_file_bytes(path); // verbatim, including any trailing newline
    result.attempts = 1;
    return result;
}

std::vector<std::vector<double>> Backend::fixture_embed(const EmbeddingRequest& request) {
    if (request.sample_id.empty() || request.model_names.size() != request.texts.size()) {
        throw DataError("embed: fixture backend requires sample_id and per-text model names");
    }
    std::vector<std::vector<double>> vectors;
    vectors.reserve(request.texts.size());
    for (const auto& model : request.model_names) {
        const fs::path path = fs::path(spec_.fixture_dir) / request.sample_id / (model + ".emb");
        if (!fs::exists(path)) {
            throw FixtureMissError(request.sample_id, model + ".emb", path.string());
        }
        std::ifstream in(path);
        std::vector<double> vec;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                std::size_t consumed = 0;
                const double v = std::stod(line, &consumed);
                if (consumed != line.size()) throw std::invalid_argument("trailing characters");
                vec.push_back(v);
            } catch (const std::exception&) {
                throw DataError("embedding fixture " + path.string() + ":" +
                                std::to_string(line_no) + ": not a number: '" + line + "'");
            }
        }
        if (vec.empty()) throw DataError("embedding fixture " + path.string() + ": empty");
        vectors.push_back(std::move(vec));
    }
    return vectors;
}

GenerationResult Backend::http_generate(const GenerationRequest& request) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    if (request.image_path) {
        const std::string bytes = read_file_bytes(*request.image_path);
        const std::string url = "data:" + image_mime_type(*request.image_path) + ";base64," +
                                base64_encode(bytes);
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
    json body = {
        {"model", spec_.model_name},
        {"temperature", request.temperature},
        {"messages", json::array({{{"role", "user"}, {"content", content}}})},
    };
    const std::string payload = body.dump();
    const httplib::Headers headers = auth_headers(spec_);

    const int max_attempts = spec_.max_retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        try {
            auto client = make_client(*spec_.endpoint, spec_.timeout_s);
            auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
            if (!res) {
                throw RetryableFailure{"transport error: " + httplib::to_string(res.error())};
            }
            if (retryable_status(res->status)) {
                throw RetryableFailure{"HTTP " + std::to_string(res->status)};
            }
            if (res->status != 200) {
                throw TransportError("backend '" + spec_.model_name + "': HTTP " +
                                     std::to_string(res->status) + ": " + res->body);
            }
            json reply = json::parse(res->body, nullptr, false);
            if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty() ||
                !reply["choices"][0].contains("message") ||
                !reply["choices"][0]["message"].contains("content") ||
                !reply["choices"][0]["message"]["content"].is_string()) {
                throw TransportError("backend '" + spec_.model_name +
                                     "': malformed chat completion response");
            }
            GenerationResult result;
            result.text = reply["choices"][0]["message"]["content"].get<std::string>();
            result.attempts = attempt;
            return result;
        } catch (const RetryableFailure& failure) {
            last_error = failure.reason;
            if (attempt == max_attempts) break;
            std::this_thread::sleep_for(std::chrono::duration<double>(
                jittered_backoff_s(spec_.backoff_base_s, attempt)));
        }
    }
    throw TransportError("backend '" + spec_.model_name + "': " + std::to_string(max_attempts) +
                         " attempt(s) failed, last error: " + last_error);
}

std::vector<std::vector<double>> Backend::http_embed(const EmbeddingRequest& request) {
    json body = {{"model", spec_.model_name}, {"input", request.texts}};
    const std::string payload = body.dump();
    const httplib::Headers headers = auth_headers(spec_);

    const int max_attempts = spec_.max_retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        try {
            auto client = make_client(*spec_.endpoint, spec_.timeout_s);
            auto res = client.Post("/v1/embeddings", headers, payload, "application/json");
            if (!res) {
                throw RetryableFailure{"transport error: " + httplib::to_string(res.error())};
            }
            if (retryable_status(res->status)) {
                throw RetryableFailure{"HTTP " + std::to_string(res->status)};
            }
            if (res->status != 200) {
                throw TransportError("backend '" + spec_.model_name + "': HTTP " +
                                     std::to_string(res->status) + ": " + res->body);
            }
            json reply = json::parse(res->body, nullptr, false);
            if (reply.is_discarded() || !reply.contains("data") || !reply["data"].is_array() ||
                reply["data"].size() != request.texts.size()) {
                throw TransportError("backend '" + spec_.model_name +
                                     "': malformed embedding response");
            }
            std::vector<std::vector<double>> vectors(request.texts.size());
            for (const auto& item : reply["data"]) {
                if (!item.contains("index") || !item.contains("embedding")) {
                    throw TransportError("backend '" + spec_.model_name +
                                         "': malformed embedding item");
                }
                const std::size_t index = item["index"].get<std::size_t>();
                if (index >= vectors.size()) {
                    throw TransportError("backend '" + spec_.model_name +
                                         "': embedding index out of range");
                }
                vectors[index] = item["embedding"].get<std::vector<double>>();
            }
            return vectors;
        } catch (const RetryableFailure& failure) {
            last_error = failure.reason;
            if (attempt == max_attempts) break;
            std::this_thread::sleep_for(std::chrono::duration<double>(
                jittered_backoff_s(spec_.backoff_base_s, attempt)));
        }
    }
    throw TransportError("backend '" + spec_.model_name + "': " + std::to_string(max_attempts) +
                         " attempt(s) failed, last error: " + last_error);
}

GatherOutcome gather_candidates(const SampleDescriptor& descriptor,
                                const std::vector<std::shared_ptr<Backend>>& backends) {
    if (backends.size() < 2) {
        throw ConfigError("gather: need at least 2 candidate backends, have " +
                          std::to_string(backends.size()));
    }
    GenerationRequest request;
    request.sample_id = descriptor.sample_id;
    request.image_path = descriptor.image_path;
    request.prompt = descriptor.prompt;
    request.temperature = descriptor.temperature;

    std::vector<std::future<GenerationResult>> futures;
    futures.reserve(backends.size());
    for (const auto& backend : backends) {
        futures.push_back(std::async(std::launch::async,
                                     [backend, request] { return backend->generate(request); }));
    }

    GatherOutcome outcome;
    outcome.sample.sample_id = descriptor.sample_id;
    outcome.sample.image_ref = descriptor.image_path;
    outcome.sample.truth = descriptor.truth;
    for (std::size_t i = 0; i < futures.size(); ++i) {
        try {
            GenerationResult result = futures[i].get();
            outcome.sample.candidates.push_back(
                Candidate{backends[i]->spec().model_name, std::move(result.text), std::nullopt});
        } catch (const std::exception& e) {
            outcome.failures.push_back(CandidateFailure{backends[i]->spec().model_name, e.what()});
        }
    }
    if (outcome.sample.candidates.size() < 2) {
        std::string detail;
        for (const auto& f : outcome.failures) {
            detail += "\n  " + f.model_name + ": " + f.error;
        }
        throw BackendError("sample '" + descriptor.sample_id + "': only " +
                           std::to_string(outcome.sample.candidates.size()) +
                           " candidate(s) succeeded, need 2" + detail);
    }
    return outcome;
}

} // namespace ceocr
