#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include "ceocr/backends.hpp"
#include "ceocr/errors.hpp"

using namespace ceocr;
using nlohmann::json;

namespace {

const std::string kFixtureDir = std::string(CEOCR_TEST_DATA_DIR) + "/backends";

BackendSpec fixture_spec(std::string model) {
    BackendSpec spec;
    spec.kind = BackendKind::Fixture;
    spec.model_name = std::move(model);
    spec.fixture_dir = kFixtureDir;
    return spec;
}

// A chat-completions/embeddings mock bound to a random loopback port.
class MockServer {
public:
    MockServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int hit = ++chat_hits_;
            last_chat_body = req.body;
            last_auth = req.get_header_value("Authorization");
            if (sleep_ms > 0) {
                const int now = ++concurrent_;
                peak_concurrent_ = std::max(peak_concurrent_.load(), now);
                std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
                --concurrent_;
            }
            if (hit <= fail_first_n) {
                res.status = fail_status;
                res.set_content("overloaded", "text/plain");
                return;
            }
            json reply = {{"choices", json::array({{{"message", {{"role", "assistant"},
                                                                 {"content", reply_text}}}}})}};
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            ++embed_hits_;
            const json body = json::parse(req.body);
            const auto& inputs = body.at("input");
            json data = json::array();
            // deliberately emit items in reverse to exercise index ordering
            for (std::size_t i = inputs.size(); i-- > 0;) {
                const double x = static_cast<double>(inputs[i].get<std::string>().size());
                data.push_back({{"index", i}, {"embedding", {x, 1.0, 0.5}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int chat_hits() const { return chat_hits_.load(); }
    int embed_hits() const { return embed_hits_.load(); }
    int peak_concurrent() const { return peak_concurrent_.load(); }

    std::string reply_text = "mock reply";
    int fail_first_n = 0;
    int fail_status = 503;
    int sleep_ms = 0;
    std::string last_chat_body;
    std::string last_auth;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> chat_hits_{0};
    std::atomic<int> embed_hits_{0};
    std::atomic<int> concurrent_{0};
    std::atomic<int> peak_concurrent_{0};
};

BackendSpec http_spec(const MockServer& server, std::string model = "mock-model") {
    BackendSpec spec;
    spec.kind = BackendKind::Http;
    spec.model_name = std::move(model);
    spec.endpoint = server.endpoint();
    spec.backoff_base_s = 0.005;
    spec.timeout_s = 5.0;
    return spec;
}

} // namespace

TEST_CASE("backend spec validation") {
    BackendSpec http;
    http.kind = BackendKind::Http;
    http.model_name = "m";
    CHECK_THROWS_AS(Backend{http}, ConfigError); // endpoint missing

    BackendSpec fixture;
    fixture.kind = BackendKind::Fixture;
    fixture.model_name = "m";
    CHECK_THROWS_AS(Backend{fixture}, ConfigError); // fixture_dir missing

    BackendSpec bad_flight = fixture_spec("m");
    bad_flight.max_in_flight = 0;
    CHECK_THROWS_AS(Backend{bad_flight}, ConfigError);

    BackendSpec nameless = fixture_spec("");
    CHECK_THROWS_AS(Backend{nameless}, ConfigError);
}

TEST_CASE("fixture backend: hit replays the recorded text verbatim") {
    Backend backend(fixture_spec("alpha"));
    GenerationRequest request;
    request.sample_id = "s1";
    const auto result = backend.generate(request);
    CHECK(result.text == "The quick brown fox jumps over the lazy dog.");
    CHECK(result.attempts == 1);
    CHECK(result.model_name == "alpha");
    CHECK(backend.generate_calls() == 1);
}

TEST_CASE("fixture backend: miss names the lookup key") {
    Backend backend(fixture_spec("alpha"));
    GenerationRequest request;
    request.sample_id = "nope";
    try {
        backend.generate(request);
        FAIL("expected FixtureMissError");
    } catch (const FixtureMissError& e) {
        CHECK(e.sample_id() == "nope");
        CHECK(e.model_name() == "alpha");
        CHECK(std::string(e.what()).find("nope/alpha") != std::string::npos);
    }
}

TEST_CASE("fixture backend: embeddings parse one real per line") {
    Backend backend(fixture_spec("embedder"));
    EmbeddingRequest request;
    request.sample_id = "s1";
    request.texts = {"a", "b", "c"};
    request.model_names = {"alpha", "beta", "gamma"};
    const auto vectors = backend.embed(request);
    REQUIRE(vectors.size() == 3);
    for (const auto& v : vectors) REQUIRE(v.size() == 4);
    CHECK(vectors[0][0] == doctest::Approx(0.92));
    CHECK(vectors[2][3] == doctest::Approx(0.13));

    // duplicate keys return identical vectors
    request.texts = {"a", "a"};
    request.model_names = {"alpha", "alpha"};
    const auto duplicated = backend.embed(request);
    CHECK(duplicated[0] == duplicated[1]);

    request.model_names = {"alpha", "missing"};
    CHECK_THROWS_AS(backend.embed(request), FixtureMissError);

    request.texts = {};
    request.model_names = {};
    CHECK_THROWS_AS(backend.embed(request), DataError);
}

TEST_CASE("fixture backend: embedding dimension mismatch across a batch fails") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ceocr-embed-mismatch";
    fs::create_directories(dir / "s");
    std::ofstream(dir / "s" / "a.emb") << "1.0\n2.0\n";
    std::ofstream(dir / "s" / "b.emb") << "1.0\n2.0\n3.0\n";

    BackendSpec spec;
    spec.kind = BackendKind::Fixture;
    spec.model_name = "embedder";
    spec.fixture_dir = dir.string();
    Backend backend(spec);
    EmbeddingRequest request;
    request.sample_id = "s";
    request.texts = {"x", "y"};
    request.model_names = {"a", "b"};
    CHECK_THROWS_AS(backend.embed(request), BackendError);
    fs::remove_all(dir);
}

TEST_CASE("http backend: happy path sends the chat-completions wire format") {
    MockServer server;
    server.reply_text = "transcribed text";
    setenv("CEOCR_TEST_KEY", "sekret", 1);

    BackendSpec spec = http_spec(server);
    spec.api_key_env = "CEOCR_TEST_KEY";
    Backend backend(spec);

    // temp image file rides along as base64
    const auto image_path = std::filesystem::temp_directory_path() / "ceocr-test-img.png";
    std::ofstream(image_path, std::ios::binary) << "PNGDATA";

    GenerationRequest request;
    request.sample_id = "s";
    request.prompt = "read this";
    request.image_path = image_path.string();
    request.temperature = 0.0;

    const auto result = backend.generate(request);
    CHECK(result.text == "transcribed text");
    CHECK(result.attempts == 1);

    const json body = json::parse(server.last_chat_body);
    CHECK(body["model"] == "mock-model");
    CHECK(body["temperature"] == 0.0);
    const auto& content = body["messages"][0]["content"];
    CHECK(content[0]["text"] == "read this");
    const std::string url = content[1]["image_url"]["url"];
    CHECK(url.rfind("data:image/png;base64,", 0) == 0);
    CHECK(url.find("UE5HREFUQQ==") != std::string::npos); // "PNGDATA" in base64
    CHECK(server.last_auth == "Bearer sekret");
    std::filesystem::remove(image_path);
    unsetenv("CEOCR_TEST_KEY");
}

TEST_CASE("http backend: two 503s then success yields attempt count 3") {
    MockServer server;
    server.fail_first_n = 2;
    Backend backend(http_spec(server));
    GenerationRequest request;
    request.sample_id = "s";
    request.prompt = "p";
    const auto result = backend.generate(request);
    CHECK(result.attempts == 3);
    CHECK(result.text == "mock reply");
    CHECK(server.chat_hits() == 3);
}

TEST_CASE("http backend: 4xx other than 429 fails without retry") {
    MockServer server;
    server.fail_first_n = 100;
    server.fail_status = 404;
    Backend backend(http_spec(server));
    GenerationRequest request;
    request.sample_id = "s";
    request.prompt = "p";
    CHECK_THROWS_AS(backend.generate(request), TransportError);
    CHECK(server.chat_hits() == 1);
}

TEST_CASE("http backend: retries stop after max_retries") {
    MockServer server;
    server.fail_first_n = 100;
    BackendSpec spec = http_spec(server);
    spec.max_retries = 2;
    Backend backend(spec);
    GenerationRequest request;
    request.sample_id = "s";
    request.prompt = "p";
    CHECK_THROWS_AS(backend.generate(request), TransportError);
    CHECK(server.chat_hits() == 3); // total attempts = retries + 1
}

TEST_CASE("http backend: embeddings are returned in input order") {
    MockServer server;
    Backend backend(http_spec(server, "embed-model"));
    EmbeddingRequest request;
    request.texts = {"a", "bbb", "cc"};
    const auto vectors = backend.embed(request);
    REQUIRE(vectors.size() == 3);
    CHECK(vectors[0][0] == doctest::Approx(1.0)); // |"a"|
    CHECK(vectors[1][0] == doctest::Approx(3.0));
    CHECK(vectors[2][0] == doctest::Approx(2.0));
    CHECK(server.embed_hits() == 1);
}

TEST_CASE("http backend: admission limits in-flight requests") {
    MockServer server;
    server.sleep_ms = 40;
    BackendSpec spec = http_spec(server);
    spec.max_in_flight = 2;
    Backend backend(spec);

    std::vector<std::future<GenerationResult>> futures;
    for (int i = 0; i < 6; ++i) {
        futures.push_back(std::async(std::launch::async, [&backend, i] {
            GenerationRequest request;
            request.sample_id = "s" + std::to_string(i);
            request.prompt = "p";
            return backend.generate(request);
        }));
    }
    for (auto& f : futures) f.get();
    CHECK(server.peak_concurrent() <= 2);
    CHECK(server.chat_hits() == 6);
}

TEST_CASE("gather: candidate order follows backend order") {
    auto alpha = std::make_shared<Backend>(fixture_spec("alpha"));
    auto beta = std::make_shared<Backend>(fixture_spec("beta"));
    auto gamma = std::make_shared<Backend>(fixture_spec("gamma"));

    SampleDescriptor descriptor;
    descriptor.sample_id = "s1";
    descriptor.truth = "truth";
    const auto outcome = gather_candidates(descriptor, {alpha, beta, gamma});
    REQUIRE(outcome.sample.candidates.size() == 3);
    CHECK(outcome.sample.candidates[0].model_id == "alpha");
    CHECK(outcome.sample.candidates[1].model_id == "beta");
    CHECK(outcome.sample.candidates[2].model_id == "gamma");
    CHECK(outcome.failures.empty());
    CHECK(outcome.sample.truth == "truth");
}

TEST_CASE("gather: one failing backend is recorded, the sample proceeds") {
    auto alpha = std::make_shared<Backend>(fixture_spec("alpha"));
    auto beta = std::make_shared<Backend>(fixture_spec("beta"));
    auto broken = std::make_shared<Backend>(fixture_spec("no-such-model"));

    SampleDescriptor descriptor;
    descriptor.sample_id = "s1";
    const auto outcome = gather_candidates(descriptor, {alpha, broken, beta});
    REQUIRE(outcome.sample.candidates.size() == 2);
    CHECK(outcome.sample.candidates[0].model_id == "alpha");
    CHECK(outcome.sample.candidates[1].model_id == "beta");
    REQUIRE(outcome.failures.size() == 1);
    CHECK(outcome.failures[0].model_name == "no-such-model");
}

TEST_CASE("gather: fewer than two successes is a sample-level error") {
    auto alpha = std::make_shared<Backend>(fixture_spec("alpha"));
    auto broken1 = std::make_shared<Backend>(fixture_spec("missing-a"));
    auto broken2 = std::make_shared<Backend>(fixture_spec("missing-b"));

    SampleDescriptor descriptor;
    descriptor.sample_id = "s1";
    CHECK_THROWS_AS(gather_candidates(descriptor, {alpha, broken1, broken2}), BackendError);
    CHECK_THROWS_AS(gather_candidates(descriptor, {alpha}), ConfigError);
}
