#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ceocr/backends.hpp"
#include "ceocr/errors.hpp"
#include "ceocr/router.hpp"
#include "oracles.hpp"

using namespace ceocr;

namespace {

const std::string kFixtureDir = std::string(CEOCR_TEST_DATA_DIR) + "/backends";

Sample make_sample(std::vector<std::string> texts, std::string id = "t") {
    Sample sample;
    sample.sample_id = std::move(id);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        sample.candidates.push_back(Candidate{"m" + std::to_string(i + 1), texts[i], std::nullopt});
    }
    return sample;
}

BackendSpec fixture_spec(std::string model) {
    BackendSpec spec;
    spec.kind = BackendKind::Fixture;
    spec.model_name = std::move(model);
    spec.fixture_dir = kFixtureDir;
    return spec;
}

} // namespace

TEST_CASE("gate: inclusive boundary") {
    CHECK_FALSE(gate(0.5, 0.5).route);
    CHECK(gate(0.6, 0.5).route);
    CHECK_FALSE(gate(0.0, 0.0).route);
    CHECK_FALSE(gate(1.0, 1.0).route);
    CHECK(gate(0.0001, 0.0).route);
}

TEST_CASE("gate: input validation") {
    CHECK_THROWS_AS(gate(-0.1, 0.5), DataError);
    CHECK_THROWS_AS(gate(1.1, 0.5), DataError);
    CHECK_THROWS_AS(gate(0.5, -0.1), DataError);
    CHECK_THROWS_AS(gate(0.5, 1.5), DataError);
}

TEST_CASE("gate: raising theta never flips ensemble to expert") {
    oracle::SplitMix64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const double delta = rng.unit();
        const double t1 = rng.unit();
        const double t2 = std::min(1.0, t1 + rng.unit() * (1.0 - t1));
        if (!gate(delta, t1).route) CHECK_FALSE(gate(delta, t2).route);
    }
}

TEST_CASE("expert request: candidates and ensemble embedded verbatim") {
    Sample sample = make_sample({"first text", "second {ensemble} text"});
    const auto request = build_expert_request(sample, "the draft", kDefaultExpertTemplate);
    CHECK(request.prompt.find("first text") != std::string::npos);
    // placeholder-looking content inside candidate texts stays literal
    CHECK(request.prompt.find("second {ensemble} text") != std::string::npos);
    CHECK(request.prompt.find("the draft") != std::string::npos);
    CHECK(request.prompt.find("2 candidate transcriptions") != std::string::npos);
    CHECK(request.prompt.find("[m1]") != std::string::npos);
    CHECK(request.prompt.find("[m2]") != std::string::npos);
    REQUIRE(request.candidates.size() == 2);
    CHECK(request.ensemble_text == "the draft");
}

TEST_CASE("expert request: missing placeholders are rejected") {
    const Sample sample = make_sample({"a", "b"});
    CHECK_THROWS_AS(build_expert_request(sample, "x", "no placeholders at all"), ConfigError);
    CHECK_THROWS_AS(build_expert_request(sample, "x", "only {candidates}"), ConfigError);
    CHECK_THROWS_AS(build_expert_request(sample, "x", "only {ensemble}"), ConfigError);
    // {n} is optional
    CHECK_NOTHROW(build_expert_request(sample, "x", "{candidates} {ensemble}"));
}

TEST_CASE("expert request: custom template round-trips through the fixture expert") {
    const std::string template_path = std::string(CEOCR_TEST_DATA_DIR) + "/expert_template.txt";
    std::ifstream in(template_path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();

    Sample sample = make_sample({"AAAA BBBB CCCC DDDD", "qwerty zxcvb mnop!"}, "s2");
    const auto request = build_expert_request(sample, "draft here", buffer.str());
    CHECK(request.prompt.find("CANDS:") != std::string::npos);
    CHECK(request.prompt.find("DRAFT: draft here") != std::string::npos);
    CHECK(request.prompt.find("N=2") != std::string::npos);

    Backend expert(fixture_spec("expert"));
    GenerationRequest generation;
    generation.sample_id = "s2";
    generation.prompt = request.prompt;
    const auto reply = expert.generate(generation);
    CHECK(reply.text == "Expert final transcription for sample two.");
}

TEST_CASE("run_sample: identical candidates take the ensemble path, expert untouched") {
    Backend expert(fixture_spec("expert"));
    PipelineConfig config;
    config.gate.theta = 0.5;
    const auto out = run_sample(make_sample({"same line", "same line", "same line"}, "s3"),
                                config, &expert);
    CHECK(out.report.profile.delta == 0.0);
    CHECK_FALSE(out.decision.route);
    CHECK_FALSE(out.expert_used);
    CHECK(out.text == "same line");
    CHECK(out.ensemble_text == "same line");
    CHECK(expert.generate_calls() == 0);
}

TEST_CASE("run_sample: full disagreement routes to the expert exactly once") {
    Backend expert(fixture_spec("expert"));
    PipelineConfig config;
    config.gate.theta = 0.5;
    const auto out = run_sample(
        make_sample({"AAAA BBBB CCCC DDDD", "qwerty zxcvb mnop!", "1234567890 @@@ ###"}, "s2"),
        config, &expert);
    CHECK(out.decision.route);
    CHECK(out.expert_used);
    CHECK(out.text == "Expert final transcription for sample two.");
    CHECK(expert.generate_calls() == 1);
    CHECK_FALSE(out.warning.has_value());
}

TEST_CASE("run_sample: expert failure degrades to the ensemble text") {
    Backend expert(fixture_spec("expert"));
    PipelineConfig config;
    config.gate.theta = 0.0;
    // no fixture recorded for this sample id -> expert call fails
    const auto out = run_sample(make_sample({"abcd", "abXd"}, "missing-sample"), config, &expert);
    CHECK(out.decision.route);
    CHECK_FALSE(out.expert_used);
    CHECK(out.text == out.ensemble_text);
    REQUIRE(out.warning.has_value());
    CHECK(out.warning->find("fixture miss") != std::string::npos);
    CHECK(expert.generate_calls() == 1);
}

TEST_CASE("run_sample: routing without a configured expert records a warning") {
    PipelineConfig config;
    config.gate.theta = 0.0;
    const auto out = run_sample(make_sample({"abcd", "wxyz"}), config, nullptr);
    CHECK(out.decision.route);
    CHECK_FALSE(out.expert_used);
    REQUIRE(out.warning.has_value());
    CHECK(out.text == out.ensemble_text);
}

TEST_CASE("run_sample: cosine metric fetches embeddings through the embedder") {
    Backend embedder(fixture_spec("embedder"));
    PipelineConfig config;
    config.entropy.metric = DivergenceMetric::CosineDistance;
    config.gate.theta = 1.0;

    Sample sample;
    sample.sample_id = "s1";
    sample.candidates = {Candidate{"alpha", "The quick brown fox jumps over the lazy dog.", std::nullopt},
                         Candidate{"beta", "The quick brown fox jumps over the lazy dog.", std::nullopt},
                         Candidate{"gamma", "The quick brawn fox jumps ower the lazy dog.", std::nullopt}};
    const auto out = run_sample(sample, config, nullptr, &embedder);
    CHECK(out.report.metric == DivergenceMetric::CosineDistance);
    CHECK(out.report.profile.delta >= 0.0);
    CHECK(embedder.embed_calls() == 1);

    // no embedder configured -> hard error
    CHECK_THROWS_AS(run_sample(sample, config, nullptr, nullptr), DataError);
}
