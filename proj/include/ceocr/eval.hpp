#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ceocr/corpus.hpp"

namespace ceocr {

// Deterministic seed mixing for derived RNG streams (per sample, per
// candidate).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Each character independently, with the given probability, undergoes a
// substitution, deletion or insertion (equal thirds) drawn from printable
// ASCII plus space. Deterministic per (text, rate, seed); rate 0 is the
// identity.
std::string corrupt(std::string_view text, double rate, std::uint64_t seed);

// 1 - normalized edit divergence: 1 means exact match with the truth.
double quality_score(std::string_view text, std::string_view truth);

struct F1Result {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Precision/recall/F1 of the "good" class with "good" predicted when
// delta <= theta. No positive predictions or no true positives yields 0.
F1Result verification_f1(std::span<const double> deltas, std::span<const int> labels,
                         double theta);

struct SweepPoint {
    double theta = 0.0;
    double routed_fraction = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> mean_score; // mean score over accepted samples
};

// One point per theta (ascending), reusing the cached deltas. labels and
// scores are optional parallel arrays; mean_score averages `scores` over the
// samples the gate accepts at each theta.
std::vector<SweepPoint> threshold_sweep(std::span<const double> deltas,
                                        const std::vector<int>* labels,
                                        const std::vector<double>* scores,
                                        std::span<const double> thetas);

// Header: theta,routed_fraction,precision,recall,f1,mean_score. Undefined
// fields are left empty.
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);

// Synthetic corpus generation: truths are carved from a seed text, candidates
// are corrupted copies.
struct SynthConfig {
    std::size_t samples = 200;
    std::size_t candidates = 5;
    enum class Profile { Uniform, Split, OneClean } profile = Profile::Uniform;
    double rate = 0.15;      // Uniform: every candidate; OneClean: all but the first
    double good_rate = 0.02; // Split: per-candidate rate drawn in [0, good_rate]
    double bad_rate = 0.3;   // Split: rate of the corrupted majority
    std::size_t min_len = 200;
    std::size_t max_len = 800;
    std::uint64_t seed = 0;
};

// Split profile labels each sample: "good" samples corrupt every candidate at
// a rate within [0, good_rate]; "bad" samples put 3 to all of the candidates
// at bad_rate. Deterministic per (seed_text, config).
std::vector<CorpusRecord> synth_corpus(std::string_view seed_text, const SynthConfig& config);

} // namespace ceocr
