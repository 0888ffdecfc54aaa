#include "ceocr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ceocr/detail/rng.hpp"
#include "ceocr/errors.hpp"
#include "ceocr/similarity.hpp"
#include "ceocr/text.hpp"

namespace ceocr {

using detail::SplitMix64;

namespace {

// Printable ASCII plus space.
constexpr char32_t kAlphabetFirst = U' ';
constexpr std::uint64_t kAlphabetSize = 95;

char32_t random_printable(SplitMix64& rng) {
    return kAlphabetFirst + static_cast<char32_t>(rng.below(kAlphabetSize));
}

} // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    SplitMix64 rng(a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
    return rng.next();
}

std::string corrupt(std::string_view text, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw DataError("corrupt: rate must be in [0, 1]");
    if (rate == 0.0) return std::string(text);

    const std::u32string scalars = utf8_decode(text);
    SplitMix64 rng(seed);
    std::u32string out;
    out.reserve(scalars.size() + scalars.size() / 8);
    for (char32_t c : scalars) {
        if (rng.unit() < rate) {
            switch (rng.below(3)) {
                case 0: out.push_back(random_printable(rng)); break; // substitution
                case 1: break;                                       // deletion
                default:                                             // insertion
                    out.push_back(random_printable(rng));
                    out.push_back(c);
                    break;
            }
        } else {
            out.push_back(c);
        }
    }
    return utf8_encode(out);
}

double quality_score(std::string_view text, std::string_view truth) {
    return 1.0 - normalized_edit_divergence(text, truth);
}

F1Result verification_f1(std::span<const double> deltas, std::span<const int> labels,
                         double theta) {
    if (deltas.size() != labels.size()) throw DataError("f1: deltas/labels length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        const bool predicted_good = deltas[i] <= theta;
        const bool actually_good = labels[i] != 0;
        if (predicted_good && actually_good) ++tp;
        if (predicted_good && !actually_good) ++fp;
        if (!predicted_good && actually_good) ++fn;
    }
    F1Result result;
    result.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    result.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    result.f1 = (result.precision + result.recall) > 0.0
                    ? 2.0 * result.precision * result.recall / (result.precision + result.recall)
                    : 0.0;
    return result;
}

std::vector<SweepPoint> threshold_sweep(std::span<const double> deltas,
                                        const std::vector<int>* labels,
                                        const std::vector<double>* scores,
                                        std::span<const double> thetas) {
    if (labels && labels->size() != deltas.size()) {
        throw DataError("sweep: deltas/labels length mismatch");
    }
    if (scores && scores->size() != deltas.size()) {
        throw DataError("sweep: deltas/scores length mismatch");
    }
    for (std::size_t i = 1; i < thetas.size(); ++i) {
        if (thetas[i] < thetas[i - 1]) throw DataError("sweep: thetas must be sorted ascending");
    }

    std::vector<SweepPoint> points;
    points.reserve(thetas.size());
    for (double theta : thetas) {
        SweepPoint point;
        point.theta = theta;
        std::size_t routed = 0;
        double accepted_score = 0.0;
        std::size_t accepted = 0;
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            if (deltas[i] > theta) {
                ++routed;
            } else {
                ++accepted;
                if (scores) accepted_score += (*scores)[i];
            }
        }
        point.routed_fraction = deltas.empty()
                                    ? 0.0
                                    : static_cast<double>(routed) / static_cast<double>(deltas.size());
        if (scores && accepted > 0) {
            point.mean_score = accepted_score / static_cast<double>(accepted);
        }
        if (labels) {
            const F1Result f1 = verification_f1(deltas, *labels, theta);
            point.precision = f1.precision;
            point.recall = f1.recall;
            point.f1 = f1.f1;
        }
        points.push_back(point);
    }
    return points;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
    out << "theta,routed_fraction,precision,recall,f1,mean_score\n";
    auto cell = [&out](const std::optional<double>& v) {
        if (v) out << *v;
    };
    for (const auto& p : points) {
        out << p.theta << ',' << p.routed_fraction << ',';
        cell(p.precision);
        out << ',';
        cell(p.recall);
        out << ',';
        cell(p.f1);
        out << ',';
        cell(p.mean_score);
        out << '\n';
    }
}

std::vector<CorpusRecord> synth_corpus(std::string_view seed_text, const SynthConfig& config) {
    if (config.candidates < 2) throw ConfigError("synth: needs at least 2 candidates");
    if (config.min_len == 0 || config.max_len < config.min_len) {
        throw ConfigError("synth: invalid length range");
    }
    if (!(config.rate >= 0.0 && config.rate <= 1.0) ||
        !(config.good_rate >= 0.0 && config.good_rate <= 1.0) ||
        !(config.bad_rate >= 0.0 && config.bad_rate <= 1.0)) {
        throw ConfigError("synth: rates must be in [0, 1]");
    }

    std::u32string pool = utf8_decode(seed_text);
    // Normalize line structure so carved truths are single-line prose.
    for (char32_t& c : pool) {
        if (c == U'\n' || c == U'\r' || c == U'\t') c = U' ';
    }
    if (pool.empty()) throw DataError("synth: seed text is empty");
    // Tile the seed until any window up to max_len fits.
    const std::u32string unit = pool;
    while (pool.size() < config.max_len * 2) {
        pool.push_back(U' ');
        pool += unit;
    }

    SplitMix64 rng(config.seed);
    std::vector<CorpusRecord> records;
    records.reserve(config.samples);
    const std::size_t digits = std::to_string(config.samples ? config.samples - 1 : 0).size();

    for (std::size_t s = 0; s < config.samples; ++s) {
        CorpusRecord record;
        std::string index = std::to_string(s);
        record.sample_id = "synth-" + std::string(digits - index.size(), '0') + index;

        const std::size_t length =
            config.min_len + rng.below(config.max_len - config.min_len + 1);
        const std::size_t start = rng.below(pool.size() - length + 1);
        record.truth = utf8_encode(std::u32string_view(pool).substr(start, length));

        std::vector<double> rates(config.candidates, config.rate);
        switch (config.profile) {
            case SynthConfig::Profile::Uniform:
                break;
            case SynthConfig::Profile::OneClean:
                rates[0] = 0.0;
                break;
            case SynthConfig::Profile::Split: {
                const bool good = rng.below(2) == 0;
                record.label = good ? "good" : "bad";
                for (double& r : rates) r = rng.unit() * config.good_rate;
                if (!good) {
                    // 3..candidates corrupted heavily, chosen by partial shuffle.
                    const std::size_t lo = std::min<std::size_t>(3, config.candidates);
                    const std::size_t k = lo + rng.below(config.candidates - lo + 1);
                    std::vector<std::size_t> order(config.candidates);
                    std::iota(order.begin(), order.end(), 0);
                    for (std::size_t i = 0; i < k; ++i) {
                        const std::size_t j = i + rng.below(order.size() - i);
                        std::swap(order[i], order[j]);
                        rates[order[i]] = config.bad_rate;
                    }
                }
                break;
            }
        }

        for (std::size_t c = 0; c < config.candidates; ++c) {
            CorpusCandidate candidate;
            candidate.model = "m" + std::to_string(c + 1);
            candidate.text = corrupt(*record.truth, rates[c],
                                     mix_seed(config.seed, s * config.candidates + c + 1));
            record.candidates.push_back(std::move(candidate));
        }
        records.push_back(std::move(record));
    }
    return records;
}

} // namespace ceocr
