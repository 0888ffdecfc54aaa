#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ceocr/similarity.hpp"
#include "ceocr/types.hpp"

namespace ceocr {

enum class Aggregator { MeanDistance, Sum, Max, Mean };
enum class Estimator { PairwiseDistance, GridKde };

const char* to_string(Aggregator a);
const char* to_string(Estimator e);
Aggregator aggregator_from_string(std::string_view name);
Estimator estimator_from_string(std::string_view name);

// Per-candidate average divergence to every other candidate, one value per
// row of the matrix; each in [0, 1]. Throws DataError when n < 2.
std::vector<double> average_entropy_distances(const DivergenceMatrix& matrix);

// Collapses the disagreement profile into a single consensus entropy value
// in [0, 1]:
//   MeanDistance - mean of the per-candidate averages
//   Max          - largest off-diagonal divergence
//   Mean         - mean off-diagonal divergence
//   Sum          - upper-triangle sum normalized by n(n-1)/2
double aggregate_delta(std::span<const double> e_bar, const DivergenceMatrix& matrix,
                       Aggregator method);

// Normalized inverse weights: w_i proportional to 1/max(e_bar_i, 1e-9).
// All-zero input yields uniform weights.
std::vector<double> inverse_entropy_weights(std::span<const double> e_bar);

// Principal-component projection of the embeddings onto their top-2 variance
// directions. Sign convention: within each output coordinate, the entry of
// largest magnitude (lowest index on ties) is made non-negative. Zero-variance
// directions project to 0, so identical inputs land on the origin.
std::vector<std::array<double, 2>> project_to_plane(
    const std::vector<std::vector<double>>& embeddings);

// Silverman's rule-of-thumb bandwidth for 2-D points:
// sqrt((var_x + var_y) / 2) * n^(-1/6). Returns 0 for coincident points.
double silverman_bandwidth(std::span<const std::array<double, 2>> points);

// Weighted kernel density discretized on a grid.
struct GridDensity {
    std::size_t grid_n = 0;
    std::vector<double> cells; // row-major grid_n*grid_n, sums to 1
    double bandwidth = 0.0;    // base (global) bandwidth actually used
    std::vector<std::array<double, 2>> points;
    std::vector<double> weights;
    double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0; // grid extent
};

struct GridKdeResult {
    double delta = 0.0;
    GridDensity density;
};

// Builds a weighted Gaussian KDE over the points (weights inverse to e_bar),
// evaluates it on a grid_n x grid_n grid covering the bounding box padded by
// three bandwidths, and returns the cell-distribution entropy normalized by
// log(grid_n^2). A zero bandwidth (coincident points, or an explicit 0)
// degenerates to per-cell point masses.
GridKdeResult grid_kde_delta(std::span<const std::array<double, 2>> points,
                             std::span<const double> e_bar, std::size_t grid_n,
                             std::optional<double> bandwidth = std::nullopt,
                             bool adaptive = false);

struct EntropyProfile {
    std::vector<double> e_bar;
    double delta = 0.0;
    Aggregator aggregator = Aggregator::MeanDistance;
    Estimator estimator = Estimator::PairwiseDistance;
};

struct EntropyConfig {
    DivergenceMetric metric = DivergenceMetric::EditDistance;
    Aggregator aggregator = Aggregator::MeanDistance;
    Estimator estimator = Estimator::PairwiseDistance;
    std::size_t grid_n = 64;
    std::optional<double> bandwidth;
    bool adaptive_bandwidth = false;
};

struct ConsensusReport {
    EntropyProfile profile;
    std::vector<double> weights; // inverse-entropy ensemble weights, sum 1
    DivergenceMetric metric = DivergenceMetric::EditDistance;
    std::string matrix_digest;
    std::optional<GridDensity> grid; // populated for the GridKde estimator
};

// Full scoring pass for one sample: divergence matrix, per-candidate average
// distances, consensus entropy delta and ensemble weights. The GridKde
// estimator requires cosine mode (it projects the candidate embeddings).
ConsensusReport consensus_report(const Sample& sample, const EntropyConfig& config);

} // namespace ceocr
