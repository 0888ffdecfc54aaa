#include "ceocr/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ceocr/errors.hpp"

namespace ceocr {

namespace {

constexpr double kWeightFloor = 1e-9; // floor on e_bar before reciprocal weighting

void require_square(const DivergenceMatrix& matrix) {
    if (matrix.n < 2) throw DataError("divergence matrix: needs n >= 2");
    if (matrix.entries.size() != matrix.n * matrix.n) {
        throw DataError("divergence matrix: entry count does not match n");
    }
}

} // namespace

const char* to_string(Aggregator a) {
    switch (a) {
        case Aggregator::MeanDistance: return "mean-distance";
        case Aggregator::Sum: return "sum";
        case Aggregator::Max: return "max";
        case Aggregator::Mean: return "mean";
    }
    return "?";
}

const char* to_string(Estimator e) {
    switch (e) {
        case Estimator::PairwiseDistance: return "pairwise";
        case Estimator::GridKde: return "grid";
    }
    return "?";
}

Aggregator aggregator_from_string(std::string_view name) {
    if (name == "mean-distance") return Aggregator::MeanDistance;
    if (name == "sum") return Aggregator::Sum;
    if (name == "max") return Aggregator::Max;
    if (name == "mean") return Aggregator::Mean;
    throw ConfigError("unknown aggregator '" + std::string(name) +
                      "' (expected mean-distance|sum|max|mean)");
}

Estimator estimator_from_string(std::string_view name) {
    if (name == "pairwise") return Estimator::PairwiseDistance;
    if (name == "grid") return Estimator::GridKde;
    throw ConfigError("unknown estimator '" + std::string(name) + "' (expected pairwise|grid)");
}

std::vector<double> average_entropy_distances(const DivergenceMatrix& matrix) {
    require_square(matrix);
    const std::size_t n = matrix.n;
    std::vector<double> e_bar(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sum += matrix.at(i, j);
        }
        e_bar[i] = sum / static_cast<double>(n - 1);
    }
    return e_bar;
}

double aggregate_delta(std::span<const double> e_bar, const DivergenceMatrix& matrix,
                       Aggregator method) {
    require_square(matrix);
    const std::size_t n = matrix.n;
    double delta = 0.0;
    switch (method) {
        case Aggregator::MeanDistance: {
            if (e_bar.empty()) throw DataError("aggregate: empty e_bar");
            double sum = 0.0;
            for (double e : e_bar) sum += e;
            delta = sum / static_cast<double>(e_bar.size());
            break;
        }
        case Aggregator::Max: {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) delta = std::max(delta, matrix.at(i, j));
            break;
        }
        case Aggregator::Mean: {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) sum += matrix.at(i, j);
            delta = sum / static_cast<double>(n * (n - 1));
            break;
        }
        case Aggregator::Sum: {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) sum += matrix.at(i, j);
            delta = sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
            break;
        }
        default:
            throw ConfigError("unknown aggregation method");
    }
    return std::clamp(delta, 0.0, 1.0);
}

std::vector<double> inverse_entropy_weights(std::span<const double> e_bar) {
    if (e_bar.size() < 2) throw DataError("weights: need at least 2 entries");
    std::vector<double> weights(e_bar.size());
    double total = 0.0;
    for (std::size_t i = 0; i < e_bar.size(); ++i) {
        if (e_bar[i] < 0.0) throw DataError("weights: negative entropy distance");
        weights[i] = 1.0 / std::max(e_bar[i], kWeightFloor);
        total += weights[i];
    }
    for (double& w : weights) w /= total;
    return weights;
}

std::vector<std::array<double, 2>> project_to_plane(
    const std::vector<std::vector<double>>& embeddings) {
    const std::size_t n = embeddings.size();
    if (n < 2) throw DataError("projection: needs at least 2 vectors");
    const std::size_t dim = embeddings[0].size();
    if (dim == 0) throw DataError("projection: empty vectors");
    for (const auto& e : embeddings) {
        if (e.size() != dim) throw DataError("projection: dimension mismatch");
        for (double v : e) {
            if (!std::isfinite(v)) throw DataError("projection: non-finite coordinate");
        }
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dim; ++d)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = embeddings[i][d];
    x.rowwise() -= x.colwise().mean();

    // PCA through the n x n Gram matrix; projections onto component k are
    // u_k * sqrt(lambda_k), so the (often large) feature dimension never
    // materializes.
    const Eigen::MatrixXd gram = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw DataError("projection: eigen decomposition failed");

    const auto& values = solver.eigenvalues();   // ascending
    const auto& vectors = solver.eigenvectors();
    const double lambda_max = std::max(values(static_cast<Eigen::Index>(n - 1)), 0.0);
    const double tol = std::max(1e-12, lambda_max * 1e-12);

    std::vector<std::array<double, 2>> points(n, {0.0, 0.0});
    for (int k = 0; k < 2; ++k) {
        const Eigen::Index idx = static_cast<Eigen::Index>(n - 1) - k;
        if (idx < 0) break;
        const double lambda = values(idx);
        if (lambda <= tol) continue; // zero-variance direction
        Eigen::VectorXd coord = vectors.col(idx) * std::sqrt(lambda);
        // Deterministic sign: largest-magnitude coordinate made positive.
        Eigen::Index strongest = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < coord.size(); ++i) {
            const double mag = std::abs(coord(i));
            if (mag > best) {
                best = mag;
                strongest = i;
            }
        }
        if (coord(strongest) < 0.0) coord = -coord;
        for (std::size_t i = 0; i < n; ++i) points[i][static_cast<std::size_t>(k)] = coord(static_cast<Eigen::Index>(i));
    }
    return points;
}

double silverman_bandwidth(std::span<const std::array<double, 2>> points) {
    const std::size_t n = points.size();
    if (n < 2) throw DataError("bandwidth: needs at least 2 points");
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p[0];
        my += p[1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0.0, vy = 0.0;
    for (const auto& p : points) {
        vx += (p[0] - mx) * (p[0] - mx);
        vy += (p[1] - my) * (p[1] - my);
    }
    vx /= static_cast<double>(n - 1);
    vy /= static_cast<double>(n - 1);
    const double sigma = std::sqrt((vx + vy) / 2.0);
    return sigma * std::pow(static_cast<double>(n), -1.0 / 6.0);
}

namespace {

// Distance to the k-th nearest neighbor, the per-point bandwidth of the
// adaptive mode.
std::vector<double> knn_bandwidths(std::span<const std::array<double, 2>> points) {
    const std::size_t n = points.size();
    const std::size_t k = std::min<std::size_t>(std::max<std::size_t>(2, n / 4), n - 1);
    std::vector<double> result(n, 0.0);
    std::vector<double> dists(n);
    for (std::size_t i = 0; i < n; ++i) {
        dists.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = points[i][0] - points[j][0];
            const double dy = points[i][1] - points[j][1];
            dists.push_back(std::sqrt(dx * dx + dy * dy));
        }
        std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         dists.end());
        result[i] = dists[k - 1];
    }
    return result;
}

} // namespace

GridKdeResult grid_kde_delta(std::span<const std::array<double, 2>> points,
                             std::span<const double> e_bar, std::size_t grid_n,
                             std::optional<double> bandwidth, bool adaptive) {
    if (grid_n < 2) throw DataError("grid kde: grid_n must be >= 2");
    if (points.size() < 2) throw DataError("grid kde: needs at least 2 points");
    if (points.size() != e_bar.size()) throw DataError("grid kde: points/e_bar length mismatch");
    for (const auto& p : points) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) {
            throw DataError("grid kde: non-finite coordinate");
        }
    }

    const std::size_t n = points.size();
    std::vector<double> weights = inverse_entropy_weights(e_bar);

    double base_h = bandwidth ? *bandwidth : silverman_bandwidth(points);
    if (base_h < 0.0 || !std::isfinite(base_h)) throw DataError("grid kde: invalid bandwidth");

    std::vector<double> h(n, base_h);
    if (adaptive && base_h > 0.0) {
        h = knn_bandwidths(points);
        for (double& hi : h) hi = std::max(hi, 1e-12);
    }
    const double h_max = *std::max_element(h.begin(), h.end());
    const bool degenerate = h_max <= 0.0;

    double x0 = points[0][0], x1 = points[0][0];
    double y0 = points[0][1], y1 = points[0][1];
    for (const auto& p : points) {
        x0 = std::min(x0, p[0]);
        x1 = std::max(x1, p[0]);
        y0 = std::min(y0, p[1]);
        y1 = std::max(y1, p[1]);
    }
    x0 -= 3.0 * h_max;
    x1 += 3.0 * h_max;
    y0 -= 3.0 * h_max;
    y1 += 3.0 * h_max;
    if (x1 <= x0) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if (y1 <= y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }

    const double dx = (x1 - x0) / static_cast<double>(grid_n);
    const double dy = (y1 - y0) / static_cast<double>(grid_n);
    std::vector<double> cells(grid_n * grid_n, 0.0);

    if (degenerate) {
        // Point masses: drop each weight into the cell containing its point.
        for (std::size_t i = 0; i < n; ++i) {
            auto clamp_idx = [&](double v, double lo, double step) {
                auto idx = static_cast<long>((v - lo) / step);
                return static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(grid_n) - 1));
            };
            const std::size_t cx = clamp_idx(points[i][0], x0, dx);
            const std::size_t cy = clamp_idx(points[i][1], y0, dy);
            cells[cy * grid_n + cx] += weights[i];
        }
    } else {
        for (std::size_t r = 0; r < grid_n; ++r) {
            const double cy = y0 + (static_cast<double>(r) + 0.5) * dy;
            for (std::size_t c = 0; c < grid_n; ++c) {
                const double cx = x0 + (static_cast<double>(c) + 0.5) * dx;
                double mass = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double hx = h[i];
                    const double ddx = cx - points[i][0];
                    const double ddy = cy - points[i][1];
                    const double q = (ddx * ddx + ddy * ddy) / (2.0 * hx * hx);
                    mass += weights[i] * std::exp(-q) / (2.0 * M_PI * hx * hx);
                }
                cells[r * grid_n + c] = mass;
            }
        }
    }

    double total = 0.0;
    for (double v : cells) total += v; // row-major accumulation
    if (total <= 0.0) throw DataError("grid kde: zero total mass");
    for (double& v : cells) v /= total;

    double entropy = 0.0;
    for (double p : cells) {
        if (p > 0.0) entropy -= p * std::log(p);
    }
    const double norm = std::log(static_cast<double>(grid_n) * static_cast<double>(grid_n));
    const double delta = std::clamp(entropy / norm, 0.0, 1.0);

    GridKdeResult result;
    result.delta = delta;
    result.density.grid_n = grid_n;
    result.density.cells = std::move(cells);
    result.density.bandwidth = base_h;
    result.density.points.assign(points.begin(), points.end());
    result.density.weights = std::move(weights);
    result.density.x0 = x0;
    result.density.x1 = x1;
    result.density.y0 = y0;
    result.density.y1 = y1;
    return result;
}

ConsensusReport consensus_report(const Sample& sample, const EntropyConfig& config) {
    validate_sample(sample);
    DivergenceMatrix matrix = divergence_matrix(sample, config.metric);
    std::vector<double> e_bar = average_entropy_distances(matrix);

    ConsensusReport report;
    report.metric = config.metric;
    report.matrix_digest = matrix_digest(matrix);
    report.profile.aggregator = config.aggregator;
    report.profile.estimator = config.estimator;

    if (config.estimator == Estimator::GridKde) {
        if (config.metric != DivergenceMetric::CosineDistance) {
            throw ConfigError("grid estimator requires the cosine metric (it projects embeddings)");
        }
        std::vector<std::vector<double>> embeddings;
        embeddings.reserve(sample.candidates.size());
        for (const auto& c : sample.candidates) embeddings.push_back(*c.embedding);
        const auto points = project_to_plane(embeddings);
        auto grid = grid_kde_delta(points, e_bar, config.grid_n, config.bandwidth,
                                   config.adaptive_bandwidth);
        report.profile.delta = grid.delta;
        report.grid = std::move(grid.density);
    } else {
        report.profile.delta = aggregate_delta(e_bar, matrix, config.aggregator);
    }

    report.weights = inverse_entropy_weights(e_bar);
    report.profile.e_bar = std::move(e_bar);
    return report;
}

} // namespace ceocr
