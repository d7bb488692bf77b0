#pragma once

#include <cstdint>

#include "visreg/core.hpp"

namespace visreg {

/// Planted low-rank preference data with side features that are a noisy
/// affine image of the true item factors.
struct SyntheticConfig {
    Index raters = 400;
    Index items = 200;
    int true_dim = 3;
    /// Probability that a (rater, item) pair is observed.
    double density = 0.5;
    Index feature_dim = 16;
    /// Standard deviation of i.i.d. Gaussian noise added to each feature entry.
    double feature_noise = 0.1;
    /// Constant added to every feature vector.
    double feature_offset = 0.0;
    /// Standard deviation of Gaussian noise added to the true score.
    double rating_noise = 0.0;
    /// Added to every true score; shifts the Binary class balance.
    double score_bias = 0.0;
    Scale scale = Scale::Binary;
    std::uint64_t seed = 1;
};

struct SyntheticData {
    RatingMatrix ratings;
    FeatureStore features;
    Eigen::MatrixXd true_p;  ///< true_dim x raters
    Eigen::MatrixXd true_q;  ///< true_dim x items
    Eigen::MatrixXd feature_map;  ///< feature_dim x true_dim
};

/// Scores are true_p^T true_q / sqrt(true_dim) plus noise and bias. Binary
/// ratings are the sign of the score (ties to +1); Stars ratings map the
/// score to 3 + 1.5 * score, rounded to the half-star grid and clamped.
SyntheticData make_synthetic(const SyntheticConfig& config);

/// 600 raters x 200 items at 60% density, rank 3, 16-dim features with
/// noise 0.5 and a slight positive class bias. Used by the benchmark suite
/// and `visreg evaluate --synthetic`.
SyntheticConfig benchmark_config(std::uint64_t seed);

}  // namespace visreg
