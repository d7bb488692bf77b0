#include "visreg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace visreg {

namespace {

class Gaussian {
public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

    // Box-Muller on the portable 53-bit uniform, so draws do not depend on
    // the standard library's distribution implementation.
    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = unit_uniform(rng_());
        const double u2 = unit_uniform(rng_());
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    double uniform() { return unit_uniform(rng_()); }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

Eigen::MatrixXd gaussian_matrix(Gaussian& g, Index rows, Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = g();
    return m;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticConfig& config) {
    if (config.raters < 1 || config.items < 1 || config.true_dim < 1 || config.feature_dim < 1) {
        throw InvalidArgument("synthetic dimensions must be positive");
    }
    if (!(config.density > 0.0 && config.density <= 1.0)) throw InvalidArgument("density must lie in (0, 1]");

    Gaussian factors(derive_seed(config.seed, "synthetic/factors"));
    Gaussian mask(derive_seed(config.seed, "synthetic/mask"));
    Gaussian noise(derive_seed(config.seed, "synthetic/noise"));
    Gaussian feat(derive_seed(config.seed, "synthetic/features"));

    SyntheticData data;
    data.true_p = gaussian_matrix(factors, config.true_dim, config.raters);
    data.true_q = gaussian_matrix(factors, config.true_dim, config.items);
    const double norm = 1.0 / std::sqrt(static_cast<double>(config.true_dim));

    std::vector<Rating> ratings;
    for (Index m = 0; m < config.raters; ++m) {
        for (Index f = 0; f < config.items; ++f) {
            if (mask.uniform() >= config.density) continue;
            double score = norm * data.true_p.col(m).dot(data.true_q.col(f)) + config.score_bias;
            if (config.rating_noise > 0.0) score += config.rating_noise * noise();
            double value = 0.0;
            if (config.scale == Scale::Binary) {
                value = score >= 0.0 ? 1.0 : -1.0;
            } else {
                value = std::clamp(std::round((3.0 + 1.5 * score) / kStarsStep) * kStarsStep, kStarsMin, kStarsMax);
            }
            ratings.push_back({m, f, value});
        }
    }
    data.ratings = RatingMatrix(config.raters, config.items, std::move(ratings), config.scale);

    data.feature_map = gaussian_matrix(feat, config.feature_dim, config.true_dim);
    FeatureStore::Matrix v(config.items, config.feature_dim);
    for (Index f = 0; f < config.items; ++f) {
        const Eigen::VectorXd clean = data.feature_map * data.true_q.col(f);
        for (Index j = 0; j < config.feature_dim; ++j) {
            v(f, j) = clean[j] + config.feature_offset + config.feature_noise * feat();
        }
    }
    data.features = FeatureStore(std::move(v));
    return data;
}

SyntheticConfig benchmark_config(std::uint64_t seed) {
    SyntheticConfig c;
    c.raters = 600;
    c.items = 200;
    c.true_dim = 3;
    c.density = 0.6;
    c.feature_dim = 16;
    c.feature_noise = 0.5;
    c.score_bias = 0.1;
    c.seed = seed;
    return c;
}

}  // namespace visreg
