#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "visreg/error.hpp"

namespace visreg {

using Index = Eigen::Index;

enum class Scale { Binary, Stars };

inline constexpr double kStarsMin = 0.5;
inline constexpr double kStarsMax = 5.0;
inline constexpr double kStarsStep = 0.5;

/// True when `value` is a legal rating: +/-1 for Binary, a half-star in
/// [0.5, 5] for Stars.
bool on_scale(double value, Scale scale) noexcept;

std::string_view to_string(Scale scale) noexcept;
/// Accepts "binary" or "stars".
Scale parse_scale(std::string_view name);

struct Rating {
    Index rater = 0;
    Index item = 0;
    double value = 0.0;

    friend bool operator==(const Rating&, const Rating&) = default;
};

/// Observed entries of the rater x item matrix. Construction enforces that
/// each (rater, item) pair occurs once, indices are in range and every value
/// is on the declared scale. Immutable afterwards.
class RatingMatrix {
public:
    RatingMatrix() = default;
    RatingMatrix(Index num_raters, Index num_items, std::vector<Rating> ratings, Scale scale);

    Index num_raters() const noexcept { return num_raters_; }
    Index num_items() const noexcept { return num_items_; }
    Scale scale() const noexcept { return scale_; }
    std::span<const Rating> ratings() const noexcept { return ratings_; }
    std::size_t size() const noexcept { return ratings_.size(); }
    bool empty() const noexcept { return ratings_.empty(); }

    /// Number of ratings each item received.
    std::vector<Index> received_counts() const;
    /// Number of ratings each rater gave.
    std::vector<Index> given_counts() const;

    friend bool operator==(const RatingMatrix&, const RatingMatrix&) = default;

private:
    Index num_raters_ = 0;
    Index num_items_ = 0;
    std::vector<Rating> ratings_;
    Scale scale_ = Scale::Binary;
};

/// Dense per-item feature vectors, one row per item, with cached row norms.
class FeatureStore {
public:
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    FeatureStore() = default;
    explicit FeatureStore(Matrix vectors);

    Index num_items() const noexcept { return vectors_.rows(); }
    Index dim() const noexcept { return vectors_.cols(); }
    const Matrix& vectors() const noexcept { return vectors_; }
    std::span<const double> row(Index item) const;
    double norm(Index item) const { return norms_.at(static_cast<std::size_t>(item)); }
    bool is_zero(Index item) const { return norm(item) == 0.0; }
    /// Indices of rows whose norm is exactly zero.
    std::vector<Index> zero_rows() const;

    /// Rows `items`, in that order.
    FeatureStore subset(std::span<const Index> items) const;

private:
    Matrix vectors_;
    std::vector<double> norms_;
};

/// Paired factor matrices: column m of `p` is rater m's preference vector,
/// column f of `q` is item f's appearance vector. R is approximated by P^T Q.
struct LatentModel {
    Eigen::MatrixXd p;
    Eigen::MatrixXd q;

    Index dim() const noexcept { return p.rows(); }
    Index num_raters() const noexcept { return p.cols(); }
    Index num_items() const noexcept { return q.cols(); }

    /// Throws InvalidArgument when the two matrices disagree on the latent
    /// dimension or contain a non-finite entry.
    void validate() const;
};

inline constexpr int kDefaultLatentDim = 20;

struct Hyperparams {
    int latent_dim = kDefaultLatentDim;
    double alpha1 = 0.1;
    double alpha2 = 0.1;
    double learning_rate = 0.005;
    int epochs = 200;
    std::uint64_t seed = 1;
    double init_scale = 0.1;
    /// Neighbors per item in the visual regularizer; 0 sums over all pairs.
    int neighbor_k = 50;
    double ridge_lambda = 0.1;
    double ridge_kappa = 0.5;
    /// Cap on the anchored-regression neighborhood; 0 uses every other anchor.
    int anchor_neighbors = 0;
    /// Training stops early once the full gradient norm drops below this.
    double gradient_floor = 1e-8;

    void validate() const;
};

/// P_rater^T Q_item, unclamped.
double predict_rating(const LatentModel& model, Index rater, Index item);

/// Binary: sign of `raw`, with 0 mapped to `majority`. Stars: `raw` clamped
/// to [0.5, 5] without rounding.
double decode_prediction(double raw, Scale scale, double majority) noexcept;

/// Sequential dot product; summation order is fixed so that results are
/// reproducible bit for bit.
double dot(std::span<const double> a, std::span<const double> b) noexcept;
double squared_norm(std::span<const double> a) noexcept;

inline std::span<const double> column(const Eigen::MatrixXd& m, Index c) {
    return {m.data() + c * m.rows(), static_cast<std::size_t>(m.rows())};
}

/// Deterministic seed for a named random stream, so that e.g. the split
/// and the factor initialization draw independently from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double unit_uniform(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace visreg
