#include "visreg/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace visreg {

bool on_scale(double value, Scale scale) noexcept {
    if (!std::isfinite(value)) return false;
    switch (scale) {
    case Scale::Binary:
        return value == 1.0 || value == -1.0;
    case Scale::Stars: {
        if (value < kStarsMin || value > kStarsMax) return false;
        const double steps = value / kStarsStep;
        return steps == std::floor(steps);
    }
    }
    return false;
}

std::string_view to_string(Scale scale) noexcept {
    return scale == Scale::Binary ? "binary" : "stars";
}

Scale parse_scale(std::string_view name) {
    if (name == "binary") return Scale::Binary;
    if (name == "stars") return Scale::Stars;
    throw InvalidArgument("unknown rating scale '" + std::string(name) + "' (expected binary or stars)");
}

RatingMatrix::RatingMatrix(Index num_raters, Index num_items, std::vector<Rating> ratings, Scale scale)
    : num_raters_(num_raters), num_items_(num_items), ratings_(std::move(ratings)), scale_(scale) {
    if (num_raters < 0 || num_items < 0) throw InvalidArgument("negative matrix dimension");
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(ratings_.size());
    for (const Rating& r : ratings_) {
        if (r.rater < 0 || r.rater >= num_raters_ || r.item < 0 || r.item >= num_items_) {
            throw InvalidArgument("rating (" + std::to_string(r.rater) + ", " + std::to_string(r.item) +
                                  ") outside " + std::to_string(num_raters_) + " x " + std::to_string(num_items_));
        }
        if (!on_scale(r.value, scale_)) {
            throw InvalidArgument("rating value " + std::to_string(r.value) + " is not on the " +
                                  std::string(to_string(scale_)) + " scale");
        }
        const auto key = static_cast<std::uint64_t>(r.rater) * static_cast<std::uint64_t>(num_items_) +
                         static_cast<std::uint64_t>(r.item);
        if (!seen.insert(key).second) {
            throw InvalidArgument("duplicate rating for (" + std::to_string(r.rater) + ", " +
                                  std::to_string(r.item) + ")");
        }
    }
}

std::vector<Index> RatingMatrix::received_counts() const {
    std::vector<Index> counts(static_cast<std::size_t>(num_items_), 0);
    for (const Rating& r : ratings_) ++counts[static_cast<std::size_t>(r.item)];
    return counts;
}

std::vector<Index> RatingMatrix::given_counts() const {
    std::vector<Index> counts(static_cast<std::size_t>(num_raters_), 0);
    for (const Rating& r : ratings_) ++counts[static_cast<std::size_t>(r.rater)];
    return counts;
}

FeatureStore::FeatureStore(Matrix vectors) : vectors_(std::move(vectors)) {
    if (!vectors_.allFinite()) throw InvalidArgument("feature vectors contain non-finite entries");
    norms_.resize(static_cast<std::size_t>(vectors_.rows()));
    for (Index i = 0; i < vectors_.rows(); ++i) {
        norms_[static_cast<std::size_t>(i)] = std::sqrt(squared_norm(row(i)));
    }
}

std::span<const double> FeatureStore::row(Index item) const {
    if (item < 0 || item >= vectors_.rows()) {
        throw InvalidArgument("feature row " + std::to_string(item) + " out of range");
    }
    return {vectors_.data() + item * vectors_.cols(), static_cast<std::size_t>(vectors_.cols())};
}

std::vector<Index> FeatureStore::zero_rows() const {
    std::vector<Index> out;
    for (Index i = 0; i < num_items(); ++i) {
        if (is_zero(i)) out.push_back(i);
    }
    return out;
}

FeatureStore FeatureStore::subset(std::span<const Index> items) const {
    Matrix rows(static_cast<Index>(items.size()), dim());
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (items[k] < 0 || items[k] >= num_items()) throw InvalidArgument("feature subset index out of range");
        rows.row(static_cast<Index>(k)) = vectors_.row(items[k]);
    }
    return FeatureStore(std::move(rows));
}

void LatentModel::validate() const {
    if (p.rows() != q.rows()) {
        throw InvalidArgument("latent dimension mismatch: P has " + std::to_string(p.rows()) + " rows, Q has " +
                              std::to_string(q.rows()));
    }
    if (!p.allFinite() || !q.allFinite()) throw InvalidArgument("latent model has non-finite entries");
}

void Hyperparams::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(what);
    };
    require(latent_dim >= 1, "latent dimension must be >= 1");
    require(alpha1 >= 0.0 && std::isfinite(alpha1), "alpha1 must be >= 0");
    require(alpha2 >= 0.0 && std::isfinite(alpha2), "alpha2 must be >= 0");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be > 0");
    require(epochs >= 0, "epochs must be >= 0");
    require(init_scale >= 0.0 && std::isfinite(init_scale), "init scale must be >= 0");
    require(neighbor_k >= 0, "neighbor k must be >= 0");
    require(ridge_lambda >= 0.0 && std::isfinite(ridge_lambda), "ridge lambda must be >= 0");
    require(ridge_kappa >= 0.0 && ridge_kappa <= 1.0, "ridge kappa must lie in [0, 1]");
    require(anchor_neighbors >= 0, "anchor neighbor cap must be >= 0");
    require(gradient_floor >= 0.0, "gradient floor must be >= 0");
}

double predict_rating(const LatentModel& model, Index rater, Index item) {
    if (rater < 0 || rater >= model.num_raters()) {
        throw InvalidArgument("rater index " + std::to_string(rater) + " out of range [0, " +
                              std::to_string(model.num_raters()) + ")");
    }
    if (item < 0 || item >= model.num_items()) {
        throw InvalidArgument("item index " + std::to_string(item) + " out of range [0, " +
                              std::to_string(model.num_items()) + ")");
    }
    return dot(column(model.p, rater), column(model.q, item));
}

double decode_prediction(double raw, Scale scale, double majority) noexcept {
    if (scale == Scale::Binary) {
        if (raw > 0.0) return 1.0;
        if (raw < 0.0) return -1.0;
        return majority;
    }
    return std::clamp(raw, kStarsMin, kStarsMax);
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) noexcept {
    return dot(a, a);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(seed ^ splitmix64(h));
}

}  // namespace visreg
