#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "visreg/core.hpp"

namespace visreg {

/// How much of a test item's history is revealed before prediction.
struct Budget {
    enum class Kind { Visual, Known, FullHistory };
    Kind kind = Kind::Visual;
    Index known = 0;  ///< only for Kind::Known

    static Budget visual() { return {Kind::Visual, 0}; }
    static Budget ratings(Index k) { return k == 0 ? visual() : Budget{Kind::Known, k}; }
    static Budget full() { return {Kind::FullHistory, 0}; }

    /// "0"/"visual", a positive count, or "full".
    static Budget parse(std::string_view text);
    std::string label() const;

    friend bool operator==(const Budget&, const Budget&) = default;
};

struct TestItem {
    Index item = 0;
    /// Revealed ratings, fed to training.
    std::vector<Rating> known;
    /// Held-out ratings, used only for scoring.
    std::vector<Rating> held_out;
    /// Remaining non-held-out ratings that the budget did not reveal.
    std::vector<Rating> unused;
    /// Fewer ratings were available than the budget asked for.
    bool short_of_budget = false;

    friend bool operator==(const TestItem&, const TestItem&) = default;
};

struct ExcludedItem {
    Index item = 0;
    Index received = 0;

    friend bool operator==(const ExcludedItem&, const ExcludedItem&) = default;
};

struct EvalPlan {
    std::vector<Index> train_raters;
    std::vector<Index> train_items;
    std::vector<TestItem> test_items;
    std::vector<ExcludedItem> excluded;
    Budget budget;
    std::uint64_t seed = 0;

    /// Every train-item rating plus every revealed test rating.
    RatingMatrix training_ratings(const RatingMatrix& all) const;
    std::vector<Rating> held_out() const;

    friend bool operator==(const EvalPlan&, const EvalPlan&) = default;
};

inline constexpr Index kMinRatingsPerItem = 2;

/// Seeded split: half the eligible items (rounded up) train, the rest test.
/// For each test item a uniformly random floor(n/2) of its ratings is held
/// out; the budget then reveals the first K of the remainder in shuffled
/// order. Items with fewer than `min_ratings` ratings are excluded and
/// reported.
EvalPlan make_plan(const RatingMatrix& ratings, Budget budget, std::uint64_t seed,
                   Index min_ratings = kMinRatingsPerItem);

/// Percentage of exact matches.
double accuracy(std::span<const double> predicted, std::span<const double> truth);
double mae(std::span<const double> predicted, std::span<const double> truth);
/// Sample Pearson correlation. Throws InvalidArgument if either side is constant.
double pearson(std::span<const double> predicted, std::span<const double> truth);

/// Most frequent value; ties go to the smaller value.
double baseline_majority(std::span<const Rating> ratings);
double baseline_majority(const RatingMatrix& ratings);

/// n uniform draws: +/-1 with equal probability for Binary, continuous
/// uniform on [0.5, 5] for Stars.
std::vector<double> baseline_random(Scale scale, std::uint64_t seed, std::size_t n);

enum class Method { MF, MFVisReg };
std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view name);

struct ExperimentConfig {
    Method method = Method::MFVisReg;
    Budget budget = Budget::full();
    /// Replace test items' latent factors with the anchored-regression estimate.
    bool coldstart = false;
    std::uint64_t seed = 1;
    Index min_ratings = kMinRatingsPerItem;
};

struct ExperimentReport {
    Method method = Method::MF;
    Budget budget;
    std::uint64_t seed = 0;
    /// NaN for Stars data, where exact-match accuracy is not meaningful.
    double accuracy = 0.0;
    double mae = 0.0;
    /// NaN when undefined (constant predictions).
    double pearson = 0.0;
    double majority = 0.0;
    std::size_t held_out = 0;
    std::size_t train_ratings = 0;
};

/// Splits with make_plan, trains on the training split (train items plus
/// revealed test ratings) and scores the held-out ratings. MFVisReg requires
/// features; MF ignores them. Coldstart requires features. Seeds for the
/// split and the initialization are derived from config.seed.
ExperimentReport run_experiment(const RatingMatrix& ratings, const FeatureStore* features, const Hyperparams& hp,
                                const ExperimentConfig& config);

// Report schema: method,budget,seed,accuracy,mae,pearson. Rows are written
// in the given order; NaN is written as an empty CSV field / JSON null.
void write_report_csv(std::ostream& out, std::span<const ExperimentReport> rows);
void write_report_json(std::ostream& out, std::span<const ExperimentReport> rows);

/// Canonical row order: method, then budget (visual < K ascending < full), then seed.
void sort_reports(std::vector<ExperimentReport>& rows);

}  // namespace visreg
