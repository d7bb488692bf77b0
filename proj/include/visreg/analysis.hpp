#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "visreg/core.hpp"
#include "visreg/features.hpp"

namespace visreg {

struct Demographics {
    std::uint64_t id = 0;
    double age = 0.0;
    std::string group;

    friend bool operator==(const Demographics&, const Demographics&) = default;
};

/// Age and group per subject, keyed by external id. Raters and rated
/// subjects share one table.
class DemographicTable {
public:
    DemographicTable() = default;
    explicit DemographicTable(std::vector<Demographics> rows);

    const Demographics* find(std::uint64_t id) const;
    std::span<const Demographics> rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }

    friend bool operator==(const DemographicTable& a, const DemographicTable& b) { return a.rows_ == b.rows_; }

private:
    std::vector<Demographics> rows_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Hotness of every item: the fraction of its received Binary ratings that
/// are positive. NaN for items with no ratings.
std::vector<double> hotness(const RatingMatrix& ratings);

struct AgePreferenceTable {
    std::vector<double> edges;
    /// Ratings and positive ratings from rater bin i toward subject bin j.
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> counts;
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> positives;

    Index bins() const noexcept { return counts.rows(); }
    /// Percentage of positive ratings, or nullopt when the cell is empty.
    std::optional<double> percent(Index rater_bin, Index subject_bin) const;
};

/// Bin index for `age` given ascending edges e0 < e1 < ... < en. Bins are
/// [e_i, e_i+1), the last one closed. Nullopt outside [e0, en].
std::optional<Index> age_bin(double age, std::span<const double> edges);

/// Cross-tab of positive-rating rates by rater age bin and subject age bin.
/// `rater_ages` and `item_ages` are indexed by dense index; a rating whose
/// rater or item age is NaN or outside the edges is an error.
AgePreferenceTable preference_by_age(const RatingMatrix& ratings, std::span<const double> rater_ages,
                                     std::span<const double> item_ages, std::span<const double> edges);

/// For each neighborhood size n, the percentage of subjects whose n nearest
/// neighbors (by `graph`) have a mean hotness strictly above their own.
/// Every subject needs at least max(sizes) neighbors in the graph; n must be
/// below the population size.
std::vector<double> hotness_paradox_curve(std::span<const double> subject_hotness, const SimilarityGraph& graph,
                                          std::span<const Index> sizes);

/// Cosine k-NN graph over the columns of the item factor matrix Q.
SimilarityGraph latent_similarity_graph(const LatentModel& model, Index k);

struct LatentPoint {
    double x = 0.0;
    double y = 0.0;
    double label = 0.0;
};

/// First two principal components of the factor columns (one point per
/// column), with the PCA sign convention of fit_pca. `labels` is empty or
/// has one value per column; missing labels are NaN.
std::vector<LatentPoint> export_latent_2d(const Eigen::MatrixXd& factors, std::span<const double> labels = {});

// CSV writers. NaN and missing cells are written as empty fields.

/// rater_bin,subject_bin,ratings,positives,percent
void write_age_preference_csv(std::ostream& out, const AgePreferenceTable& table);

struct ParadoxRow {
    std::string variant;  ///< "feature" or "latent"
    Index size = 0;
    double percent = 0.0;
};
/// variant,size,percent
void write_paradox_csv(std::ostream& out, std::span<const ParadoxRow> rows);

/// index,x,y,label
void write_latent_csv(std::ostream& out, std::span<const LatentPoint> points,
                      std::span<const std::uint64_t> ids = {});

}  // namespace visreg
