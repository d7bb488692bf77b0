#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "visreg/analysis.hpp"
#include "visreg/core.hpp"
#include "visreg/features.hpp"

namespace visreg {

/// Bijection between external ids and dense indices, assigned in
/// first-appearance order.
class IdMap {
public:
    IdMap() = default;
    explicit IdMap(std::vector<std::uint64_t> ids);

    /// Index of `id`, assigning the next free index if it is new.
    Index intern(std::uint64_t id);
    std::optional<Index> find(std::uint64_t id) const;
    /// Throws InvalidArgument for an unknown id.
    Index at(std::uint64_t id) const;
    std::uint64_t external(Index index) const { return ids_.at(static_cast<std::size_t>(index)); }
    Index size() const noexcept { return static_cast<Index>(ids_.size()); }
    std::span<const std::uint64_t> ids() const noexcept { return ids_; }

    friend bool operator==(const IdMap& a, const IdMap& b) { return a.ids_ == b.ids_; }

private:
    std::vector<std::uint64_t> ids_;
    std::unordered_map<std::uint64_t, Index> index_;
};

struct DatasetBundle {
    RatingMatrix ratings;
    std::optional<FeatureStore> features;
    std::optional<DemographicTable> demographics;
    IdMap raters;
    IdMap items;
    /// Repeated (rater, item) lines collapsed by last-wins during loading.
    std::size_t duplicates = 0;

    /// Ages by dense rater / item index; NaN where no demographics exist.
    std::vector<double> rater_ages() const;
    std::vector<double> item_ages() const;
};

/// MovieLens "UserID::MovieID::Rating::Timestamp" lines, Stars scale.
/// Timestamps are dropped. Repeated (user, movie) pairs keep the last value.
DatasetBundle load_movielens(std::istream& in);
/// Writes the canonical form "user::movie::rating::0".
void save_movielens(std::ostream& out, const DatasetBundle& bundle);

/// CSV "rater_id,item_id,value"; an optional header line is skipped. Binary
/// accepts only -1 and +1.
DatasetBundle load_triplets(std::istream& in, Scale scale);
/// Writes a header line, then one triplet per line in stored order.
void save_triplets(std::ostream& out, const DatasetBundle& bundle);

/// CSV "subject_id,age,group"; an optional header line is skipped.
DemographicTable load_demographics(std::istream& in);
void save_demographics(std::ostream& out, const DemographicTable& table);

/// Reorders feature rows into the bundle's item order. Throws
/// InvalidArgument listing missing items when coverage is incomplete; rows
/// for unknown items are ignored.
void attach_features(DatasetBundle& bundle, const FeatureTable& table);
/// Features in item order, tagged with external item ids.
FeatureTable feature_table(const DatasetBundle& bundle);

struct FilterOptions {
    /// Items that received fewer ratings are removed.
    Index min_received = 10;
    /// Raters that gave fewer ratings are removed.
    Index min_given = 0;
    /// Raters and items whose age lies outside [first, second] are removed.
    std::optional<std::pair<double, double>> age_bounds;
};

struct FilterReport {
    Index removed_items = 0;
    Index removed_raters = 0;
    int rounds = 0;
};

/// Repeats the removals until nothing changes, then reindexes densely in the
/// original relative order. Features and demographics follow the kept ids.
std::pair<DatasetBundle, FilterReport> filter_dataset(const DatasetBundle& bundle, const FilterOptions& options);

// Path helpers: throw IoError when a file cannot be opened.
DatasetBundle load_movielens_file(const std::filesystem::path& path);
DatasetBundle load_triplets_file(const std::filesystem::path& path, Scale scale);
DemographicTable load_demographics_file(const std::filesystem::path& path);
FeatureTable load_features_file(const std::filesystem::path& path);

}  // namespace visreg
