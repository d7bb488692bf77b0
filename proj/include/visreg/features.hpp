#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "visreg/core.hpp"

namespace visreg {

/// Cosine similarity a.b / (|a||b|), clamped to [-1, 1]. Throws
/// InvalidArgument on a zero-norm input or a dimension mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Same as above for two stored rows, using the cached norms.
double cosine_similarity(const FeatureStore& features, Index f, Index g);

struct Neighbor {
    Index item = 0;
    double similarity = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Per-item neighbor lists, sorted by similarity descending with ties going
/// to the lower index. k == 0 means every other item is listed.
struct SimilarityGraph {
    Index num_items = 0;
    Index k = 0;
    std::vector<std::vector<Neighbor>> neighbors;

    std::size_t edge_count() const noexcept;
};

/// Exact k-nearest-neighbor graph under cosine similarity. Throws
/// InvalidArgument naming the first zero-norm row.
SimilarityGraph build_similarity_graph(const FeatureStore& features, Index k);

inline constexpr int kDefaultNeighborK = 50;
inline constexpr double kDefaultPcaEnergy = 0.99;

/// Mean-centering plus an orthonormal basis (one component per row).
struct PcaReducer {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;
    /// Variance along each retained component, descending.
    Eigen::VectorXd variances;
    /// Fraction of total variance retained.
    double energy_kept = 0.0;
    /// Set when the input had no variance at all; such a reducer has zero
    /// components.
    bool degenerate = false;

    Index components() const noexcept { return basis.rows(); }
    Index input_dim() const noexcept { return mean.size(); }
};

/// Smallest number of principal components whose explained-variance ratio
/// reaches `energy`. Each component is sign-normalized so that its
/// largest-magnitude coefficient is positive.
PcaReducer fit_pca(const FeatureStore& features, double energy = kDefaultPcaEnergy);

/// PCA with a fixed component count (clamped to the input dimension).
PcaReducer fit_pca_components(const FeatureStore& features, Index components);

/// Rows (v - mean) projected onto the basis.
FeatureStore apply_pca(const PcaReducer& reducer, const FeatureStore& features);

/// Inverse map back to the input space.
FeatureStore reconstruct_pca(const PcaReducer& reducer, const FeatureStore& projected);

/// Feature vectors together with their external item ids, as read from or
/// written to a feature file.
struct FeatureTable {
    std::vector<std::uint64_t> ids;
    FeatureStore store;
};

// Text format: a "#dim D" header, then "item_id<TAB>f1,f2,...,fD" per line.
FeatureTable read_features_text(std::istream& in);
void write_features_text(std::ostream& out, const FeatureTable& table);

// Binary format: "VFEA", u32 count, u32 dim, then per row a u64 item id
// followed by dim float32 values. Little-endian throughout.
FeatureTable read_features_binary(std::istream& in);
void write_features_binary(std::ostream& out, const FeatureTable& table);

/// Dispatches on the leading magic bytes.
FeatureTable read_features(std::istream& in);

}  // namespace visreg
