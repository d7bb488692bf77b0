#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "visreg/core.hpp"
#include "visreg/features.hpp"

namespace visreg {

/// Minimizer of |target - N b|^2 + lambda (kappa |diag(gamma) b|^2 + (1 - kappa) |b|^2),
/// i.e. b = [N^T N + lambda (kappa Gamma^T Gamma + (1 - kappa) I)]^-1 N^T target.
/// `neighbors` holds one neighbor per column. Throws SingularSystem when the
/// regularized normal matrix is not positive definite.
Eigen::VectorXd ridge_weights(const Eigen::MatrixXd& neighbors, const Eigen::VectorXd& target,
                              const Eigen::VectorXd& gamma, double lambda, double kappa);

/// The linear operator [N^T N + lambda D]^-1 N^T (n x dim), with D the
/// diagonal regularizer above. Switches to the equivalent dim x dim system
/// when that is smaller and lambda > 0.
Eigen::MatrixXd ridge_operator(const Eigen::MatrixXd& neighbors, const Eigen::VectorXd& gamma, double lambda,
                               double kappa);

/// Neighborhood of one anchor: the other candidate items (ascending index)
/// and their cosine similarity to the anchor.
struct AnchorNeighborhood {
    std::vector<Index> items;
    Eigen::VectorXd similarity;
};

/// Neighbors of `anchor` among `candidates` (all items when empty), excluding
/// the anchor itself. With cap > 0 only the cap most similar are kept.
AnchorNeighborhood anchor_neighborhood(Index anchor, const FeatureStore& features, std::span<const Index> candidates,
                                       int cap);

struct AnchorWeights {
    std::vector<Index> neighbors;
    Eigen::VectorXd beta;
};

/// Reconstruction weights of anchor g's feature vector from its
/// neighborhood, with Gamma = diag(1 - S_gj).
AnchorWeights solve_anchor_weights(Index anchor, const FeatureStore& features, const Hyperparams& hp,
                                   std::span<const Index> candidates = {});

/// Per-anchor projections M_g = N_Q [N_V^T N_V + lambda(...)]^-1 N_V^T from
/// feature space to latent space.
struct AnchorProjections {
    /// Item index (row in the feature store, column in the model) per anchor.
    std::vector<Index> anchors;
    /// latent_dim x feature_dim, one per anchor.
    std::vector<Eigen::MatrixXd> maps;
    Index latent_dim = 0;
    Index feature_dim = 0;
    double lambda = 0.0;
    double kappa = 0.0;

    friend bool operator==(const AnchorProjections&, const AnchorProjections&) = default;
};

/// Builds one projection per anchor. `anchors` defaults to every item; each
/// anchor's neighborhood is every other anchor.
AnchorProjections build_projections(const LatentModel& model, const FeatureStore& features, const Hyperparams& hp,
                                    std::span<const Index> anchors = {});

struct QueryEstimate {
    /// Position in projections.anchors of the most similar anchor.
    std::size_t anchor_slot = 0;
    Index anchor = 0;
    double similarity = 0.0;
    Eigen::VectorXd latent;
};

/// Picks the anchor most similar to `query` (ties to the lowest slot) and
/// returns M_anchor * query.
QueryEstimate regress_query(std::span<const double> query, const AnchorProjections& projections,
                            const FeatureStore& features);

/// decode(P_rater . Q_hat) for a feature vector with no rating history.
double predict_cold(std::span<const double> query, const AnchorProjections& projections,
                    const FeatureStore& features, const LatentModel& model, Index rater, Scale scale,
                    double majority);

// Projection file: "VANR", u32 num_anchors, u32 d, u32 feature_dim,
// f64 lambda, f64 kappa, then per anchor a u64 item index followed by M_g
// row-major as little-endian float64.
void write_projections(std::ostream& out, const AnchorProjections& projections);
AnchorProjections read_projections(std::istream& in);

}  // namespace visreg
