#pragma once

#include <cmath>
#include <iosfwd>
#include <vector>

#include "visreg/core.hpp"
#include "visreg/features.hpp"

namespace visreg {

struct LossBreakdown {
    double data = 0.0;    ///< 1/2 sum of squared residuals on observed entries
    double l2 = 0.0;      ///< alpha1/2 (|P|^2 + |Q|^2)
    double visual = 0.0;  ///< alpha2/2 sum over graph edges of (S_fg - Q_f.Q_g)^2
    double total = 0.0;
};

struct Gradients {
    Eigen::MatrixXd p;
    Eigen::MatrixXd q;

    double norm() const { return std::sqrt(p.squaredNorm() + q.squaredNorm()); }
};

struct TrainReport {
    LossBreakdown initial;
    /// Loss after each gradient step.
    std::vector<LossBreakdown> epochs;
    int epochs_run = 0;
    double final_gradient_norm = 0.0;
};

struct TrainResult {
    LatentModel model;
    TrainReport report;
};

/// Entries i.i.d. uniform in [-init_scale, init_scale]; P is drawn before Q,
/// both column by column.
LatentModel init_model(const RatingMatrix& ratings, int dim, std::uint64_t seed, double init_scale);

// `graph` may be null, in which case the visual term is absent. The visual
// term is also skipped when alpha2 == 0. Each directed edge f -> g of the
// graph contributes one squared residual.

LossBreakdown loss(const LatentModel& model, const RatingMatrix& ratings, const SimilarityGraph* graph,
                   const Hyperparams& hp);

Gradients gradients(const LatentModel& model, const RatingMatrix& ratings, const SimilarityGraph* graph,
                    const Hyperparams& hp);

/// Loss and gradient from one pass over the data.
std::pair<LossBreakdown, Gradients> loss_and_gradients(const LatentModel& model, const RatingMatrix& ratings,
                                                       const SimilarityGraph* graph, const Hyperparams& hp);

/// Full-batch gradient descent from init_model(ratings, hp.latent_dim,
/// hp.seed, hp.init_scale) for hp.epochs steps at a fixed learning rate.
/// Stops early when the gradient norm falls below hp.gradient_floor.
/// Throws Divergence if the loss becomes non-finite.
TrainResult train(const RatingMatrix& ratings, const SimilarityGraph* graph, const Hyperparams& hp);

/// Same, starting from a given model.
TrainResult train_from(LatentModel start, const RatingMatrix& ratings, const SimilarityGraph* graph,
                       const Hyperparams& hp);

// Model file: "VMF1", u32 d, u32 num_raters, u32 num_items, then P and Q
// each row-major as little-endian float64.
void write_model(std::ostream& out, const LatentModel& model);
LatentModel read_model(std::istream& in);

}  // namespace visreg
