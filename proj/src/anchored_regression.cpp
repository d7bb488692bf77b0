#include "visreg/anchored_regression.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include <Eigen/Cholesky>

#include "visreg/binary_io.hpp"
#include "visreg/parallel.hpp"

namespace visreg {

namespace {

// Relative pivot floor below which a Cholesky factor is treated as singular.
constexpr double kPivotFloor = 1e-12;

Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    bool ok = llt.info() == Eigen::Success;
    if (ok && a.rows() > 0) {
        const double scale = a.diagonal().cwiseAbs().maxCoeff();
        const Eigen::VectorXd pivots = llt.matrixLLT().diagonal().cwiseAbs2();
        ok = scale > 0.0 && pivots.minCoeff() > kPivotFloor * scale;
    }
    if (!ok) {
        throw SingularSystem(
            "regularized neighbor system is singular (rank-deficient neighbors); use ridge lambda > 0");
    }
    return llt;
}

}  // namespace

Eigen::MatrixXd ridge_operator(const Eigen::MatrixXd& neighbors, const Eigen::VectorXd& gamma, double lambda,
                               double kappa) {
    const Index n = neighbors.cols();
    const Index dim = neighbors.rows();
    if (gamma.size() != n) throw InvalidArgument("gamma must have one entry per neighbor");
    if (!(lambda >= 0.0)) throw InvalidArgument("ridge lambda must be >= 0");
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw InvalidArgument("ridge kappa must lie in [0, 1]");
    if (n == 0) return Eigen::MatrixXd(0, dim);

    const Eigen::VectorXd weights = (kappa * gamma.array().square() + (1.0 - kappa)).matrix();

    if (lambda > 0.0 && dim < n && (weights.array() > 0.0).all()) {
        // (N^T N + lambda W)^-1 N^T == W^-1 N^T (N W^-1 N^T + lambda I)^-1
        const Eigen::VectorXd inv_w = weights.cwiseInverse();
        Eigen::MatrixXd small = neighbors * inv_w.asDiagonal() * neighbors.transpose();
        small.diagonal().array() += lambda;
        const auto llt = factorize(small);
        const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
        return inv_w.asDiagonal() * (neighbors.transpose() * inv);
    }

    Eigen::MatrixXd normal = neighbors.transpose() * neighbors;
    normal.diagonal() += lambda * weights;
    const auto llt = factorize(normal);
    return llt.solve(neighbors.transpose());
}

Eigen::VectorXd ridge_weights(const Eigen::MatrixXd& neighbors, const Eigen::VectorXd& target,
                              const Eigen::VectorXd& gamma, double lambda, double kappa) {
    if (target.size() != neighbors.rows()) throw InvalidArgument("target dimension does not match neighbors");
    return ridge_operator(neighbors, gamma, lambda, kappa) * target;
}

AnchorNeighborhood anchor_neighborhood(Index anchor, const FeatureStore& features, std::span<const Index> candidates,
                                       int cap) {
    if (anchor < 0 || anchor >= features.num_items()) {
        throw InvalidArgument("anchor " + std::to_string(anchor) + " out of range");
    }
    if (features.is_zero(anchor)) {
        throw InvalidArgument("anchor item " + std::to_string(anchor) + " has a zero-norm feature vector");
    }

    std::vector<Index> pool;
    if (candidates.empty()) {
        pool.resize(static_cast<std::size_t>(features.num_items()));
        std::iota(pool.begin(), pool.end(), Index{0});
    } else {
        pool.assign(candidates.begin(), candidates.end());
        std::sort(pool.begin(), pool.end());
    }

    std::vector<Neighbor> scored;
    scored.reserve(pool.size());
    for (Index g : pool) {
        if (g != anchor) scored.push_back({g, cosine_similarity(features, anchor, g)});
    }
    if (cap > 0 && scored.size() > static_cast<std::size_t>(cap)) {
        std::partial_sort(scored.begin(), scored.begin() + cap, scored.end(), [](const Neighbor& a, const Neighbor& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.item < b.item;
        });
        scored.resize(static_cast<std::size_t>(cap));
        std::sort(scored.begin(), scored.end(), [](const Neighbor& a, const Neighbor& b) { return a.item < b.item; });
    }

    AnchorNeighborhood hood;
    hood.items.reserve(scored.size());
    hood.similarity.resize(static_cast<Index>(scored.size()));
    for (std::size_t j = 0; j < scored.size(); ++j) {
        hood.items.push_back(scored[j].item);
        hood.similarity[static_cast<Index>(j)] = scored[j].similarity;
    }
    return hood;
}

namespace {

Eigen::MatrixXd stack_features(const FeatureStore& features, const std::vector<Index>& items) {
    Eigen::MatrixXd n(features.dim(), static_cast<Index>(items.size()));
    for (std::size_t j = 0; j < items.size(); ++j) n.col(static_cast<Index>(j)) = features.vectors().row(items[j]).transpose();
    return n;
}

Eigen::VectorXd feature_vector(const FeatureStore& features, Index item) {
    return features.vectors().row(item).transpose();
}

}  // namespace

AnchorWeights solve_anchor_weights(Index anchor, const FeatureStore& features, const Hyperparams& hp,
                                   std::span<const Index> candidates) {
    if (features.num_items() < 2) throw InvalidArgument("anchored regression needs at least 2 items");
    AnchorNeighborhood hood = anchor_neighborhood(anchor, features, candidates, hp.anchor_neighbors);
    if (hood.items.empty()) throw InvalidArgument("anchor " + std::to_string(anchor) + " has no neighbors");

    const Eigen::MatrixXd n = stack_features(features, hood.items);
    const Eigen::VectorXd gamma = (1.0 - hood.similarity.array()).matrix();
    AnchorWeights out;
    out.beta = ridge_weights(n, feature_vector(features, anchor), gamma, hp.ridge_lambda, hp.ridge_kappa);
    out.neighbors = std::move(hood.items);
    return out;
}

AnchorProjections build_projections(const LatentModel& model, const FeatureStore& features, const Hyperparams& hp,
                                    std::span<const Index> anchors) {
    if (model.num_items() != features.num_items()) {
        throw InvalidArgument("model has " + std::to_string(model.num_items()) + " items but features cover " +
                              std::to_string(features.num_items()));
    }
    AnchorProjections out;
    if (anchors.empty()) {
        out.anchors.resize(static_cast<std::size_t>(features.num_items()));
        std::iota(out.anchors.begin(), out.anchors.end(), Index{0});
    } else {
        out.anchors.assign(anchors.begin(), anchors.end());
    }
    if (out.anchors.size() < 2) throw InvalidArgument("anchored regression needs at least 2 anchors");
    out.latent_dim = model.dim();
    out.feature_dim = features.dim();
    out.lambda = hp.ridge_lambda;
    out.kappa = hp.ridge_kappa;
    out.maps.resize(out.anchors.size());

    parallel_for(out.anchors.size(), [&](std::size_t slot) {
        const Index g = out.anchors[slot];
        const AnchorNeighborhood hood = anchor_neighborhood(g, features, out.anchors, hp.anchor_neighbors);
        const Eigen::MatrixXd n_v = stack_features(features, hood.items);
        Eigen::MatrixXd n_q(model.dim(), static_cast<Index>(hood.items.size()));
        for (std::size_t j = 0; j < hood.items.size(); ++j) n_q.col(static_cast<Index>(j)) = model.q.col(hood.items[j]);
        const Eigen::VectorXd gamma = (1.0 - hood.similarity.array()).matrix();
        out.maps[slot] = n_q * ridge_operator(n_v, gamma, hp.ridge_lambda, hp.ridge_kappa);
    });
    return out;
}

QueryEstimate regress_query(std::span<const double> query, const AnchorProjections& projections,
                            const FeatureStore& features) {
    if (static_cast<Index>(query.size()) != projections.feature_dim || features.dim() != projections.feature_dim) {
        throw InvalidArgument("query dimension " + std::to_string(query.size()) + " does not match projections (" +
                              std::to_string(projections.feature_dim) + ")");
    }
    if (squared_norm(query) == 0.0) throw InvalidArgument("query feature vector has zero norm");
    if (projections.anchors.empty()) throw InvalidArgument("no anchors");

    QueryEstimate best;
    best.similarity = -2.0;
    for (std::size_t slot = 0; slot < projections.anchors.size(); ++slot) {
        const double s = cosine_similarity(query, features.row(projections.anchors[slot]));
        if (s > best.similarity) {
            best.similarity = s;
            best.anchor_slot = slot;
        }
    }
    best.anchor = projections.anchors[best.anchor_slot];
    const Eigen::Map<const Eigen::VectorXd> v(query.data(), static_cast<Index>(query.size()));
    best.latent = projections.maps[best.anchor_slot] * v;
    return best;
}

double predict_cold(std::span<const double> query, const AnchorProjections& projections,
                    const FeatureStore& features, const LatentModel& model, Index rater, Scale scale,
                    double majority) {
    if (rater < 0 || rater >= model.num_raters()) {
        throw InvalidArgument("rater index " + std::to_string(rater) + " out of range");
    }
    const QueryEstimate est = regress_query(query, projections, features);
    if (est.latent.size() != model.dim()) throw InvalidArgument("projection latent dimension does not match model");
    const double raw = dot(column(model.p, rater), {est.latent.data(), static_cast<std::size_t>(est.latent.size())});
    return decode_prediction(raw, scale, majority);
}

void write_projections(std::ostream& out, const AnchorProjections& projections) {
    io::write_magic(out, "VANR");
    io::write_u32(out, static_cast<std::uint32_t>(projections.anchors.size()));
    io::write_u32(out, static_cast<std::uint32_t>(projections.latent_dim));
    io::write_u32(out, static_cast<std::uint32_t>(projections.feature_dim));
    io::write_f64(out, projections.lambda);
    io::write_f64(out, projections.kappa);
    for (std::size_t slot = 0; slot < projections.anchors.size(); ++slot) {
        const Eigen::MatrixXd& m = projections.maps[slot];
        if (m.rows() != projections.latent_dim || m.cols() != projections.feature_dim) {
            throw InvalidArgument("projection matrix has the wrong shape");
        }
        io::write_u64(out, static_cast<std::uint64_t>(projections.anchors[slot]));
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) io::write_f64(out, m(r, c));
    }
}

AnchorProjections read_projections(std::istream& in) {
    io::expect_magic(in, "VANR");
    AnchorProjections p;
    const std::uint32_t count = io::read_u32(in);
    p.latent_dim = io::read_u32(in);
    p.feature_dim = io::read_u32(in);
    p.lambda = io::read_f64(in);
    p.kappa = io::read_f64(in);
    p.anchors.reserve(count);
    p.maps.reserve(count);
    for (std::uint32_t slot = 0; slot < count; ++slot) {
        p.anchors.push_back(static_cast<Index>(io::read_u64(in)));
        Eigen::MatrixXd m(p.latent_dim, p.feature_dim);
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) m(r, c) = io::read_f64(in);
        if (!m.allFinite()) throw InvalidArgument("projection file contains non-finite entries");
        p.maps.push_back(std::move(m));
    }
    io::expect_eof(in);
    return p;
}

}  // namespace visreg
