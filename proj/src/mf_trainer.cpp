#include "visreg/mf_trainer.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "visreg/binary_io.hpp"

namespace visreg {

LatentModel init_model(const RatingMatrix& ratings, int dim, std::uint64_t seed, double init_scale) {
    if (dim < 1) throw InvalidArgument("latent dimension must be >= 1");
    if (!(init_scale >= 0.0)) throw InvalidArgument("init scale must be >= 0");
    std::mt19937_64 rng(seed);
    auto draw = [&] { return init_scale * (2.0 * unit_uniform(rng()) - 1.0); };

    LatentModel m;
    m.p.resize(dim, ratings.num_raters());
    m.q.resize(dim, ratings.num_items());
    for (Index c = 0; c < m.p.cols(); ++c)
        for (Index r = 0; r < dim; ++r) m.p(r, c) = draw();
    for (Index c = 0; c < m.q.cols(); ++c)
        for (Index r = 0; r < dim; ++r) m.q(r, c) = draw();
    return m;
}

namespace {

void check_shapes(const LatentModel& model, const RatingMatrix& ratings, const SimilarityGraph* graph) {
    if (model.p.rows() != model.q.rows()) throw InvalidArgument("P and Q disagree on the latent dimension");
    if (model.num_raters() != ratings.num_raters() || model.num_items() != ratings.num_items()) {
        throw InvalidArgument("model is " + std::to_string(model.num_raters()) + " x " +
                              std::to_string(model.num_items()) + " but ratings are " +
                              std::to_string(ratings.num_raters()) + " x " + std::to_string(ratings.num_items()));
    }
    if (graph != nullptr && graph->num_items != model.num_items()) {
        throw InvalidArgument("similarity graph covers " + std::to_string(graph->num_items) + " items, model has " +
                              std::to_string(model.num_items()));
    }
}

double sum_of_squares(const Eigen::MatrixXd& m) {
    return squared_norm({m.data(), static_cast<std::size_t>(m.size())});
}

bool uses_visual(const SimilarityGraph* graph, const Hyperparams& hp) {
    return graph != nullptr && hp.alpha2 != 0.0;
}

template <bool WithGradient>
LossBreakdown evaluate(const LatentModel& model, const RatingMatrix& ratings, const SimilarityGraph* graph,
                       const Hyperparams& hp, Gradients* grad) {
    check_shapes(model, ratings, graph);
    if constexpr (WithGradient) {
        grad->p = Eigen::MatrixXd::Zero(model.p.rows(), model.p.cols());
        grad->q = Eigen::MatrixXd::Zero(model.q.rows(), model.q.cols());
    }

    double residuals = 0.0;
    for (const Rating& r : ratings.ratings()) {
        const double err = dot(column(model.p, r.rater), column(model.q, r.item)) - r.value;
        residuals += err * err;
        if constexpr (WithGradient) {
            grad->p.col(r.rater) += err * model.q.col(r.item);
            grad->q.col(r.item) += err * model.p.col(r.rater);
        }
    }

    double visual = 0.0;
    if (uses_visual(graph, hp)) {
        for (Index f = 0; f < graph->num_items; ++f) {
            for (const Neighbor& nb : graph->neighbors[static_cast<std::size_t>(f)]) {
                const double err = dot(column(model.q, f), column(model.q, nb.item)) - nb.similarity;
                visual += err * err;
                if constexpr (WithGradient) {
                    const double w = hp.alpha2 * err;
                    grad->q.col(f) += w * model.q.col(nb.item);
                    grad->q.col(nb.item) += w * model.q.col(f);
                }
            }
        }
    }

    if constexpr (WithGradient) {
        grad->p += hp.alpha1 * model.p;
        grad->q += hp.alpha1 * model.q;
    }

    LossBreakdown out;
    out.data = 0.5 * residuals;
    out.l2 = 0.5 * hp.alpha1 * (sum_of_squares(model.p) + sum_of_squares(model.q));
    out.visual = 0.5 * hp.alpha2 * visual;
    out.total = out.data + out.l2 + out.visual;
    return out;
}

}  // namespace

LossBreakdown loss(const LatentModel& model, const RatingMatrix& ratings, const SimilarityGraph* graph,
                   const Hyperparams& hp) {
    return evaluate<false>(model, ratings, graph, hp, nullptr);
}

Gradients gradients(const LatentModel& model, const RatingMatrix& ratings, const SimilarityGraph* graph,
                    const Hyperparams& hp) {
    Gradients g;
    evaluate<true>(model, ratings, graph, hp, &g);
    return g;
}

std::pair<LossBreakdown, Gradients> loss_and_gradients(const LatentModel& model, const RatingMatrix& ratings,
                                                       const SimilarityGraph* graph, const Hyperparams& hp) {
    Gradients g;
    const LossBreakdown l = evaluate<true>(model, ratings, graph, hp, &g);
    return {l, std::move(g)};
}

TrainResult train(const RatingMatrix& ratings, const SimilarityGraph* graph, const Hyperparams& hp) {
    hp.validate();
    return train_from(init_model(ratings, hp.latent_dim, hp.seed, hp.init_scale), ratings, graph, hp);
}

TrainResult train_from(LatentModel start, const RatingMatrix& ratings, const SimilarityGraph* graph,
                       const Hyperparams& hp) {
    hp.validate();
    if (ratings.empty()) throw InvalidArgument("training needs at least one rating");

    TrainResult result{std::move(start), {}};
    LatentModel& model = result.model;
    TrainReport& report = result.report;

    auto [current, grad] = loss_and_gradients(model, ratings, graph, hp);
    if (!std::isfinite(current.total)) throw Divergence(0, "initial loss is not finite");
    report.initial = current;
    report.epochs.reserve(static_cast<std::size_t>(hp.epochs));

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        if (grad.norm() < hp.gradient_floor) break;
        model.p -= hp.learning_rate * grad.p;
        model.q -= hp.learning_rate * grad.q;
        std::tie(current, grad) = loss_and_gradients(model, ratings, graph, hp);
        if (!std::isfinite(current.total)) {
            throw Divergence(epoch, "loss became non-finite; lower the learning rate");
        }
        report.epochs.push_back(current);
        report.epochs_run = epoch;
    }
    report.final_gradient_norm = grad.norm();
    return result;
}

void write_model(std::ostream& out, const LatentModel& model) {
    model.validate();
    io::write_magic(out, "VMF1");
    io::write_u32(out, static_cast<std::uint32_t>(model.dim()));
    io::write_u32(out, static_cast<std::uint32_t>(model.num_raters()));
    io::write_u32(out, static_cast<std::uint32_t>(model.num_items()));
    for (const Eigen::MatrixXd* m : {&model.p, &model.q}) {
        for (Index r = 0; r < m->rows(); ++r)
            for (Index c = 0; c < m->cols(); ++c) io::write_f64(out, (*m)(r, c));
    }
}

LatentModel read_model(std::istream& in) {
    io::expect_magic(in, "VMF1");
    const Index d = io::read_u32(in);
    const Index raters = io::read_u32(in);
    const Index items = io::read_u32(in);
    LatentModel model;
    model.p.resize(d, raters);
    model.q.resize(d, items);
    for (Eigen::MatrixXd* m : {&model.p, &model.q}) {
        for (Index r = 0; r < m->rows(); ++r)
            for (Index c = 0; c < m->cols(); ++c) (*m)(r, c) = io::read_f64(in);
    }
    io::expect_eof(in);
    model.validate();
    return model;
}

}  // namespace visreg
