#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "test_support.hpp"
#include "visreg/features.hpp"
#include "visreg/mf_trainer.hpp"

using namespace visreg;

namespace {

Hyperparams params(int dim, double a1, double a2) {
    Hyperparams hp;
    hp.latent_dim = dim;
    hp.alpha1 = a1;
    hp.alpha2 = a2;
    return hp;
}

LatentModel random_model(std::mt19937_64& rng, Index d, Index raters, Index items) {
    return {testing::random_matrix(rng, d, raters), testing::random_matrix(rng, d, items)};
}

// Term-by-term evaluation of the regularized loss.
double oracle_loss(const LatentModel& m, const RatingMatrix& r, const SimilarityGraph* g, double a1, double a2) {
    double data = 0.0;
    for (const Rating& x : r.ratings()) {
        double pred = 0.0;
        for (Index k = 0; k < m.dim(); ++k) pred += m.p(k, x.rater) * m.q(k, x.item);
        data += (x.value - pred) * (x.value - pred);
    }
    double l2 = 0.0;
    for (Index i = 0; i < m.p.size(); ++i) l2 += m.p.data()[i] * m.p.data()[i];
    for (Index i = 0; i < m.q.size(); ++i) l2 += m.q.data()[i] * m.q.data()[i];
    double vis = 0.0;
    if (g != nullptr) {
        for (Index f = 0; f < g->num_items; ++f) {
            for (const Neighbor& nb : g->neighbors[static_cast<std::size_t>(f)]) {
                const double qq = m.q.col(f).dot(m.q.col(nb.item));
                vis += (nb.similarity - qq) * (nb.similarity - qq);
            }
        }
    }
    return 0.5 * data + 0.5 * a1 * l2 + 0.5 * a2 * vis;
}

// Plain factorization loss and gradient, written independently of the
// library with the same summation order.
struct PlainMf {
    double loss;
    Eigen::MatrixXd dp, dq;
};

PlainMf plain_mf(const LatentModel& m, const RatingMatrix& r, double a1) {
    PlainMf out{0.0, Eigen::MatrixXd::Zero(m.dim(), m.num_raters()), Eigen::MatrixXd::Zero(m.dim(), m.num_items())};
    double sq = 0.0;
    for (const Rating& x : r.ratings()) {
        double pred = 0.0;
        for (Index k = 0; k < m.dim(); ++k) pred += m.p(k, x.rater) * m.q(k, x.item);
        const double e = pred - x.value;
        sq += e * e;
        for (Index k = 0; k < m.dim(); ++k) {
            out.dp(k, x.rater) += e * m.q(k, x.item);
            out.dq(k, x.item) += e * m.p(k, x.rater);
        }
    }
    double norms = 0.0;
    for (Index i = 0; i < m.p.size(); ++i) norms += m.p.data()[i] * m.p.data()[i];
    double qnorm = 0.0;
    for (Index i = 0; i < m.q.size(); ++i) qnorm += m.q.data()[i] * m.q.data()[i];
    for (Index i = 0; i < m.p.size(); ++i) out.dp.data()[i] += a1 * m.p.data()[i];
    for (Index i = 0; i < m.q.size(); ++i) out.dq.data()[i] += a1 * m.q.data()[i];
    out.loss = 0.5 * sq + 0.5 * a1 * (norms + qnorm);
    return out;
}

RatingMatrix stars_instance(std::mt19937_64& rng, Index raters, Index items) {
    std::uniform_int_distribution<int> half(1, 10);
    std::bernoulli_distribution keep(0.6);
    std::vector<Rating> out;
    for (Index m = 0; m < raters; ++m)
        for (Index f = 0; f < items; ++f)
            if (keep(rng)) out.push_back({m, f, 0.5 * half(rng)});
    return RatingMatrix(raters, items, std::move(out), Scale::Stars);
}

}  // namespace

TEST_CASE("init_model") {
    const RatingMatrix r(4, 3, {{0, 0, 1}}, Scale::Binary);
    const LatentModel zero = init_model(r, 5, 1, 0.0);
    CHECK(zero.p.isZero(0));
    CHECK(zero.q.isZero(0));

    const LatentModel a = init_model(r, 5, 1, 0.3), b = init_model(r, 5, 1, 0.3), c = init_model(r, 5, 2, 0.3);
    CHECK(a.p == b.p);
    CHECK(a.q == b.q);
    CHECK((a.p != c.p || a.q != c.q));
    CHECK(a.p.cwiseAbs().maxCoeff() <= 0.3);
    CHECK(a.q.cwiseAbs().maxCoeff() <= 0.3);
    CHECK(a.p.rows() == 5);
    CHECK(a.p.cols() == 4);
    CHECK(a.q.cols() == 3);
    CHECK_THROWS_AS(init_model(r, 0, 1, 0.1), InvalidArgument);
}

TEST_CASE("loss on trivial instances") {
    const RatingMatrix one(1, 1, {{0, 0, 1}}, Scale::Binary);
    LatentModel zero{Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(2, 1)};
    CHECK(loss(zero, one, nullptr, params(2, 0, 0)).total == 0.5);

    const RatingMatrix none(1, 1, {}, Scale::Binary);
    CHECK(loss(zero, none, nullptr, params(2, 1, 0)).total == 0.0);

    const RatingMatrix wrong(2, 1, {}, Scale::Binary);
    CHECK_THROWS_AS(loss(zero, wrong, nullptr, params(2, 0, 0)), InvalidArgument);
}

TEST_CASE("loss matches a term-by-term oracle") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 20; ++t) {
        const RatingMatrix r = testing::random_binary(rng, 2, 2, 0.8);
        const LatentModel m = random_model(rng, 3, 2, 2);
        const FeatureStore feats = testing::random_features(rng, 2, 4);
        const SimilarityGraph g = build_similarity_graph(feats, 0);
        const LossBreakdown l = loss(m, r, &g, params(3, 0.1, 0.3));
        CHECK(std::abs(l.total - oracle_loss(m, r, &g, 0.1, 0.3)) <= 1e-10);
        CHECK(l.data >= 0.0);
        CHECK(l.l2 >= 0.0);
        CHECK(l.visual >= 0.0);
        CHECK(l.total == doctest::Approx(l.data + l.l2 + l.visual));
    }
}

TEST_CASE("gradients on trivial instances") {
    const RatingMatrix one(1, 1, {{0, 0, 1}}, Scale::Binary);
    LatentModel zero{Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(2, 1)};
    const Gradients g0 = gradients(zero, one, nullptr, params(2, 0.5, 0));
    CHECK(g0.p.isZero(0));
    CHECK(g0.q.isZero(0));

    std::mt19937_64 rng(1);
    const LatentModel m = random_model(rng, 3, 4, 5);
    const RatingMatrix empty(4, 5, {}, Scale::Binary);
    const SimilarityGraph no_edges{5, 1, std::vector<std::vector<Neighbor>>(5)};
    const Gradients g = gradients(m, empty, &no_edges, params(3, 0.7, 0.2));
    CHECK(g.p == Eigen::MatrixXd(0.7 * m.p));
    CHECK(g.q == Eigen::MatrixXd(0.7 * m.q));
}

TEST_CASE("gradients match central finite differences") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(1, 5), dim(1, 4), knn(0, 3);
    for (int t = 0; t < 20; ++t) {
        const Index raters = size(rng), items = std::max(2, size(rng));
        const int d = dim(rng);
        const double a1 = (t % 2) ? 0.1 : 0.0, a2 = (t / 2 % 2) ? 0.1 : 0.0;
        const RatingMatrix r = t % 3 ? testing::random_binary(rng, raters, items, 0.7) : stars_instance(rng, raters, items);
        const FeatureStore feats = testing::random_features(rng, items, 3);
        const SimilarityGraph graph = build_similarity_graph(feats, knn(rng));
        const Hyperparams hp = params(d, a1, a2);
        LatentModel m = random_model(rng, d, raters, items);
        const Gradients g = gradients(m, r, &graph, hp);

        const double h = 1e-5;
        auto check = [&](Eigen::MatrixXd& target, const Eigen::MatrixXd& analytic) {
            for (Index i = 0; i < target.size(); ++i) {
                const double saved = target.data()[i];
                target.data()[i] = saved + h;
                const double up = loss(m, r, &graph, hp).total;
                target.data()[i] = saved - h;
                const double down = loss(m, r, &graph, hp).total;
                target.data()[i] = saved;
                const double numeric = (up - down) / (2 * h);
                const double a = analytic.data()[i];
                const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
                CHECK(rel < 1e-5);
            }
        };
        check(m.p, g.p);
        check(m.q, g.q);
    }
}

TEST_CASE("without the visual term the loss and gradients equal plain MF bit for bit") {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 10; ++t) {
        const RatingMatrix r = testing::random_binary(rng, 30, 20, 0.3);
        const LatentModel m = random_model(rng, 6, 30, 20);
        const PlainMf expected = plain_mf(m, r, 0.1);

        for (bool with_graph : {false, true}) {
            Hyperparams hp = params(6, 0.1, with_graph ? 0.0 : 0.4);
            const FeatureStore feats = testing::random_features(rng, 20, 3);
            const SimilarityGraph g = build_similarity_graph(feats, 4);
            const auto [l, grad] = loss_and_gradients(m, r, with_graph ? &g : nullptr, hp);
            CHECK(l.total == expected.loss);
            CHECK(grad.p == expected.dp);
            CHECK(grad.q == expected.dq);
        }
    }
}

TEST_CASE("training") {
    SUBCASE("a vanishing learning rate leaves the model unchanged") {
        std::mt19937_64 rng(3);
        const RatingMatrix r = testing::random_binary(rng, 10, 10, 0.5);
        Hyperparams hp = params(3, 0.1, 0.0);
        hp.epochs = 5;
        hp.learning_rate = 1e-300;  // zero itself is rejected by validation
        const LatentModel start = init_model(r, 3, 1, 0.1);
        const TrainResult res = train_from(start, r, nullptr, hp);
        for (const auto& e : res.report.epochs) CHECK(e.total == res.report.initial.total);
        CHECK(res.model.p == start.p);
    }
    SUBCASE("realizable rank-1 signs are fit exactly") {
        std::mt19937_64 rng(8);
        const Eigen::MatrixXd p = testing::random_matrix(rng, 1, 30), q = testing::random_matrix(rng, 1, 25);
        std::vector<Rating> triplets;
        std::bernoulli_distribution keep(0.5);
        for (Index m = 0; m < 30; ++m)
            for (Index f = 0; f < 25; ++f)
                if (keep(rng)) triplets.push_back({m, f, p(0, m) * q(0, f) >= 0 ? 1.0 : -1.0});
        const RatingMatrix r(30, 25, triplets, Scale::Binary);
        Hyperparams hp = params(2, 1e-4, 0.0);
        hp.learning_rate = 0.02;
        hp.epochs = 3000;
        hp.init_scale = 0.3;
        const TrainResult res = train(r, nullptr, hp);
        Index correct = 0;
        for (const Rating& x : r.ratings())
            if (decode_prediction(predict_rating(res.model, x.rater, x.item), Scale::Binary, 1.0) == x.value) ++correct;
        CHECK(correct == static_cast<Index>(r.size()));
    }
    SUBCASE("loss descends monotonically at a small learning rate") {
        std::mt19937_64 rng(12);
        int steps = 0, increases = 0;
        for (int t = 0; t < 10; ++t) {
            const RatingMatrix r = testing::random_binary(rng, 15, 12, 0.5);
            const FeatureStore feats = testing::random_features(rng, 12, 4);
            const SimilarityGraph g = build_similarity_graph(feats, 3);
            Hyperparams hp = params(4, 0.1, 0.1);
            hp.learning_rate = 1e-3;
            hp.epochs = 200;
            hp.seed = static_cast<std::uint64_t>(t);
            const TrainResult res = train(r, &g, hp);
            double prev = res.report.initial.total;
            for (const auto& e : res.report.epochs) {
                ++steps;
                if (e.total > prev) ++increases;
                prev = e.total;
            }
        }
        CHECK(increases <= steps / 20);
    }
    SUBCASE("training is deterministic") {
        std::mt19937_64 rng(4);
        const RatingMatrix r = testing::random_binary(rng, 20, 15, 0.4);
        const FeatureStore feats = testing::random_features(rng, 15, 4);
        const SimilarityGraph g = build_similarity_graph(feats, 5);
        Hyperparams hp = params(5, 0.1, 0.1);
        hp.epochs = 50;
        const TrainResult a = train(r, &g, hp), b = train(r, &g, hp);
        CHECK(a.model.p == b.model.p);
        CHECK(a.model.q == b.model.q);
        CHECK(a.report.epochs_run == 50);
        CHECK(a.report.epochs.size() == 50);
    }
    SUBCASE("gradient floor stops early") {
        const RatingMatrix r(1, 1, {{0, 0, 1}}, Scale::Binary);
        Hyperparams hp = params(1, 0.0, 0.0);
        hp.init_scale = 0.0;  // the origin is stationary
        const TrainResult res = train(r, nullptr, hp);
        CHECK(res.report.epochs_run == 0);
        CHECK(res.report.final_gradient_norm == 0.0);
    }
    SUBCASE("divergence names the epoch") {
        std::mt19937_64 rng(5);
        const RatingMatrix r = testing::random_binary(rng, 10, 10, 0.8);
        Hyperparams hp = params(4, 0.1, 0.0);
        hp.learning_rate = 50.0;
        hp.init_scale = 1.0;
        try {
            train(r, nullptr, hp);
            FAIL("expected divergence");
        } catch (const Divergence& e) {
            CHECK(e.epoch() >= 1);
            CHECK(std::string(e.what()).find("epoch") != std::string::npos);
        }
    }
    SUBCASE("empty ratings are rejected") {
        const RatingMatrix r(2, 2, {}, Scale::Binary);
        CHECK_THROWS_AS(train(r, nullptr, params(2, 0.1, 0)), InvalidArgument);
    }
}

TEST_CASE("model file round-trips byte-exactly") {
    std::mt19937_64 rng(6);
    const LatentModel m = random_model(rng, 4, 7, 9);
    std::ostringstream out;
    write_model(out, m);
    const std::string bytes = out.str();
    CHECK(bytes.size() == 16 + 8 * 4 * (7 + 9));
    CHECK(bytes.substr(0, 4) == "VMF1");
    std::istringstream in(bytes);
    const LatentModel back = read_model(in);
    CHECK(back.p == m.p);
    CHECK(back.q == m.q);
    std::ostringstream again;
    write_model(again, back);
    CHECK(again.str() == bytes);

    std::istringstream trailing(bytes + "x");
    CHECK_THROWS(read_model(trailing));
}
