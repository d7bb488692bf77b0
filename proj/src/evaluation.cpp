#include "visreg/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <random>

#include <json.hpp>

#include "visreg/anchored_regression.hpp"
#include "visreg/features.hpp"
#include "visreg/mf_trainer.hpp"

namespace visreg {

Budget Budget::parse(std::string_view text) {
    if (text == "full") return full();
    if (text == "visual") return visual();
    Index k = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
    if (ec != std::errc{} || ptr != text.data() + text.size() || k < 0) {
        throw InvalidArgument("budget must be 'full', 'visual' or a non-negative count, got '" + std::string(text) + "'");
    }
    return ratings(k);
}

std::string Budget::label() const {
    switch (kind) {
    case Kind::Visual:
        return "0";
    case Kind::Known:
        return std::to_string(known);
    case Kind::FullHistory:
        return "full";
    }
    return {};
}

namespace {

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    // Fisher-Yates on the portable uniform; std::shuffle's draw pattern is
    // implementation-defined.
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(unit_uniform(rng()) * static_cast<double>(i));
        std::swap(v[i - 1], v[std::min(j, i - 1)]);
    }
}

}  // namespace

RatingMatrix EvalPlan::training_ratings(const RatingMatrix& all) const {
    std::vector<char> is_train(static_cast<std::size_t>(all.num_items()), 0);
    for (Index f : train_items) is_train[static_cast<std::size_t>(f)] = 1;
    std::vector<Rating> out;
    for (const Rating& r : all.ratings()) {
        if (is_train[static_cast<std::size_t>(r.item)]) out.push_back(r);
    }
    for (const TestItem& t : test_items) out.insert(out.end(), t.known.begin(), t.known.end());
    return RatingMatrix(all.num_raters(), all.num_items(), std::move(out), all.scale());
}

std::vector<Rating> EvalPlan::held_out() const {
    std::vector<Rating> out;
    for (const TestItem& t : test_items) out.insert(out.end(), t.held_out.begin(), t.held_out.end());
    return out;
}

EvalPlan make_plan(const RatingMatrix& ratings, Budget budget, std::uint64_t seed, Index min_ratings) {
    if (min_ratings < kMinRatingsPerItem) min_ratings = kMinRatingsPerItem;
    EvalPlan plan;
    plan.budget = budget;
    plan.seed = seed;

    std::vector<std::vector<Rating>> by_item(static_cast<std::size_t>(ratings.num_items()));
    for (const Rating& r : ratings.ratings()) by_item[static_cast<std::size_t>(r.item)].push_back(r);

    std::vector<Index> eligible;
    for (Index f = 0; f < ratings.num_items(); ++f) {
        const auto n = static_cast<Index>(by_item[static_cast<std::size_t>(f)].size());
        if (n >= min_ratings) {
            eligible.push_back(f);
        } else {
            plan.excluded.push_back({f, n});
        }
    }

    std::mt19937_64 rng(seed);
    seeded_shuffle(eligible, rng);
    const std::size_t n_train = (eligible.size() + 1) / 2;
    plan.train_items.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Index> test(eligible.begin() + static_cast<std::ptrdiff_t>(n_train), eligible.end());
    std::sort(plan.train_items.begin(), plan.train_items.end());
    std::sort(test.begin(), test.end());

    for (Index f : test) {
        std::vector<Rating> received = by_item[static_cast<std::size_t>(f)];
        seeded_shuffle(received, rng);
        TestItem t;
        t.item = f;
        const std::size_t held = received.size() / 2;
        const std::size_t remaining = received.size() - held;
        std::size_t reveal = 0;
        switch (budget.kind) {
        case Budget::Kind::Visual:
            reveal = 0;
            break;
        case Budget::Kind::Known:
            reveal = std::min(static_cast<std::size_t>(budget.known), remaining);
            t.short_of_budget = static_cast<std::size_t>(budget.known) > remaining;
            break;
        case Budget::Kind::FullHistory:
            reveal = remaining;
            break;
        }
        t.held_out.assign(received.begin(), received.begin() + static_cast<std::ptrdiff_t>(held));
        t.known.assign(received.begin() + static_cast<std::ptrdiff_t>(held),
                       received.begin() + static_cast<std::ptrdiff_t>(held + reveal));
        t.unused.assign(received.begin() + static_cast<std::ptrdiff_t>(held + reveal), received.end());
        plan.test_items.push_back(std::move(t));
    }

    std::vector<char> rater_seen(static_cast<std::size_t>(ratings.num_raters()), 0);
    for (Index f : plan.train_items) {
        for (const Rating& r : by_item[static_cast<std::size_t>(f)]) rater_seen[static_cast<std::size_t>(r.rater)] = 1;
    }
    for (const TestItem& t : plan.test_items) {
        for (const Rating& r : t.known) rater_seen[static_cast<std::size_t>(r.rater)] = 1;
    }
    for (Index m = 0; m < ratings.num_raters(); ++m) {
        if (rater_seen[static_cast<std::size_t>(m)]) plan.train_raters.push_back(m);
    }
    return plan;
}

namespace {

void check_pair(std::span<const double> predicted, std::span<const double> truth, std::size_t min_size) {
    if (predicted.size() != truth.size()) throw InvalidArgument("prediction and truth lengths differ");
    if (predicted.size() < min_size) {
        throw InvalidArgument("metric needs at least " + std::to_string(min_size) + " pairs");
    }
}

}  // namespace

double accuracy(std::span<const double> predicted, std::span<const double> truth) {
    check_pair(predicted, truth, 1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

double mae(std::span<const double> predicted, std::span<const double> truth) {
    check_pair(predicted, truth, 1);
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(predicted[i] - truth[i]);
    return s / static_cast<double>(truth.size());
}

double pearson(std::span<const double> predicted, std::span<const double> truth) {
    check_pair(predicted, truth, 2);
    const auto n = static_cast<double>(truth.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        mx += predicted[i];
        my += truth[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double dx = predicted[i] - mx;
        const double dy = truth[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("Pearson correlation is undefined for constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double baseline_majority(std::span<const Rating> ratings) {
    if (ratings.empty()) throw InvalidArgument("majority baseline needs at least one rating");
    std::map<double, std::size_t> counts;
    for (const Rating& r : ratings) ++counts[r.value];
    // std::map iterates ascending, so the first maximum is the smaller value.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) best = it;
    }
    return best->first;
}

double baseline_majority(const RatingMatrix& ratings) {
    return baseline_majority(ratings.ratings());
}

std::vector<double> baseline_random(Scale scale, std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    std::vector<double> out(n);
    for (double& v : out) {
        const double u = unit_uniform(rng());
        v = scale == Scale::Binary ? (u < 0.5 ? -1.0 : 1.0) : kStarsMin + u * (kStarsMax - kStarsMin);
    }
    return out;
}

std::string_view to_string(Method method) noexcept {
    return method == Method::MF ? "MF" : "MF+VisReg";
}

Method parse_method(std::string_view name) {
    if (name == "MF" || name == "mf") return Method::MF;
    if (name == "MF+VisReg" || name == "mf+visreg" || name == "visreg") return Method::MFVisReg;
    throw InvalidArgument("unknown method '" + std::string(name) + "' (expected MF or MF+VisReg)");
}

ExperimentReport run_experiment(const RatingMatrix& ratings, const FeatureStore* features, const Hyperparams& hp,
                                const ExperimentConfig& config) {
    hp.validate();
    const bool visreg = config.method == Method::MFVisReg && hp.alpha2 != 0.0;
    if ((visreg || config.coldstart) && features == nullptr) {
        throw InvalidArgument("this experiment needs item features");
    }
    if (features != nullptr && features->num_items() != ratings.num_items()) {
        throw InvalidArgument("features cover " + std::to_string(features->num_items()) + " items, ratings have " +
                              std::to_string(ratings.num_items()));
    }

    const EvalPlan plan = make_plan(ratings, config.budget, derive_seed(config.seed, "split"), config.min_ratings);
    const RatingMatrix train_set = plan.training_ratings(ratings);
    const std::vector<Rating> held = plan.held_out();
    if (held.empty()) throw InvalidArgument("the split left no held-out ratings");

    Hyperparams run_hp = hp;
    run_hp.seed = derive_seed(config.seed, "init");
    if (config.method == Method::MF) run_hp.alpha2 = 0.0;

    SimilarityGraph graph;
    if (visreg) graph = build_similarity_graph(*features, hp.neighbor_k);
    LatentModel model = train(train_set, visreg ? &graph : nullptr, run_hp).model;

    if (config.coldstart) {
        const AnchorProjections proj = build_projections(model, *features, run_hp, plan.train_items);
        for (const TestItem& t : plan.test_items) {
            model.q.col(t.item) = regress_query(features->row(t.item), proj, *features).latent;
        }
    }

    ExperimentReport report;
    report.method = config.method;
    report.budget = config.budget;
    report.seed = config.seed;
    report.majority = baseline_majority(train_set);
    report.held_out = held.size();
    report.train_ratings = train_set.size();

    std::vector<double> raw, decoded, truth;
    raw.reserve(held.size());
    decoded.reserve(held.size());
    truth.reserve(held.size());
    for (const Rating& r : held) {
        const double score = predict_rating(model, r.rater, r.item);
        raw.push_back(score);
        decoded.push_back(decode_prediction(score, ratings.scale(), report.majority));
        truth.push_back(r.value);
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.accuracy = ratings.scale() == Scale::Binary ? accuracy(decoded, truth) : nan;
    report.mae = mae(decoded, truth);
    try {
        report.pearson = pearson(ratings.scale() == Scale::Binary ? raw : decoded, truth);
    } catch (const InvalidArgument&) {
        report.pearson = nan;
    }
    return report;
}

namespace {

void write_number(std::ostream& out, double v) {
    if (std::isnan(v)) return;
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
}

nlohmann::json number_or_null(double v) {
    return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

int budget_rank(const Budget& b) {
    return b.kind == Budget::Kind::Visual ? 0 : b.kind == Budget::Kind::Known ? 1 : 2;
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const ExperimentReport> rows) {
    out << "method,budget,seed,accuracy,mae,pearson\n";
    for (const ExperimentReport& r : rows) {
        out << to_string(r.method) << ',' << r.budget.label() << ',' << r.seed << ',';
        write_number(out, r.accuracy);
        out << ',';
        write_number(out, r.mae);
        out << ',';
        write_number(out, r.pearson);
        out << '\n';
    }
}

void write_report_json(std::ostream& out, std::span<const ExperimentReport> rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ExperimentReport& r : rows) {
        arr.push_back({{"method", std::string(to_string(r.method))},
                       {"budget", r.budget.label()},
                       {"seed", r.seed},
                       {"accuracy", number_or_null(r.accuracy)},
                       {"mae", number_or_null(r.mae)},
                       {"pearson", number_or_null(r.pearson)}});
    }
    out << arr.dump(2) << '\n';
}

void sort_reports(std::vector<ExperimentReport>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ExperimentReport& a, const ExperimentReport& b) {
        if (a.method != b.method) return a.method < b.method;
        if (budget_rank(a.budget) != budget_rank(b.budget)) return budget_rank(a.budget) < budget_rank(b.budget);
        if (a.budget.known != b.budget.known) return a.budget.known < b.budget.known;
        return a.seed < b.seed;
    });
}

}  // namespace visreg
