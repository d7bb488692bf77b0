#include "visreg/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

namespace visreg {

DemographicTable::DemographicTable(std::vector<Demographics> rows) : rows_(std::move(rows)) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (!std::isfinite(rows_[i].age)) {
            throw InvalidArgument("subject " + std::to_string(rows_[i].id) + " has a non-finite age");
        }
        if (!index_.emplace(rows_[i].id, i).second) {
            throw InvalidArgument("duplicate demographics for subject " + std::to_string(rows_[i].id));
        }
    }
}

const Demographics* DemographicTable::find(std::uint64_t id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &rows_[it->second];
}

std::vector<double> hotness(const RatingMatrix& ratings) {
    if (ratings.scale() != Scale::Binary) throw InvalidArgument("hotness is defined on Binary ratings only");
    std::vector<double> positive(static_cast<std::size_t>(ratings.num_items()), 0.0);
    std::vector<double> total(positive.size(), 0.0);
    for (const Rating& r : ratings.ratings()) {
        total[static_cast<std::size_t>(r.item)] += 1.0;
        if (r.value > 0.0) positive[static_cast<std::size_t>(r.item)] += 1.0;
    }
    std::vector<double> out(positive.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = total[i] > 0.0 ? positive[i] / total[i] : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

std::optional<double> AgePreferenceTable::percent(Index rater_bin, Index subject_bin) const {
    const Index n = counts(rater_bin, subject_bin);
    if (n == 0) return std::nullopt;
    return 100.0 * static_cast<double>(positives(rater_bin, subject_bin)) / static_cast<double>(n);
}

std::optional<Index> age_bin(double age, std::span<const double> edges) {
    if (edges.size() < 2 || !(age >= edges.front() && age <= edges.back())) return std::nullopt;
    const auto it = std::upper_bound(edges.begin(), edges.end(), age);
    const auto bin = static_cast<Index>(it - edges.begin()) - 1;
    return std::min(bin, static_cast<Index>(edges.size()) - 2);
}

AgePreferenceTable preference_by_age(const RatingMatrix& ratings, std::span<const double> rater_ages,
                                     std::span<const double> item_ages, std::span<const double> edges) {
    if (ratings.scale() != Scale::Binary) throw InvalidArgument("preference by age needs Binary ratings");
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw InvalidArgument("age bin edges must be strictly increasing with at least two values");
    }
    if (static_cast<Index>(rater_ages.size()) != ratings.num_raters() ||
        static_cast<Index>(item_ages.size()) != ratings.num_items()) {
        throw InvalidArgument("age vectors must cover every rater and item");
    }

    AgePreferenceTable t;
    t.edges.assign(edges.begin(), edges.end());
    const auto bins = static_cast<Index>(edges.size()) - 1;
    t.counts.setZero(bins, bins);
    t.positives.setZero(bins, bins);
    for (const Rating& r : ratings.ratings()) {
        const auto rb = age_bin(rater_ages[static_cast<std::size_t>(r.rater)], edges);
        const auto sb = age_bin(item_ages[static_cast<std::size_t>(r.item)], edges);
        if (!rb || !sb) {
            throw InvalidArgument("rating (" + std::to_string(r.rater) + ", " + std::to_string(r.item) +
                                  ") lacks an age inside the configured bins");
        }
        ++t.counts(*rb, *sb);
        if (r.value > 0.0) ++t.positives(*rb, *sb);
    }
    return t;
}

std::vector<double> hotness_paradox_curve(std::span<const double> subject_hotness, const SimilarityGraph& graph,
                                          std::span<const Index> sizes) {
    const auto population = static_cast<Index>(subject_hotness.size());
    if (graph.num_items != population) throw InvalidArgument("graph and hotness cover different populations");
    for (double h : subject_hotness) {
        if (!std::isfinite(h)) throw InvalidArgument("hotness must be defined for every subject");
    }

    std::vector<double> out;
    out.reserve(sizes.size());
    for (Index n : sizes) {
        if (n < 1 || n >= population) {
            throw InvalidArgument("neighborhood size " + std::to_string(n) + " must lie in [1, " +
                                  std::to_string(population) + ")");
        }
        Index hotter = 0;
        for (Index f = 0; f < population; ++f) {
            const auto& list = graph.neighbors[static_cast<std::size_t>(f)];
            if (static_cast<Index>(list.size()) < n) {
                throw InvalidArgument("graph lists only " + std::to_string(list.size()) + " neighbors for subject " +
                                      std::to_string(f) + ", need " + std::to_string(n));
            }
            double sum = 0.0;
            for (Index j = 0; j < n; ++j) sum += subject_hotness[static_cast<std::size_t>(list[static_cast<std::size_t>(j)].item)];
            if (sum / static_cast<double>(n) > subject_hotness[static_cast<std::size_t>(f)]) ++hotter;
        }
        out.push_back(population > 0 ? 100.0 * static_cast<double>(hotter) / static_cast<double>(population) : 0.0);
    }
    return out;
}

SimilarityGraph latent_similarity_graph(const LatentModel& model, Index k) {
    FeatureStore::Matrix rows = model.q.transpose();
    return build_similarity_graph(FeatureStore(std::move(rows)), k);
}

std::vector<LatentPoint> export_latent_2d(const Eigen::MatrixXd& factors, std::span<const double> labels) {
    if (factors.cols() < 3) throw InvalidArgument("latent export needs at least 3 columns");
    if (!labels.empty() && static_cast<Index>(labels.size()) != factors.cols()) {
        throw InvalidArgument("label count does not match column count");
    }
    const FeatureStore columns(FeatureStore::Matrix(factors.transpose()));
    const PcaReducer pca = fit_pca_components(columns, 2);
    if (pca.degenerate || pca.components() == 0) throw InvalidArgument("latent factors have rank 0");
    const FeatureStore projected = apply_pca(pca, columns);

    std::vector<LatentPoint> out(static_cast<std::size_t>(factors.cols()));
    for (Index i = 0; i < factors.cols(); ++i) {
        auto& pt = out[static_cast<std::size_t>(i)];
        pt.x = projected.vectors()(i, 0);
        pt.y = projected.dim() > 1 ? projected.vectors()(i, 1) : 0.0;
        pt.label = labels.empty() ? std::numeric_limits<double>::quiet_NaN() : labels[static_cast<std::size_t>(i)];
    }
    return out;
}

namespace {

void write_number(std::ostream& out, double v) {
    if (std::isnan(v)) return;
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
}

}  // namespace

void write_age_preference_csv(std::ostream& out, const AgePreferenceTable& table) {
    out << "rater_bin,subject_bin,ratings,positives,percent\n";
    for (Index i = 0; i < table.bins(); ++i) {
        for (Index j = 0; j < table.bins(); ++j) {
            out << i << ',' << j << ',' << table.counts(i, j) << ',' << table.positives(i, j) << ',';
            if (const auto p = table.percent(i, j)) write_number(out, *p);
            out << '\n';
        }
    }
}

void write_paradox_csv(std::ostream& out, std::span<const ParadoxRow> rows) {
    out << "variant,size,percent\n";
    for (const ParadoxRow& r : rows) {
        out << r.variant << ',' << r.size << ',';
        write_number(out, r.percent);
        out << '\n';
    }
}

void write_latent_csv(std::ostream& out, std::span<const LatentPoint> points, std::span<const std::uint64_t> ids) {
    out << "index,x,y,label\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (ids.empty()) {
            out << i;
        } else {
            out << ids[i];
        }
        out << ',';
        write_number(out, points[i].x);
        out << ',';
        write_number(out, points[i].y);
        out << ',';
        write_number(out, points[i].label);
        out << '\n';
    }
}

}  // namespace visreg
