#include "visreg/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <Eigen/Eigenvalues>

#include "visreg/binary_io.hpp"
#include "visreg/parallel.hpp"
#include "text_util.hpp"

namespace visreg {

namespace {

double cosine_from(double dot_ab, double norm_a, double norm_b) {
    return std::clamp(dot_ab / (norm_a * norm_b), -1.0, 1.0);
}

bool ranks_before(const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.item < b.item;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("cosine similarity: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    const double na = std::sqrt(squared_norm(a));
    const double nb = std::sqrt(squared_norm(b));
    if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine similarity is undefined for a zero-norm vector");
    return cosine_from(dot(a, b), na, nb);
}

double cosine_similarity(const FeatureStore& features, Index f, Index g) {
    const auto a = features.row(f);
    const auto b = features.row(g);
    if (features.is_zero(f) || features.is_zero(g)) {
        throw InvalidArgument("cosine similarity is undefined for zero-norm item " +
                              std::to_string(features.is_zero(f) ? f : g));
    }
    return cosine_from(dot(a, b), features.norm(f), features.norm(g));
}

std::size_t SimilarityGraph::edge_count() const noexcept {
    std::size_t n = 0;
    for (const auto& list : neighbors) n += list.size();
    return n;
}

SimilarityGraph build_similarity_graph(const FeatureStore& features, Index k) {
    if (k < 0) throw InvalidArgument("neighbor count must be >= 0");
    const Index n = features.num_items();
    for (Index i = 0; i < n; ++i) {
        if (features.is_zero(i)) {
            throw InvalidArgument("item " + std::to_string(i) + " has a zero-norm feature vector");
        }
    }

    SimilarityGraph graph;
    graph.num_items = n;
    graph.k = k;
    graph.neighbors.resize(static_cast<std::size_t>(n));
    const Index keep = (k == 0 || n == 0) ? std::max<Index>(n - 1, 0) : std::min(k, n - 1);

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t fi) {
        const auto f = static_cast<Index>(fi);
        std::vector<Neighbor> all;
        all.reserve(static_cast<std::size_t>(n - 1));
        for (Index g = 0; g < n; ++g) {
            if (g != f) all.push_back({g, cosine_similarity(features, f, g)});
        }
        const auto mid = all.begin() + keep;
        std::partial_sort(all.begin(), mid, all.end(), ranks_before);
        all.erase(mid, all.end());
        graph.neighbors[fi] = std::move(all);
    });
    return graph;
}

namespace {

void normalize_sign(Eigen::Ref<Eigen::VectorXd> component) {
    Index best = 0;
    for (Index i = 1; i < component.size(); ++i) {
        if (std::abs(component[i]) > std::abs(component[best])) best = i;
    }
    if (component.size() > 0 && component[best] < 0.0) component = -component;
}

struct Spectrum {
    Eigen::VectorXd mean;
    Eigen::VectorXd variances;  // descending
    Eigen::MatrixXd vectors;    // column i pairs with variances[i]
    bool degenerate = false;
};

Spectrum covariance_spectrum(const FeatureStore& features) {
    const Index n = features.num_items();
    if (n < 2) throw InvalidArgument("PCA needs at least 2 items");
    const Index dim = features.dim();

    Spectrum s;
    s.mean = features.vectors().colwise().mean().transpose();
    Eigen::MatrixXd centered = features.vectors().rowwise() - s.mean.transpose();

    const double scale = 1.0 + features.vectors().cwiseAbs().maxCoeff();
    if (dim == 0 || centered.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
        s.degenerate = true;
        s.variances.resize(0);
        s.vectors.resize(dim, 0);
        return s;
    }

    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");

    // Eigen returns ascending order.
    s.variances = solver.eigenvalues().reverse().cwiseMax(0.0);
    s.vectors = solver.eigenvectors().rowwise().reverse();
    return s;
}

PcaReducer reducer_from(const Spectrum& s, Index components) {
    PcaReducer r;
    r.mean = s.mean;
    r.degenerate = s.degenerate;
    r.basis.resize(components, s.mean.size());
    r.variances = s.variances.head(components);
    for (Index c = 0; c < components; ++c) {
        Eigen::VectorXd v = s.vectors.col(c);
        normalize_sign(v);
        r.basis.row(c) = v.transpose();
    }
    const double total = s.variances.sum();
    r.energy_kept = total > 0.0 ? std::min(1.0, s.variances.head(components).sum() / total) : 1.0;
    return r;
}

}  // namespace

PcaReducer fit_pca(const FeatureStore& features, double energy) {
    if (!(energy > 0.0 && energy <= 1.0)) throw InvalidArgument("PCA energy must lie in (0, 1]");
    const Spectrum s = covariance_spectrum(features);
    if (s.degenerate) return reducer_from(s, 0);

    const double total = s.variances.sum();
    // Absorb rounding in the cumulative sum so that energy == 1 stops at the
    // numerical rank instead of always keeping every component.
    const double target = energy * total - 1e-12 * total;
    Index count = 0;
    double acc = 0.0;
    while (count < s.variances.size() && acc < target) acc += s.variances[count++];
    return reducer_from(s, std::max<Index>(count, 1));
}

PcaReducer fit_pca_components(const FeatureStore& features, Index components) {
    if (components < 0) throw InvalidArgument("component count must be >= 0");
    const Spectrum s = covariance_spectrum(features);
    if (s.degenerate) return reducer_from(s, 0);
    return reducer_from(s, std::min(components, s.variances.size()));
}

FeatureStore apply_pca(const PcaReducer& reducer, const FeatureStore& features) {
    if (features.dim() != reducer.input_dim()) {
        throw InvalidArgument("PCA input dimension " + std::to_string(features.dim()) + " does not match reducer (" +
                              std::to_string(reducer.input_dim()) + ")");
    }
    FeatureStore::Matrix out = (features.vectors().rowwise() - reducer.mean.transpose()) * reducer.basis.transpose();
    return FeatureStore(std::move(out));
}

FeatureStore reconstruct_pca(const PcaReducer& reducer, const FeatureStore& projected) {
    if (projected.dim() != reducer.components()) throw InvalidArgument("projected dimension does not match reducer");
    FeatureStore::Matrix out = projected.vectors() * reducer.basis;
    out.rowwise() += reducer.mean.transpose();
    return FeatureStore(std::move(out));
}

using text::parse_double;
using text::parse_u64;
using text::trim;
using text::write_double;

FeatureTable read_features_text(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    Index dim = -1;
    std::vector<std::uint64_t> ids;
    std::vector<double> values;

    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view content = trim(line);
        if (content.empty()) continue;
        if (dim < 0) {
            constexpr std::string_view header = "#dim ";
            if (!content.starts_with(header)) throw ParseError(lineno, "missing '#dim D' header");
            dim = static_cast<Index>(parse_u64(trim(content.substr(header.size())), lineno));
            continue;
        }
        if (content.front() == '#') continue;
        const auto tab = content.find('\t');
        if (tab == std::string_view::npos) throw ParseError(lineno, "expected item_id<TAB>values");
        ids.push_back(parse_u64(content.substr(0, tab), lineno));

        std::string_view rest = content.substr(tab + 1);
        Index count = 0;
        while (true) {
            const auto comma = rest.find(',');
            values.push_back(parse_double(trim(rest.substr(0, comma)), lineno));
            ++count;
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (count != dim) {
            throw ParseError(lineno, "expected " + std::to_string(dim) + " values, got " + std::to_string(count));
        }
    }
    if (dim < 0) throw InvalidArgument("feature file is empty");

    const auto rows = static_cast<Index>(ids.size());
    FeatureStore::Matrix m = Eigen::Map<const FeatureStore::Matrix>(values.data(), rows, dim);
    return {std::move(ids), FeatureStore(std::move(m))};
}

void write_features_text(std::ostream& out, const FeatureTable& table) {
    const FeatureStore& s = table.store;
    if (static_cast<Index>(table.ids.size()) != s.num_items()) throw InvalidArgument("id count does not match rows");
    out << "#dim " << s.dim() << '\n';
    for (Index i = 0; i < s.num_items(); ++i) {
        out << table.ids[static_cast<std::size_t>(i)] << '\t';
        const auto row = s.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            write_double(out, row[j]);
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing feature file");
}

FeatureTable read_features_binary(std::istream& in) {
    io::expect_magic(in, "VFEA");
    const std::uint32_t count = io::read_u32(in);
    const std::uint32_t dim = io::read_u32(in);
    std::vector<std::uint64_t> ids(count);
    FeatureStore::Matrix m(count, dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        ids[i] = io::read_u64(in);
        for (std::uint32_t j = 0; j < dim; ++j) m(i, j) = static_cast<double>(io::read_f32(in));
    }
    io::expect_eof(in);
    return {std::move(ids), FeatureStore(std::move(m))};
}

void write_features_binary(std::ostream& out, const FeatureTable& table) {
    const FeatureStore& s = table.store;
    if (static_cast<Index>(table.ids.size()) != s.num_items()) throw InvalidArgument("id count does not match rows");
    io::write_magic(out, "VFEA");
    io::write_u32(out, static_cast<std::uint32_t>(s.num_items()));
    io::write_u32(out, static_cast<std::uint32_t>(s.dim()));
    for (Index i = 0; i < s.num_items(); ++i) {
        io::write_u64(out, table.ids[static_cast<std::size_t>(i)]);
        for (double v : s.row(i)) io::write_f32(out, static_cast<float>(v));
    }
}

FeatureTable read_features(std::istream& in) {
    char head[4] = {};
    in.read(head, 4);
    const auto got = in.gcount();
    in.clear();
    in.seekg(0);
    if (got == 4 && std::string_view(head, 4) == "VFEA") return read_features_binary(in);
    return read_features_text(in);
}

}  // namespace visreg
