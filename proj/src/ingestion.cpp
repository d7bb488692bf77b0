#include "visreg/ingestion.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "text_util.hpp"

namespace visreg {

IdMap::IdMap(std::vector<std::uint64_t> ids) {
    for (std::uint64_t id : ids) {
        if (find(id)) throw InvalidArgument("duplicate id " + std::to_string(id) + " in id map");
        intern(id);
    }
}

Index IdMap::intern(std::uint64_t id) {
    const auto [it, inserted] = index_.emplace(id, static_cast<Index>(ids_.size()));
    if (inserted) ids_.push_back(id);
    return it->second;
}

std::optional<Index> IdMap::find(std::uint64_t id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Index IdMap::at(std::uint64_t id) const {
    if (const auto i = find(id)) return *i;
    throw InvalidArgument("unknown id " + std::to_string(id));
}

namespace {

std::vector<double> ages_for(const IdMap& ids, const std::optional<DemographicTable>& demo) {
    std::vector<double> out(static_cast<std::size_t>(ids.size()), std::numeric_limits<double>::quiet_NaN());
    if (!demo) return out;
    for (Index i = 0; i < ids.size(); ++i) {
        if (const Demographics* d = demo->find(ids.external(i))) out[static_cast<std::size_t>(i)] = d->age;
    }
    return out;
}

/// Accumulates triplets with last-wins deduplication.
class TripletBuilder {
public:
    void add(std::uint64_t rater, std::uint64_t item, double value) {
        const Index m = raters_.intern(rater);
        const Index f = items_.intern(item);
        const auto [it, inserted] = position_.emplace(Key{m, f}, ratings_.size());
        if (inserted) {
            ratings_.push_back({m, f, value});
        } else {
            ratings_[it->second].value = value;
            ++duplicates_;
        }
    }

    DatasetBundle finish(Scale scale) {
        if (ratings_.empty()) throw InvalidArgument("no ratings");
        DatasetBundle b;
        b.ratings = RatingMatrix(raters_.size(), items_.size(), std::move(ratings_), scale);
        b.raters = std::move(raters_);
        b.items = std::move(items_);
        b.duplicates = duplicates_;
        return b;
    }

private:
    struct Key {
        Index rater;
        Index item;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            return std::hash<Index>{}(k.rater) * 1000003u ^ std::hash<Index>{}(k.item);
        }
    };

    IdMap raters_;
    IdMap items_;
    std::vector<Rating> ratings_;
    std::unordered_map<Key, std::size_t, KeyHash> position_;
    std::size_t duplicates_ = 0;
};

std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> out;
    while (true) {
        const auto pos = s.find(sep);
        out.push_back(s.substr(0, pos));
        if (pos == std::string_view::npos) break;
        s = s.substr(pos + sep.size());
    }
    return out;
}

bool looks_numeric(std::string_view s) {
    s = text::trim(s);
    return !s.empty() && (std::isdigit(static_cast<unsigned char>(s.front())) || s.front() == '-' || s.front() == '+');
}

}  // namespace

std::vector<double> DatasetBundle::rater_ages() const {
    return ages_for(raters, demographics);
}

std::vector<double> DatasetBundle::item_ages() const {
    return ages_for(items, demographics);
}

DatasetBundle load_movielens(std::istream& in) {
    TripletBuilder builder;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view content = text::trim(line);
        if (content.empty()) continue;
        const auto fields = split(content, "::");
        if (fields.size() != 4) throw ParseError(lineno, "expected UserID::MovieID::Rating::Timestamp");
        const std::uint64_t user = text::parse_u64(fields[0], lineno);
        const std::uint64_t movie = text::parse_u64(fields[1], lineno);
        const double value = text::parse_double(fields[2], lineno);
        text::parse_u64(fields[3], lineno);
        if (!on_scale(value, Scale::Stars)) {
            throw ParseError(lineno, "rating " + std::string(fields[2]) + " is off the half-star grid [0.5, 5]");
        }
        builder.add(user, movie, value);
    }
    return builder.finish(Scale::Stars);
}

void save_movielens(std::ostream& out, const DatasetBundle& bundle) {
    for (const Rating& r : bundle.ratings.ratings()) {
        out << bundle.raters.external(r.rater) << "::" << bundle.items.external(r.item) << "::";
        text::write_double(out, r.value);
        out << "::0\n";
    }
    if (!out) throw IoError("failed writing MovieLens file");
}

DatasetBundle load_triplets(std::istream& in, Scale scale) {
    TripletBuilder builder;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view content = text::trim(line);
        if (content.empty() || content.front() == '#') continue;
        const auto fields = split(content, ",");
        if (first && !fields.empty() && !looks_numeric(fields[0])) {
            first = false;
            continue;  // header
        }
        first = false;
        if (fields.size() != 3) throw ParseError(lineno, "expected rater_id,item_id,value");
        const std::uint64_t rater = text::parse_u64(fields[0], lineno);
        const std::uint64_t item = text::parse_u64(fields[1], lineno);
        const double value = text::parse_double(fields[2], lineno);
        if (scale == Scale::Binary && value == 0.0) {
            throw ParseError(lineno, "0 is not a Binary rating; an unknown rating is an absent line");
        }
        if (!on_scale(value, scale)) {
            throw ParseError(lineno, "value " + std::string(text::trim(fields[2])) + " is not on the " +
                                         std::string(to_string(scale)) + " scale");
        }
        builder.add(rater, item, value);
    }
    return builder.finish(scale);
}

void save_triplets(std::ostream& out, const DatasetBundle& bundle) {
    out << "rater_id,item_id,value\n";
    for (const Rating& r : bundle.ratings.ratings()) {
        out << bundle.raters.external(r.rater) << ',' << bundle.items.external(r.item) << ',';
        text::write_double(out, r.value);
        out << '\n';
    }
    if (!out) throw IoError("failed writing triplet file");
}

DemographicTable load_demographics(std::istream& in) {
    std::vector<Demographics> rows;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view content = text::trim(line);
        if (content.empty() || content.front() == '#') continue;
        const auto fields = split(content, ",");
        if (first && !looks_numeric(fields[0])) {
            first = false;
            continue;
        }
        first = false;
        if (fields.size() != 3) throw ParseError(lineno, "expected subject_id,age,group");
        Demographics d;
        d.id = text::parse_u64(fields[0], lineno);
        d.age = text::parse_double(fields[1], lineno);
        d.group = std::string(text::trim(fields[2]));
        rows.push_back(std::move(d));
    }
    return DemographicTable(std::move(rows));
}

void save_demographics(std::ostream& out, const DemographicTable& table) {
    out << "subject_id,age,group\n";
    for (const Demographics& d : table.rows()) {
        out << d.id << ',';
        text::write_double(out, d.age);
        out << ',' << d.group << '\n';
    }
    if (!out) throw IoError("failed writing demographics file");
}

void attach_features(DatasetBundle& bundle, const FeatureTable& table) {
    std::unordered_map<std::uint64_t, Index> row_of;
    for (std::size_t r = 0; r < table.ids.size(); ++r) row_of.emplace(table.ids[r], static_cast<Index>(r));

    std::vector<Index> rows;
    std::vector<std::uint64_t> missing;
    rows.reserve(static_cast<std::size_t>(bundle.items.size()));
    for (std::uint64_t id : bundle.items.ids()) {
        const auto it = row_of.find(id);
        if (it == row_of.end()) {
            missing.push_back(id);
        } else {
            rows.push_back(it->second);
        }
    }
    if (!missing.empty()) {
        std::string msg = "features missing for " + std::to_string(missing.size()) + " of " +
                          std::to_string(bundle.items.size()) + " items:";
        for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 10); ++i) msg += " " + std::to_string(missing[i]);
        if (missing.size() > 10) msg += " ...";
        throw InvalidArgument(msg);
    }
    bundle.features = table.store.subset(rows);
}

FeatureTable feature_table(const DatasetBundle& bundle) {
    if (!bundle.features) throw InvalidArgument("bundle has no features");
    return {std::vector<std::uint64_t>(bundle.items.ids().begin(), bundle.items.ids().end()), *bundle.features};
}

std::pair<DatasetBundle, FilterReport> filter_dataset(const DatasetBundle& bundle, const FilterOptions& options) {
    const RatingMatrix& all = bundle.ratings;
    std::vector<char> keep_rater(static_cast<std::size_t>(all.num_raters()), 1);
    std::vector<char> keep_item(static_cast<std::size_t>(all.num_items()), 1);

    if (options.age_bounds) {
        const auto [lo, hi] = *options.age_bounds;
        const auto out_of_bounds = [&](double age) { return !std::isnan(age) && (age < lo || age > hi); };
        const auto rater_ages = bundle.rater_ages();
        const auto item_ages = bundle.item_ages();
        for (std::size_t m = 0; m < keep_rater.size(); ++m) keep_rater[m] = !out_of_bounds(rater_ages[m]);
        for (std::size_t f = 0; f < keep_item.size(); ++f) keep_item[f] = !out_of_bounds(item_ages[f]);
    }

    FilterReport report;
    bool changed = true;
    while (changed) {
        changed = false;
        ++report.rounds;
        std::vector<Index> received(keep_item.size(), 0);
        std::vector<Index> given(keep_rater.size(), 0);
        for (const Rating& r : all.ratings()) {
            if (keep_rater[static_cast<std::size_t>(r.rater)] && keep_item[static_cast<std::size_t>(r.item)]) {
                ++received[static_cast<std::size_t>(r.item)];
                ++given[static_cast<std::size_t>(r.rater)];
            }
        }
        for (std::size_t f = 0; f < keep_item.size(); ++f) {
            if (keep_item[f] && received[f] < options.min_received) {
                keep_item[f] = 0;
                changed = true;
            }
        }
        for (std::size_t m = 0; m < keep_rater.size(); ++m) {
            if (keep_rater[m] && given[m] < options.min_given) {
                keep_rater[m] = 0;
                changed = true;
            }
        }
    }

    DatasetBundle out;
    std::vector<Index> rater_map(keep_rater.size(), -1);
    std::vector<Index> item_map(keep_item.size(), -1);
    std::vector<Index> kept_items;
    for (Index m = 0; m < all.num_raters(); ++m) {
        if (keep_rater[static_cast<std::size_t>(m)]) {
            rater_map[static_cast<std::size_t>(m)] = out.raters.intern(bundle.raters.external(m));
        } else {
            ++report.removed_raters;
        }
    }
    for (Index f = 0; f < all.num_items(); ++f) {
        if (keep_item[static_cast<std::size_t>(f)]) {
            item_map[static_cast<std::size_t>(f)] = out.items.intern(bundle.items.external(f));
            kept_items.push_back(f);
        } else {
            ++report.removed_items;
        }
    }

    std::vector<Rating> kept;
    for (const Rating& r : all.ratings()) {
        const Index m = rater_map[static_cast<std::size_t>(r.rater)];
        const Index f = item_map[static_cast<std::size_t>(r.item)];
        if (m >= 0 && f >= 0) kept.push_back({m, f, r.value});
    }
    out.ratings = RatingMatrix(out.raters.size(), out.items.size(), std::move(kept), all.scale());
    if (bundle.features) out.features = bundle.features->subset(kept_items);
    if (bundle.demographics) {
        std::vector<Demographics> rows;
        for (const Demographics& d : bundle.demographics->rows()) {
            if (out.raters.find(d.id) || out.items.find(d.id)) rows.push_back(d);
        }
        out.demographics = DemographicTable(std::move(rows));
    }
    out.duplicates = bundle.duplicates;
    return {std::move(out), report};
}

namespace {

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return in;
}

}  // namespace

DatasetBundle load_movielens_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return load_movielens(in);
}

DatasetBundle load_triplets_file(const std::filesystem::path& path, Scale scale) {
    auto in = open_input(path);
    return load_triplets(in, scale);
}

DemographicTable load_demographics_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return load_demographics(in);
}

FeatureTable load_features_file(const std::filesystem::path& path) {
    auto in = open_input(path, std::ios::in | std::ios::binary);
    return read_features(in);
}

}  // namespace visreg
