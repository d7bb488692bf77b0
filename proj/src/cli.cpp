#include "visreg/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "visreg/anchored_regression.hpp"
#include "visreg/evaluation.hpp"
#include "visreg/features.hpp"
#include "visreg/ingestion.hpp"
#include "visreg/mf_trainer.hpp"
#include "visreg/parallel.hpp"
#include "visreg/synthetic.hpp"
#include "text_util.hpp"

namespace visreg {

namespace {

namespace fs = std::filesystem;

/// Validation failure detected by the CLI itself (exit code 2).
class UsageError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct HyperFlags {
    Hyperparams hp;

    void add_to(CLI::App& app, bool with_ridge) {
        app.add_option("--dim", hp.latent_dim, "Latent dimension")->capture_default_str();
        app.add_option("--alpha1", hp.alpha1, "L2 weight on the factors")->capture_default_str();
        app.add_option("--alpha2", hp.alpha2, "Visual regularization weight")->capture_default_str();
        app.add_option("--lr", hp.learning_rate, "Gradient descent learning rate")->capture_default_str();
        app.add_option("--epochs", hp.epochs, "Gradient descent steps")->capture_default_str();
        app.add_option("--seed", hp.seed, "Random seed")->capture_default_str();
        app.add_option("--init-scale", hp.init_scale, "Half-width of the uniform initialization")->capture_default_str();
        app.add_option("--knn", hp.neighbor_k, "Neighbors per item in the visual term (0 = all pairs)")
            ->capture_default_str();
        if (with_ridge) add_ridge(app);
    }

    void add_ridge(CLI::App& app) {
        app.add_option("--lambda", hp.ridge_lambda, "Ridge weight of the anchored regression")->capture_default_str();
        app.add_option("--kappa", hp.ridge_kappa, "Similarity share of the ridge penalty, in [0, 1]")
            ->capture_default_str();
        app.add_option("--anchor-neighbors", hp.anchor_neighbors, "Neighborhood cap per anchor (0 = all)")
            ->capture_default_str();
    }
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto t = text::trim(item);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

struct DataFlags {
    std::string ratings;
    std::string format = "triplets";
    std::string scale = "binary";
    std::string features;

    void add_to(CLI::App& app) {
        app.add_option("--ratings", ratings, "Ratings file");
        app.add_option("--format", format, "Ratings format: triplets or movielens")
            ->check(CLI::IsMember({"triplets", "movielens"}))
            ->capture_default_str();
        app.add_option("--scale", scale, "Rating scale for triplets: binary or stars")
            ->check(CLI::IsMember({"binary", "stars"}))
            ->capture_default_str();
        app.add_option("--features", features, "Item feature file (text or VFEA binary)");
    }

    DatasetBundle load(bool need_features) const {
        if (ratings.empty()) throw UsageError("--ratings is required");
        DatasetBundle b = format == "movielens" ? load_movielens_file(ratings)
                                                : load_triplets_file(ratings, parse_scale(scale));
        if (need_features) {
            if (features.empty()) throw UsageError("--features is required");
            attach_features(b, load_features_file(features));
        }
        return b;
    }
};

// Model sidecar: the scale, the training majority and the external ids of
// the model's raters and items.
struct ModelMeta {
    Scale scale = Scale::Binary;
    double majority = 1.0;
    IdMap raters;
    IdMap items;
};

fs::path meta_path(const fs::path& model) {
    return fs::path(model.string() + ".json");
}

void save_meta(const fs::path& model, const ModelMeta& meta) {
    nlohmann::json j;
    j["scale"] = std::string(to_string(meta.scale));
    j["majority"] = meta.majority;
    j["raters"] = std::vector<std::uint64_t>(meta.raters.ids().begin(), meta.raters.ids().end());
    j["items"] = std::vector<std::uint64_t>(meta.items.ids().begin(), meta.items.ids().end());
    auto out = open_out(meta_path(model));
    out << j.dump() << '\n';
}

ModelMeta load_meta(const fs::path& model) {
    auto in = open_in(meta_path(model));
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InvalidArgument("malformed model sidecar " + meta_path(model).string());
    ModelMeta meta;
    try {
        meta.scale = parse_scale(j.at("scale").get<std::string>());
        meta.majority = j.at("majority").get<double>();
        meta.raters = IdMap(j.at("raters").get<std::vector<std::uint64_t>>());
        meta.items = IdMap(j.at("items").get<std::vector<std::uint64_t>>());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("malformed model sidecar: " + std::string(e.what()));
    }
    return meta;
}

LatentModel load_model_file(const fs::path& path) {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    return read_model(in);
}

/// Feature rows reordered to the model's item order.
FeatureStore features_for_model(const fs::path& path, const ModelMeta& meta) {
    DatasetBundle shell;
    shell.items = meta.items;
    attach_features(shell, load_features_file(path));
    return *shell.features;
}

void write_loss_report(std::ostream& out, const TrainReport& report) {
    out << "epoch,total,data,l2,visual\n";
    auto row = [&](int epoch, const LossBreakdown& l) {
        out << epoch << ',';
        text::write_double(out, l.total);
        out << ',';
        text::write_double(out, l.data);
        out << ',';
        text::write_double(out, l.l2);
        out << ',';
        text::write_double(out, l.visual);
        out << '\n';
    };
    row(0, report.initial);
    for (std::size_t e = 0; e < report.epochs.size(); ++e) row(static_cast<int>(e + 1), report.epochs[e]);
}

// ---------------------------------------------------------------- train

struct TrainCmd {
    DataFlags data;
    HyperFlags hyper;
    bool visreg = false;
    std::string model = "model.vmf";
    std::string report = "loss.csv";

    void add_to(CLI::App& app) {
        data.add_to(app);
        hyper.add_to(app, false);
        app.add_flag("--visreg", visreg, "Add the visual similarity term (needs --features)");
        app.add_option("--model", model, "Output model file")->capture_default_str();
        app.add_option("--report", report, "Output per-epoch loss CSV")->capture_default_str();
    }

    int run(std::ostream& out) {
        hyper.hp.validate();
        if (visreg && data.features.empty()) throw UsageError("--visreg requires --features");
        const DatasetBundle bundle = data.load(visreg);

        SimilarityGraph graph;
        if (visreg) graph = build_similarity_graph(*bundle.features, hyper.hp.neighbor_k);
        Hyperparams hp = hyper.hp;
        if (!visreg) hp.alpha2 = 0.0;
        const TrainResult result = train(bundle.ratings, visreg ? &graph : nullptr, hp);

        {
            auto f = open_out(model, std::ios::out | std::ios::binary);
            write_model(f, result.model);
        }
        save_meta(model, {bundle.ratings.scale(), baseline_majority(bundle.ratings), bundle.raters, bundle.items});
        {
            auto f = open_out(report);
            write_loss_report(f, result.report);
        }
        const LossBreakdown& last = result.report.epochs.empty() ? result.report.initial : result.report.epochs.back();
        out << "trained " << result.report.epochs_run << " epochs, final loss " << last.total << ", model written to "
            << model << '\n';
        return kExitOk;
    }
};

// -------------------------------------------------------------- project

struct ProjectCmd {
    HyperFlags hyper;
    std::string model;
    std::string features;
    std::string output = "projections.vanr";

    void add_to(CLI::App& app) {
        hyper.add_ridge(app);
        app.add_option("--model", model, "Trained model file")->required();
        app.add_option("--features", features, "Item feature file")->required();
        app.add_option("--out", output, "Output projection file")->capture_default_str();
    }

    int run(std::ostream& out) {
        hyper.hp.validate();
        const LatentModel m = load_model_file(model);
        const ModelMeta meta = load_meta(model);
        const FeatureStore feats = features_for_model(features, meta);
        const AnchorProjections proj = build_projections(m, feats, hyper.hp);
        auto f = open_out(output, std::ios::out | std::ios::binary);
        write_projections(f, proj);
        out << "wrote " << proj.anchors.size() << " anchor projections to " << output << '\n';
        return kExitOk;
    }
};

// -------------------------------------------------------------- predict

struct PredictCmd {
    std::string model;
    std::optional<std::uint64_t> item;
    std::optional<std::uint64_t> rater;
    std::string query_features;
    std::optional<std::uint64_t> query_id;
    std::string projections;
    std::string features;
    std::string output;

    void add_to(CLI::App& app) {
        app.add_option("--model", model, "Trained model file")->required();
        app.add_option("--item", item, "Warm prediction for this item id");
        app.add_option("--rater", rater, "Only predict for this rater id");
        app.add_option("--query-features", query_features, "Cold prediction from this feature file");
        app.add_option("--query-id", query_id, "Row of --query-features to use when it has several");
        app.add_option("--projections", projections, "Projection file (cold mode)");
        app.add_option("--features", features, "Anchor feature file used to build the projections (cold mode)");
        app.add_option("--out", output, "Output CSV (default: stdout)");
    }

    int run(std::ostream& out) {
        const bool warm = item.has_value();
        const bool cold = !query_features.empty();
        if (warm == cold) throw UsageError("give exactly one of --item or --query-features");
        if (cold && (projections.empty() || features.empty())) {
            throw UsageError("--query-features needs --projections and --features");
        }

        const LatentModel m = load_model_file(model);
        const ModelMeta meta = load_meta(model);
        if (meta.raters.size() != m.num_raters() || meta.items.size() != m.num_items()) {
            throw InvalidArgument("model sidecar does not match the model shape");
        }

        std::vector<Index> raters;
        if (rater) {
            const auto r = meta.raters.find(*rater);
            if (!r) throw UsageError("unknown rater id " + std::to_string(*rater));
            raters.push_back(*r);
        } else {
            raters.resize(static_cast<std::size_t>(m.num_raters()));
            std::iota(raters.begin(), raters.end(), Index{0});
        }

        Eigen::VectorXd latent;
        if (warm) {
            const auto f = meta.items.find(*item);
            if (!f) throw UsageError("unknown item id " + std::to_string(*item));
            latent = m.q.col(*f);
        } else {
            auto qin = open_in(query_features, std::ios::in | std::ios::binary);
            const FeatureTable query = read_features(qin);
            Index row = 0;
            if (query_id) {
                const auto it = std::find(query.ids.begin(), query.ids.end(), *query_id);
                if (it == query.ids.end()) throw UsageError("query id " + std::to_string(*query_id) + " not found");
                row = static_cast<Index>(it - query.ids.begin());
            } else if (query.ids.size() != 1) {
                throw UsageError("--query-features has " + std::to_string(query.ids.size()) +
                                 " rows; pick one with --query-id");
            }
            auto pin = open_in(projections, std::ios::in | std::ios::binary);
            const AnchorProjections proj = read_projections(pin);
            const FeatureStore anchors = features_for_model(features, meta);
            latent = regress_query(query.store.row(row), proj, anchors).latent;
            if (latent.size() != m.dim()) throw InvalidArgument("projections do not match the model dimension");
        }

        std::ofstream file;
        std::ostream* sink = &out;
        if (!output.empty()) {
            file = open_out(output);
            sink = &file;
        }
        *sink << "rater_id,prediction\n";
        for (Index r : raters) {
            const double raw = dot(column(m.p, r), {latent.data(), static_cast<std::size_t>(latent.size())});
            *sink << meta.raters.external(r) << ',';
            text::write_double(*sink, decode_prediction(raw, meta.scale, meta.majority));
            *sink << '\n';
        }
        return kExitOk;
    }
};

// ------------------------------------------------------------- evaluate

struct EvaluateCmd {
    DataFlags data;
    HyperFlags hyper;
    bool synthetic = false;
    std::string budgets = "0,10,100,full";
    std::string seeds;
    int num_seeds = 1;
    std::string methods = "MF,MF+VisReg";
    Index min_received = 10;
    double pca_energy = 0.0;
    bool visual_coldstart = true;
    std::string csv;
    std::string json;
    bool assert_gain = false;

    void add_to(CLI::App& app) {
        data.add_to(app);
        hyper.add_to(app, true);
        app.add_flag("--synthetic", synthetic, "Use the built-in synthetic benchmark instead of files");
        app.add_option("--budgets", budgets, "Comma-separated budgets: 0, counts, full")->capture_default_str();
        app.add_option("--seeds", seeds, "Comma-separated experiment seeds (default: --seed .. --seed+num-seeds-1)");
        app.add_option("--num-seeds", num_seeds, "Number of consecutive seeds")->capture_default_str();
        app.add_option("--methods", methods, "Comma-separated methods: MF, MF+VisReg")->capture_default_str();
        app.add_option("--min-received", min_received, "Drop items with fewer received ratings")
            ->capture_default_str();
        app.add_option("--pca-energy", pca_energy, "Reduce features by PCA to this energy (0 = off)")
            ->capture_default_str();
        app.add_option("--visual-coldstart", visual_coldstart,
                       "Use anchored regression for test items at budget 0")
            ->capture_default_str();
        app.add_option("--csv", csv, "Write the report CSV here (default: stdout)");
        app.add_option("--json", json, "Also write the report as JSON");
        app.add_flag("--assert-visreg-gain", assert_gain,
                     "Exit 1 unless MF+VisReg beats MF in >= 90% of seeds at the smallest positive budget");
    }

    int run(std::ostream& out, std::ostream& err) {
        hyper.hp.validate();
        if (num_seeds < 1) throw UsageError("--num-seeds must be >= 1");
        if (!(pca_energy >= 0.0 && pca_energy <= 1.0)) throw UsageError("--pca-energy must lie in [0, 1]");

        std::vector<Budget> budget_list;
        for (const auto& b : split_list(budgets)) budget_list.push_back(Budget::parse(b));
        if (budget_list.empty()) throw UsageError("--budgets is empty");
        std::vector<Method> method_list;
        for (const auto& m : split_list(methods)) method_list.push_back(parse_method(m));
        if (method_list.empty()) throw UsageError("--methods is empty");
        std::vector<std::uint64_t> seed_list;
        if (!seeds.empty()) {
            for (const auto& s : split_list(seeds)) seed_list.push_back(text::parse_u64(s, 0));
        } else {
            for (int i = 0; i < num_seeds; ++i) seed_list.push_back(hyper.hp.seed + static_cast<std::uint64_t>(i));
        }

        const bool need_features = std::any_of(method_list.begin(), method_list.end(),
                                               [](Method m) { return m == Method::MFVisReg; }) ||
                                   (visual_coldstart && std::any_of(budget_list.begin(), budget_list.end(), [](Budget b) {
                                        return b.kind == Budget::Kind::Visual;
                                    }));

        // Synthetic data is regenerated per seed; file data is loaded once.
        std::optional<DatasetBundle> file_data;
        if (!synthetic) {
            if (need_features && data.features.empty()) {
                throw UsageError("--features is required for MF+VisReg and for budget 0 cold start");
            }
            DatasetBundle loaded = data.load(!data.features.empty());
            auto [filtered, report] = filter_dataset(loaded, {min_received, 0, std::nullopt});
            if (report.removed_items > 0) {
                err << "filtered " << report.removed_items << " items with fewer than " << min_received
                    << " ratings\n";
            }
            file_data = std::move(filtered);
            if (file_data->features && pca_energy > 0.0) {
                file_data->features = apply_pca(fit_pca(*file_data->features, pca_energy), *file_data->features);
            }
        }

        struct Job {
            Method method;
            Budget budget;
            std::uint64_t seed;
        };
        std::vector<Job> jobs;
        for (std::uint64_t s : seed_list)
            for (Budget b : budget_list)
                for (Method m : method_list) jobs.push_back({m, b, s});

        std::map<std::uint64_t, SyntheticData> synth;
        if (synthetic) {
            for (std::uint64_t s : seed_list) synth.emplace(s, make_synthetic(benchmark_config(s)));
        }

        std::vector<ExperimentReport> rows(jobs.size());
        parallel_for(jobs.size(), [&](std::size_t i) {
            const Job& job = jobs[i];
            const RatingMatrix& ratings = synthetic ? synth.at(job.seed).ratings : file_data->ratings;
            const FeatureStore* feats = synthetic                 ? &synth.at(job.seed).features
                                        : file_data->features ? &*file_data->features
                                                              : nullptr;
            ExperimentConfig cfg;
            cfg.method = job.method;
            cfg.budget = job.budget;
            cfg.seed = job.seed;
            cfg.coldstart = visual_coldstart && job.budget.kind == Budget::Kind::Visual;
            rows[i] = run_experiment(ratings, feats, hyper.hp, cfg);
        });
        sort_reports(rows);

        if (csv.empty()) {
            write_report_csv(out, rows);
        } else {
            auto f = open_out(csv);
            write_report_csv(f, rows);
        }
        if (!json.empty()) {
            auto f = open_out(json);
            write_report_json(f, rows);
        }

        if (assert_gain) return check_gain(rows, budget_list, seed_list, err);
        return kExitOk;
    }

    int check_gain(const std::vector<ExperimentReport>& rows, const std::vector<Budget>& budget_list,
                   const std::vector<std::uint64_t>& seed_list, std::ostream& err) const {
        std::optional<Budget> target;
        for (const Budget& b : budget_list) {
            if (b.kind == Budget::Kind::Known && (!target || b.known < target->known)) target = b;
        }
        if (!target) throw UsageError("--assert-visreg-gain needs a positive finite budget");
        std::map<std::pair<std::uint64_t, Method>, double> acc;
        for (const auto& r : rows) {
            if (r.budget == *target) acc[{r.seed, r.method}] = r.accuracy;
        }
        std::size_t wins = 0;
        for (std::uint64_t s : seed_list) {
            const auto mf = acc.find({s, Method::MF});
            const auto vr = acc.find({s, Method::MFVisReg});
            if (mf == acc.end() || vr == acc.end()) throw UsageError("--assert-visreg-gain needs both methods");
            if (vr->second > mf->second) ++wins;
        }
        const bool ok = 10 * wins >= 9 * seed_list.size();
        err << "MF+VisReg beat MF at budget " << target->label() << " in " << wins << " of " << seed_list.size()
            << " seeds\n";
        return ok ? kExitOk : kExitFailure;
    }
};

// -------------------------------------------------------------- analyze

struct AnalyzeCmd {
    DataFlags data;
    std::string demographics;
    std::string model;
    std::string out_dir = ".";
    bool by_age = false;
    std::string age_bins = "18,25,35,45,60,100";
    bool paradox = false;
    std::string sizes = "1,10,100";
    bool latent = false;

    void add_to(CLI::App& app) {
        data.add_to(app);
        app.add_option("--demographics", demographics, "Demographics CSV subject_id,age,group");
        app.add_option("--model", model, "Trained model file (latent-space analyses)");
        app.add_option("--out-dir", out_dir, "Directory for the analysis CSVs")->capture_default_str();
        app.add_flag("--preference-by-age", by_age, "Positive-rating rates by rater and subject age bin");
        app.add_option("--age-bins", age_bins, "Comma-separated age bin edges")->capture_default_str();
        app.add_flag("--hotness-paradox", paradox, "Share of subjects whose neighbors are hotter");
        app.add_option("--sizes", sizes, "Comma-separated neighborhood sizes")->capture_default_str();
        app.add_flag("--latent-2d", latent, "2-D PCA projection of the item factors");
    }

    int run(std::ostream& out) {
        if (!by_age && !paradox && !latent) {
            throw UsageError("choose at least one of --preference-by-age, --hotness-paradox, --latent-2d");
        }
        if (by_age && demographics.empty()) throw UsageError("--preference-by-age requires --demographics");
        if (latent && model.empty()) throw UsageError("--latent-2d requires --model");
        if (paradox && model.empty() && data.features.empty()) {
            throw UsageError("--hotness-paradox requires --features and/or --model");
        }

        DatasetBundle bundle = data.load(paradox && !data.features.empty());
        if (bundle.ratings.scale() != Scale::Binary) throw UsageError("analyses need Binary ratings");
        if (!demographics.empty()) bundle.demographics = load_demographics_file(demographics);
        const std::vector<double> hot = hotness(bundle.ratings);

        std::optional<LatentModel> m;
        if (!model.empty()) {
            const LatentModel loaded = load_model_file(model);
            const ModelMeta meta = load_meta(model);
            // Reorder the item factors to the dataset's item order.
            LatentModel aligned;
            aligned.p = loaded.p;
            aligned.q.resize(loaded.dim(), bundle.items.size());
            for (Index f = 0; f < bundle.items.size(); ++f) {
                const auto col = meta.items.find(bundle.items.external(f));
                if (!col) throw InvalidArgument("model has no factor for item " + std::to_string(bundle.items.external(f)));
                aligned.q.col(f) = loaded.q.col(*col);
            }
            m = std::move(aligned);
        }

        if (by_age) {
            std::vector<double> edges;
            for (const auto& e : split_list(age_bins)) edges.push_back(text::parse_double(e, 0));
            const auto table = preference_by_age(bundle.ratings, bundle.rater_ages(), bundle.item_ages(), edges);
            auto f = open_out(fs::path(out_dir) / "preference_by_age.csv");
            write_age_preference_csv(f, table);
        }

        if (paradox) {
            std::vector<Index> size_list;
            for (const auto& s : split_list(sizes)) size_list.push_back(static_cast<Index>(text::parse_u64(s, 0)));
            if (size_list.empty()) throw UsageError("--sizes is empty");
            for (double h : hot) {
                if (std::isnan(h)) throw UsageError("every item needs at least one rating for the paradox curve");
            }
            const Index k = *std::max_element(size_list.begin(), size_list.end());
            std::vector<ParadoxRow> rows;
            auto add_variant = [&](const std::string& name, const SimilarityGraph& graph) {
                const auto curve = hotness_paradox_curve(hot, graph, size_list);
                for (std::size_t i = 0; i < size_list.size(); ++i) rows.push_back({name, size_list[i], curve[i]});
            };
            if (bundle.features) add_variant("feature", build_similarity_graph(*bundle.features, k));
            if (m) add_variant("latent", latent_similarity_graph(*m, k));
            auto f = open_out(fs::path(out_dir) / "hotness_paradox.csv");
            write_paradox_csv(f, rows);
        }

        if (latent) {
            const auto points = export_latent_2d(m->q, hot);
            auto f = open_out(fs::path(out_dir) / "latent_2d.csv");
            write_latent_csv(f, points, bundle.items.ids());
        }
        out << "analysis written to " << out_dir << '\n';
        return kExitOk;
    }
};

/// Expands "key = value" lines of a config file into flags for the chosen
/// subcommand. Flags given on the command line take precedence.
std::vector<std::string> merge_config(const std::vector<std::string>& args, CLI::App& app) {
    auto pos = std::find(args.begin(), args.end(), "--config");
    if (pos == args.end()) return args;
    if (pos + 1 == args.end()) throw UsageError("--config needs a file");
    const std::string config_path = *(pos + 1);

    std::vector<std::string> rest(args.begin(), pos);
    rest.insert(rest.end(), pos + 2, args.end());
    if (rest.size() < 2) throw UsageError("--config must be combined with a subcommand");
    CLI::App* sub = nullptr;
    for (CLI::App* s : app.get_subcommands({})) {
        if (s->get_name() == rest[1]) sub = s;
    }
    if (sub == nullptr) throw UsageError("unknown subcommand '" + rest[1] + "'");

    auto given = [&](const std::string& flag) {
        return std::any_of(rest.begin() + 2, rest.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };

    std::vector<std::string> extra;
    auto in = open_in(config_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto content = text::trim(line);
        if (content.empty() || content.front() == '#') continue;
        const auto eq = content.find('=');
        if (eq == std::string_view::npos) throw ParseError(lineno, "expected key = value");
        const std::string key(text::trim(content.substr(0, eq)));
        std::string value(text::trim(content.substr(eq + 1)));
        const std::string flag = "--" + key;
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        if (opt == nullptr) throw ParseError(lineno, "unknown key '" + key + "' for " + sub->get_name());
        if (given(flag)) continue;
        if (opt->get_expected_min() == 0) {
            if (value == "true" || value == "1") extra.push_back(flag);
            else if (value != "false" && value != "0") throw ParseError(lineno, "flag '" + key + "' takes true or false");
        } else {
            extra.push_back(flag);
            extra.push_back(value);
        }
    }
    std::vector<std::string> merged(rest.begin(), rest.begin() + 2);
    merged.insert(merged.end(), extra.begin(), extra.end());
    merged.insert(merged.end(), rest.begin() + 2, rest.end());
    return merged;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Visually regularized matrix factorization with cold-start regression"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    TrainCmd train_cmd;
    ProjectCmd project_cmd;
    PredictCmd predict_cmd;
    EvaluateCmd evaluate_cmd;
    AnalyzeCmd analyze_cmd;
    CLI::App* train_app = app.add_subcommand("train", "Train a latent factor model");
    CLI::App* project_app = app.add_subcommand("project", "Build per-anchor feature-to-latent projections");
    CLI::App* predict_app = app.add_subcommand("predict", "Predict ratings for a known item or a feature query");
    CLI::App* evaluate_app = app.add_subcommand("evaluate", "Run the split/budget evaluation protocol");
    CLI::App* analyze_app = app.add_subcommand("analyze", "Preference, hotness-paradox and latent-space tables");
    train_cmd.add_to(*train_app);
    project_cmd.add_to(*project_app);
    predict_cmd.add_to(*predict_app);
    evaluate_cmd.add_to(*evaluate_app);
    analyze_cmd.add_to(*analyze_app);

    try {
        const std::vector<std::string> merged = merge_config(args, app);
        std::vector<const char*> argv;
        argv.reserve(merged.size());
        for (const auto& a : merged) argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            std::ostringstream o, e2;
            const int code = app.exit(e, o, e2);
            out << o.str();
            err << e2.str();
            return code == 0 ? kExitOk : kExitUsage;
        }

        if (train_app->parsed()) return train_cmd.run(out);
        if (project_app->parsed()) return project_cmd.run(out);
        if (predict_app->parsed()) return predict_cmd.run(out);
        if (evaluate_app->parsed()) return evaluate_cmd.run(out, err);
        if (analyze_app->parsed()) return analyze_cmd.run(out);
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const SingularSystem& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace visreg
