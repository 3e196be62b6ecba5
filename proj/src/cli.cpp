#include "cat/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cat/config.hpp"
#include "cat/data.hpp"
#include "cat/log.hpp"
#include "cat/models.hpp"
#include "cat/train.hpp"

namespace cat {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool force = false;
    std::size_t jobs = 1;
};

void add_common(CLI::App* sub, CommonArgs& a, bool with_jobs) {
    sub->add_option("--config", a.config_path, "JSON config file (defaults apply without one)");
    sub->add_option("--set", a.sets, "config override as dotted.path=value, repeatable");
    sub->add_option("--out", a.out_dir, "output directory")->required();
    sub->add_option("--seed", a.seed, "master seed (wins over config and --set)");
    sub->add_flag("--force", a.force, "overwrite existing output files");
    if (with_jobs) sub->add_option("--jobs", a.jobs, "concurrent fits (ablate only)");
}

FullConfig load(const CLI::App* sub, const CommonArgs& a) {
    std::vector<std::string> overrides = a.sets;
    if (sub->count("--seed") > 0) overrides.push_back("seed=" + std::to_string(a.seed));
    return load_config(a.config_path, overrides);
}

// create out_dir, refuse to clobber this verb's own outputs unless --force
void prepare_out_dir(const fs::path& dir, const std::vector<std::string>& outputs, bool force) {
    fs::create_directories(dir);
    if (force) return;
    for (const std::string& name : outputs) {
        fs::path p = dir / name;
        if (fs::exists(p))
            throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
    }
}

void write_json_file(const fs::path& path, const ordered_json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << doc.dump(2) << "\n";
    out.flush();
    if (!out) throw DataError("write failed: " + path.string());
}

ordered_json metrics_record_json(const MetricsRecord& r) {
    ordered_json m;
    m["epoch"] = r.epoch;
    m["l_cls"] = r.l_cls;
    m["l_d"] = r.l_d;
    m["l_con"] = r.l_con;
    m["total"] = r.total;
    m["source_acc"] = r.source_acc;
    m["target_acc"] = r.target_acc;
    if (r.a_distance)
        m["a_distance"] = *r.a_distance;
    else
        m["a_distance"] = nullptr;
    m["wall_ms"] = r.wall_ms;
    return m;
}

ModelParams load_run_checkpoint(const fs::path& dir) {
    fs::path ckpt = dir / "checkpoint.json";
    if (!fs::exists(ckpt))
        throw ConfigError("no checkpoint at " + ckpt.string() + " (run `train --out " +
                          dir.string() + "` first)");
    return load_checkpoint(ckpt.string());
}

void check_checkpoint_dims(const ModelParams& params, const LabeledDataset& ds) {
    if (params.spec_g.in_dim() != ds.dim())
        throw ConfigError("checkpoint expects input dim " +
                          std::to_string(params.spec_g.in_dim()) + " but dataset has dim " +
                          std::to_string(ds.dim()));
}

int cmd_train(const CLI::App* sub, const CommonArgs& a) {
    FullConfig fc = load(sub, a);
    fs::path dir(a.out_dir);
    prepare_out_dir(dir, {"metrics.csv", "summary.json", "checkpoint.json"}, a.force);

    FitResult fr;
    try {
        fr = fit(fc.run);
    } catch (const NonFiniteLossError& e) {
        ordered_json diag;
        diag["error"] = e.what();
        diag["epoch"] = e.epoch;
        diag["step"] = e.step;
        ordered_json bd;
        bd["l_cls"] = e.breakdown.l_cls;
        bd["l_d"] = e.breakdown.l_d;
        bd["l_con"] = e.breakdown.l_con;
        bd["lambda"] = e.breakdown.lambda;
        bd["total"] = e.breakdown.total;
        diag["breakdown"] = std::move(bd);
        diag["config"] = config_to_json(fc);
        fs::path dump = dir / "diagnostic.json";
        write_json_file(dump, diag);
        log::error(std::string(e.what()) + "; diagnostic written to " + dump.string());
        return 2;
    }

    write_metrics_csv((dir / "metrics.csv").string(), fr.metrics);
    save_checkpoint((dir / "checkpoint.json").string(), fr.params);
    ordered_json summary;
    summary["version"] = CAT_UDA_GIT_REV;
    summary["config"] = config_to_json(fc);
    summary["final_metrics"] = metrics_record_json(fr.metrics.back());
    write_json_file(dir / "summary.json", summary);

    const MetricsRecord& last = fr.metrics.back();
    std::printf("train: %zu epochs, source_acc=%s target_acc=%s; artifacts in %s\n",
                fc.run.epochs, format_f64(last.source_acc).c_str(),
                format_f64(last.target_acc).c_str(), dir.string().c_str());
    return 0;
}

int cmd_ablate(const CLI::App* sub, const CommonArgs& a) {
    FullConfig fc = load(sub, a);
    fs::path dir(a.out_dir);
    prepare_out_dir(dir, {"ablation.csv"}, a.force);

    std::vector<double> lambdas = fc.ablation.lambdas;
    std::vector<std::size_t> Ks = fc.ablation.Ks;
    std::sort(lambdas.begin(), lambdas.end());
    std::sort(Ks.begin(), Ks.end());

    std::vector<AblationRow> rows =
        run_ablation(fc.run, lambdas, Ks, fc.ablation.seeds, std::max<std::size_t>(1, a.jobs));
    write_ablation_csv((dir / "ablation.csv").string(), rows);

    std::size_t failed = 0;
    for (const AblationRow& r : rows)
        if (r.failed) ++failed;
    bool all_failed =
        std::all_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.n_seeds == 0; });
    std::printf("ablate: %zu rows (%zu with failures) written to %s\n", rows.size(), failed,
                (dir / "ablation.csv").string().c_str());
    if (all_failed) {
        log::error("all ablation runs failed: " + rows.front().error);
        return 1;
    }
    return 0;
}

int cmd_adistance(const CLI::App* sub, const CommonArgs& a) {
    FullConfig fc = load(sub, a);
    fs::path dir(a.out_dir);
    ModelParams params = load_run_checkpoint(dir);
    prepare_out_dir(dir, {"adistance.json"}, a.force);

    DatasetPair data = make_datasets(fc.run.dataset, fc.run.seed);
    check_checkpoint_dims(params, data.source);
    Tensor fs_ = extract_features(params, data.source.x);
    Tensor ft_ = extract_features(params, data.target.x);
    // same probe seed as fit's final-epoch measurement, so this reproduces
    // the last a_distance column of metrics.csv for the matching run
    std::uint64_t probe_seed =
        derive_seed(derive_seed(fc.run.seed, streams::adist), fc.run.epochs);
    double ad = a_distance(fs_, ft_, probe_seed);

    ordered_json doc;
    doc["a_distance"] = ad;
    doc["n_source"] = data.source.n();
    doc["n_target"] = data.target.n();
    doc["probe_seed"] = probe_seed;
    doc["version"] = CAT_UDA_GIT_REV;
    write_json_file(dir / "adistance.json", doc);
    std::printf("a_distance=%s\n", format_f64(ad).c_str());
    return 0;
}

int cmd_export_embeddings(const CLI::App* sub, const CommonArgs& a) {
    FullConfig fc = load(sub, a);
    fs::path dir(a.out_dir);
    ModelParams params = load_run_checkpoint(dir);
    prepare_out_dir(dir, {"embeddings.csv"}, a.force);

    DatasetPair data = make_datasets(fc.run.dataset, fc.run.seed);
    check_checkpoint_dims(params, data.source);
    Rng rng(derive_seed(fc.run.seed, streams::embed));

    std::string csv;
    std::size_t d_z = params.spec_g.out_dim();
    for (std::size_t j = 0; j < d_z; ++j) csv += "z" + std::to_string(j) + ",";
    csv += "domain,label,pred\n";

    for (const LabeledDataset* ds : {&data.source, &data.target}) {
        const char* tag = ds->domain == DomainTag::source ? "source" : "target";
        std::vector<std::size_t> chosen;
        for (int c = 0; c < ds->n_classes; ++c) {
            std::vector<std::size_t> ids;
            for (std::size_t i = 0; i < ds->n(); ++i)
                if (ds->y[i] == c) ids.push_back(i);
            rng.shuffle(ids);
            std::size_t take = std::min(fc.exports.per_class, ids.size());
            ids.resize(take);
            std::sort(ids.begin(), ids.end());
            chosen.insert(chosen.end(), ids.begin(), ids.end());
        }
        Tensor sel({chosen.size(), ds->dim()});
        for (std::size_t k = 0; k < chosen.size(); ++k)
            std::copy(ds->x.row_ptr(chosen[k]), ds->x.row_ptr(chosen[k]) + ds->dim(),
                      sel.row_ptr(k));
        Tensor z = extract_features(params, sel);
        std::vector<int> pred = argmax_rows(classify(params, z));
        for (std::size_t k = 0; k < chosen.size(); ++k) {
            for (std::size_t j = 0; j < d_z; ++j) csv += format_f64(z.at(k, j)) + ",";
            csv += tag;
            csv += ",";
            csv += std::to_string(ds->y[chosen[k]]);
            csv += ",";
            csv += std::to_string(pred[k]);
            csv += "\n";
        }
    }

    fs::path out = dir / "embeddings.csv";
    std::ofstream f(out, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + out.string());
    f << csv;
    f.flush();
    if (!f) throw DataError("write failed: " + out.string());
    std::printf("export-embeddings: wrote %s\n", out.string().c_str());
    return 0;
}

int cmd_gen_data(const CLI::App* sub, const CommonArgs& a) {
    FullConfig fc = load(sub, a);
    fs::path dir(a.out_dir);
    prepare_out_dir(dir, {"source.csv", "target.csv"}, a.force);
    DatasetPair data = make_datasets(fc.run.dataset, fc.run.seed);
    export_dataset_csv((dir / "source.csv").string(), data.source);
    export_dataset_csv((dir / "target.csv").string(), data.target);
    std::printf("gen-data: wrote %s and %s\n", (dir / "source.csv").string().c_str(),
                (dir / "target.csv").string().c_str());
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"contrastive adversarial training for unsupervised domain adaptation"};
    app.require_subcommand(1);

    CommonArgs train_a, ablate_a, adist_a, embed_a, gen_a;
    CLI::App* s_train = app.add_subcommand("train", "fit a model, write metrics and checkpoint");
    add_common(s_train, train_a, false);
    CLI::App* s_ablate = app.add_subcommand("ablate", "run the lambda/K ablation grid");
    add_common(s_ablate, ablate_a, true);
    CLI::App* s_adist =
        app.add_subcommand("adistance", "proxy A-distance of a trained checkpoint's features");
    add_common(s_adist, adist_a, false);
    CLI::App* s_embed = app.add_subcommand("export-embeddings",
                                           "sample per-class feature embeddings to CSV");
    add_common(s_embed, embed_a, false);
    CLI::App* s_gen = app.add_subcommand("gen-data", "write the configured dataset pair as CSV");
    add_common(s_gen, gen_a, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (s_train->parsed()) return cmd_train(s_train, train_a);
        if (s_ablate->parsed()) return cmd_ablate(s_ablate, ablate_a);
        if (s_adist->parsed()) return cmd_adistance(s_adist, adist_a);
        if (s_embed->parsed()) return cmd_export_embeddings(s_embed, embed_a);
        if (s_gen->parsed()) return cmd_gen_data(s_gen, gen_a);
    } catch (const std::exception& e) {
        log::error(e.what());
        return 1;
    }
    log::error("no command given");
    return 1;
}

}  // namespace cat
