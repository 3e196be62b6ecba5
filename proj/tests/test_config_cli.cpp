#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cat/config.hpp"
#include "cat/data.hpp"
#include "cat/models.hpp"
#include "cat/train.hpp"

using namespace cat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void dump_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

// message-substring helper: doctest has no built-in contains-check for what()
template <typename E, typename Fn>
std::string thrown_message(Fn&& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    } catch (...) {
        FAIL("threw a different exception type");
    }
    FAIL("did not throw");
    return "";
}

struct CmdResult {
    int code = -1;
    std::string out, err;
};

// run the installed binary through sh, capturing exit code and both streams
CmdResult run_tool(const std::string& args, const std::string& env_prefix = "") {
    const char* bin = std::getenv("CAT_UDA_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "CAT_UDA_BIN must point at the cat-uda binary");
    fs::path tmp = fs::temp_directory_path();
    fs::path out_f = tmp / "cat_uda_cli_stdout.txt";
    fs::path err_f = tmp / "cat_uda_cli_stderr.txt";
    std::string cmd = env_prefix + (env_prefix.empty() ? "" : " ") + "\"" + std::string(bin) +
                      "\" " + args + " >" + out_f.string() + " 2>" + err_f.string();
    int rc = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out_f);
    r.err = slurp(err_f);
    return r;
}

// fresh scratch directory per test case
fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("cat_uda_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// config small enough that a train run takes well under a second
json tiny_doc() {
    json doc;
    doc["epochs"] = 1;
    doc["batch_size"] = 16;
    doc["dataset"] = {{"kind", "two_moons"}, {"n", 80}};
    doc["arch"] = {{"g_hidden", {8}}, {"feature_dim", 3}, {"d_hidden", {4}}};
    doc["adist_interval"] = 0;
    return doc;
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("an empty document parses to the documented defaults") {
    FullConfig fc = parse_config(json::object());
    const RunConfig& r = fc.run;
    CHECK(r.mode == Mode::dann_cat);
    CHECK(r.lambda == 1.0);
    CHECK(r.K == 5);
    CHECK(r.batch_size == 32);
    CHECK(r.epochs == 50);
    CHECK(r.lr == 0.002);
    CHECK(r.sgd_momentum == 0.9);
    CHECK(r.weight_decay == 1e-4);
    CHECK(r.grad_clip == 5.0);
    CHECK(r.grl.kind == GrlSchedule::Kind::dann_ramp);
    CHECK(r.bank_momentum == 0.0);
    CHECK_FALSE(r.normalize_features);
    CHECK(r.seed == 1);
    CHECK(r.adist_interval == 10);
    CHECK(r.dataset.kind == "two_moons");
    CHECK(r.dataset.n == 2000);
    CHECK(r.dataset.noise_sd == 0.1);
    CHECK(r.dataset.rotation_deg == 30.0);
    CHECK(r.dataset.translate == std::vector<double>{0.0, 0.0});
    CHECK(r.arch.g_hidden == std::vector<std::size_t>{64, 64});
    CHECK(r.arch.feature_dim == 4);
    CHECK(r.arch.d_hidden == std::vector<std::size_t>{16});
    CHECK(r.arch.activation == Activation::relu);
    CHECK(fc.ablation.lambdas == std::vector<double>{0.1, 1.0, 5.0, 10.0});
    CHECK(fc.ablation.Ks == std::vector<std::size_t>{1, 2, 5, 15});
    CHECK(fc.ablation.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    CHECK(fc.exports.per_class == 300);
}

TEST_CASE("unknown keys are rejected with a nearest-key hint") {
    std::string msg =
        thrown_message<ConfigError>([] { parse_config(json{{"lamda", 0.5}}); });
    CHECK(contains(msg, "unknown key 'lamda'"));
    CHECK(contains(msg, "did you mean 'lambda'?"));

    msg = thrown_message<ConfigError>(
        [] { parse_config(json{{"arch", {{"feature_dims", 4}}}}); });
    CHECK(contains(msg, "arch.feature_dims"));
    CHECK(contains(msg, "did you mean 'feature_dim'?"));

    // typos far from every known key get no suggestion, just the rejection
    msg = thrown_message<ConfigError>([] { parse_config(json{{"zzzzzzzz", 1}}); });
    CHECK(contains(msg, "unknown key 'zzzzzzzz'"));
    CHECK_FALSE(contains(msg, "did you mean"));
}

TEST_CASE("type errors name the offending dotted path") {
    CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
    std::string msg =
        thrown_message<ConfigError>([] { parse_config(json{{"lambda", "high"}}); });
    CHECK(contains(msg, "'lambda' must be a number"));
    msg = thrown_message<ConfigError>([] { parse_config(json{{"K", -3}}); });
    CHECK(contains(msg, "'K' must be a non-negative integer"));
    msg = thrown_message<ConfigError>([] { parse_config(json{{"normalize_features", 1}}); });
    CHECK(contains(msg, "'normalize_features' must be a boolean"));
    msg = thrown_message<ConfigError>([] { parse_config(json{{"mode", 5}}); });
    CHECK(contains(msg, "'mode' must be a string"));
    msg = thrown_message<ConfigError>([] { parse_config(json{{"mode", "dan"}}); });
    CHECK(contains(msg, "unknown mode 'dan'"));
    msg = thrown_message<ConfigError>(
        [] { parse_config(json{{"grl", {{"kind", "linear"}}}}); });
    CHECK(contains(msg, "'grl.kind'"));
    msg = thrown_message<ConfigError>(
        [] { parse_config(json{{"dataset", {{"kind", "spirals"}}}}); });
    CHECK(contains(msg, "'dataset.kind'"));
    msg = thrown_message<ConfigError>(
        [] { parse_config(json{{"arch", {{"activation", "gelu"}}}}); });
    CHECK(contains(msg, "'arch.activation'"));
    msg = thrown_message<ConfigError>(
        [] { parse_config(json{{"arch", {{"g_hidden", {8, "x"}}}}}); });
    CHECK(contains(msg, "'arch.g_hidden'"));
}

TEST_CASE("range violations surface through validate with the field name") {
    std::string msg =
        thrown_message<ConfigError>([] { parse_config(json{{"lambda", -1.0}}); });
    CHECK(contains(msg, "lambda"));
    CHECK_THROWS_AS(parse_config(json{{"K", 0}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"lr", 0.0}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"sgd_momentum", 1.0}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"export", {{"per_class", 0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"ablation", {{"lambdas", json::array()}}}}),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"ablation", {{"Ks", {0}}}}}), ConfigError);
}

TEST_CASE("source_only defaults lambda off unless the document pins it") {
    FullConfig fc = parse_config(json{{"mode", "source_only"}});
    CHECK(fc.run.mode == Mode::source_only);
    CHECK(fc.run.lambda == 0.0);
    CHECK_THROWS_AS(parse_config(json{{"mode", "source_only"}, {"lambda", 0.5}}),
                    ConfigError);
    FullConfig pinned = parse_config(json{{"mode", "source_only"}, {"lambda", 0.0}});
    CHECK(pinned.run.lambda == 0.0);
}

TEST_CASE("dataset keys are gated by kind") {
    std::string msg = thrown_message<ConfigError>([] {
        parse_config(json{{"dataset", {{"kind", "two_moons"}, {"n_per_class", 10}}}});
    });
    CHECK(contains(msg, "for dataset kind 'two_moons'"));
    CHECK_THROWS_AS(
        parse_config(json{{"dataset", {{"kind", "blobs"}, {"noise_sd", 0.1}}}}),
        ConfigError);

    json doc{{"dataset",
              {{"kind", "blobs"},
               {"n_classes", 2},
               {"n_per_class", 30},
               {"rotation_deg", 0.0},  // rotation is 2-D only
               {"centers", {{0.0, 0.0, 0.0}, {2.0, 2.0, 2.0}}}}}};
    FullConfig fc = parse_config(doc);
    CHECK(fc.run.dataset.centers.size() == 2);
    // translate defaults to the center dimensionality when unspecified
    CHECK(fc.run.dataset.translate == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("apply_overrides: JSON values, bare words, and nested creation") {
    json doc = json::object();
    doc = apply_overrides(doc, {"lambda=0.5", "mode=dann", "dataset.noise_sd=0.2",
                                "arch.g_hidden=[8,8]", "normalize_features=true"});
    CHECK(doc["lambda"] == json(0.5));
    CHECK(doc["mode"] == json("dann"));  // bare word falls back to string
    CHECK(doc["dataset"]["noise_sd"] == json(0.2));
    CHECK(doc["arch"]["g_hidden"] == json({8, 8}));
    CHECK(doc["normalize_features"] == json(true));
    FullConfig fc = parse_config(doc);
    CHECK(fc.run.mode == Mode::dann);
    CHECK(fc.run.lambda == 0.5);
    CHECK(fc.run.arch.g_hidden == std::vector<std::size_t>{8, 8});

    CHECK_THROWS_AS(apply_overrides(json::object(), {"novalue"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(json::object(), {"=1"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(json::object(), {"a..b=1"}), ConfigError);
    // cannot descend through a scalar
    CHECK_THROWS_AS(apply_overrides(json{{"lambda", 1.0}}, {"lambda.x=1"}), ConfigError);
    // later overrides win
    json last = apply_overrides(json::object(), {"lambda=1", "lambda=2"});
    CHECK(last["lambda"] == json(2));
}

TEST_CASE("config_to_json echo is closed under parse_config") {
    FullConfig fc = parse_config(json::object());
    nlohmann::ordered_json echo = config_to_json(fc);
    FullConfig fc2 = parse_config(echo);
    CHECK(config_to_json(fc2).dump() == echo.dump());
    CHECK(echo.begin().key() == "mode");  // normalized order starts at mode

    json doc{{"mode", "dann_kld"},
             {"lambda", 0.25},
             {"grl", {{"kind", "constant"}, {"mu", 0.5}}},
             {"dataset",
              {{"kind", "blobs"}, {"n_classes", 2}, {"n_per_class", 25},
               {"centers", {{0.0, 0.0}, {3.0, 1.0}}}}},
             {"arch", {{"activation", "tanh"}}}};
    FullConfig custom = parse_config(doc);
    nlohmann::ordered_json echo2 = config_to_json(custom);
    CHECK(config_to_json(parse_config(echo2)).dump() == echo2.dump());
    CHECK(echo2["grl"]["kind"] == "constant");
    CHECK(echo2["dataset"]["kind"] == "blobs");
    CHECK(echo2["arch"]["activation"] == "tanh");
    // kind-gated echo: two_moons keys absent from a blobs document
    CHECK_FALSE(echo2["dataset"].contains("noise_sd"));
}

TEST_CASE("load_config: files, overrides, and parse failures") {
    fs::path dir = scratch("load_config");
    fs::path cfg = dir / "cfg.json";
    dump_text(cfg, "{\"lambda\": 0.5, \"seed\": 9}\n");
    FullConfig fc = load_config(cfg.string(), {"seed=77"});
    CHECK(fc.run.lambda == 0.5);
    CHECK(fc.run.seed == 77);  // override wins over the file

    FullConfig defaults = load_config("", {});
    CHECK(defaults.run.lambda == 1.0);

    CHECK_THROWS_AS(load_config((dir / "missing.json").string(), {}), ConfigError);
    fs::path broken = dir / "broken.json";
    dump_text(broken, "{\"lambda\": ");
    std::string msg =
        thrown_message<ConfigError>([&] { load_config(broken.string(), {}); });
    CHECK(contains(msg, "broken.json"));
}

TEST_CASE("cli train: artifacts, refusal without --force, and --seed priority") {
    fs::path dir = scratch("cli_train");
    fs::path cfg = dir / "cfg.json";
    dump_text(cfg, tiny_doc().dump());

    CmdResult r = run_tool("train --config " + cfg.string() + " --out " + dir.string() +
                           " --set seed=2 --seed 3");
    CHECK(r.code == 0);
    CHECK(contains(r.out, "target_acc"));
    REQUIRE(fs::exists(dir / "metrics.csv"));
    REQUIRE(fs::exists(dir / "summary.json"));
    REQUIRE(fs::exists(dir / "checkpoint.json"));

    std::vector<MetricsRecord> metrics = read_metrics_csv((dir / "metrics.csv").string());
    REQUIRE(metrics.size() == 2);  // epochs=1 plus the untrained record
    CHECK(metrics[0].epoch == 0);
    CHECK(metrics[1].epoch == 1);
    CHECK(metrics[0].a_distance.has_value());
    CHECK(metrics[1].a_distance.has_value());

    json summary = json::parse(slurp(dir / "summary.json"));
    CHECK(summary["config"]["seed"] == 3);  // --seed beats --set beats file
    CHECK(summary["config"]["epochs"] == 1);
    CHECK(summary["final_metrics"]["target_acc"] == json(metrics.back().target_acc));
    CHECK(summary["final_metrics"]["epoch"] == 1);
    CHECK(summary.contains("version"));

    ModelParams params = load_checkpoint((dir / "checkpoint.json").string());
    CHECK(params.spec_g.in_dim() == 2);
    CHECK(params.spec_g.out_dim() == 3);

    // a second run must refuse to clobber without --force
    CmdResult again = run_tool("train --config " + cfg.string() + " --out " + dir.string());
    CHECK(again.code == 1);
    CHECK(contains(again.err, "refusing to overwrite"));
    CmdResult forced =
        run_tool("train --config " + cfg.string() + " --out " + dir.string() +
                 " --seed 3 --force");
    CHECK(forced.code == 0);
}

TEST_CASE("cli adistance reproduces the final metrics probe for the same run") {
    fs::path dir = scratch("cli_adist");
    fs::path cfg = dir / "cfg.json";
    dump_text(cfg, tiny_doc().dump());

    CmdResult missing = run_tool("adistance --config " + cfg.string() + " --out " +
                                 dir.string());
    CHECK(missing.code == 1);
    CHECK(contains(missing.err, "no checkpoint"));

    CHECK(run_tool("train --config " + cfg.string() + " --out " + dir.string()).code == 0);
    CmdResult r = run_tool("adistance --config " + cfg.string() + " --out " + dir.string());
    CHECK(r.code == 0);
    REQUIRE(fs::exists(dir / "adistance.json"));
    json doc = json::parse(slurp(dir / "adistance.json"));
    CHECK(doc["n_source"] == 80);
    CHECK(doc["n_target"] == 80);

    std::vector<MetricsRecord> metrics = read_metrics_csv((dir / "metrics.csv").string());
    REQUIRE(metrics.back().a_distance.has_value());
    CHECK(doc["a_distance"].get<double>() == *metrics.back().a_distance);

    // dimension mismatch between checkpoint and requested dataset is caught
    CmdResult mismatch = run_tool(
        "adistance --config " + cfg.string() + " --out " + dir.string() +
        " --force --set 'dataset={\"kind\":\"blobs\",\"n_classes\":2,\"n_per_class\":30,"
        "\"rotation_deg\":0,\"centers\":[[0,0,0],[2,2,2]]}'");
    CHECK(mismatch.code == 1);
    CHECK(contains(mismatch.err, "input dim"));
}

TEST_CASE("cli export-embeddings: header, row counts, and value sanity") {
    fs::path dir = scratch("cli_embed");
    fs::path cfg = dir / "cfg.json";
    json doc = tiny_doc();
    doc["export"] = {{"per_class", 5}};
    dump_text(cfg, doc.dump());

    CHECK(run_tool("train --config " + cfg.string() + " --out " + dir.string()).code == 0);
    CmdResult r = run_tool("export-embeddings --config " + cfg.string() + " --out " +
                           dir.string());
    CHECK(r.code == 0);
    REQUIRE(fs::exists(dir / "embeddings.csv"));

    std::istringstream in(slurp(dir / "embeddings.csv"));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "z0,z1,z2,domain,label,pred");
    std::size_t rows = 0, n_source = 0, n_target = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) fields.push_back(cell);
        REQUIRE(fields.size() == 6);
        for (int j = 0; j < 3; ++j) CHECK(std::isfinite(std::stod(fields[j])));
        CHECK((fields[3] == "source" || fields[3] == "target"));
        (fields[3] == "source" ? n_source : n_target) += 1;
        CHECK((fields[4] == "0" || fields[4] == "1"));
        CHECK((fields[5] == "0" || fields[5] == "1"));
    }
    // 5 per class, 2 classes, both domains
    CHECK(rows == 20);
    CHECK(n_source == 10);
    CHECK(n_target == 10);
}

TEST_CASE("cli gen-data round-trips the configured datasets") {
    fs::path dir = scratch("cli_gendata");
    fs::path cfg = dir / "cfg.json";
    dump_text(cfg, tiny_doc().dump());

    CmdResult r = run_tool("gen-data --config " + cfg.string() + " --out " + dir.string() +
                           " --seed 5");
    CHECK(r.code == 0);
    LabeledDataset src = import_dataset_csv((dir / "source.csv").string());
    LabeledDataset tgt = import_dataset_csv((dir / "target.csv").string());
    CHECK(src.domain == DomainTag::source);
    CHECK(tgt.domain == DomainTag::target);

    FullConfig fc = parse_config(tiny_doc());
    fc.run.seed = 5;
    DatasetPair expect = make_datasets(fc.run.dataset, fc.run.seed);
    CHECK(src.x == expect.source.x);
    CHECK(src.y == expect.source.y);
    CHECK(tgt.x == expect.target.x);
    CHECK(tgt.y == expect.target.y);
}

TEST_CASE("cli ablate writes the grid in ascending lambda/K order") {
    fs::path dir = scratch("cli_ablate");
    fs::path cfg = dir / "cfg.json";
    json doc = tiny_doc();
    doc["ablation"] = {{"lambdas", {0.01, 0.0}}, {"Ks", {2, 1}}, {"seeds", {1}}};
    dump_text(cfg, doc.dump());

    CmdResult r = run_tool("ablate --config " + cfg.string() + " --out " + dir.string());
    CHECK(r.code == 0);
    std::istringstream in(slurp(dir / "ablation.csv"));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "lambda,K,mean_target_acc,std_target_acc,n_seeds,status");
    std::vector<std::string> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].rfind("0,1,", 0) == 0);
    CHECK(rows[1].rfind("0,2,", 0) == 0);
    CHECK(rows[2].rfind("0.01,1,", 0) == 0);
    CHECK(rows[3].rfind("0.01,2,", 0) == 0);
    for (const std::string& row : rows) CHECK(contains(row, ",ok"));
}

TEST_CASE("cli train exits 2 with a diagnostic dump when the loss diverges") {
    fs::path dir = scratch("cli_diverge");
    fs::path cfg = dir / "cfg.json";
    json doc = tiny_doc();
    doc["lr"] = 1e300;
    dump_text(cfg, doc.dump());

    CmdResult r = run_tool("train --config " + cfg.string() + " --out " + dir.string());
    CHECK(r.code == 2);
    CHECK(contains(r.err, "non-finite"));
    REQUIRE(fs::exists(dir / "diagnostic.json"));
    CHECK_FALSE(fs::exists(dir / "metrics.csv"));
    CHECK_FALSE(fs::exists(dir / "checkpoint.json"));
    json diag = json::parse(slurp(dir / "diagnostic.json"));
    CHECK(contains(diag["error"].get<std::string>(), "non-finite"));
    CHECK(diag["epoch"] == 1);
    CHECK(diag.contains("breakdown"));
    CHECK(diag["config"]["lr"] == 1e300);
}

TEST_CASE("cli respects CAT_UDA_KERNELS and rejects unknown backends") {
    fs::path dir = scratch("cli_kernels");
    fs::path cfg = dir / "cfg.json";
    dump_text(cfg, tiny_doc().dump());

    CmdResult bogus = run_tool(
        "train --config " + cfg.string() + " --out " + dir.string(), "CAT_UDA_KERNELS=bogus");
    CHECK(bogus.code != 0);
    CHECK(contains(bogus.err, "CAT_UDA_KERNELS"));

    CmdResult scalar = run_tool(
        "train --config " + cfg.string() + " --out " + dir.string(), "CAT_UDA_KERNELS=scalar");
    CHECK(scalar.code == 0);
}

TEST_CASE("cli arg errors: bad overrides, bad verbs, and help") {
    fs::path dir = scratch("cli_errors");
    fs::path cfg = dir / "cfg.json";
    dump_text(cfg, tiny_doc().dump());

    CmdResult bad = run_tool("train --config " + cfg.string() + " --out " + dir.string() +
                             " --set lambda=-1");
    CHECK(bad.code == 1);
    CHECK(contains(bad.err, "lambda"));

    CmdResult typo = run_tool("train --config " + cfg.string() + " --out " + dir.string() +
                              " --set lamda=1");
    CHECK(typo.code == 1);
    CHECK(contains(typo.err, "did you mean 'lambda'?"));

    CHECK(run_tool("trane --out " + dir.string()).code != 0);
    CHECK(run_tool("").code != 0);
    CHECK(run_tool("train").code != 0);  // --out is required

    CmdResult help = run_tool("--help");
    CHECK(help.code == 0);
    for (const char* verb : {"train", "ablate", "adistance", "export-embeddings", "gen-data"})
        CHECK(contains(help.out, verb));
}
