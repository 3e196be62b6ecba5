#include "cat/config.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <utility>

#include "cat/models.hpp"

namespace cat {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string path_of(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// reject keys outside `allowed`, suggesting the nearest known key
void check_keys(const json& obj, const std::string& prefix,
                const std::vector<std::string>& allowed, const std::string& context = "") {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string& k = it.key();
        if (std::find(allowed.begin(), allowed.end(), k) != allowed.end()) continue;
        std::string best;
        std::size_t best_d = 3;  // only suggest within edit distance 2
        for (const std::string& cand : allowed) {
            std::size_t d = levenshtein(k, cand);
            if (d < best_d) {
                best_d = d;
                best = cand;
            }
        }
        std::string msg = "config: unknown key '" + path_of(prefix, k) + "'";
        if (!context.empty()) msg += " " + context;
        if (!best.empty()) msg += " (did you mean '" + best + "'?)";
        throw ConfigError(msg);
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double get_num(const json& obj, const char* key, const std::string& prefix, double dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number())
        throw ConfigError("config: '" + path_of(prefix, key) + "' must be a number");
    return v->get<double>();
}

std::uint64_t get_u64(const json& obj, const char* key, const std::string& prefix,
                      std::uint64_t dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v->get<std::int64_t>());
    throw ConfigError("config: '" + path_of(prefix, key) + "' must be a non-negative integer");
}

std::size_t get_count(const json& obj, const char* key, const std::string& prefix,
                      std::size_t dflt) {
    return static_cast<std::size_t>(get_u64(obj, key, prefix, dflt));
}

bool get_bool(const json& obj, const char* key, const std::string& prefix, bool dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_boolean())
        throw ConfigError("config: '" + path_of(prefix, key) + "' must be a boolean");
    return v->get<bool>();
}

std::string get_string(const json& obj, const char* key, const std::string& prefix,
                       const std::string& dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_string())
        throw ConfigError("config: '" + path_of(prefix, key) + "' must be a string");
    return v->get<std::string>();
}

std::vector<double> get_num_array(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError("config: '" + path + "' must be an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
        if (!e.is_number())
            throw ConfigError("config: '" + path + "' must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<std::size_t> get_count_array(const json& v, const std::string& path) {
    if (!v.is_array())
        throw ConfigError("config: '" + path + "' must be an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const json& e : v) {
        bool ok = e.is_number_unsigned() ||
                  (e.is_number_integer() && e.get<std::int64_t>() >= 0);
        if (!ok)
            throw ConfigError("config: '" + path +
                              "' must be an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

GrlSchedule parse_grl(const json* v) {
    GrlSchedule g;
    if (!v) return g;
    if (!v->is_object()) throw ConfigError("config: 'grl' must be an object");
    check_keys(*v, "grl", {"kind", "mu"});
    std::string kind = get_string(*v, "kind", "grl", "dann_ramp");
    if (kind == "constant")
        g.kind = GrlSchedule::Kind::constant;
    else if (kind == "dann_ramp")
        g.kind = GrlSchedule::Kind::dann_ramp;
    else
        throw ConfigError("config: 'grl.kind' must be 'constant' or 'dann_ramp', got '" + kind +
                          "'");
    g.mu = get_num(*v, "mu", "grl", g.mu);
    return g;
}

DatasetSpec parse_dataset(const json* v) {
    DatasetSpec d;
    if (!v) return d;
    if (!v->is_object()) throw ConfigError("config: 'dataset' must be an object");
    d.kind = get_string(*v, "kind", "dataset", d.kind);
    std::vector<std::string> allowed = {"kind", "rotation_deg", "translate"};
    if (d.kind == "two_moons") {
        allowed.insert(allowed.end(), {"n", "noise_sd"});
    } else if (d.kind == "blobs") {
        allowed.insert(allowed.end(), {"n_classes", "n_per_class", "sd", "centers"});
    } else {
        throw ConfigError("config: 'dataset.kind' must be 'two_moons' or 'blobs', got '" +
                          d.kind + "'");
    }
    check_keys(*v, "dataset", allowed, "for dataset kind '" + d.kind + "'");
    if (d.kind == "two_moons") {
        d.n = get_count(*v, "n", "dataset", d.n);
        d.noise_sd = get_num(*v, "noise_sd", "dataset", d.noise_sd);
    } else {
        d.n_classes = static_cast<int>(get_count(*v, "n_classes", "dataset",
                                                 static_cast<std::size_t>(d.n_classes)));
        d.n_per_class = get_count(*v, "n_per_class", "dataset", d.n_per_class);
        d.sd = get_num(*v, "sd", "dataset", d.sd);
        if (const json* c = find(*v, "centers")) {
            if (!c->is_array() || c->empty())
                throw ConfigError("config: 'dataset.centers' must be a non-empty array of points");
            d.centers.clear();
            for (std::size_t i = 0; i < c->size(); ++i)
                d.centers.push_back(
                    get_num_array((*c)[i], "dataset.centers[" + std::to_string(i) + "]"));
        }
    }
    d.rotation_deg = get_num(*v, "rotation_deg", "dataset", d.rotation_deg);
    std::size_t dim = d.kind == "blobs" && !d.centers.empty() ? d.centers.front().size() : 2;
    d.translate = std::vector<double>(dim, 0.0);
    if (const json* tr = find(*v, "translate")) d.translate = get_num_array(*tr, "dataset.translate");
    return d;
}

ArchSpec parse_arch(const json* v) {
    ArchSpec a;
    if (!v) return a;
    if (!v->is_object()) throw ConfigError("config: 'arch' must be an object");
    check_keys(*v, "arch", {"g_hidden", "feature_dim", "d_hidden", "activation"});
    if (const json* h = find(*v, "g_hidden")) a.g_hidden = get_count_array(*h, "arch.g_hidden");
    a.feature_dim = get_count(*v, "feature_dim", "arch", a.feature_dim);
    if (const json* h = find(*v, "d_hidden")) a.d_hidden = get_count_array(*h, "arch.d_hidden");
    if (const json* act = find(*v, "activation")) {
        if (!act->is_string()) throw ConfigError("config: 'arch.activation' must be a string");
        try {
            a.activation = activation_from_name(act->get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError("config: 'arch.activation': " + std::string(e.what()));
        }
    }
    return a;
}

AblationSpec parse_ablation(const json* v) {
    AblationSpec a;
    if (!v) return a;
    if (!v->is_object()) throw ConfigError("config: 'ablation' must be an object");
    check_keys(*v, "ablation", {"lambdas", "Ks", "seeds"});
    if (const json* l = find(*v, "lambdas")) a.lambdas = get_num_array(*l, "ablation.lambdas");
    if (const json* k = find(*v, "Ks")) a.Ks = get_count_array(*k, "ablation.Ks");
    if (const json* s = find(*v, "seeds")) {
        if (!s->is_array())
            throw ConfigError("config: 'ablation.seeds' must be an array of integers");
        a.seeds.clear();
        for (const json& e : *s) {
            if (e.is_number_unsigned())
                a.seeds.push_back(e.get<std::uint64_t>());
            else if (e.is_number_integer() && e.get<std::int64_t>() >= 0)
                a.seeds.push_back(static_cast<std::uint64_t>(e.get<std::int64_t>()));
            else
                throw ConfigError(
                    "config: 'ablation.seeds' must be an array of non-negative integers");
        }
    }
    if (a.lambdas.empty() || a.Ks.empty() || a.seeds.empty())
        throw ConfigError("config: ablation lambdas, Ks, and seeds must be non-empty");
    for (double l : a.lambdas)
        if (!(l >= 0.0))
            throw ConfigError("config: ablation lambdas must be >= 0, got " + format_f64(l));
    for (std::size_t k : a.Ks)
        if (k == 0) throw ConfigError("config: ablation Ks must be >= 1");
    return a;
}

ExportSpec parse_export(const json* v) {
    ExportSpec e;
    if (!v) return e;
    if (!v->is_object()) throw ConfigError("config: 'export' must be an object");
    check_keys(*v, "export", {"per_class"});
    e.per_class = get_count(*v, "per_class", "export", e.per_class);
    if (e.per_class == 0) throw ConfigError("config: 'export.per_class' must be >= 1");
    return e;
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> segs;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = path.find('.', start);
        std::string seg =
            pos == std::string::npos ? path.substr(start) : path.substr(start, pos - start);
        if (seg.empty())
            throw ConfigError("override path '" + path + "' has an empty segment");
        segs.push_back(std::move(seg));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return segs;
}

}  // namespace

FullConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: document root must be a JSON object");
    check_keys(doc, "",
               {"mode", "lambda", "K", "batch_size", "epochs", "lr", "sgd_momentum",
                "weight_decay", "grad_clip", "grl", "bank_momentum", "normalize_features",
                "seed", "adist_interval", "dataset", "arch", "ablation", "export"});
    FullConfig fc;
    RunConfig& r = fc.run;
    if (const json* v = find(doc, "mode")) {
        if (!v->is_string()) throw ConfigError("config: 'mode' must be a string");
        r.mode = mode_from_name(v->get<std::string>());
    }
    r.lambda = get_num(doc, "lambda", "", r.lambda);
    // λ is meaningless without a contrastive term; default it off rather than
    // forcing every source_only config to spell lambda=0
    if (r.mode == Mode::source_only && !doc.contains("lambda")) r.lambda = 0.0;
    r.K = get_count(doc, "K", "", r.K);
    r.batch_size = get_count(doc, "batch_size", "", r.batch_size);
    r.epochs = get_count(doc, "epochs", "", r.epochs);
    r.lr = get_num(doc, "lr", "", r.lr);
    r.sgd_momentum = get_num(doc, "sgd_momentum", "", r.sgd_momentum);
    r.weight_decay = get_num(doc, "weight_decay", "", r.weight_decay);
    r.grad_clip = get_num(doc, "grad_clip", "", r.grad_clip);
    r.grl = parse_grl(find(doc, "grl"));
    r.bank_momentum = get_num(doc, "bank_momentum", "", r.bank_momentum);
    r.normalize_features = get_bool(doc, "normalize_features", "", r.normalize_features);
    r.seed = get_u64(doc, "seed", "", r.seed);
    r.adist_interval = get_count(doc, "adist_interval", "", r.adist_interval);
    r.dataset = parse_dataset(find(doc, "dataset"));
    r.arch = parse_arch(find(doc, "arch"));
    fc.ablation = parse_ablation(find(doc, "ablation"));
    fc.exports = parse_export(find(doc, "export"));
    r.validate();
    return fc;
}

json apply_overrides(json doc, const std::vector<std::string>& overrides) {
    if (!doc.is_object()) throw ConfigError("config: document root must be a JSON object");
    for (const std::string& ov : overrides) {
        std::size_t eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override '" + ov + "' is not of the form key=value");
        std::string path = ov.substr(0, eq);
        std::string vtext = ov.substr(eq + 1);
        json value;
        try {
            value = json::parse(vtext);
        } catch (const json::parse_error&) {
            value = vtext;  // bare word: treat as a string
        }
        std::vector<std::string> segs = split_path(path);
        json* cur = &doc;
        for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
            json& child = (*cur)[segs[i]];
            if (child.is_null()) child = json::object();
            if (!child.is_object())
                throw ConfigError("override '" + path + "': '" + segs[i] +
                                  "' is not an object");
            cur = &child;
        }
        (*cur)[segs.back()] = std::move(value);
    }
    return doc;
}

FullConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("config: cannot open '" + path + "'");
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config " + path + ": " + e.what());
        }
    }
    return parse_config(apply_overrides(std::move(doc), overrides));
}

ordered_json config_to_json(const FullConfig& fc) {
    const RunConfig& r = fc.run;
    ordered_json doc;
    doc["mode"] = mode_name(r.mode);
    doc["lambda"] = r.lambda;
    doc["K"] = r.K;
    doc["batch_size"] = r.batch_size;
    doc["epochs"] = r.epochs;
    doc["lr"] = r.lr;
    doc["sgd_momentum"] = r.sgd_momentum;
    doc["weight_decay"] = r.weight_decay;
    doc["grad_clip"] = r.grad_clip;
    ordered_json grl;
    grl["kind"] = r.grl.kind == GrlSchedule::Kind::constant ? "constant" : "dann_ramp";
    grl["mu"] = r.grl.mu;
    doc["grl"] = std::move(grl);
    doc["bank_momentum"] = r.bank_momentum;
    doc["normalize_features"] = r.normalize_features;
    doc["seed"] = r.seed;
    doc["adist_interval"] = r.adist_interval;
    ordered_json ds;
    ds["kind"] = r.dataset.kind;
    if (r.dataset.kind == "two_moons") {
        ds["n"] = r.dataset.n;
        ds["noise_sd"] = r.dataset.noise_sd;
    } else {
        ds["n_classes"] = r.dataset.n_classes;
        ds["n_per_class"] = r.dataset.n_per_class;
        ds["sd"] = r.dataset.sd;
        ds["centers"] = r.dataset.centers;
    }
    ds["rotation_deg"] = r.dataset.rotation_deg;
    ds["translate"] = r.dataset.translate;
    doc["dataset"] = std::move(ds);
    ordered_json arch;
    arch["g_hidden"] = r.arch.g_hidden;
    arch["feature_dim"] = r.arch.feature_dim;
    arch["d_hidden"] = r.arch.d_hidden;
    arch["activation"] = activation_name(r.arch.activation);
    doc["arch"] = std::move(arch);
    ordered_json ab;
    ab["lambdas"] = fc.ablation.lambdas;
    ab["Ks"] = fc.ablation.Ks;
    ab["seeds"] = fc.ablation.seeds;
    doc["ablation"] = std::move(ab);
    ordered_json ex;
    ex["per_class"] = fc.exports.per_class;
    doc["export"] = std::move(ex);
    return doc;
}

}  // namespace cat
