#include "cat/bank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cat/kernels.hpp"

using nlohmann::json;

namespace cat {

namespace {
double row_norm(const double* p, std::size_t n) { return std::sqrt(kernels::sumsq(p, n)); }
}  // namespace

FeatureBank::FeatureBank(Tensor feats) : feats_(std::move(feats)) {
    if (feats_.rank() != 2 || feats_.rows() == 0 || feats_.cols() == 0)
        throw DimensionError("FeatureBank: features must be a non-empty [M x d_z] tensor, got " +
                             shape_str(feats_.shape()));
    if (!feats_.finite()) throw DataError("FeatureBank: non-finite feature");
    norms_.resize(feats_.rows());
    for (std::size_t i = 0; i < feats_.rows(); ++i)
        norms_[i] = row_norm(feats_.row_ptr(i), feats_.cols());
}

FeatureBank FeatureBank::init(const ModelParams& params, const Tensor& target_x) {
    return FeatureBank(extract_features(params, target_x));
}

Tensor FeatureBank::feature(std::size_t id) const {
    if (id >= size())
        throw DataError("FeatureBank: unknown id " + std::to_string(id) + " (M = " +
                        std::to_string(size()) + ")");
    return feats_.row_copy(id);
}

void FeatureBank::update(const std::vector<std::size_t>& ids, const Tensor& feats,
                         double momentum) {
    if (momentum < 0.0 || momentum > 1.0)
        throw ConfigError("FeatureBank::update: momentum must be in [0,1], got " +
                          std::to_string(momentum));
    if (feats.rank() != 2 || feats.rows() != ids.size() || feats.cols() != dim())
        throw DimensionError("FeatureBank::update: features " + shape_str(feats.shape()) +
                             " do not match " + std::to_string(ids.size()) + " ids of dim " +
                             std::to_string(dim()));
    if (!feats.finite()) throw DataError("FeatureBank::update: non-finite feature");
    for (std::size_t id : ids)
        if (id >= size())
            throw DataError("FeatureBank::update: unknown id " + std::to_string(id) + " (M = " +
                            std::to_string(size()) + ")");
    for (std::size_t j = 0; j < ids.size(); ++j) {
        double* dst = feats_.row_ptr(ids[j]);
        const double* src = feats.row_ptr(j);
        if (momentum == 0.0) {
            std::copy(src, src + dim(), dst);  // exact replacement
        } else {
            for (std::size_t k = 0; k < dim(); ++k)
                dst[k] = momentum * dst[k] + (1.0 - momentum) * src[k];
        }
        norms_[ids[j]] = row_norm(dst, dim());
    }
    ++version_;
}

std::vector<Neighbor> FeatureBank::query(const double* anchor, std::size_t K,
                                         bool closest) const {
    if (K < 1 || K > size())
        throw PreconditionError("FeatureBank: K = " + std::to_string(K) +
                                " outside [1, M = " + std::to_string(size()) + "]");
    double anorm = row_norm(anchor, dim());
    if (anorm == 0.0) throw DegenerateInputError("FeatureBank: zero-norm anchor");
    std::vector<std::pair<double, std::size_t>> scored(size());
    for (std::size_t i = 0; i < size(); ++i) {
        double c = norms_[i] == 0.0
                       ? 0.0
                       : kernels::dot(anchor, feats_.row_ptr(i), dim()) / (anorm * norms_[i]);
        scored[i] = {c, i};
    }
    if (closest) {
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
    } else {
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return a.second < b.second;
        });
    }
    std::vector<Neighbor> out;
    out.reserve(K);
    for (std::size_t k = 0; k < K; ++k)
        out.push_back(Neighbor{scored[k].second, feats_.row_copy(scored[k].second),
                               scored[k].first});
    return out;
}

std::vector<Neighbor> FeatureBank::query_close(const Tensor& anchor, std::size_t K) const {
    if (anchor.rank() != 1 || anchor.size() != dim())
        throw DimensionError("FeatureBank::query_close: anchor shape " +
                             shape_str(anchor.shape()) + " vs bank dim " + std::to_string(dim()));
    return query(anchor.data(), K, true);
}

std::vector<Neighbor> FeatureBank::query_distant(const Tensor& anchor, std::size_t K) const {
    if (anchor.rank() != 1 || anchor.size() != dim())
        throw DimensionError("FeatureBank::query_distant: anchor shape " +
                             shape_str(anchor.shape()) + " vs bank dim " + std::to_string(dim()));
    return query(anchor.data(), K, false);
}

std::vector<NeighborSets> FeatureBank::build_sets(const Tensor& anchors, std::size_t K) const {
    if (anchors.rank() != 2 || anchors.cols() != dim())
        throw DimensionError("FeatureBank::build_sets: anchors " + shape_str(anchors.shape()) +
                             " vs bank dim " + std::to_string(dim()));
    std::vector<NeighborSets> out;
    out.reserve(anchors.rows());
    for (std::size_t i = 0; i < anchors.rows(); ++i)
        out.push_back(NeighborSets{query(anchors.row_ptr(i), K, true),
                                   query(anchors.row_ptr(i), K, false)});
    return out;
}

std::string FeatureBank::to_json() const {
    json doc{{"format", "cat-uda-bank-v1"},
             {"version", version_},
             {"feats", {{"shape", feats_.shape()},
                        {"data", base64_encode(doubles_to_le_bytes(feats_.vec()))}}}};
    return doc.dump(2) + "\n";
}

FeatureBank FeatureBank::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("bank snapshot: malformed JSON: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "cat-uda-bank-v1")
            throw DataError("bank snapshot: unknown format '" + doc.value("format", "") + "'");
        auto shape = doc.at("feats").at("shape").get<std::vector<std::size_t>>();
        auto data =
            doubles_from_le_bytes(base64_decode(doc.at("feats").at("data").get<std::string>()));
        FeatureBank bank(Tensor(std::move(shape), std::move(data)));
        bank.version_ = doc.at("version").get<std::uint64_t>();
        return bank;
    } catch (const json::exception& e) {
        throw DataError(std::string("bank snapshot: missing or mistyped field: ") + e.what());
    }
}

}  // namespace cat
