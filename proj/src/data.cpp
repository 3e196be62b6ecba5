#include "cat/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace cat {

void LabeledDataset::validate() const {
    if (x.rank() != 2 || x.rows() == 0)
        throw DataError("dataset: x must be a non-empty [N x d] tensor, got " +
                        shape_str(x.shape()));
    if (y.size() != x.rows())
        throw DataError("dataset: " + std::to_string(y.size()) + " labels for " +
                        std::to_string(x.rows()) + " rows");
    if (n_classes < 2) throw DataError("dataset: n_classes must be >= 2");
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < 0 || y[i] >= n_classes)
            throw DataError("dataset: label " + std::to_string(y[i]) + " at row " +
                            std::to_string(i) + " outside [0," + std::to_string(n_classes) + ")");
    if (!x.finite()) throw DataError("dataset: non-finite sample");
}

LabeledDataset gen_two_moons(std::size_t n, double noise_sd, std::uint64_t seed) {
    if (n == 0 || n % 2 != 0)
        throw ConfigError("gen_two_moons: n must be positive and even, got " + std::to_string(n));
    if (noise_sd < 0.0)
        throw ConfigError("gen_two_moons: noise_sd must be >= 0, got " +
                          std::to_string(noise_sd));
    std::size_t half = n / 2;
    Rng rng(seed);
    LabeledDataset ds;
    ds.x = Tensor({n, 2});
    ds.y.resize(n);
    ds.n_classes = 2;
    auto arc_t = [half](std::size_t k) {
        if (half == 1) return 0.0;
        return std::numbers::pi * static_cast<double>(k) / static_cast<double>(half - 1);
    };
    for (std::size_t k = 0; k < half; ++k) {
        double t = arc_t(k);
        ds.x.at(k, 0) = std::cos(t) + noise_sd * rng.normal();
        ds.x.at(k, 1) = std::sin(t) + noise_sd * rng.normal();
        ds.y[k] = 0;
    }
    for (std::size_t k = 0; k < half; ++k) {
        double t = arc_t(k);
        ds.x.at(half + k, 0) = 1.0 - std::cos(t) + noise_sd * rng.normal();
        ds.x.at(half + k, 1) = 0.5 - std::sin(t) + noise_sd * rng.normal();
        ds.y[half + k] = 1;
    }
    return ds;
}

LabeledDataset shift_domain(const LabeledDataset& ds, double rotation_deg,
                            const Tensor& translate, std::uint64_t /*seed*/) {
    ds.validate();
    if (rotation_deg != 0.0 && ds.dim() != 2)
        throw ConfigError("shift_domain: rotation requires 2-D data, got dim " +
                          std::to_string(ds.dim()));
    if (translate.rank() != 1 || translate.size() != ds.dim())
        throw DimensionError("shift_domain: translate shape " + shape_str(translate.shape()) +
                             " vs data dim " + std::to_string(ds.dim()));
    LabeledDataset out = ds;
    if (rotation_deg != 0.0) {
        double theta = rotation_deg * std::numbers::pi / 180.0;
        double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t i = 0; i < out.n(); ++i) {
            double px = out.x.at(i, 0), py = out.x.at(i, 1);
            out.x.at(i, 0) = c * px - s * py;
            out.x.at(i, 1) = s * px + c * py;
        }
    }
    bool any_shift = false;
    for (std::size_t j = 0; j < translate.size(); ++j) any_shift = any_shift || translate[j] != 0.0;
    if (any_shift)
        for (std::size_t i = 0; i < out.n(); ++i)
            for (std::size_t j = 0; j < out.dim(); ++j) out.x.at(i, j) += translate[j];
    return out;
}

LabeledDataset gen_blobs(int n_classes, std::size_t n_per_class, const Tensor& centers,
                         double sd, std::uint64_t seed) {
    if (n_classes < 2)
        throw ConfigError("gen_blobs: n_classes must be >= 2, got " + std::to_string(n_classes));
    if (!(sd > 0.0)) throw ConfigError("gen_blobs: sd must be > 0, got " + std::to_string(sd));
    if (n_per_class == 0) throw ConfigError("gen_blobs: n_per_class must be >= 1");
    if (centers.rank() != 2 || centers.rows() != static_cast<std::size_t>(n_classes))
        throw DimensionError("gen_blobs: centers shape " + shape_str(centers.shape()) + " vs " +
                             std::to_string(n_classes) + " classes");
    std::size_t d = centers.cols();
    Rng rng(seed);
    LabeledDataset ds;
    ds.x = Tensor({static_cast<std::size_t>(n_classes) * n_per_class, d});
    ds.y.resize(ds.x.rows());
    ds.n_classes = n_classes;
    std::size_t row = 0;
    for (int c = 0; c < n_classes; ++c) {
        for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
            for (std::size_t j = 0; j < d; ++j)
                ds.x.at(row, j) = centers.at(static_cast<std::size_t>(c), j) + sd * rng.normal();
            ds.y[row] = c;
        }
    }
    return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

}  // namespace

void export_dataset_csv(const std::string& path, const LabeledDataset& ds) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (std::size_t j = 0; j < ds.dim(); ++j) out << "x" << j << ",";
    out << "y,domain\n";
    const char* tag = ds.domain == DomainTag::source ? "source" : "target";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out << format_f64(ds.x.at(i, j)) << ",";
        out << ds.y[i] << "," << tag << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

LabeledDataset import_dataset_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV " + path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.size() < 3 || header[header.size() - 2] != "y" || header.back() != "domain")
        throw DataError("CSV " + path + ": expected header x0..x{d-1},y,domain");
    std::size_t d = header.size() - 2;
    for (std::size_t j = 0; j < d; ++j)
        if (header[j] != "x" + std::to_string(j))
            throw DataError("CSV " + path + ": column " + std::to_string(j) + " named '" +
                            header[j] + "', expected x" + std::to_string(j));
    std::vector<double> xs;
    std::vector<int> ys;
    int domain_seen = -1;  // 0 source, 1 target
    std::size_t rowno = 1;
    while (std::getline(in, line)) {
        ++rowno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        std::string where = path + ":" + std::to_string(rowno);
        if (fields.size() != d + 2)
            throw DataError("CSV " + where + ": expected " + std::to_string(d + 2) +
                            " fields, got " + std::to_string(fields.size()));
        for (std::size_t j = 0; j < d; ++j) xs.push_back(parse_f64(fields[j], where));
        int label = 0;
        auto [p, ec] = std::from_chars(fields[d].data(), fields[d].data() + fields[d].size(), label);
        if (ec != std::errc() || p != fields[d].data() + fields[d].size())
            throw DataError("CSV " + where + ": bad label '" + fields[d] + "'");
        ys.push_back(label);
        int dom;
        if (fields[d + 1] == "source")
            dom = 0;
        else if (fields[d + 1] == "target")
            dom = 1;
        else
            throw DataError("CSV " + where + ": bad domain '" + fields[d + 1] + "'");
        if (domain_seen == -1)
            domain_seen = dom;
        else if (domain_seen != dom)
            throw DataError("CSV " + where + ": mixed domains in one dataset file");
    }
    if (ys.empty()) throw DataError("CSV " + path + ": no data rows");
    LabeledDataset ds;
    ds.x = Tensor({ys.size(), d}, std::move(xs));
    ds.y = std::move(ys);
    ds.n_classes = *std::max_element(ds.y.begin(), ds.y.end()) + 1;
    if (ds.n_classes < 2) ds.n_classes = 2;
    ds.domain = domain_seen == 1 ? DomainTag::target : DomainTag::source;
    ds.validate();
    return ds;
}

BatchSampler::BatchSampler(std::size_t n_source, std::size_t n_target, std::size_t batch_size,
                           Rng rng)
    : n_source_(n_source), n_target_(n_target), batch_size_(batch_size), rng_(rng) {
    if (batch_size == 0 || batch_size > std::min(n_source, n_target))
        throw ConfigError("BatchSampler: batch_size " + std::to_string(batch_size) +
                          " outside [1, min(Ns=" + std::to_string(n_source) +
                          ", Nt=" + std::to_string(n_target) + ")]");
    src_perm_.resize(n_source);
    std::iota(src_perm_.begin(), src_perm_.end(), std::size_t{0});
    tgt_perm_.resize(n_target);
    std::iota(tgt_perm_.begin(), tgt_perm_.end(), std::size_t{0});
    rng_.shuffle(src_perm_);
    rng_.shuffle(tgt_perm_);
    // positions start at 0: first batches read the freshly shuffled fronts
}

DomainBatch BatchSampler::next_batch(const LabeledDataset& source, const LabeledDataset& target) {
    if (source.n() != n_source_ || target.n() != n_target_)
        throw PreconditionError("BatchSampler: dataset sizes changed since construction");
    if (source.dim() != target.dim())
        throw DimensionError("BatchSampler: source dim " + std::to_string(source.dim()) +
                             " != target dim " + std::to_string(target.dim()));
    // drop-last: reshuffle when fewer than batch_size entries remain
    if (src_pos_ + batch_size_ > n_source_) {
        rng_.shuffle(src_perm_);
        src_pos_ = 0;
    }
    if (tgt_pos_ + batch_size_ > n_target_) {
        rng_.shuffle(tgt_perm_);
        tgt_pos_ = 0;
        ++target_epochs_;
    }
    DomainBatch b;
    b.xs = Tensor({batch_size_, source.dim()});
    b.ys.resize(batch_size_);
    b.xt = Tensor({batch_size_, target.dim()});
    b.target_ids.resize(batch_size_);
    for (std::size_t k = 0; k < batch_size_; ++k) {
        std::size_t si = src_perm_[src_pos_ + k];
        std::copy(source.x.row_ptr(si), source.x.row_ptr(si) + source.dim(), b.xs.row_ptr(k));
        b.ys[k] = source.y[si];
        std::size_t ti = tgt_perm_[tgt_pos_ + k];
        std::copy(target.x.row_ptr(ti), target.x.row_ptr(ti) + target.dim(), b.xt.row_ptr(k));
        b.target_ids[k] = ti;
    }
    src_pos_ += batch_size_;
    tgt_pos_ += batch_size_;
    return b;
}

}  // namespace cat
