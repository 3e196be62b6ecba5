#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "cat/data.hpp"
#include "cat/rng.hpp"
#include "cat/tensor.hpp"

using namespace cat;

TEST_CASE("gen_two_moons: balance, determinism, noise-free arcs") {
    LabeledDataset ds = gen_two_moons(1000, 0.1, 7);
    CHECK(ds.n() == 1000);
    CHECK(ds.dim() == 2);
    CHECK(ds.n_classes == 2);
    CHECK(ds.domain == DomainTag::source);
    CHECK(std::count(ds.y.begin(), ds.y.end(), 0) == 500);
    CHECK(std::count(ds.y.begin(), ds.y.end(), 1) == 500);

    LabeledDataset again = gen_two_moons(1000, 0.1, 7);
    CHECK(again.x == ds.x);
    CHECK(again.y == ds.y);
    LabeledDataset other = gen_two_moons(1000, 0.1, 8);
    CHECK_FALSE(other.x == ds.x);

    // noise_sd = 0: class 0 on the unit circle, class 1 on its shifted mirror
    LabeledDataset clean = gen_two_moons(200, 0.0, 3);
    for (std::size_t i = 0; i < clean.n(); ++i) {
        double px = clean.x.at(i, 0), py = clean.x.at(i, 1);
        if (clean.y[i] == 0) {
            CHECK(std::abs(px * px + py * py - 1.0) <= 1e-12);
            CHECK(py >= -1e-12);  // upper half
        } else {
            double cx = 1.0 - px, cy = 0.5 - py;  // maps back onto the arc
            CHECK(std::abs(cx * cx + cy * cy - 1.0) <= 1e-12);
        }
    }

    CHECK_THROWS_AS(gen_two_moons(999, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(gen_two_moons(200, -0.1, 1), ConfigError);
}

TEST_CASE("shift_domain: identity, involution, quarter turn, translation") {
    LabeledDataset ds = gen_two_moons(200, 0.05, 11);
    Tensor zero2 = Tensor::row({0.0, 0.0});

    LabeledDataset same = shift_domain(ds, 0.0, zero2, 0);
    CHECK(same.x == ds.x);
    CHECK(same.y == ds.y);

    LabeledDataset once = shift_domain(ds, 180.0, zero2, 0);
    LabeledDataset twice = shift_domain(once, 180.0, zero2, 0);
    for (std::size_t i = 0; i < ds.x.size(); ++i)
        CHECK(std::abs(twice.x[i] - ds.x[i]) <= 1e-12);

    LabeledDataset pt;
    pt.x = Tensor::matrix({{1.0, 0.0}});
    pt.y = {0};
    pt.n_classes = 2;
    LabeledDataset quarter = shift_domain(pt, 90.0, zero2, 0);
    CHECK(std::abs(quarter.x.at(0, 0) - 0.0) <= 1e-12);
    CHECK(std::abs(quarter.x.at(0, 1) - 1.0) <= 1e-12);

    LabeledDataset moved = shift_domain(pt, 0.0, Tensor::row({5.0, -2.0}), 0);
    CHECK(moved.x.at(0, 0) == 6.0);
    CHECK(moved.x.at(0, 1) == -2.0);

    // rotation requires 2-D inputs
    LabeledDataset three;
    three.x = Tensor::matrix({{1.0, 2.0, 3.0}});
    three.y = {0};
    three.n_classes = 2;
    CHECK_THROWS_AS(shift_domain(three, 30.0, Tensor::row({0.0, 0.0, 0.0}), 0), ConfigError);
    // pure translation on d != 2 is allowed
    LabeledDataset slid = shift_domain(three, 0.0, Tensor::row({1.0, 1.0, 1.0}), 0);
    CHECK(slid.x.at(0, 2) == 4.0);
}

TEST_CASE("gen_blobs: counts, determinism, tight-sd collapse, CLT mean bound") {
    Tensor centers = Tensor::matrix({{0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}});
    LabeledDataset ds = gen_blobs(3, 400, centers, 0.3, 13);
    CHECK(ds.n() == 1200);
    CHECK(ds.n_classes == 3);
    for (int c = 0; c < 3; ++c) CHECK(std::count(ds.y.begin(), ds.y.end(), c) == 400);
    CHECK(gen_blobs(3, 400, centers, 0.3, 13).x == ds.x);

    LabeledDataset tight = gen_blobs(3, 50, centers, 1e-9, 5);
    for (std::size_t i = 0; i < tight.n(); ++i) {
        double dx = tight.x.at(i, 0) - centers.at(tight.y[i], 0);
        double dy = tight.x.at(i, 1) - centers.at(tight.y[i], 1);
        CHECK(std::sqrt(dx * dx + dy * dy) <= 1e-6);
    }

    // CLT: per-class sample mean within 5*sd/sqrt(n) of its center
    const double sd = 0.3, bound = 5.0 * sd / std::sqrt(400.0);
    for (int c = 0; c < 3; ++c) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < ds.n(); ++i)
            if (ds.y[i] == c) {
                mx += ds.x.at(i, 0);
                my += ds.x.at(i, 1);
            }
        mx /= 400.0;
        my /= 400.0;
        CHECK(std::abs(mx - centers.at(c, 0)) <= bound);
        CHECK(std::abs(my - centers.at(c, 1)) <= bound);
    }

    CHECK_THROWS_AS(gen_blobs(1, 10, Tensor::matrix({{0.0, 0.0}}), 0.3, 1), ConfigError);
    CHECK_THROWS_AS(gen_blobs(3, 10, centers, 0.0, 1), ConfigError);
    // duplicate centers are allowed by contract
    Tensor dup = Tensor::matrix({{1.0, 1.0}, {1.0, 1.0}});
    CHECK(gen_blobs(2, 5, dup, 0.1, 1).n() == 10);
}

TEST_CASE("BatchSampler: permutation coverage, unpaired halves, determinism") {
    LabeledDataset src = gen_two_moons(96, 0.1, 21);
    LabeledDataset tgt = shift_domain(gen_two_moons(96, 0.1, 22), 30.0,
                                      Tensor::row({0.0, 0.0}), 0);
    tgt.domain = DomainTag::target;

    BatchSampler s(src.n(), tgt.n(), 32, Rng(5));
    CHECK(s.batch_size() == 32);
    CHECK(s.batches_per_epoch() == 3);

    std::vector<std::size_t> seen;
    for (int b = 0; b < 3; ++b) {
        DomainBatch batch = s.next_batch(src, tgt);
        CHECK(batch.xs.rows() == 32);
        CHECK(batch.xt.rows() == 32);
        CHECK(batch.ys.size() == 32);
        CHECK(batch.target_ids.size() == 32);
        seen.insert(seen.end(), batch.target_ids.begin(), batch.target_ids.end());
        // source labels travel with source rows
        for (std::size_t i = 0; i < 32; ++i) {
            CHECK(batch.ys[i] >= 0);
            CHECK(batch.ys[i] < 2);
        }
    }
    // one full target epoch: every id exactly once
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < 96; ++i) CHECK(seen[i] == i);

    // identical rng state -> identical stream
    BatchSampler a(src.n(), tgt.n(), 32, Rng(77)), b(src.n(), tgt.n(), 32, Rng(77));
    DomainBatch ba = a.next_batch(src, tgt), bb = b.next_batch(src, tgt);
    CHECK(ba.xs == bb.xs);
    CHECK(ba.xt == bb.xt);
    CHECK(ba.target_ids == bb.target_ids);

    // unpaired: source and target index sequences differ for this seed
    bool any_diff = false;
    for (std::size_t i = 0; i < 32 && !any_diff; ++i)
        any_diff = ba.xs.row_copy(i) != ba.xt.row_copy(i);
    CHECK(any_diff);
}

TEST_CASE("BatchSampler: drop-last and epoch accounting") {
    LabeledDataset src = gen_two_moons(100, 0.1, 31);
    LabeledDataset tgt = gen_two_moons(70, 0.1, 32);
    tgt.domain = DomainTag::target;

    BatchSampler s(100, 70, 32, Rng(9));
    CHECK(s.batches_per_epoch() == 2);  // 70/32, remainder 6 dropped

    std::set<std::size_t> first_epoch;
    DomainBatch b1 = s.next_batch(src, tgt);
    DomainBatch b2 = s.next_batch(src, tgt);
    first_epoch.insert(b1.target_ids.begin(), b1.target_ids.end());
    first_epoch.insert(b2.target_ids.begin(), b2.target_ids.end());
    CHECK(first_epoch.size() == 64);  // no repeats within an epoch

    // the next call reshuffles (drop-last: the 6 leftovers are discarded)
    DomainBatch b3 = s.next_batch(src, tgt);
    CHECK(b3.target_ids.size() == 32);
    CHECK(s.target_epochs_completed() >= 1);

    CHECK_THROWS_AS(BatchSampler(10, 70, 32, Rng(1)), ConfigError);
    CHECK_THROWS_AS(BatchSampler(100, 10, 32, Rng(1)), ConfigError);
    CHECK_THROWS_AS(BatchSampler(100, 70, 0, Rng(1)), ConfigError);
}

TEST_CASE("dataset CSV export/import round-trips bitwise") {
    LabeledDataset ds = gen_two_moons(50, 0.1, 41);
    // awkward values that stress shortest-round-trip formatting
    ds.x[0] = 0.1;
    ds.x[1] = 1.0 / 3.0;
    ds.x[2] = -0.0;
    ds.x[3] = 1e-300;

    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "cat_uda_test_data.csv";
    export_dataset_csv(path.string(), ds);
    LabeledDataset back = import_dataset_csv(path.string());
    CHECK(back.x == ds.x);
    CHECK(back.y == ds.y);
    CHECK(back.n_classes == ds.n_classes);
    CHECK(back.domain == ds.domain);
    CHECK(std::signbit(back.x[2]));

    LabeledDataset tgt = ds;
    tgt.domain = DomainTag::target;
    export_dataset_csv(path.string(), tgt);
    CHECK(import_dataset_csv(path.string()).domain == DomainTag::target);
    fs::remove(path);

    CHECK_THROWS_AS(import_dataset_csv("/nonexistent/nope.csv"), DataError);
}

TEST_CASE("LabeledDataset::validate flags label/shape violations") {
    LabeledDataset ds = gen_two_moons(10, 0.1, 1);
    ds.validate();  // healthy

    LabeledDataset bad = ds;
    bad.y[3] = 2;  // outside [0, n_classes)
    CHECK_THROWS_AS(bad.validate(), DataError);

    LabeledDataset mismatch = ds;
    mismatch.y.pop_back();
    CHECK_THROWS_AS(mismatch.validate(), DataError);

    LabeledDataset empty;
    CHECK_THROWS_AS(empty.validate(), DataError);
}
