#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cat/models.hpp"
#include "cat/rng.hpp"
#include "cat/tensor.hpp"

using namespace cat;

namespace {

MlpSpec spec_of(std::vector<std::size_t> sizes, Activation act, OutputTransform out) {
    MlpSpec s;
    s.layer_sizes = std::move(sizes);
    s.activation = act;
    s.output = out;
    return s;
}

ModelParams make_default_params(std::uint64_t seed) {
    MlpSpec g = spec_of({2, 8, 4}, Activation::relu, OutputTransform::none);
    MlpSpec f = spec_of({4, 2}, Activation::relu, OutputTransform::softmax_deferred);
    MlpSpec d = spec_of({4, 8, 1}, Activation::relu, OutputTransform::sigmoid);
    return init_params(g, f, d, seed);
}

bool nets_equal(const NetParams& a, const NetParams& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i].W == b[i].W) || !(a[i].b == b[i].b)) return false;
    return true;
}

Tensor random_input(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor x({rows, cols});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    return x;
}

}  // namespace

TEST_CASE("init_params is deterministic in the seed and respects Xavier bounds") {
    ModelParams a = make_default_params(11), b = make_default_params(11),
                c = make_default_params(12);
    CHECK(nets_equal(a.g, b.g));
    CHECK(nets_equal(a.f, b.f));
    CHECK(nets_equal(a.d, b.d));
    CHECK_FALSE(nets_equal(a.g, c.g));

    for (const NetParams* net : {&a.g, &a.f, &a.d}) {
        for (const LayerParams& lp : *net) {
            double bound = std::sqrt(6.0 / static_cast<double>(lp.W.rows() + lp.W.cols()));
            for (std::size_t i = 0; i < lp.W.size(); ++i) {
                CHECK(std::abs(lp.W[i]) <= bound);
            }
            for (std::size_t i = 0; i < lp.b.size(); ++i) CHECK(lp.b[i] == 0.0);
        }
    }
    // weights are actually random, not degenerate
    CHECK(a.g[0].W[0] != a.g[0].W[1]);
}

TEST_CASE("init_params draws g, f, d sequentially from one seed stream") {
    ModelParams p = make_default_params(77);
    Rng rng(77);
    NetParams g = init_net_params(p.spec_g, rng);
    NetParams f = init_net_params(p.spec_f, rng);
    NetParams d = init_net_params(p.spec_d, rng);
    CHECK(nets_equal(p.g, g));
    CHECK(nets_equal(p.f, f));
    CHECK(nets_equal(p.d, d));
}

TEST_CASE("init_params validates cross-network dimensions") {
    MlpSpec g = spec_of({2, 4}, Activation::relu, OutputTransform::none);
    MlpSpec f_bad = spec_of({5, 2}, Activation::relu, OutputTransform::softmax_deferred);
    MlpSpec d = spec_of({4, 1}, Activation::relu, OutputTransform::sigmoid);
    CHECK_THROWS_AS(init_params(g, f_bad, d, 1), ConfigError);

    MlpSpec f = spec_of({4, 2}, Activation::relu, OutputTransform::softmax_deferred);
    MlpSpec d_bad = spec_of({4, 2}, Activation::relu, OutputTransform::sigmoid);  // out!=1
    CHECK_THROWS_AS(init_params(g, f, d_bad, 1), ConfigError);

    MlpSpec d_nosig = spec_of({4, 1}, Activation::relu, OutputTransform::none);
    CHECK_THROWS_AS(init_params(g, f, d_nosig, 1), ConfigError);

    MlpSpec empty;
    CHECK_THROWS_AS(empty.validate("empty"), ConfigError);
    MlpSpec zero = spec_of({2, 0, 1}, Activation::relu, OutputTransform::none);
    CHECK_THROWS_AS(zero.validate("zero"), ConfigError);
}

TEST_CASE("plain forward and tape forward agree bitwise") {
    Rng rng(31);
    for (Activation act : {Activation::relu, Activation::tanh}) {
        for (OutputTransform out :
             {OutputTransform::none, OutputTransform::sigmoid, OutputTransform::softmax_deferred}) {
            MlpSpec spec = spec_of({3, 6, 5, out == OutputTransform::sigmoid ? 1u : 4u}, act, out);
            Rng init_rng(rng.next_u64());
            NetParams net = init_net_params(spec, init_rng);
            Tensor x = random_input(rng, 7, 3);

            Tensor plain = mlp_forward(spec, net, x);

            Tape t;
            TapeNet tn = lift_net(t, net);
            NodeId y = mlp_on_tape(t, spec, tn, t.leaf(x, false));
            CHECK(t.value(y) == plain);
        }
    }
}

TEST_CASE("discriminate stays inside the sigmoid clamp") {
    ModelParams p = make_default_params(5);
    Rng rng(6);
    Tensor z = random_input(rng, 40, 4);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= 50.0;  // drive saturation
    Tensor dout = discriminate(p, z);
    CHECK(dout.rows() == 40);
    CHECK(dout.cols() == 1);
    for (std::size_t i = 0; i < dout.size(); ++i) {
        CHECK(dout[i] >= kDiscriminatorClamp);
        CHECK(dout[i] <= 1.0 - kDiscriminatorClamp);
    }
}

TEST_CASE("extract_features -> classify pipeline shapes") {
    ModelParams p = make_default_params(5);
    Rng rng(8);
    Tensor x = random_input(rng, 10, 2);
    Tensor z = extract_features(p, x);
    CHECK(z.rows() == 10);
    CHECK(z.cols() == 4);
    Tensor logits = classify(p, z);
    CHECK(logits.rows() == 10);
    CHECK(logits.cols() == 2);
}

TEST_CASE("argmax_rows breaks ties toward the smaller index") {
    Tensor logits = Tensor::matrix({{1.0, 3.0, 2.0},
                                    {5.0, 5.0, 1.0},
                                    {2.0, 2.0, 2.0},
                                    {-1.0, -2.0, -1.0}});
    std::vector<int> got = argmax_rows(logits);
    CHECK(got == std::vector<int>{1, 0, 0, 0});
}

TEST_CASE("checkpoint JSON round-trips every parameter bitwise") {
    ModelParams p = make_default_params(99);
    // plant values that stress the serialization (exact binary round-trip)
    p.g[0].W[0] = 0.1;
    p.g[0].W[1] = -0.0;
    p.g[0].b[0] = 5e-324;
    p.f[0].W[0] = 1.0 / 3.0;

    std::string doc = checkpoint_to_json(p);
    ModelParams q = checkpoint_from_json(doc);
    CHECK(q.spec_g == p.spec_g);
    CHECK(q.spec_f == p.spec_f);
    CHECK(q.spec_d == p.spec_d);
    CHECK(q.seed == p.seed);
    CHECK(nets_equal(q.g, p.g));
    CHECK(nets_equal(q.f, p.f));
    CHECK(nets_equal(q.d, p.d));
    CHECK(std::signbit(q.g[0].W[1]));  // -0.0 preserved

    auto path = std::filesystem::temp_directory_path() / "cat_uda_test_ckpt.json";
    save_checkpoint(path.string(), p);
    ModelParams r = load_checkpoint(path.string());
    CHECK(nets_equal(r.g, p.g));
    CHECK(nets_equal(r.f, p.f));
    CHECK(nets_equal(r.d, p.d));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects malformed documents") {
    CHECK_THROWS_AS(checkpoint_from_json("not json at all"), DataError);
    CHECK_THROWS_AS(checkpoint_from_json("{\"format\":\"something-else\"}"), DataError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/ckpt.json"), DataError);
}

TEST_CASE("base64 and little-endian double codecs round-trip") {
    CHECK(base64_encode({'M', 'a', 'n'}) == "TWFu");
    CHECK(base64_encode({'M', 'a'}) == "TWE=");
    CHECK(base64_encode({'M'}) == "TQ==");
    CHECK(base64_decode("TWFu") == std::vector<unsigned char>{'M', 'a', 'n'});
    CHECK(base64_decode("") == std::vector<unsigned char>{});
    CHECK_THROWS_AS(base64_decode("@@@@"), DataError);
    CHECK_THROWS_AS(base64_decode("TWF"), DataError);  // truncated quantum

    Rng rng(3);
    std::vector<double> vals(64);
    for (double& v : vals) v = rng.normal() * 1e3;
    vals[0] = -0.0;
    vals[1] = 5e-324;
    vals[2] = 1.0 / 3.0;
    std::vector<double> back = doubles_from_le_bytes(doubles_to_le_bytes(vals));
    CHECK(back.size() == vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        CHECK(back[i] == vals[i]);
    }
    CHECK(std::signbit(back[0]));
}

TEST_CASE("activation and output-transform names round-trip and reject unknowns") {
    CHECK(activation_name(Activation::relu) == "relu");
    CHECK(activation_name(Activation::tanh) == "tanh");
    CHECK(activation_from_name("relu") == Activation::relu);
    CHECK(activation_from_name("tanh") == Activation::tanh);
    CHECK_THROWS_AS(activation_from_name("gelu"), ConfigError);

    for (OutputTransform o :
         {OutputTransform::none, OutputTransform::sigmoid, OutputTransform::softmax_deferred}) {
        CHECK(output_from_name(output_name(o)) == o);
    }
    CHECK_THROWS_AS(output_from_name("softplus"), ConfigError);
}

TEST_CASE("net_tensors exposes parameters in W0,b0,W1,b1 order") {
    ModelParams p = make_default_params(1);
    std::vector<Tensor*> g_params = net_tensors(p.g);
    REQUIRE(g_params.size() == 4);  // two layers
    CHECK(g_params[0] == &p.g[0].W);
    CHECK(g_params[1] == &p.g[0].b);
    CHECK(g_params[2] == &p.g[1].W);
    CHECK(g_params[3] == &p.g[1].b);

    std::vector<Tensor*> all = all_tensors(p);
    // g: 2 layers, f: 1 layer, d: 2 layers -> (2+1+2)*2 tensors
    CHECK(all.size() == 10);
    CHECK(all[0] == &p.g[0].W);
    CHECK(all[4] == &p.f[0].W);
    CHECK(all.back() == &p.d[1].b);
}
