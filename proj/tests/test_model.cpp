#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "regulargpt/gradcheck.hpp"
#include "regulargpt/model.hpp"

using namespace regulargpt;

namespace {

Tensor<double> randn(Rng& rng, std::vector<int64_t> shape, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.gaussian() * scale;
    return t;
}

// plain dense reference: per-head softmax over an additive [T,T] bias matrix
Tensor<double> dense_attention_ref(const Tensor<double>& q, const Tensor<double>& k,
                                   const Tensor<double>& v, int64_t batch, int64_t seq,
                                   int64_t heads,
                                   const std::vector<Tensor<double>>& head_bias) {
    int64_t dm = q.cols(), dh = dm / heads;
    double scale = 1.0 / std::sqrt(double(dh));
    Tensor<double> out = Tensor<double>::zeros(q.shape);
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t m = 0; m < seq; ++m) {
                std::vector<double> w(seq, 0.0);
                double mx = -std::numeric_limits<double>::infinity();
                for (int64_t n = 0; n < seq; ++n) {
                    double s = 0;
                    for (int64_t c = 0; c < dh; ++c)
                        s += q.at(b * seq + m, h * dh + c) * k.at(b * seq + n, h * dh + c);
                    w[n] = s * scale + head_bias[h].at(m, n);
                    mx = std::max(mx, w[n]);
                }
                double z = 0;
                for (int64_t n = 0; n < seq; ++n) {
                    w[n] = std::isinf(w[n]) ? 0.0 : std::exp(w[n] - mx);
                    z += w[n];
                }
                for (int64_t n = 0; n < seq; ++n)
                    for (int64_t c = 0; c < dh; ++c)
                        out.at(b * seq + m, h * dh + c) += w[n] / z * v.at(b * seq + n, h * dh + c);
            }
    return out;
}

ModelConfig tiny_config(const std::string& kind, int64_t chunk = 2, int64_t thickness = 2) {
    ModelConfig cfg;
    cfg.chunk = chunk;
    cfg.thickness = thickness;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ffn = 16;
    cfg.vocab_size = 5;
    cfg.pad_symbol = 4;
    cfg.kind = kind;
    cfg.vanilla_layers = 2;
    cfg.rel_buckets = 6;
    return cfg;
}

}  // namespace

TEST_CASE("adaptive depth is ceil(log_C T) with T=1 giving one group") {
    struct Case { int64_t t, c, want; };
    for (auto [t, c, want] : std::vector<Case>{{1, 2, 1}, {2, 2, 1}, {3, 2, 2}, {4, 2, 2},
                                              {5, 2, 3}, {8, 2, 3}, {9, 2, 4}, {40, 2, 6},
                                              {500, 2, 9}, {9, 3, 2}, {27, 3, 3}, {28, 3, 4},
                                              {1, 7, 1}, {343, 7, 3}}) {
        INFO("T=", t, " C=", c);
        CHECK(adaptive_depth(t, c) == want);
    }
    CHECK_THROWS_AS(adaptive_depth(0, 2), std::invalid_argument);
    CHECK_THROWS_AS(adaptive_depth(4, 1), std::invalid_argument);
}

TEST_CASE("depth is unchanged by right-padding to a multiple of C") {
    for (int64_t c = 2; c <= 5; ++c)
        for (int64_t t = 1; t <= 200; ++t) {
            int64_t padded = (t + c - 1) / c * c;
            CHECK(adaptive_depth(t, c) == adaptive_depth(padded, c));
        }
}

TEST_CASE("dilated bias places r over the window slots, -inf elsewhere") {
    std::vector<double> r = {10.0, 20.0, 30.0};
    Tensor<double> b = dilated_bias<double>(1, 3, 12, r);  // dilation 3
    for (int64_t m = 0; m < 12; ++m)
        for (int64_t n = 0; n < 12; ++n) {
            int64_t d = m - n;
            bool slot = d >= 0 && d % 3 == 0 && d / 3 < 3;
            if (slot)
                CHECK(b.at(m, n) == r[static_cast<size_t>(d / 3)]);
            else
                CHECK(b.at(m, n) == -std::numeric_limits<double>::infinity());
        }
    // level 0 is a plain sliding window of width C
    Tensor<double> b0 = dilated_bias<double>(0, 3, 6, r);
    CHECK(b0.at(4, 2) == r[2]);
    CHECK(b0.at(4, 1) == -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(dilated_bias<double>(0, 4, 6, r), std::invalid_argument);
}

TEST_CASE("every bias row keeps at least one finite entry (softmax stays defined)") {
    std::vector<double> r = {0.0, 0.0};
    for (int64_t level = 0; level < 5; ++level) {
        Tensor<double> b = dilated_bias<double>(level, 2, 32, r);
        for (int64_t m = 0; m < 32; ++m) CHECK(b.at(m, m) == 0.0);
    }
}

TEST_CASE("pad_input right-pads to a multiple of C and keeps the readout index") {
    auto [p, r] = pad_input({1, 2, 3}, 4, 9);
    CHECK(p == std::vector<int64_t>{1, 2, 3, 9});
    CHECK(r == 2);
    auto [p2, r2] = pad_input({1, 2, 3, 4}, 4, 9);
    CHECK(p2 == std::vector<int64_t>{1, 2, 3, 4});
    CHECK(r2 == 3);
    CHECK_THROWS_AS(pad_input({}, 2, 0), std::invalid_argument);
}

TEST_CASE("fused dilated attention matches the dense masked softmax") {
    Rng rng(21);
    for (int64_t chunk : {2, 3, 4}) {
        for (int64_t level : {0, 1, 2}) {
            int64_t seq = 27, batch = 2, heads = 2, dm = 8;
            Tensor<double> rb = randn(rng, {heads, chunk}, 0.5);
            Tensor<double> qv = randn(rng, {batch * seq, dm});
            Tensor<double> kv = randn(rng, {batch * seq, dm});
            Tensor<double> vv = randn(rng, {batch * seq, dm});
            Tape<double> tape(false);
            Var<double> out = dilated_attention(tape.leaf(qv), tape.leaf(kv), tape.leaf(vv),
                                                tape.leaf(rb), batch, seq, heads, chunk, level);
            std::vector<Tensor<double>> head_bias;
            for (int64_t h = 0; h < heads; ++h) {
                std::vector<double> r(rb.data.begin() + h * chunk, rb.data.begin() + (h + 1) * chunk);
                head_bias.push_back(dilated_bias<double>(level, chunk, seq, r));
            }
            Tensor<double> ref = dense_attention_ref(qv, kv, vv, batch, seq, heads, head_bias);
            double worst = 0;
            for (size_t i = 0; i < ref.data.size(); ++i)
                worst = std::max(worst, std::abs(ref.data[i] - out.val().data[i]));
            INFO("C=", chunk, " level=", level);
            CHECK(worst < 1e-12);
        }
    }
}

TEST_CASE("vanilla attention matches a dense causal bucketed-bias reference") {
    Rng rng(22);
    int64_t seq = 11, batch = 2, heads = 2, dm = 8, buckets = 4;
    Tensor<double> rb = randn(rng, {heads, buckets}, 0.5);
    Tensor<double> qv = randn(rng, {batch * seq, dm});
    Tensor<double> kv = randn(rng, {batch * seq, dm});
    Tensor<double> vv = randn(rng, {batch * seq, dm});
    Tape<double> tape(false);
    Var<double> out = vanilla_attention(tape.leaf(qv), tape.leaf(kv), tape.leaf(vv), tape.leaf(rb),
                                        batch, seq, heads);
    std::vector<Tensor<double>> head_bias;
    for (int64_t h = 0; h < heads; ++h) {
        Tensor<double> b = Tensor<double>::full({seq, seq}, -std::numeric_limits<double>::infinity());
        for (int64_t m = 0; m < seq; ++m)
            for (int64_t n = 0; n <= m; ++n) b.at(m, n) = rb.at(h, relpos_bucket(m - n, buckets));
        head_bias.push_back(std::move(b));
    }
    Tensor<double> ref = dense_attention_ref(qv, kv, vv, batch, seq, heads, head_bias);
    double worst = 0;
    for (size_t i = 0; i < ref.data.size(); ++i)
        worst = std::max(worst, std::abs(ref.data[i] - out.val().data[i]));
    CHECK(worst < 1e-12);
}

TEST_CASE("attention backward matches central differences") {
    Rng rng(23);
    int64_t seq = 9, batch = 1, heads = 2, dm = 8, chunk = 2;
    Parameter<double> pq("q", randn(rng, {batch * seq, dm}));
    Parameter<double> pk("k", randn(rng, {batch * seq, dm}));
    Parameter<double> pv("v", randn(rng, {batch * seq, dm}));
    std::vector<Parameter<double>*> params;

    auto check_kernel = [&](Parameter<double>& pr, auto&& kernel) {
        params = {&pq, &pk, &pv, &pr};
        auto run = [&](bool with_grad) {
            Tape<double> tape;
            Var<double> out = kernel(tape);
            Var<double> loss = sum_all(mul(out, out));
            if (with_grad) {
                for (auto* p : params) p->zero_grad();
                tape.backward(loss);
            }
            return loss.val().data[0];
        };
        CHECK(finite_difference_check(params, run, 1e-5, 400, 17).max_rel_err < 1e-6);
    };

    SUBCASE("dilated, level 0 and 1") {
        Parameter<double> pr("r", randn(rng, {heads, chunk}, 0.3));
        for (int64_t level : {0, 1})
            check_kernel(pr, [&](Tape<double>& t) {
                return dilated_attention(t.param(pq), t.param(pk), t.param(pv), t.param(pr), batch,
                                         seq, heads, chunk, level);
            });
    }
    SUBCASE("vanilla") {
        Parameter<double> pr("r", randn(rng, {heads, 4}, 0.3));
        check_kernel(pr, [&](Tape<double>& t) {
            return vanilla_attention(t.param(pq), t.param(pk), t.param(pv), t.param(pr), batch, seq,
                                     heads);
        });
    }
}

TEST_CASE("config validation names the bad field") {
    ModelConfig cfg = tiny_config("regular");
    cfg.chunk = 1;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("C must be >= 2"),
                         std::invalid_argument);
    cfg = tiny_config("regular");
    cfg.d_model = 10;
    cfg.n_heads = 4;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("nHeads"), std::invalid_argument);
    cfg = tiny_config("weird");
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("weird"), std::invalid_argument);
}

TEST_CASE("shared weights: K blocks of parameters regardless of depth") {
    Model<double> m(tiny_config("regular", 2, 2), 5);
    // embed + 2 blocks x 17 + ln_f (2) + head
    CHECK(m.params().size() == 1 + 2 * 17 + 2 + 1);
    CHECK(m.find("blk1.ffn.w2") != nullptr);
    CHECK(m.find("blk2.ln1.g") == nullptr);

    // deep input (depth 4) reuses the same two blocks; grads reach every param
    Tape<double> tape;
    std::vector<std::vector<int64_t>> batch = {{0, 1, 2, 3, 0, 1, 2, 3, 1, 0}};
    Var<double> logits = m.forward(tape, batch);
    m.zero_grad();
    tape.backward(cross_entropy(logits, {2}));
    for (auto* p : m.params()) {
        double norm = 0;
        for (double g : p->grad.data) norm += g * g;
        INFO("param ", p->name);
        CHECK(norm > 0);
    }
}

TEST_CASE("forward returns one logit row per sequence and is seed-deterministic") {
    Model<float> a(tiny_config("regular"), 11);
    Model<float> b(tiny_config("regular"), 11);
    Model<float> c(tiny_config("regular"), 12);
    std::vector<std::vector<int64_t>> batch = {{0, 1, 2}, {3, 0, 1}};
    Tape<float> t1(false), t2(false), t3(false);
    auto la = a.forward(t1, batch), lb = b.forward(t2, batch), lc = c.forward(t3, batch);
    CHECK(la.val().rows() == 2);
    CHECK(la.val().cols() == 5);
    CHECK(la.val().data == lb.val().data);  // bit-identical across same-seed models
    CHECK(la.val().data != lc.val().data);
}

TEST_CASE("forward rejects malformed batches") {
    Model<float> m(tiny_config("regular"), 1);
    Tape<float> tape(false);
    std::vector<std::vector<int64_t>> empty;
    CHECK_THROWS_AS(m.forward(tape, empty), std::invalid_argument);
    std::vector<std::vector<int64_t>> ragged = {{0, 1}, {0}};
    CHECK_THROWS_AS(m.forward(tape, ragged), std::invalid_argument);
    std::vector<std::vector<int64_t>> oov = {{0, 7}};
    CHECK_THROWS_AS(m.forward(tape, oov), std::invalid_argument);
}

TEST_CASE("max_groups cap triggers with the offending length in the message") {
    ModelConfig cfg = tiny_config("regular");
    cfg.max_groups = 3;
    Model<float> m(cfg, 1);
    Tape<float> tape(false);
    std::vector<std::vector<int64_t>> batch = {std::vector<int64_t>(20, 1)};
    CHECK_THROWS_WITH_AS(m.forward(tape, batch), doctest::Contains("T=20"),
                         std::invalid_argument);
}

TEST_CASE("extra right-padding leaves the readout logits bit-identical") {
    // length 6 and length 8 both take 3 groups at C=2, so rows 0..5 of every
    // intermediate see identical windows; the readout at index 5 must agree
    // to the last bit in double.
    Model<double> m(tiny_config("regular", 2, 2), 33);
    std::vector<int64_t> toks = {0, 1, 2, 3, 1, 0};
    Tape<double> t1(false);
    Var<double> base = m.forward(t1, {toks});
    std::vector<int64_t> padded = toks;
    padded.push_back(m.cfg.pad_symbol);
    padded.push_back(m.cfg.pad_symbol);
    ForwardHooks<double> hooks;
    hooks.readout_override = 5;
    Tape<double> t2(false);
    Var<double> extra = m.forward(t2, {padded}, &hooks);
    CHECK(base.val().data == extra.val().data);
}

TEST_CASE("whole-model gradients pass a finite-difference check") {
    SUBCASE("regular") {
        Model<double> m(tiny_config("regular", 2, 2), 7);
        std::vector<std::vector<int64_t>> batch = {{0, 1, 2}, {3, 3, 0}};
        auto params = m.params();
        auto run = [&](bool with_grad) {
            Tape<double> tape;
            Var<double> loss = cross_entropy(m.forward(tape, batch), {1, 4});
            if (with_grad) {
                m.zero_grad();
                tape.backward(loss);
            }
            return loss.val().data[0];
        };
        CHECK(finite_difference_check(params, run, 1e-5, 400, 31).max_rel_err < 1e-5);
    }
    SUBCASE("vanilla") {
        Model<double> m(tiny_config("vanilla"), 7);
        std::vector<std::vector<int64_t>> batch = {{0, 1, 2, 0, 1}};
        auto params = m.params();
        auto run = [&](bool with_grad) {
            Tape<double> tape;
            Var<double> loss = cross_entropy(m.forward(tape, batch), {2});
            if (with_grad) {
                m.zero_grad();
                tape.backward(loss);
            }
            return loss.val().data[0];
        };
        CHECK(finite_difference_check(params, run, 1e-5, 400, 32).max_rel_err < 1e-5);
    }
}

TEST_CASE("hooks expose one state per group and the embedding gradient") {
    Model<double> m(tiny_config("regular", 2, 1), 3);
    std::vector<std::vector<int64_t>> batch = {{0, 1, 2, 3, 1}};  // pads to 6, depth 3
    ForwardHooks<double> hooks;
    hooks.want_group_outputs = true;
    hooks.want_embed_grad = true;
    Tape<double> tape;
    Var<double> logits = m.forward(tape, batch, &hooks);
    CHECK(hooks.group_outputs.size() == 3);
    for (auto& g : hooks.group_outputs) {
        CHECK(g.rows() == 6);
        CHECK(g.cols() == 8);
    }
    tape.backward(cross_entropy(logits, {0}));
    REQUIRE(hooks.embed_node != nullptr);
    double norm = 0;
    for (double g : hooks.embed_node->grad.data) norm += g * g;
    CHECK(norm > 0);
}
