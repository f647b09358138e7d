#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "regulargpt/lemma.hpp"

using namespace regulargpt;

TEST_CASE("W1 for n=2 matches the known 8x8 layout") {
    // clang-format off
    std::vector<int> want = {
        1, 0, 1, 0, 0, 0, 0, 0,
        0, 1, 0, 1, 0, 0, 0, 0,
        0, 0, 0, 0, 1, 0, 1, 0,
        0, 0, 0, 0, 0, 1, 0, 1,
        1, 0, 0, 0, 1, 0, 0, 0,
        0, 0, 1, 0, 0, 0, 1, 0,
        0, 1, 0, 0, 0, 1, 0, 0,
        0, 0, 0, 1, 0, 0, 0, 1,
    };
    // clang-format on
    CHECK(build_W1(2) == want);
}

TEST_CASE("W2 for n=2 matches the known 8x4 layout") {
    // clang-format off
    std::vector<int> want = {
        1, 0, 0, 0,
        1, 0, 0, 0,
        0, 1, 0, 0,
        0, 1, 0, 0,
        0, 0, 1, 0,
        0, 0, 1, 0,
        0, 0, 0, 1,
        0, 0, 0, 1,
    };
    // clang-format on
    CHECK(build_W2(2) == want);
}

TEST_CASE("the worked n=2 example gives Flat(AB) = [0 1 0 1]") {
    std::vector<int> a = {1, 0, 1, 0};  // A = [[1,0],[1,0]]
    std::vector<int> b = {0, 1, 1, 0};  // B = [[0,1],[1,0]]
    CHECK(mlp_binary_matmul(a, b, 2) == std::vector<int>{0, 1, 0, 1});
}

TEST_CASE("W1 columns read exactly two inputs, W2 columns sum n hidden units") {
    for (int64_t n : {2, 3, 5}) {
        auto w1 = build_W1(n);
        auto w2 = build_W2(n);
        REQUIRE(static_cast<int64_t>(w1.size()) == 2 * n * n * n * n * n);
        REQUIRE(static_cast<int64_t>(w2.size()) == n * n * n * n * n);
        int64_t cols1 = n * n * n;
        for (int64_t c = 0; c < cols1; ++c) {
            int sum = 0;
            for (int64_t r = 0; r < 2 * n * n; ++r) sum += w1[r * cols1 + c];
            CHECK(sum == 2);  // one A entry, one B entry
        }
        int64_t cols2 = n * n;
        for (int64_t c = 0; c < cols2; ++c) {
            int sum = 0;
            for (int64_t r = 0; r < n * n * n; ++r) sum += w2[r * cols2 + c];
            CHECK(sum == n);  // the k-sum of the product
        }
        for (int64_t r = 0; r < n * n * n; ++r) {
            int sum = 0;
            for (int64_t c = 0; c < cols2; ++c) sum += w2[r * cols2 + c];
            CHECK(sum == 1);  // each hidden unit feeds one output
        }
    }
}

TEST_CASE("exhaustive verification passes for n=2 and n=3") {
    LemmaReport r2 = verify_lemma(2, true, 0, 0);
    CHECK(r2.pass);
    CHECK(r2.trials == 256);  // 2^(2*4) pairs
    CHECK(r2.counterexample.empty());
    LemmaReport r3 = verify_lemma(3, true, 0, 0);
    CHECK(r3.pass);
    CHECK(r3.trials == 262144);
}

TEST_CASE("random verification passes for larger n") {
    for (int64_t n : {4, 5, 8}) {
        LemmaReport r = verify_lemma(n, false, 300, 17);
        INFO("n=", n);
        CHECK(r.pass);
        CHECK(r.trials == 300);
    }
}

TEST_CASE("exhaustive mode refuses sizes past the guard") {
    CHECK_THROWS_AS(verify_lemma(5, true, 0, 0), std::invalid_argument);
}

TEST_CASE("non-binary inputs are rejected") {
    CHECK_THROWS_AS(mlp_binary_matmul({1, 0, 2, 0}, {1, 0, 0, 1}, 2), std::invalid_argument);
    CHECK_THROWS_AS(mlp_binary_matmul({1, 0, 1, 0}, {1, -1, 0, 1}, 2), std::invalid_argument);
    CHECK_THROWS_AS(mlp_binary_matmul({1, 0, 1}, {1, 0, 0, 1}, 2), std::invalid_argument);
}

TEST_CASE("composition through the network agrees with the matrix algebra") {
    Rng rng(31);
    for (const char* name : {"parity", "cycle_nav", "mod_arith", "tomita3", "d4"}) {
        TaskSpec t = make_task(name);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<int64_t> u, v;
            for (int i = 0; i < 6; ++i) {
                u.push_back(static_cast<int64_t>(rng.below(5)) % t.num_task_symbols);
                v.push_back(static_cast<int64_t>(rng.below(5)) % t.num_task_symbols);
            }
            TransitionMatrix mu = transition_matrix(t.automaton, u);
            TransitionMatrix mv = transition_matrix(t.automaton, v);
            CHECK(compose_via_mlp(mu, mv) == compose(mu, mv));
        }
    }
    CHECK_THROWS_AS(compose_via_mlp(TransitionMatrix::identity(2), TransitionMatrix::identity(3)),
                    std::invalid_argument);
}

TEST_CASE("cycle_nav single shifts compose like the 5-cycle") {
    TaskSpec t = make_task("cycle_nav");
    TransitionMatrix plus = transition_matrix(t.automaton, {1});
    TransitionMatrix minus = transition_matrix(t.automaton, {2});
    // +1 is the 5x5 cyclic shift; five of them come back to the identity
    TransitionMatrix acc = TransitionMatrix::identity(5);
    for (int i = 0; i < 5; ++i) acc = compose_via_mlp(acc, plus);
    CHECK(acc == TransitionMatrix::identity(5));
    CHECK(compose_via_mlp(plus, minus) == TransitionMatrix::identity(5));
}

TEST_CASE("format_matrix prints numpy-style rows") {
    CHECK(format_matrix({1, 0, 0, 1}, 2, 2) == "[[1 0]\n [0 1]]");
    CHECK(format_matrix({1, 2, 3}, 1, 3) == "[[1 2 3]]");
}
