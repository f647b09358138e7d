#include "regulargpt/lemma.hpp"

#include <algorithm>
#include <stdexcept>

namespace regulargpt {

std::vector<int> build_W1(int64_t n) {
    if (n < 1) throw std::invalid_argument("build_W1: n must be >= 1");
    int64_t n2 = n * n, n3 = n2 * n;
    std::vector<int> w1(static_cast<size_t>(2 * n2 * n3), 0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            for (int64_t k = 0; k < n; ++k) {
                int64_t col = i * n2 + j * n + k;
                w1[(i * n + k) * n3 + col] = 1;        // reads A[i][k]
                w1[(n2 + k * n + j) * n3 + col] = 1;   // reads B[k][j]
            }
    return w1;
}

std::vector<int> build_W2(int64_t n) {
    if (n < 1) throw std::invalid_argument("build_W2: n must be >= 1");
    int64_t n2 = n * n, n3 = n2 * n;
    std::vector<int> w2(static_cast<size_t>(n3 * n2), 0);
    for (int64_t z = 0; z < n2; ++z)
        for (int64_t r = 0; r < n; ++r) w2[(z * n + r) * n2 + z] = 1;
    return w2;
}

std::vector<int> mlp_binary_matmul(const std::vector<int>& a, const std::vector<int>& b, int64_t n) {
    int64_t n2 = n * n, n3 = n2 * n;
    if (static_cast<int64_t>(a.size()) != n2 || static_cast<int64_t>(b.size()) != n2)
        throw std::invalid_argument("mlp_binary_matmul: inputs must be flattened n x n matrices");
    for (int v : a)
        if (v != 0 && v != 1) throw std::invalid_argument("mlp_binary_matmul: non-binary entry in A");
    for (int v : b)
        if (v != 0 && v != 1) throw std::invalid_argument("mlp_binary_matmul: non-binary entry in B");

    std::vector<int> x(a);
    x.insert(x.end(), b.begin(), b.end());
    std::vector<int> w1 = build_W1(n);
    std::vector<int> w2 = build_W2(n);

    std::vector<int> hidden(static_cast<size_t>(n3), 0);
    for (int64_t c = 0; c < n3; ++c) {
        int s = -1;  // the all-(-1) bias
        for (int64_t z = 0; z < 2 * n2; ++z) s += x[z] * w1[z * n3 + c];
        hidden[c] = std::max(s, 0);
    }
    std::vector<int> out(static_cast<size_t>(n2), 0);
    for (int64_t c = 0; c < n3; ++c)
        if (hidden[c])
            for (int64_t o = 0; o < n2; ++o) out[o] += hidden[c] * w2[c * n2 + o];
    return out;
}

namespace {

std::vector<int> direct_product(const std::vector<int>& a, const std::vector<int>& b, int64_t n) {
    std::vector<int> out(static_cast<size_t>(n * n), 0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < n; ++k)
            if (a[i * n + k])
                for (int64_t j = 0; j < n; ++j) out[i * n + j] += b[k * n + j];
    return out;
}

std::string flat_str(const std::vector<int>& m) {
    std::string s = "[";
    for (size_t i = 0; i < m.size(); ++i) s += (i ? " " : "") + std::to_string(m[i]);
    return s + "]";
}

}  // namespace

LemmaReport verify_lemma(int64_t n, bool exhaustive, int64_t trials, uint64_t seed) {
    LemmaReport rep;
    int64_t n2 = n * n;
    auto check = [&](const std::vector<int>& a, const std::vector<int>& b) {
        ++rep.trials;
        std::vector<int> got = mlp_binary_matmul(a, b, n);
        std::vector<int> want = direct_product(a, b, n);
        if (got != want) {
            rep.pass = false;
            rep.counterexample = "A=" + flat_str(a) + " B=" + flat_str(b) + " mlp=" + flat_str(got) +
                                 " direct=" + flat_str(want);
        }
        return rep.pass;
    };
    if (exhaustive) {
        if (n2 > 20) throw std::invalid_argument("verify_lemma: exhaustive mode infeasible for n > 3");
        int64_t count = 1LL << n2;
        std::vector<int> a(static_cast<size_t>(n2)), b(static_cast<size_t>(n2));
        for (int64_t am = 0; am < count; ++am) {
            for (int64_t i = 0; i < n2; ++i) a[i] = (am >> i) & 1;
            for (int64_t bm = 0; bm < count; ++bm) {
                for (int64_t i = 0; i < n2; ++i) b[i] = (bm >> i) & 1;
                if (!check(a, b)) return rep;
            }
        }
    } else {
        Rng rng = Rng(seed).fork(4);
        std::vector<int> a(static_cast<size_t>(n2)), b(static_cast<size_t>(n2));
        for (int64_t t = 0; t < trials; ++t) {
            for (int64_t i = 0; i < n2; ++i) a[i] = rng.bernoulli(0.5) ? 1 : 0;
            for (int64_t i = 0; i < n2; ++i) b[i] = rng.bernoulli(0.5) ? 1 : 0;
            if (!check(a, b)) return rep;
        }
    }
    return rep;
}

TransitionMatrix compose_via_mlp(const TransitionMatrix& m1, const TransitionMatrix& m2) {
    if (m1.n != m2.n)
        throw std::invalid_argument("compose_via_mlp: dimension mismatch " + std::to_string(m1.n) +
                                    " vs " + std::to_string(m2.n));
    std::vector<int> a(m1.entries.begin(), m1.entries.end());
    std::vector<int> b(m2.entries.begin(), m2.entries.end());
    std::vector<int> flat = mlp_binary_matmul(a, b, m1.n);
    TransitionMatrix out;
    out.n = m1.n;
    out.entries.resize(flat.size());
    for (size_t i = 0; i < flat.size(); ++i) out.entries[i] = flat[i] ? 1 : 0;
    return out;
}

std::string format_matrix(const std::vector<int>& m, int64_t rows, int64_t cols) {
    std::string s = "[";
    for (int64_t i = 0; i < rows; ++i) {
        if (i) s += "\n ";
        s += "[";
        for (int64_t j = 0; j < cols; ++j) {
            if (j) s += " ";
            s += std::to_string(m[i * cols + j]);
        }
        s += "]";
    }
    return s + "]";
}

}  // namespace regulargpt
