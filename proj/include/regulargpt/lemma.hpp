#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regulargpt/automata.hpp"
#include "regulargpt/rng.hpp"

namespace regulargpt {

// Two-layer ReLU network computing exact binary matrix products:
// ReLU([Flat(A), Flat(B)] * W1 - 1) * W2 = Flat(A*B). All arithmetic is in
// exact integers; the construction is exact, so no floats.

// (2n^2) x (n^3), row-major. Column (i*n^2 + j*n + k) reads exactly the two
// inputs A[i][k] and B[k][j].
std::vector<int> build_W1(int64_t n);

// (n^3) x (n^2): identity(n^2) Kronecker the all-ones n-column.
std::vector<int> build_W2(int64_t n);

// a, b are flattened row-major binary n x n matrices; returns Flat(a*b).
// Rejects non-binary input (the construction's guarantee is binary-only).
std::vector<int> mlp_binary_matmul(const std::vector<int>& a, const std::vector<int>& b, int64_t n);

struct LemmaReport {
    bool pass = true;
    int64_t trials = 0;
    std::string counterexample;  // empty when pass
};

// Compares mlp_binary_matmul against the direct binary product; exhaustive
// enumerates all 2^(2n^2) pairs, random draws `trials` seeded pairs.
LemmaReport verify_lemma(int64_t n, bool exhaustive, int64_t trials, uint64_t seed);

// compose() routed through the lemma network: the executable bridge between
// the FFN-composition claim and the automaton algebra.
TransitionMatrix compose_via_mlp(const TransitionMatrix& m1, const TransitionMatrix& m2);

// numpy-style print layout, e.g. "[[1 0]\n [0 1]]"
std::string format_matrix(const std::vector<int>& m, int64_t rows, int64_t cols);

}  // namespace regulargpt
