#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regulargpt/rng.hpp"

namespace regulargpt {

// (Q, Sigma, delta) transition table. States and symbols are dense indices;
// symbol strings live in the owning TaskSpec's vocabulary.
struct Semiautomaton {
    int64_t num_states = 0;
    int64_t num_symbols = 0;
    std::vector<int64_t> delta;  // [num_states][num_symbols]

    int64_t step(int64_t q, int64_t sym) const;
};

// Binary |Q|x|Q| matrix with exactly one 1 per row; row q is the one-hot of
// the state reached from q. Function composition is a matrix product under
// this representation.
struct TransitionMatrix {
    int64_t n = 0;
    std::vector<uint8_t> entries;  // row-major

    static TransitionMatrix identity(int64_t n);
    bool one_per_row() const;
    bool operator==(const TransitionMatrix& o) const { return n == o.n && entries == o.entries; }
    // stable key for counting distinct transition functions
    std::string key() const;
};

struct TaskSpec {
    std::string name;
    std::vector<std::string> vocab;  // task symbols, then answer symbols, then <pad>
    int64_t num_task_symbols = 0;
    int64_t answer_base = 0;  // first answer symbol index
    int64_t num_answers = 0;
    int64_t pad_symbol = 0;  // always the last vocab index
    Semiautomaton automaton;
    int64_t initial_state = 0;
    std::vector<int64_t> answer_map;  // state -> vocab index of the answer symbol
};

struct Sample {
    std::vector<int64_t> tokens;  // vocab indices in [0, num_task_symbols)
    int64_t answer = 0;           // vocab index of the answer symbol
    int64_t length = 0;
};

int64_t transition_apply(const Semiautomaton& a, int64_t q, const std::vector<int64_t>& tokens);
TransitionMatrix transition_matrix(const Semiautomaton& a, const std::vector<int64_t>& tokens);
// M1 is applied first; under the row-indexed-by-start-state convention the
// result is the matrix product M1*M2.
TransitionMatrix compose(const TransitionMatrix& m1, const TransitionMatrix& m2);

// Registry: parity, even_pairs, mod_arith, cycle_nav, d2, d3, d4, d12,
// tomita3, tomita4, tomita5, tomita6.
TaskSpec make_task(const std::string& name);
std::vector<std::string> task_names();

// p1 is the Bernoulli probability of '1' and applies to parity only; the
// other tasks sample uniformly over valid strings of their grammar
// (mod_arith rounds T down to an odd length, d_n walks the automaton
// avoiding the sink).
Sample sample(const TaskSpec& task, int64_t length, Rng& rng, double p1 = 0.5);

int64_t oracle(const TaskSpec& task, const std::vector<int64_t>& tokens);

// one-sample-per-line text: tokens space-separated, tab, answer symbol
std::string format_sample(const TaskSpec& task, const Sample& s);

}  // namespace regulargpt
