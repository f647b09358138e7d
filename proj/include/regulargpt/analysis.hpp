#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "regulargpt/automata.hpp"
#include "regulargpt/model.hpp"
#include "regulargpt/rng.hpp"
#include "regulargpt/tensor.hpp"

namespace regulargpt {

// ---------------------------------------------------------------------------
// dependency-free numerics (pca / k-means), non-templated
// ---------------------------------------------------------------------------

struct PcaResult {
    std::vector<std::array<double, 2>> projections;
    double eigenvalues[2] = {0.0, 0.0};
    bool degenerate = false;  // zero variance input
};

// Top-2 principal components by power iteration with deflation
// (tolerance 1e-9, max 10k iterations). Component sign is fixed so each
// eigenvector's largest-magnitude coordinate is positive.
PcaResult pca_2d(const std::vector<std::vector<double>>& vectors);

struct KmeansResult {
    std::vector<int64_t> assignment;
    double inertia = 0.0;
};

// Seeded Lloyd iterations, `restarts` random initializations, best inertia.
KmeansResult kmeans_2d(const std::vector<std::array<double, 2>>& points, int64_t k,
                       int64_t restarts, uint64_t seed);

// fraction of points whose cluster's majority oracle label matches their own
double purity(const std::vector<int64_t>& assignment, const std::vector<int64_t>& labels, int64_t k);

// ---------------------------------------------------------------------------
// structural accounting
// ---------------------------------------------------------------------------

// |reachable(T-1)| under the per-group adjacency relations of groups
// 0..ceil(log_C T)-1 (top group applied last, so the closure walks down).
int64_t routing_coverage(int64_t chunk, int64_t seq_len);

// exact finite-bias-entry counts
int64_t attention_cost(int64_t chunk, int64_t thickness, int64_t seq_len, int64_t groups);
int64_t vanilla_cost(int64_t seq_len, int64_t layers);

// ---------------------------------------------------------------------------
// model-side instruments
// ---------------------------------------------------------------------------

struct OutputRecord {
    int64_t position;
    int64_t level;
    std::vector<double> vec;
    std::string label;  // oracle transition-matrix key for the group-l span
};

struct LayerOutputDump {
    std::vector<OutputRecord> records;
    int64_t num_groups = 0;
    int64_t seq_len = 0;
    bool general_chunk_span = false;  // span formula extrapolated beyond C=2
};

// Post-FFN output of every (position, group) with its oracle span label: the
// transition matrix of tokens[max(0, i - C^(l+1) + 1) .. i].
template <typename T>
LayerOutputDump collect_outputs(Model<T>& model, const TaskSpec& task,
                                const std::vector<int64_t>& tokens) {
    Tape<T> tape(/*recording=*/false);
    ForwardHooks<T> hooks;
    hooks.want_group_outputs = true;
    model.forward(tape, {tokens}, &hooks);
    int64_t orig_len = static_cast<int64_t>(tokens.size());
    int64_t d = model.cfg.d_model;
    LayerOutputDump dump;
    dump.num_groups = static_cast<int64_t>(hooks.group_outputs.size());
    dump.seq_len = orig_len;
    dump.general_chunk_span = model.cfg.chunk != 2;
    int64_t span = model.cfg.chunk;  // C^(l+1) at group l
    for (int64_t l = 0; l < dump.num_groups; ++l) {
        const Tensor<T>& out = hooks.group_outputs[static_cast<size_t>(l)];
        for (int64_t i = 0; i < orig_len; ++i) {
            OutputRecord rec;
            rec.position = i;
            rec.level = l;
            rec.vec.resize(static_cast<size_t>(d));
            for (int64_t c = 0; c < d; ++c) rec.vec[c] = static_cast<double>(out.at(i, c));
            int64_t lo = std::max<int64_t>(0, i - span + 1);
            std::vector<int64_t> slice(tokens.begin() + lo, tokens.begin() + i + 1);
            rec.label = transition_matrix(task.automaton, slice).key();
            dump.records.push_back(std::move(rec));
        }
        span *= model.cfg.chunk;
    }
    return dump;
}

struct ReceptiveProfile {
    std::vector<double> grad_norm;   // per input position
    std::vector<double> cumulative;  // c_j = sum_{j' >= j} g_{j'}, c_0 normalized to 1
    double total = 0.0;
};

// Gradient-norm receptive field: loss at the readout position, backward to
// the input embeddings, per-position L2 norms, cumulative from the most
// recent token to the earliest.
template <typename T>
ReceptiveProfile receptive_field(Model<T>& model, const TaskSpec& task,
                                 const std::vector<int64_t>& tokens) {
    Tape<T> tape;
    ForwardHooks<T> hooks;
    hooks.want_embed_grad = true;
    Var<T> logits = model.forward(tape, {tokens}, &hooks);
    std::vector<int64_t> target = {oracle(task, tokens)};
    Var<T> loss = cross_entropy(logits, target);
    model.zero_grad();
    tape.backward(loss);
    if (!hooks.embed_node || !hooks.embed_node->has_grad)
        throw std::runtime_error("receptive_field: no input-embedding gradient recorded");
    const Tensor<T>& g = hooks.embed_node->grad;
    int64_t orig_len = static_cast<int64_t>(tokens.size());
    ReceptiveProfile prof;
    prof.grad_norm.resize(static_cast<size_t>(orig_len));
    for (int64_t j = 0; j < orig_len; ++j) {
        double s = 0;
        for (int64_t c = 0; c < g.cols(); ++c)
            s += static_cast<double>(g.at(j, c)) * static_cast<double>(g.at(j, c));
        prof.grad_norm[static_cast<size_t>(j)] = std::sqrt(s);
    }
    prof.cumulative.assign(static_cast<size_t>(orig_len), 0.0);
    double run = 0.0;
    for (int64_t j = orig_len - 1; j >= 0; --j) {
        run += prof.grad_norm[static_cast<size_t>(j)];
        prof.cumulative[static_cast<size_t>(j)] = run;
    }
    prof.total = run;
    if (run > 0)
        for (double& c : prof.cumulative) c /= run;
    return prof;
}

}  // namespace regulargpt
