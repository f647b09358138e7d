#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "regulargpt/attention.hpp"
#include "regulargpt/autodiff.hpp"
#include "regulargpt/rng.hpp"

namespace regulargpt {

struct ModelConfig {
    int64_t chunk = 2;      // C
    int64_t thickness = 1;  // K
    int64_t d_model = 64;
    int64_t n_heads = 4;
    int64_t d_ffn = 256;
    int64_t vocab_size = 0;
    int64_t max_groups = 16;  // safety cap on the adaptive depth
    int64_t pad_symbol = 0;
    std::string kind = "regular";  // "regular" or "vanilla"
    int64_t vanilla_layers = 4;
    int64_t rel_buckets = 32;

    void validate() const {
        if (chunk < 2) throw std::invalid_argument("ModelConfig: C must be >= 2, got " + std::to_string(chunk));
        if (thickness < 1) throw std::invalid_argument("ModelConfig: K must be >= 1");
        if (d_model % n_heads != 0)
            throw std::invalid_argument("ModelConfig: dModel " + std::to_string(d_model) +
                                        " not divisible by nHeads " + std::to_string(n_heads));
        if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocabSize must be >= 2");
        if (kind != "regular" && kind != "vanilla")
            throw std::invalid_argument("ModelConfig: unknown kind '" + kind + "'");
    }
};

// ceil(log_C T); a single group suffices for T = 1
inline int64_t adaptive_depth(int64_t seq_len, int64_t chunk) {
    if (seq_len < 1) throw std::invalid_argument("adaptive_depth: T must be >= 1");
    if (chunk < 2) throw std::invalid_argument("adaptive_depth: C must be >= 2");
    int64_t depth = 1, reach = chunk;
    while (reach < seq_len) {
        reach *= chunk;
        ++depth;
    }
    return depth;
}

// The group-l additive bias matrix for one head: entry (m,n) is
// r[(m-n)/C^l] when that index is a valid window slot, -inf otherwise.
// Lower triangular by construction.
template <typename T>
Tensor<T> dilated_bias(int64_t level, int64_t chunk, int64_t seq_len, const std::vector<T>& r) {
    if (static_cast<int64_t>(r.size()) != chunk)
        throw std::invalid_argument("dilated_bias: r has length " + std::to_string(r.size()) +
                                    ", want C = " + std::to_string(chunk));
    int64_t dil = 1;
    for (int64_t i = 0; i < level; ++i) dil *= chunk;
    Tensor<T> bias = Tensor<T>::full({seq_len, seq_len}, -std::numeric_limits<T>::infinity());
    for (int64_t m = 0; m < seq_len; ++m)
        for (int64_t i = 0; i < std::min(chunk, m / dil + 1); ++i)
            bias.at(m, m - i * dil) = r[static_cast<size_t>(i)];
    return bias;
}

// Right-pads to a multiple of C; the readout index is the last real token.
inline std::pair<std::vector<int64_t>, int64_t> pad_input(const std::vector<int64_t>& tokens,
                                                          int64_t chunk, int64_t pad_symbol) {
    if (tokens.empty()) throw std::invalid_argument("pad_input: empty token sequence");
    std::vector<int64_t> padded = tokens;
    while (static_cast<int64_t>(padded.size()) % chunk != 0) padded.push_back(pad_symbol);
    return {padded, static_cast<int64_t>(tokens.size()) - 1};
}

// Optional forward instrumentation.
template <typename T>
struct ForwardHooks {
    bool want_embed_grad = false;
    std::shared_ptr<Node<T>> embed_node;       // grad w.r.t. input embeddings after backward
    bool want_group_outputs = false;
    std::vector<Tensor<T>> group_outputs;      // post-FFN state at the end of each group, [B*T, d]
    int64_t readout_override = -1;             // read logits at this position instead of the default
    std::vector<int64_t> readout_rows;         // per-sample readout positions (overrides everything)
};

template <typename T>
struct Model {
    ModelConfig cfg;
    std::vector<std::unique_ptr<Parameter<T>>> store_;

    struct Block {
        Parameter<T>*ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo, *rbias;
        Parameter<T>*ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
    };
    std::vector<Block> blocks;  // K shared sublayers, or vanilla_layers unshared layers
    Parameter<T>*embed = nullptr, *ln_f_g = nullptr, *ln_f_b = nullptr, *head = nullptr;

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    explicit Model(ModelConfig c, uint64_t init_seed = 0) : cfg(std::move(c)) {
        cfg.validate();
        Rng rng(init_seed);
        rng = rng.fork(7701);
        int64_t d = cfg.d_model;
        embed = add_param("embed", gauss(rng, {cfg.vocab_size, d}, T(0.02)));
        int64_t nblocks = cfg.kind == "regular" ? cfg.thickness : cfg.vanilla_layers;
        int64_t rcols = cfg.kind == "regular" ? cfg.chunk : cfg.rel_buckets;
        for (int64_t k = 0; k < nblocks; ++k) {
            std::string p = "blk" + std::to_string(k) + ".";
            Block b;
            b.ln1_g = add_param(p + "ln1.g", Tensor<T>::full({d}, T(1)));
            b.ln1_b = add_param(p + "ln1.b", Tensor<T>::zeros({d}));
            b.wq = add_param(p + "attn.wq", gauss(rng, {d, d}, T(0.02)));
            b.bq = add_param(p + "attn.bq", Tensor<T>::zeros({d}));
            b.wk = add_param(p + "attn.wk", gauss(rng, {d, d}, T(0.02)));
            b.bk = add_param(p + "attn.bk", Tensor<T>::zeros({d}));
            b.wv = add_param(p + "attn.wv", gauss(rng, {d, d}, T(0.02)));
            b.bv = add_param(p + "attn.bv", Tensor<T>::zeros({d}));
            b.wo = add_param(p + "attn.wo", gauss(rng, {d, d}, T(0.02)));
            b.bo = add_param(p + "attn.bo", Tensor<T>::zeros({d}));
            b.rbias = add_param(p + "attn.r", Tensor<T>::zeros({cfg.n_heads, rcols}));
            b.ln2_g = add_param(p + "ln2.g", Tensor<T>::full({d}, T(1)));
            b.ln2_b = add_param(p + "ln2.b", Tensor<T>::zeros({d}));
            b.w1 = add_param(p + "ffn.w1", gauss(rng, {d, cfg.d_ffn}, T(0.02)));
            b.b1 = add_param(p + "ffn.b1", Tensor<T>::zeros({cfg.d_ffn}));
            b.w2 = add_param(p + "ffn.w2", gauss(rng, {cfg.d_ffn, d}, T(0.02)));
            b.b2 = add_param(p + "ffn.b2", Tensor<T>::zeros({d}));
            blocks.push_back(b);
        }
        ln_f_g = add_param("ln_f.g", Tensor<T>::full({d}, T(1)));
        ln_f_b = add_param("ln_f.b", Tensor<T>::zeros({d}));
        head = add_param("head.w", gauss(rng, {d, cfg.vocab_size}, T(0.02)));
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        for (auto& p : store_) out.push_back(p.get());
        return out;
    }

    void zero_grad() {
        for (auto& p : store_) p->zero_grad();
    }

    Parameter<T>* find(const std::string& name) {
        for (auto& p : store_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    // Forward over a batch of same-length sequences. Returns logits at each
    // sequence's readout position (last real token), shape [B, vocab].
    Var<T> forward(Tape<T>& tape, const std::vector<std::vector<int64_t>>& batch,
                   ForwardHooks<T>* hooks = nullptr) {
        if (batch.empty()) throw std::invalid_argument("forward: empty batch");
        int64_t orig_len = static_cast<int64_t>(batch[0].size());
        for (const auto& seq : batch) {
            if (static_cast<int64_t>(seq.size()) != orig_len)
                throw std::invalid_argument("forward: batch sequences must share a length");
            for (int64_t tok : seq)
                if (tok < 0 || tok >= cfg.vocab_size)
                    throw std::invalid_argument("forward: token " + std::to_string(tok) +
                                                " out of vocab range");
        }
        return cfg.kind == "regular" ? forward_regular(tape, batch, orig_len, hooks)
                                     : forward_vanilla(tape, batch, orig_len, hooks);
    }

  private:
    Parameter<T>* add_param(std::string name, Tensor<T> v) {
        store_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(v)));
        return store_.back().get();
    }

    static Tensor<T> gauss(Rng& rng, std::vector<int64_t> shape, T std) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.data) v = static_cast<T>(rng.gaussian()) * std;
        return t;
    }

    Var<T> embed_tokens(Tape<T>& tape, const std::vector<int64_t>& flat, ForwardHooks<T>* hooks) {
        Var<T> x = embedding(tape.param(*embed), flat);
        if (hooks && hooks->want_embed_grad) {
            // interpose a leaf so dloss/d(embedded inputs) stays retrievable
            Var<T> tapped = tape.leaf(x.val(), true);
            hooks->embed_node = tapped.n;
            x = tapped;
        }
        return x;
    }

    Var<T> sublayer(Tape<T>& tape, Var<T> x, const Block& b, int64_t batch_n, int64_t seq,
                    int64_t level) {
        Var<T> h = layer_norm(x, tape.param(*b.ln1_g), tape.param(*b.ln1_b));
        Var<T> q = add_rowvec(matmul(h, tape.param(*b.wq)), tape.param(*b.bq));
        Var<T> k = add_rowvec(matmul(h, tape.param(*b.wk)), tape.param(*b.bk));
        Var<T> v = add_rowvec(matmul(h, tape.param(*b.wv)), tape.param(*b.bv));
        Var<T> att;
        if (cfg.kind == "regular")
            att = dilated_attention(q, k, v, tape.param(*b.rbias), batch_n, seq, cfg.n_heads,
                                    cfg.chunk, level);
        else
            att = vanilla_attention(q, k, v, tape.param(*b.rbias), batch_n, seq, cfg.n_heads);
        x = add(x, add_rowvec(matmul(att, tape.param(*b.wo)), tape.param(*b.bo)));
        Var<T> h2 = layer_norm(x, tape.param(*b.ln2_g), tape.param(*b.ln2_b));
        Var<T> f = relu(add_rowvec(matmul(h2, tape.param(*b.w1)), tape.param(*b.b1)));
        f = add_rowvec(matmul(f, tape.param(*b.w2)), tape.param(*b.b2));
        return add(x, f);
    }

    Var<T> forward_regular(Tape<T>& tape, const std::vector<std::vector<int64_t>>& batch,
                           int64_t orig_len, ForwardHooks<T>* hooks) {
        int64_t bsz = static_cast<int64_t>(batch.size());
        auto [first_padded, readout] = pad_input(batch[0], cfg.chunk, cfg.pad_symbol);
        int64_t seq = static_cast<int64_t>(first_padded.size());
        int64_t depth = adaptive_depth(seq, cfg.chunk);
        if (depth > cfg.max_groups)
            throw std::invalid_argument("forward: T=" + std::to_string(orig_len) + " needs " +
                                        std::to_string(depth) + " groups, maxGroups is " +
                                        std::to_string(cfg.max_groups));
        std::vector<int64_t> flat;
        flat.reserve(static_cast<size_t>(bsz * seq));
        for (const auto& s : batch) {
            auto [p, r] = pad_input(s, cfg.chunk, cfg.pad_symbol);
            flat.insert(flat.end(), p.begin(), p.end());
        }
        Var<T> x = embed_tokens(tape, flat, hooks);
        for (int64_t l = 0; l < depth; ++l) {
            for (int64_t k = 0; k < cfg.thickness; ++k)
                x = sublayer(tape, x, blocks[static_cast<size_t>(k)], bsz, seq, l);
            if (hooks && hooks->want_group_outputs) hooks->group_outputs.push_back(x.val());
        }
        x = layer_norm(x, tape.param(*ln_f_g), tape.param(*ln_f_b));
        if (hooks && hooks->readout_override >= 0) readout = hooks->readout_override;
        std::vector<int64_t> idx;
        for (int64_t b = 0; b < bsz; ++b) {
            int64_t r = hooks && !hooks->readout_rows.empty() ? hooks->readout_rows[static_cast<size_t>(b)]
                                                              : readout;
            idx.push_back(b * seq + r);
        }
        return matmul(gather_rows(x, idx), tape.param(*head));
    }

    Var<T> forward_vanilla(Tape<T>& tape, const std::vector<std::vector<int64_t>>& batch,
                           int64_t orig_len, ForwardHooks<T>* hooks) {
        int64_t bsz = static_cast<int64_t>(batch.size());
        int64_t seq = orig_len;
        std::vector<int64_t> flat;
        flat.reserve(static_cast<size_t>(bsz * seq));
        for (const auto& s : batch) flat.insert(flat.end(), s.begin(), s.end());
        Var<T> x = embed_tokens(tape, flat, hooks);
        for (auto& b : blocks) {
            x = sublayer(tape, x, b, bsz, seq, 0);
            if (hooks && hooks->want_group_outputs) hooks->group_outputs.push_back(x.val());
        }
        x = layer_norm(x, tape.param(*ln_f_g), tape.param(*ln_f_b));
        int64_t readout = seq - 1;
        if (hooks && hooks->readout_override >= 0) readout = hooks->readout_override;
        std::vector<int64_t> idx;
        for (int64_t b = 0; b < bsz; ++b) {
            int64_t r = hooks && !hooks->readout_rows.empty() ? hooks->readout_rows[static_cast<size_t>(b)]
                                                              : readout;
            idx.push_back(b * seq + r);
        }
        return matmul(gather_rows(x, idx), tape.param(*head));
    }
};

}  // namespace regulargpt
