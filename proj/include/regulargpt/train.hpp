#pragma once

#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "regulargpt/adam.hpp"
#include "regulargpt/automata.hpp"
#include "regulargpt/model.hpp"

namespace regulargpt {

struct TrainConfig {
    std::string task = "parity";
    ModelConfig model;
    double lr = 3e-4;
    int64_t batch_size = 64;
    int64_t max_steps = 20000;
    uint64_t seed = 0;
    int64_t t_tr = 40;      // max training length
    double p1 = 0.5;        // parity Bernoulli
    double early_stop = 0.999;       // train-accuracy threshold
    int64_t early_stop_patience = 10;  // consecutive logs at or above threshold
    int64_t log_every = 100;
    int64_t eval_from = 41, eval_to = 500, eval_step = 9;
    int64_t eval_samples = 100;

    void validate() const {
        if (t_tr < 1) throw std::invalid_argument("TrainConfig: T_tr must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
        if (max_steps < 0) throw std::invalid_argument("TrainConfig: max steps must be >= 0");
    }
};

struct LogPoint {
    int64_t step;
    double loss;
    double train_acc;
};

struct TrainResult {
    std::vector<LogPoint> curve;
    int64_t steps_run = 0;
    bool diverged = false;
    int64_t diverged_step = -1;
    double final_train_acc = 0.0;
};

struct EvalReport {
    std::vector<std::pair<int64_t, double>> per_length;
    double average = 0.0;
    double p1 = 0.5;
};

inline int64_t argmax_row(const Tensor<float>& logits, int64_t row) {
    int64_t best = 0;
    float bv = logits.at(row, 0);
    for (int64_t j = 1; j < logits.cols(); ++j)
        if (logits.at(row, j) > bv) {
            bv = logits.at(row, j);
            best = j;
        }
    return best;
}

// Rescales all gradients so their global L2 norm is at most max_norm.
inline void clip_grad_norm(std::vector<Parameter<float>*>& params, float max_norm) {
    double sq = 0.0;
    for (auto* p : params)
        for (float g : p->grad.data) sq += static_cast<double>(g) * g;
    double norm = std::sqrt(sq);
    if (norm <= max_norm || !std::isfinite(norm)) return;
    float s = static_cast<float>(max_norm / norm);
    for (auto* p : params)
        for (float& g : p->grad.data) g *= s;
}

// Deterministic training loop: each step draws a per-sample length uniformly
// from [1, T_tr], groups the batch by length (the forward pass wants equal
// lengths), accumulates the length-weighted cross-entropy gradients across
// groups, clips the global gradient norm to 1, then takes one Adam step. Stops early once the running train
// accuracy holds >= early_stop for early_stop_patience consecutive logs.
inline TrainResult train(Model<float>& model, const TaskSpec& task, const TrainConfig& cfg,
                         const std::function<void(const LogPoint&)>& on_log = {},
                         const std::function<bool(const LogPoint&)>& should_stop = {}) {
    cfg.validate();
    Rng sample_rng = Rng(cfg.seed).fork(1);  // train stream, disjoint from eval's fork(2)
    Adam<float> opt(static_cast<float>(cfg.lr), 0.9f, 0.95f);
    auto params = model.params();
    TrainResult res;
    int64_t correct = 0, total = 0, hot_logs = 0;
    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (int64_t step = 1; step <= cfg.max_steps; ++step) {
        // Samples sharing a padded length run as one forward: padding neutrality
        // makes each row bit-identical to its standalone forward, and per-sample
        // readout rows pick out every sequence's own last real position.
        struct Group {
            std::vector<std::vector<int64_t>> batch;
            std::vector<int64_t> targets;
            std::vector<int64_t> readouts;
        };
        std::map<int64_t, Group> groups;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            int64_t len = 1 + static_cast<int64_t>(sample_rng.below(static_cast<uint64_t>(cfg.t_tr)));
            Sample s = sample(task, len, sample_rng, cfg.p1);
            int64_t plen = 1;
            while (plen < len) plen *= model.cfg.chunk;
            s.tokens.resize(static_cast<size_t>(plen), model.cfg.pad_symbol);
            Group& g = groups[plen];
            g.batch.push_back(std::move(s.tokens));
            g.targets.push_back(s.answer);
            g.readouts.push_back(len - 1);
        }
        model.zero_grad();
        double step_loss = 0.0;
        for (auto& [plen, g] : groups) {
            Tape<float> tape;
            ForwardHooks<float> hooks;
            hooks.readout_rows = g.readouts;
            Var<float> logits = model.forward(tape, g.batch, &hooks);
            float weight = static_cast<float>(g.batch.size()) / static_cast<float>(cfg.batch_size);
            Var<float> loss = scale(cross_entropy(logits, g.targets), weight);
            step_loss += static_cast<double>(loss.val().data[0]);
            if (!std::isfinite(step_loss)) break;
            for (size_t b = 0; b < g.targets.size(); ++b)
                if (argmax_row(logits.val(), static_cast<int64_t>(b)) == g.targets[b]) ++correct;
            tape.backward(loss);
        }
        if (!std::isfinite(step_loss)) {
            res.diverged = true;
            res.diverged_step = step;
            break;
        }
        total += cfg.batch_size;
        loss_sum += step_loss;
        ++loss_count;
        clip_grad_norm(params, 1.0f);
        opt.step(params);
        res.steps_run = step;

        if (step % cfg.log_every == 0) {
            LogPoint lp{step, loss_sum / loss_count, double(correct) / double(total)};
            res.curve.push_back(lp);
            if (on_log) on_log(lp);
            res.final_train_acc = lp.train_acc;
            hot_logs = lp.train_acc >= cfg.early_stop ? hot_logs + 1 : 0;
            correct = total = 0;
            loss_sum = 0.0;
            loss_count = 0;
            if (hot_logs >= cfg.early_stop_patience) break;
            if (should_stop && should_stop(lp)) break;
        }
    }
    return res;
}

// Fresh oracle-labeled samples per length; accuracy is exact argmax match.
// Uses an rng stream disjoint from training (fork id 2 vs 1).
inline EvalReport evaluate(Model<float>& model, const TaskSpec& task, int64_t from, int64_t to,
                           int64_t step, int64_t n_per_length, double p1, uint64_t seed,
                           int64_t max_batch = 100) {
    if (step < 1) throw std::invalid_argument("evaluate: step must be >= 1");
    if (from > to) throw std::invalid_argument("evaluate: empty length range " + std::to_string(from) +
                                               ".." + std::to_string(to));
    Rng rng = Rng(seed).fork(2);
    EvalReport rep;
    rep.p1 = p1;
    double acc_sum = 0.0;
    for (int64_t len = from; len <= to; len += step) {
        int64_t correct = 0, done = 0;
        while (done < n_per_length) {
            int64_t bsz = std::min(max_batch, n_per_length - done);
            std::vector<std::vector<int64_t>> batch;
            std::vector<int64_t> targets;
            for (int64_t b = 0; b < bsz; ++b) {
                Sample s = sample(task, len, rng, p1);
                batch.push_back(s.tokens);
                targets.push_back(s.answer);
            }
            Tape<float> tape(/*recording=*/false);
            Var<float> logits = model.forward(tape, batch);
            for (int64_t b = 0; b < bsz; ++b)
                if (argmax_row(logits.val(), b) == targets[b]) ++correct;
            done += bsz;
        }
        double acc = double(correct) / double(n_per_length);
        rep.per_length.emplace_back(len, acc);
        acc_sum += acc;
    }
    rep.average = acc_sum / double(rep.per_length.size());
    return rep;
}

}  // namespace regulargpt
