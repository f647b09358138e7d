#include "regulargpt/automata.hpp"

#include <algorithm>
#include <stdexcept>

namespace regulargpt {

int64_t Semiautomaton::step(int64_t q, int64_t sym) const {
    if (q < 0 || q >= num_states) throw std::invalid_argument("step: bad state " + std::to_string(q));
    if (sym < 0 || sym >= num_symbols)
        throw std::invalid_argument("step: unknown symbol index " + std::to_string(sym));
    return delta[q * num_symbols + sym];
}

TransitionMatrix TransitionMatrix::identity(int64_t n) {
    TransitionMatrix m;
    m.n = n;
    m.entries.assign(static_cast<size_t>(n * n), 0);
    for (int64_t i = 0; i < n; ++i) m.entries[i * n + i] = 1;
    return m;
}

bool TransitionMatrix::one_per_row() const {
    for (int64_t i = 0; i < n; ++i) {
        int count = 0;
        for (int64_t j = 0; j < n; ++j) count += entries[i * n + j];
        if (count != 1) return false;
    }
    return true;
}

std::string TransitionMatrix::key() const {
    std::string k;
    k.reserve(entries.size());
    for (uint8_t e : entries) k.push_back(e ? '1' : '0');
    return k;
}

int64_t transition_apply(const Semiautomaton& a, int64_t q, const std::vector<int64_t>& tokens) {
    int64_t state = q;
    for (int64_t sym : tokens) state = a.step(state, sym);
    return state;
}

TransitionMatrix transition_matrix(const Semiautomaton& a, const std::vector<int64_t>& tokens) {
    TransitionMatrix m;
    m.n = a.num_states;
    m.entries.assign(static_cast<size_t>(m.n * m.n), 0);
    for (int64_t q = 0; q < m.n; ++q) m.entries[q * m.n + transition_apply(a, q, tokens)] = 1;
    return m;
}

TransitionMatrix compose(const TransitionMatrix& m1, const TransitionMatrix& m2) {
    if (m1.n != m2.n)
        throw std::invalid_argument("compose: dimension mismatch " + std::to_string(m1.n) + " vs " +
                                    std::to_string(m2.n));
    TransitionMatrix out;
    out.n = m1.n;
    out.entries.assign(static_cast<size_t>(out.n * out.n), 0);
    for (int64_t i = 0; i < out.n; ++i)
        for (int64_t k = 0; k < out.n; ++k)
            if (m1.entries[i * out.n + k])
                for (int64_t j = 0; j < out.n; ++j)
                    if (m2.entries[k * out.n + j]) out.entries[i * out.n + j] = 1;
    return out;
}

namespace {

TaskSpec finish(TaskSpec t, std::vector<std::string> answers) {
    t.answer_base = static_cast<int64_t>(t.vocab.size());
    t.num_answers = static_cast<int64_t>(answers.size());
    for (auto& a : answers) t.vocab.push_back(a);
    t.vocab.push_back("<pad>");
    t.pad_symbol = static_cast<int64_t>(t.vocab.size()) - 1;
    t.automaton.num_symbols = t.num_task_symbols;
    return t;
}

TaskSpec make_parity() {
    TaskSpec t;
    t.name = "parity";
    t.vocab = {"0", "1"};
    t.num_task_symbols = 2;
    t.automaton.num_states = 2;
    t.automaton.delta = {0, 1,   // from even: '0' stays, '1' flips
                         1, 0};  // from odd
    t.initial_state = 0;
    t = finish(std::move(t), {"even", "odd"});
    t.answer_map = {t.answer_base + 0, t.answer_base + 1};
    return t;
}

// first symbol == last symbol. States: 0 start, then (first,current) pairs
// 1=aa 2=ab 3=ba 4=bb.
TaskSpec make_even_pairs() {
    TaskSpec t;
    t.name = "even_pairs";
    t.vocab = {"a", "b"};
    t.num_task_symbols = 2;
    t.automaton.num_states = 5;
    t.automaton.delta = {
        1, 4,  // start: first symbol fixes (first,current)
        1, 2,  // aa
        1, 2,  // ab
        3, 4,  // ba
        3, 4,  // bb
    };
    t.initial_state = 0;
    t = finish(std::move(t), {"accept", "reject"});
    int64_t acc = t.answer_base, rej = t.answer_base + 1;
    t.answer_map = {acc, acc, rej, rej, acc};
    return t;
}

// Left-to-right evaluation mod 5 over alternating digit/op strings.
// States: afterDigit(a) = a in 0..4; afterOp(a,op) = 5 + a*3 + op; sink 20.
// The initial state afterOp(0,'+') makes the first digit land on itself.
TaskSpec make_mod_arith() {
    TaskSpec t;
    t.name = "mod_arith";
    t.vocab = {"0", "1", "2", "3", "4", "+", "-", "*"};
    t.num_task_symbols = 8;
    const int64_t sink = 20;
    t.automaton.num_states = 21;
    t.automaton.delta.assign(21 * 8, sink);
    auto apply_op = [](int64_t a, int64_t op, int64_t d) {
        int64_t r = op == 0 ? a + d : op == 1 ? a - d : a * d;
        return ((r % 5) + 5) % 5;
    };
    for (int64_t a = 0; a < 5; ++a) {
        for (int64_t op = 0; op < 3; ++op) {
            t.automaton.delta[a * 8 + 5 + op] = 5 + a * 3 + op;  // afterDigit reads an operator
            for (int64_t d = 0; d < 5; ++d)
                t.automaton.delta[(5 + a * 3 + op) * 8 + d] = apply_op(a, op, d);
        }
    }
    t.initial_state = 5;  // afterOp(0, '+')
    t = finish(std::move(t), {"=0", "=1", "=2", "=3", "=4"});
    t.answer_map.assign(21, t.answer_base);
    for (int64_t a = 0; a < 5; ++a) t.answer_map[a] = t.answer_base + a;
    return t;
}

TaskSpec make_cycle_nav() {
    TaskSpec t;
    t.name = "cycle_nav";
    t.vocab = {"STAY", "+1", "-1"};
    t.num_task_symbols = 3;
    t.automaton.num_states = 5;
    t.automaton.delta.resize(5 * 3);
    for (int64_t q = 0; q < 5; ++q) {
        t.automaton.delta[q * 3 + 0] = q;
        t.automaton.delta[q * 3 + 1] = (q + 1) % 5;
        t.automaton.delta[q * 3 + 2] = (q + 4) % 5;
    }
    t.initial_state = 0;
    t = finish(std::move(t), {"pos0", "pos1", "pos2", "pos3", "pos4"});
    for (int64_t q = 0; q < 5; ++q) t.answer_map.push_back(t.answer_base + q);
    return t;
}

// Balanced parentheses with nesting depth <= n. States 0..n are the depth,
// n+1 is the sink; accept iff final depth is 0.
TaskSpec make_dyck(int64_t n) {
    TaskSpec t;
    t.name = "d" + std::to_string(n);
    t.vocab = {"(", ")"};
    t.num_task_symbols = 2;
    int64_t sink = n + 1;
    t.automaton.num_states = n + 2;
    t.automaton.delta.assign((n + 2) * 2, sink);
    for (int64_t d = 0; d <= n; ++d) {
        if (d < n) t.automaton.delta[d * 2 + 0] = d + 1;
        if (d > 0) t.automaton.delta[d * 2 + 1] = d - 1;
    }
    t.initial_state = 0;
    t = finish(std::move(t), {"accept", "reject"});
    t.answer_map.assign(n + 2, t.answer_base + 1);
    t.answer_map[0] = t.answer_base;
    return t;
}

TaskSpec make_tomita(int which) {
    TaskSpec t;
    t.name = "tomita" + std::to_string(which);
    t.vocab = {"0", "1"};
    t.num_task_symbols = 2;
    std::vector<int64_t> accepting;
    switch (which) {
        case 3: {
            // Reject iff an odd-length block of 1s is immediately followed by
            // a nonzero even-length block of 0s. States: 0 clean, 1 odd 1-run,
            // 2 even 1-run, 3 odd 0-count after odd 1-run, 4 even 0-count after
            // odd 1-run (rejecting if the string ends here), 5 sink.
            t.automaton.num_states = 6;
            t.automaton.delta = {
                0, 1,  // clean
                3, 2,  // odd 1-run
                0, 1,  // even 1-run
                4, 1,  // odd 0s after odd 1s: next 0 makes the block even
                3, 5,  // even 0s after odd 1s: a 1 seals the violation
                5, 5,  // sink
            };
            accepting = {0, 1, 2, 3};
            break;
        }
        case 4: {
            // reject iff "000" occurs; state = trailing-zero count, 3 = sink
            t.automaton.num_states = 4;
            t.automaton.delta = {
                1, 0,
                2, 0,
                3, 0,
                3, 3,
            };
            accepting = {0, 1, 2};
            break;
        }
        case 5: {
            // accept iff #0 and #1 are both even; state = (parity0, parity1)
            t.automaton.num_states = 4;
            t.automaton.delta.resize(8);
            for (int64_t p0 = 0; p0 < 2; ++p0)
                for (int64_t p1 = 0; p1 < 2; ++p1) {
                    int64_t q = p0 * 2 + p1;
                    t.automaton.delta[q * 2 + 0] = (1 - p0) * 2 + p1;
                    t.automaton.delta[q * 2 + 1] = p0 * 2 + (1 - p1);
                }
            accepting = {0};
            break;
        }
        case 6: {
            // accept iff (#0 - #1) mod 3 == 0
            t.automaton.num_states = 3;
            t.automaton.delta.resize(6);
            for (int64_t q = 0; q < 3; ++q) {
                t.automaton.delta[q * 2 + 0] = (q + 1) % 3;
                t.automaton.delta[q * 2 + 1] = (q + 2) % 3;
            }
            accepting = {0};
            break;
        }
        default:
            throw std::invalid_argument("make_task: no tomita" + std::to_string(which));
    }
    t.initial_state = 0;
    t = finish(std::move(t), {"accept", "reject"});
    t.answer_map.assign(t.automaton.num_states, t.answer_base + 1);
    for (int64_t q : accepting) t.answer_map[q] = t.answer_base;
    return t;
}

}  // namespace

std::vector<std::string> task_names() {
    return {"parity", "even_pairs", "mod_arith", "cycle_nav", "d2",      "d3",
            "d4",     "d12",        "tomita3",   "tomita4",   "tomita5", "tomita6"};
}

TaskSpec make_task(const std::string& name) {
    if (name == "parity") return make_parity();
    if (name == "even_pairs") return make_even_pairs();
    if (name == "mod_arith") return make_mod_arith();
    if (name == "cycle_nav") return make_cycle_nav();
    if (name == "d2") return make_dyck(2);
    if (name == "d3") return make_dyck(3);
    if (name == "d4") return make_dyck(4);
    if (name == "d12") return make_dyck(12);
    if (name == "tomita3") return make_tomita(3);
    if (name == "tomita4") return make_tomita(4);
    if (name == "tomita5") return make_tomita(5);
    if (name == "tomita6") return make_tomita(6);
    throw std::invalid_argument("make_task: unknown task '" + name + "'");
}

Sample sample(const TaskSpec& task, int64_t length, Rng& rng, double p1) {
    if (length < 1) throw std::invalid_argument("sample: length must be >= 1");
    Sample s;
    if (task.name == "parity") {
        for (int64_t i = 0; i < length; ++i) s.tokens.push_back(rng.bernoulli(p1) ? 1 : 0);
    } else if (task.name == "mod_arith") {
        int64_t t = length % 2 == 1 ? length : length - 1;  // nearest odd, never above
        for (int64_t i = 0; i < t; ++i)
            s.tokens.push_back(i % 2 == 0 ? static_cast<int64_t>(rng.below(5))
                                          : 5 + static_cast<int64_t>(rng.below(3)));
    } else if (task.name[0] == 'd' && task.name != "even_pairs") {
        // random walk over the automaton avoiding the sink, free endpoint
        int64_t sink = task.automaton.num_states - 1;
        int64_t q = task.initial_state;
        for (int64_t i = 0; i < length; ++i) {
            int64_t opts[2];
            int64_t nopts = 0;
            for (int64_t sym = 0; sym < 2; ++sym)
                if (task.automaton.step(q, sym) != sink) opts[nopts++] = sym;
            int64_t sym = opts[rng.below(static_cast<uint64_t>(nopts))];
            s.tokens.push_back(sym);
            q = task.automaton.step(q, sym);
        }
    } else {
        for (int64_t i = 0; i < length; ++i)
            s.tokens.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(task.num_task_symbols))));
    }
    s.length = static_cast<int64_t>(s.tokens.size());
    s.answer = oracle(task, s.tokens);
    return s;
}

int64_t oracle(const TaskSpec& task, const std::vector<int64_t>& tokens) {
    for (int64_t tok : tokens)
        if (tok < 0 || tok >= task.num_task_symbols)
            throw std::invalid_argument("oracle: invalid token index " + std::to_string(tok) +
                                        " for task " + task.name);
    return task.answer_map[transition_apply(task.automaton, task.initial_state, tokens)];
}

std::string format_sample(const TaskSpec& task, const Sample& s) {
    std::string line;
    for (size_t i = 0; i < s.tokens.size(); ++i) {
        if (i) line += ' ';
        line += task.vocab[s.tokens[i]];
    }
    line += '\t';
    line += task.vocab[s.answer];
    return line;
}

}  // namespace regulargpt
