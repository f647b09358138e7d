#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "regulargpt/tensor.hpp"

namespace regulargpt {

// Named learnable array with its accumulated gradient.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor<T>::zeros(value.shape);
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

template <typename T>
class Tape;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily during backward
    bool has_grad = false;
    bool requires_grad = false;
    Tape<T>* tape = nullptr;
    // Consumes this node's grad and accumulates into the parents it captured.
    std::function<void(const Tensor<T>&)> backprop;

    void accum(const Tensor<T>& g) {
        if (!requires_grad) return;
        if (!has_grad) {
            grad = Tensor<T>::zeros(value.shape);
            has_grad = true;
        }
        for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
    }
};

template <typename T>
struct Var {
    std::shared_ptr<Node<T>> n;
    const Tensor<T>& val() const { return n->value; }
    const std::vector<int64_t>& shape() const { return n->value.shape; }
};

// Execution-order trace of primitive applications (define-by-run). The
// reverse pass walks the recorded order backwards, visiting each node once.
template <typename T>
class Tape {
  public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Var<T> leaf(Tensor<T> v, bool requires_grad = false) {
        auto node = std::make_shared<Node<T>>();
        node->value = std::move(v);
        node->tape = this;
        node->requires_grad = recording_ && requires_grad;
        if (node->requires_grad) order_.push_back(node);
        return {node};
    }

    // Leaf tied to a Parameter; backward adds the leaf's gradient into it.
    // A parameter wrapped at N reuse sites receives the sum of N gradients.
    Var<T> param(Parameter<T>& p) {
        Var<T> v = leaf(p.value, true);
        if (v.n->requires_grad) {
            Parameter<T>* pp = &p;
            v.n->backprop = [pp](const Tensor<T>& g) {
                for (size_t i = 0; i < g.data.size(); ++i) pp->grad.data[i] += g.data[i];
            };
        }
        return v;
    }

    Var<T> make(Tensor<T> v, std::initializer_list<Var<T>> parents,
                std::function<void(const Tensor<T>&)> backprop) {
        auto node = std::make_shared<Node<T>>();
        node->value = std::move(v);
        node->tape = this;
        if (recording_) {
            for (const auto& p : parents)
                if (p.n->requires_grad) node->requires_grad = true;
            if (node->requires_grad) {
                node->backprop = std::move(backprop);
                order_.push_back(node);
            }
        }
        return {node};
    }

    void backward(const Var<T>& loss) {
        if (!recording_) throw std::runtime_error("backward: no active trace (tape is in no-grad mode)");
        if (loss.val().numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
        if (loss.n->tape != this) throw std::runtime_error("backward: loss was not produced under this trace");
        if (!loss.n->requires_grad)
            throw std::runtime_error("backward: loss does not depend on any parameter");
        loss.n->grad = Tensor<T>::full(loss.val().shape, T(1));
        loss.n->has_grad = true;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            Node<T>& node = **it;
            if (node.has_grad && node.backprop) node.backprop(node.grad);
        }
    }

    size_t size() const { return order_.size(); }
    void clear() { order_.clear(); }

  private:
    bool recording_;
    std::vector<std::shared_ptr<Node<T>>> order_;
};

// ---------------------------------------------------------------------------
// raw kernels
// ---------------------------------------------------------------------------

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            T av = ai[p];
            if (av == T(0)) continue;
            const T* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            T acc = 0;
            for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const T* ap = a + p * m;
        const T* bp = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            T av = ap[i];
            if (av == T(0)) continue;
            T* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

template <typename T>
Tape<T>* tape_of(const Var<T>& a) {
    return a.n->tape;
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    check_same_shape("add", a.shape(), b.shape());
    Tensor<T> out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[i];
    auto an = a.n, bn = b.n;
    return tape_of(a)->make(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        an->accum(g);
        bn->accum(g);
    });
}

// x[N,D] + row vector v[D], broadcast over rows
template <typename T>
Var<T> add_rowvec(Var<T> x, Var<T> v) {
    int64_t n = x.val().rows(), d = x.val().cols();
    if (v.val().numel() != d)
        throw std::invalid_argument("add_rowvec: shape mismatch " + x.val().shape_str() + " vs " +
                                    v.val().shape_str());
    Tensor<T> out = x.val();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out.data[i * d + j] += v.val().data[j];
    auto xn = x.n, vn = v.n;
    return tape_of(x)->make(std::move(out), {x, v}, [xn, vn, n, d](const Tensor<T>& g) {
        xn->accum(g);
        if (vn->requires_grad) {
            Tensor<T> gv = Tensor<T>::zeros(vn->value.shape);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) gv.data[j] += g.data[i * d + j];
            vn->accum(gv);
        }
    });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v *= s;
    auto an = a.n;
    return tape_of(a)->make(std::move(out), {a}, [an, s](const Tensor<T>& g) {
        Tensor<T> ga = g;
        for (auto& v : ga.data) v *= s;
        an->accum(ga);
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    check_same_shape("mul", a.shape(), b.shape());
    Tensor<T> out = a.val();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[i];
    auto an = a.n, bn = b.n;
    return tape_of(a)->make(std::move(out), {a, b}, [an, bn](const Tensor<T>& g) {
        if (an->requires_grad) {
            Tensor<T> ga = g;
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= bn->value.data[i];
            an->accum(ga);
        }
        if (bn->requires_grad) {
            Tensor<T> gb = g;
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] *= an->value.data[i];
            bn->accum(gb);
        }
    });
}

template <typename T>
Var<T> relu(Var<T> a) {
    Tensor<T> out = a.val();
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    auto an = a.n;
    return tape_of(a)->make(std::move(out), {a}, [an](const Tensor<T>& g) {
        Tensor<T> ga = g;
        for (size_t i = 0; i < ga.data.size(); ++i)
            if (an->value.data[i] <= T(0)) ga.data[i] = T(0);
        an->accum(ga);
    });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    if (a.val().rank() != 2 || b.val().rank() != 2 || a.val().cols() != b.val().rows())
        throw std::invalid_argument("matmul: shape mismatch " + a.val().shape_str() + " vs " +
                                    b.val().shape_str());
    int64_t m = a.val().rows(), k = a.val().cols(), n = b.val().cols();
    Tensor<T> out({m, n});
    gemm_nn(a.val().data.data(), b.val().data.data(), out.data.data(), m, k, n);
    auto an = a.n, bn = b.n;
    return tape_of(a)->make(std::move(out), {a, b}, [an, bn, m, k, n](const Tensor<T>& g) {
        if (an->requires_grad) {
            Tensor<T> ga({m, k});
            gemm_nt(g.data.data(), bn->value.data.data(), ga.data.data(), m, n, k);
            an->accum(ga);
        }
        if (bn->requires_grad) {
            Tensor<T> gb({k, n});
            gemm_tn(an->value.data.data(), g.data.data(), gb.data.data(), k, m, n);
            bn->accum(gb);
        }
    });
}

// Row-wise layer normalization over the last axis with affine gamma/beta.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    int64_t n = x.val().rows(), d = x.val().cols();
    if (gamma.val().numel() != d || beta.val().numel() != d)
        throw std::invalid_argument("layer_norm: affine shape mismatch vs " + x.val().shape_str());
    Tensor<T> out({n, d});
    auto xhat = std::make_shared<Tensor<T>>(std::vector<int64_t>{n, d});
    auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const T* xi = x.val().data.data() + i * d;
        T mean = 0;
        for (int64_t j = 0; j < d; ++j) mean += xi[j];
        mean /= T(d);
        T var = 0;
        for (int64_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= T(d);
        T rs = T(1) / std::sqrt(var + eps);
        (*rstd)[static_cast<size_t>(i)] = rs;
        for (int64_t j = 0; j < d; ++j) {
            T h = (xi[j] - mean) * rs;
            xhat->data[i * d + j] = h;
            out.data[i * d + j] = h * gamma.val().data[j] + beta.val().data[j];
        }
    }
    auto xn = x.n, gn = gamma.n, bn = beta.n;
    return tape_of(x)->make(std::move(out), {x, gamma, beta},
                            [xn, gn, bn, xhat, rstd, n, d](const Tensor<T>& g) {
        if (gn->requires_grad) {
            Tensor<T> gg = Tensor<T>::zeros(gn->value.shape);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) gg.data[j] += g.data[i * d + j] * xhat->data[i * d + j];
            gn->accum(gg);
        }
        if (bn->requires_grad) {
            Tensor<T> gb = Tensor<T>::zeros(bn->value.shape);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) gb.data[j] += g.data[i * d + j];
            bn->accum(gb);
        }
        if (xn->requires_grad) {
            Tensor<T> gx({n, d});
            for (int64_t i = 0; i < n; ++i) {
                T rs = (*rstd)[static_cast<size_t>(i)];
                T m1 = 0, m2 = 0;
                for (int64_t j = 0; j < d; ++j) {
                    T gy = g.data[i * d + j] * gn->value.data[j];
                    m1 += gy;
                    m2 += gy * xhat->data[i * d + j];
                }
                m1 /= T(d);
                m2 /= T(d);
                for (int64_t j = 0; j < d; ++j) {
                    T gy = g.data[i * d + j] * gn->value.data[j];
                    gx.data[i * d + j] = (gy - m1 - xhat->data[i * d + j] * m2) * rs;
                }
            }
            xn->accum(gx);
        }
    });
}

// table[V,D] rows selected by ids -> [N,D]
template <typename T>
Var<T> embedding(Var<T> table, const std::vector<int64_t>& ids) {
    int64_t v = table.val().rows(), d = table.val().cols();
    int64_t n = static_cast<int64_t>(ids.size());
    Tensor<T> out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        if (ids[i] < 0 || ids[i] >= v)
            throw std::invalid_argument("embedding: id " + std::to_string(ids[i]) +
                                        " out of range for table " + table.val().shape_str());
        std::copy_n(table.val().data.data() + ids[i] * d, d, out.data.data() + i * d);
    }
    auto tn = table.n;
    auto idcopy = std::make_shared<std::vector<int64_t>>(ids);
    return tape_of(table)->make(std::move(out), {table}, [tn, idcopy, d](const Tensor<T>& g) {
        if (!tn->requires_grad) return;
        Tensor<T> gt = Tensor<T>::zeros(tn->value.shape);
        for (size_t i = 0; i < idcopy->size(); ++i)
            for (int64_t j = 0; j < d; ++j) gt.data[(*idcopy)[i] * d + j] += g.data[i * d + j];
        tn->accum(gt);
    });
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// softmax over the last axis of (scores + bias). -inf bias entries come out
// as exact zeros; a row with no finite entry is a construction bug.
template <typename T>
Var<T> masked_softmax(Var<T> scores, Var<T> bias) {
    check_same_shape("masked_softmax", scores.shape(), bias.shape());
    int64_t n = scores.val().rows(), d = scores.val().cols();
    Tensor<T> out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int64_t j = 0; j < d; ++j) {
            T s = scores.val().data[i * d + j] + bias.val().data[i * d + j];
            if (s > mx) mx = s;
        }
        if (!(mx > -std::numeric_limits<T>::infinity()))
            throw std::invalid_argument("masked_softmax: row " + std::to_string(i) +
                                        " has all entries -inf (query with no visible key)");
        T z = 0;
        for (int64_t j = 0; j < d; ++j) {
            T s = scores.val().data[i * d + j] + bias.val().data[i * d + j];
            T e = std::isinf(s) ? T(0) : std::exp(s - mx);
            out.data[i * d + j] = e;
            z += e;
        }
        for (int64_t j = 0; j < d; ++j) out.data[i * d + j] /= z;
    }
    auto sn = scores.n, bn = bias.n;
    auto y = std::make_shared<Tensor<T>>(out);
    return tape_of(scores)->make(std::move(out), {scores, bias},
                                 [sn, bn, y, n, d](const Tensor<T>& g) {
        Tensor<T> gs({n, d});
        for (int64_t i = 0; i < n; ++i) {
            T dot = 0;
            for (int64_t j = 0; j < d; ++j) dot += g.data[i * d + j] * y->data[i * d + j];
            for (int64_t j = 0; j < d; ++j)
                gs.data[i * d + j] = (g.data[i * d + j] - dot) * y->data[i * d + j];
        }
        sn->accum(gs);
        bn->accum(gs);  // masked entries have y=0, hence zero gradient
    });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
    if (a.val().rows() != b.val().rows())
        throw std::invalid_argument("concat_cols: shape mismatch " + a.val().shape_str() + " vs " +
                                    b.val().shape_str());
    int64_t n = a.val().rows(), da = a.val().cols(), db = b.val().cols();
    Tensor<T> out({n, da + db});
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(a.val().data.data() + i * da, da, out.data.data() + i * (da + db));
        std::copy_n(b.val().data.data() + i * db, db, out.data.data() + i * (da + db) + da);
    }
    auto an = a.n, bn = b.n;
    return tape_of(a)->make(std::move(out), {a, b}, [an, bn, n, da, db](const Tensor<T>& g) {
        if (an->requires_grad) {
            Tensor<T> ga({n, da});
            for (int64_t i = 0; i < n; ++i)
                std::copy_n(g.data.data() + i * (da + db), da, ga.data.data() + i * da);
            an->accum(ga);
        }
        if (bn->requires_grad) {
            Tensor<T> gb({n, db});
            for (int64_t i = 0; i < n; ++i)
                std::copy_n(g.data.data() + i * (da + db) + da, db, gb.data.data() + i * db);
            bn->accum(gb);
        }
    });
}

// columns [c0, c1) of x
template <typename T>
Var<T> slice_cols(Var<T> x, int64_t c0, int64_t c1) {
    int64_t n = x.val().rows(), d = x.val().cols();
    if (c0 < 0 || c1 > d || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") for " + x.val().shape_str());
    int64_t w = c1 - c0;
    Tensor<T> out({n, w});
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(x.val().data.data() + i * d + c0, w, out.data.data() + i * w);
    auto xn = x.n;
    return tape_of(x)->make(std::move(out), {x}, [xn, n, d, c0, w](const Tensor<T>& g) {
        if (!xn->requires_grad) return;
        Tensor<T> gx = Tensor<T>::zeros(xn->value.shape);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < w; ++j) gx.data[i * d + c0 + j] = g.data[i * w + j];
        xn->accum(gx);
    });
}

template <typename T>
Var<T> gather_rows(Var<T> x, const std::vector<int64_t>& idx) {
    int64_t n = x.val().rows(), d = x.val().cols();
    int64_t m = static_cast<int64_t>(idx.size());
    Tensor<T> out({m, d});
    for (int64_t i = 0; i < m; ++i) {
        if (idx[i] < 0 || idx[i] >= n)
            throw std::invalid_argument("gather_rows: index " + std::to_string(idx[i]) +
                                        " out of range for " + x.val().shape_str());
        std::copy_n(x.val().data.data() + idx[i] * d, d, out.data.data() + i * d);
    }
    auto xn = x.n;
    auto idcopy = std::make_shared<std::vector<int64_t>>(idx);
    return tape_of(x)->make(std::move(out), {x}, [xn, idcopy, d](const Tensor<T>& g) {
        if (!xn->requires_grad) return;
        Tensor<T> gx = Tensor<T>::zeros(xn->value.shape);
        for (size_t i = 0; i < idcopy->size(); ++i)
            for (int64_t j = 0; j < d; ++j) gx.data[(*idcopy)[i] * d + j] += g.data[i * d + j];
        xn->accum(gx);
    });
}

// mean cross-entropy of each row's distribution against its integer target
template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<int64_t>& targets) {
    int64_t n = logits.val().rows(), v = logits.val().cols();
    if (static_cast<int64_t>(targets.size()) != n)
        throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                    " targets for " + logits.val().shape_str());
    auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{n, v});
    T loss = 0;
    for (int64_t i = 0; i < n; ++i) {
        const T* li = logits.val().data.data() + i * v;
        if (targets[i] < 0 || targets[i] >= v)
            throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[i]) +
                                        " out of range for " + logits.val().shape_str());
        T mx = li[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, li[j]);
        T z = 0;
        for (int64_t j = 0; j < v; ++j) z += std::exp(li[j] - mx);
        T logz = std::log(z) + mx;
        for (int64_t j = 0; j < v; ++j) probs->data[i * v + j] = std::exp(li[j] - logz);
        loss += logz - li[targets[i]];
    }
    loss /= T(n);
    auto ln = logits.n;
    auto tcopy = std::make_shared<std::vector<int64_t>>(targets);
    return tape_of(logits)->make(Tensor<T>::scalar(loss), {logits},
                                 [ln, probs, tcopy, n, v](const Tensor<T>& g) {
        if (!ln->requires_grad) return;
        T up = g.data[0] / T(n);
        Tensor<T> gl({n, v});
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < v; ++j) gl.data[i * v + j] = probs->data[i * v + j] * up;
            gl.data[i * v + (*tcopy)[i]] -= up;
        }
        ln->accum(gl);
    });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
    T s = 0;
    for (T v : x.val().data) s += v;
    auto xn = x.n;
    return tape_of(x)->make(Tensor<T>::scalar(s), {x}, [xn](const Tensor<T>& g) {
        Tensor<T> gx = Tensor<T>::full(xn->value.shape, g.data[0]);
        xn->accum(gx);
    });
}

}  // namespace regulargpt
