#pragma once

#include <cmath>
#include <memory>

#include "regulargpt/autodiff.hpp"

namespace regulargpt {

// Sliding dilated attention for one depth group. q/k/v are [B*T, H*dh]
// packed head-major within the feature axis; rbias is the per-head [H, C]
// vector of learnable relative positional scalars. Query m attends to keys
// at n = m - i*C^level for i in [C], n >= 0, with additive bias rbias[h][i].
// Equivalent to a dense masked softmax under the group's bias matrix; the
// sparse form is what makes long-length evaluation affordable.
template <typename T>
Var<T> dilated_attention(Var<T> q, Var<T> k, Var<T> v, Var<T> rbias, int64_t batch, int64_t seq,
                         int64_t heads, int64_t chunk, int64_t level) {
    check_same_shape("dilated_attention", q.shape(), k.shape());
    check_same_shape("dilated_attention", q.shape(), v.shape());
    int64_t rows = q.val().rows(), dm = q.val().cols();
    if (rows != batch * seq || dm % heads != 0)
        throw std::invalid_argument("dilated_attention: bad q shape " + q.val().shape_str());
    if (rbias.val().rows() != heads || rbias.val().cols() != chunk)
        throw std::invalid_argument("dilated_attention: rbias shape " + rbias.val().shape_str() +
                                    " wants [" + std::to_string(heads) + "," + std::to_string(chunk) + "]");
    int64_t dh = dm / heads;
    int64_t dil = 1;
    for (int64_t i = 0; i < level; ++i) dil *= chunk;
    T rscale = T(1) / std::sqrt(T(dh));

    bool rec = tape_of(q)->recording();
    Tensor<T> out = Tensor<T>::zeros({rows, dm});
    // softmax weights saved for the reverse pass: [rows, H*chunk]
    auto probs = std::make_shared<Tensor<T>>();
    if (rec) *probs = Tensor<T>::zeros({rows, heads * chunk});

    std::vector<T> sc(static_cast<size_t>(chunk));
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t m = 0; m < seq; ++m) {
            int64_t qm = b * seq + m;
            int64_t nvalid = std::min(chunk, m / dil + 1);
            for (int64_t h = 0; h < heads; ++h) {
                const T* qp = q.val().data.data() + qm * dm + h * dh;
                T mx = -std::numeric_limits<T>::infinity();
                for (int64_t i = 0; i < nvalid; ++i) {
                    int64_t n = m - i * dil;
                    const T* kp = k.val().data.data() + (b * seq + n) * dm + h * dh;
                    T s = 0;
                    for (int64_t c = 0; c < dh; ++c) s += qp[c] * kp[c];
                    s = s * rscale + rbias.val().data[h * chunk + i];
                    sc[static_cast<size_t>(i)] = s;
                    if (s > mx) mx = s;
                }
                T z = 0;
                for (int64_t i = 0; i < nvalid; ++i) {
                    T e = std::exp(sc[static_cast<size_t>(i)] - mx);
                    sc[static_cast<size_t>(i)] = e;
                    z += e;
                }
                T* op = out.data.data() + qm * dm + h * dh;
                for (int64_t i = 0; i < nvalid; ++i) {
                    T a = sc[static_cast<size_t>(i)] / z;
                    if (rec) probs->data[qm * heads * chunk + h * chunk + i] = a;
                    const T* vp = v.val().data.data() + (b * seq + m - i * dil) * dm + h * dh;
                    for (int64_t c = 0; c < dh; ++c) op[c] += a * vp[c];
                }
            }
        }
    }

    auto qn = q.n, kn = k.n, vn = v.n, rn = rbias.n;
    return tape_of(q)->make(std::move(out), {q, k, v, rbias},
                            [qn, kn, vn, rn, probs, batch, seq, heads, chunk, dil, dh, dm,
                             rscale](const Tensor<T>& g) {
        Tensor<T> gq = Tensor<T>::zeros(qn->value.shape);
        Tensor<T> gk = Tensor<T>::zeros(kn->value.shape);
        Tensor<T> gv = Tensor<T>::zeros(vn->value.shape);
        Tensor<T> gr = Tensor<T>::zeros(rn->value.shape);
        std::vector<T> da(static_cast<size_t>(chunk));
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t m = 0; m < seq; ++m) {
                int64_t qm = b * seq + m;
                int64_t nvalid = std::min(chunk, m / dil + 1);
                for (int64_t h = 0; h < heads; ++h) {
                    const T* gp = g.data.data() + qm * dm + h * dh;
                    const T* ap = probs->data.data() + qm * heads * chunk + h * chunk;
                    T dot = 0;
                    for (int64_t i = 0; i < nvalid; ++i) {
                        const T* vp = vn->value.data.data() + (b * seq + m - i * dil) * dm + h * dh;
                        T d = 0;
                        for (int64_t c = 0; c < dh; ++c) d += gp[c] * vp[c];
                        da[static_cast<size_t>(i)] = d;
                        dot += d * ap[i];
                    }
                    const T* qp = qn->value.data.data() + qm * dm + h * dh;
                    T* gqp = gq.data.data() + qm * dm + h * dh;
                    for (int64_t i = 0; i < nvalid; ++i) {
                        int64_t n = b * seq + m - i * dil;
                        T ds = (da[static_cast<size_t>(i)] - dot) * ap[i];
                        gr.data[h * chunk + i] += ds;
                        const T* kp = kn->value.data.data() + n * dm + h * dh;
                        T* gkp = gk.data.data() + n * dm + h * dh;
                        T* gvp = gv.data.data() + n * dm + h * dh;
                        for (int64_t c = 0; c < dh; ++c) {
                            gqp[c] += ds * rscale * kp[c];
                            gkp[c] += ds * rscale * qp[c];
                            gvp[c] += ap[i] * gp[c];
                        }
                    }
                }
            }
        }
        qn->accum(gq);
        kn->accum(gk);
        vn->accum(gv);
        rn->accum(gr);
    });
}

inline int64_t relpos_bucket(int64_t dist, int64_t buckets) {
    return dist < buckets ? dist : buckets - 1;
}

// Dense causal attention with a learnable distance-bucketed bias, used by
// the vanilla baseline. rbias is [H, buckets]; distances >= buckets-1 share
// the last bucket.
template <typename T>
Var<T> vanilla_attention(Var<T> q, Var<T> k, Var<T> v, Var<T> rbias, int64_t batch, int64_t seq,
                         int64_t heads) {
    check_same_shape("vanilla_attention", q.shape(), k.shape());
    check_same_shape("vanilla_attention", q.shape(), v.shape());
    int64_t rows = q.val().rows(), dm = q.val().cols();
    if (rows != batch * seq || dm % heads != 0)
        throw std::invalid_argument("vanilla_attention: bad q shape " + q.val().shape_str());
    int64_t buckets = rbias.val().cols();
    if (rbias.val().rows() != heads)
        throw std::invalid_argument("vanilla_attention: rbias shape " + rbias.val().shape_str());
    int64_t dh = dm / heads;
    T rscale = T(1) / std::sqrt(T(dh));

    bool rec = tape_of(q)->recording();
    Tensor<T> out = Tensor<T>::zeros({rows, dm});
    auto probs = std::make_shared<Tensor<T>>();
    if (rec) *probs = Tensor<T>::zeros({batch * heads * seq, seq});

    std::vector<T> sc(static_cast<size_t>(seq));
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t h = 0; h < heads; ++h) {
            const T* rb = rbias.val().data.data() + h * buckets;
            for (int64_t m = 0; m < seq; ++m) {
                const T* qp = q.val().data.data() + (b * seq + m) * dm + h * dh;
                T mx = -std::numeric_limits<T>::infinity();
                for (int64_t n = 0; n <= m; ++n) {
                    const T* kp = k.val().data.data() + (b * seq + n) * dm + h * dh;
                    T s = 0;
                    for (int64_t c = 0; c < dh; ++c) s += qp[c] * kp[c];
                    s = s * rscale + rb[relpos_bucket(m - n, buckets)];
                    sc[static_cast<size_t>(n)] = s;
                    if (s > mx) mx = s;
                }
                T z = 0;
                for (int64_t n = 0; n <= m; ++n) {
                    T e = std::exp(sc[static_cast<size_t>(n)] - mx);
                    sc[static_cast<size_t>(n)] = e;
                    z += e;
                }
                T* op = out.data.data() + (b * seq + m) * dm + h * dh;
                for (int64_t n = 0; n <= m; ++n) {
                    T a = sc[static_cast<size_t>(n)] / z;
                    if (rec) probs->data[((b * heads + h) * seq + m) * seq + n] = a;
                    const T* vp = v.val().data.data() + (b * seq + n) * dm + h * dh;
                    for (int64_t c = 0; c < dh; ++c) op[c] += a * vp[c];
                }
            }
        }
    }

    auto qn = q.n, kn = k.n, vn = v.n, rn = rbias.n;
    return tape_of(q)->make(std::move(out), {q, k, v, rbias},
                            [qn, kn, vn, rn, probs, batch, seq, heads, buckets, dh,
                             dm, rscale](const Tensor<T>& g) {
        Tensor<T> gq = Tensor<T>::zeros(qn->value.shape);
        Tensor<T> gk = Tensor<T>::zeros(kn->value.shape);
        Tensor<T> gv = Tensor<T>::zeros(vn->value.shape);
        Tensor<T> gr = Tensor<T>::zeros(rn->value.shape);
        int64_t T_ = seq;
        int64_t B_ = batch;
        std::vector<T> da(static_cast<size_t>(T_));
        for (int64_t b = 0; b < B_; ++b) {
            for (int64_t h = 0; h < heads; ++h) {
                T* grb = gr.data.data() + h * buckets;
                for (int64_t m = 0; m < T_; ++m) {
                    const T* gp = g.data.data() + (b * T_ + m) * dm + h * dh;
                    const T* ap = probs->data.data() + ((b * heads + h) * T_ + m) * T_;
                    T dot = 0;
                    for (int64_t n = 0; n <= m; ++n) {
                        const T* vp = vn->value.data.data() + (b * T_ + n) * dm + h * dh;
                        T d = 0;
                        for (int64_t c = 0; c < dh; ++c) d += gp[c] * vp[c];
                        da[static_cast<size_t>(n)] = d;
                        dot += d * ap[n];
                    }
                    const T* qp = qn->value.data.data() + (b * T_ + m) * dm + h * dh;
                    T* gqp = gq.data.data() + (b * T_ + m) * dm + h * dh;
                    for (int64_t n = 0; n <= m; ++n) {
                        T ds = (da[static_cast<size_t>(n)] - dot) * ap[n];
                        grb[relpos_bucket(m - n, buckets)] += ds;
                        const T* kp = kn->value.data.data() + (b * T_ + n) * dm + h * dh;
                        T* gkp = gk.data.data() + (b * T_ + n) * dm + h * dh;
                        T* gvp = gv.data.data() + (b * T_ + n) * dm + h * dh;
                        for (int64_t c = 0; c < dh; ++c) {
                            gqp[c] += ds * rscale * kp[c];
                            gkp[c] += ds * rscale * qp[c];
                            gvp[c] += ap[n] * gp[c];
                        }
                    }
                }
            }
        }
        qn->accum(gq);
        kn->accum(gk);
        vn->accum(gv);
        rn->accum(gr);
    });
}

}  // namespace regulargpt
