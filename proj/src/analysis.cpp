#include "regulargpt/analysis.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>

namespace regulargpt {

namespace {

// dominant eigenvector of a symmetric matrix by power iteration
bool power_iteration(const std::vector<double>& m, int64_t d, std::vector<double>& vec,
                     double& eigenvalue) {
    vec.assign(static_cast<size_t>(d), 0.0);
    // deterministic start: decaying ramp avoids orthogonality accidents
    for (int64_t i = 0; i < d; ++i) vec[i] = 1.0 / double(i + 1);
    double norm = 0;
    for (double v : vec) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : vec) v /= norm;

    eigenvalue = 0.0;
    std::vector<double> next(static_cast<size_t>(d));
    for (int iter = 0; iter < 10000; ++iter) {
        for (int64_t i = 0; i < d; ++i) {
            double s = 0;
            for (int64_t j = 0; j < d; ++j) s += m[i * d + j] * vec[j];
            next[i] = s;
        }
        double nn = 0;
        for (double v : next) nn += v * v;
        nn = std::sqrt(nn);
        if (nn < 1e-300) return false;  // zero matrix
        double delta = 0;
        for (int64_t i = 0; i < d; ++i) {
            next[i] /= nn;
            delta = std::max(delta, std::abs(std::abs(next[i]) - std::abs(vec[i])));
        }
        vec = next;
        eigenvalue = nn;
        if (delta < 1e-9) break;
    }
    // sign convention: largest-magnitude coordinate positive
    int64_t arg = 0;
    for (int64_t i = 1; i < d; ++i)
        if (std::abs(vec[i]) > std::abs(vec[arg])) arg = i;
    if (vec[arg] < 0)
        for (double& v : vec) v = -v;
    return true;
}

}  // namespace

PcaResult pca_2d(const std::vector<std::vector<double>>& vectors) {
    if (vectors.size() < 3) throw std::invalid_argument("pca_2d: need at least 3 vectors");
    int64_t n = static_cast<int64_t>(vectors.size());
    int64_t d = static_cast<int64_t>(vectors[0].size());
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (const auto& v : vectors) {
        if (static_cast<int64_t>(v.size()) != d)
            throw std::invalid_argument("pca_2d: inconsistent vector dimensions");
        for (int64_t i = 0; i < d; ++i) mean[i] += v[i];
    }
    for (double& m : mean) m /= double(n);

    std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
    for (const auto& v : vectors)
        for (int64_t i = 0; i < d; ++i) {
            double vi = v[i] - mean[i];
            for (int64_t j = i; j < d; ++j) cov[i * d + j] += vi * (v[j] - mean[j]);
        }
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < i; ++j) cov[i * d + j] = cov[j * d + i];
    for (double& c : cov) c /= double(n);

    PcaResult res;
    res.projections.assign(static_cast<size_t>(n), {0.0, 0.0});
    std::vector<double> pc1, pc2;
    if (!power_iteration(cov, d, pc1, res.eigenvalues[0]) || res.eigenvalues[0] < 1e-30) {
        res.degenerate = true;
        return res;
    }
    // deflate and repeat
    std::vector<double> cov2 = cov;
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) cov2[i * d + j] -= res.eigenvalues[0] * pc1[i] * pc1[j];
    bool ok2 = power_iteration(cov2, d, pc2, res.eigenvalues[1]);
    for (int64_t r = 0; r < n; ++r) {
        double p1 = 0, p2 = 0;
        for (int64_t i = 0; i < d; ++i) {
            double c = vectors[r][i] - mean[i];
            p1 += c * pc1[i];
            if (ok2) p2 += c * pc2[i];
        }
        res.projections[static_cast<size_t>(r)] = {p1, p2};
    }
    return res;
}

KmeansResult kmeans_2d(const std::vector<std::array<double, 2>>& points, int64_t k,
                       int64_t restarts, uint64_t seed) {
    int64_t n = static_cast<int64_t>(points.size());
    if (k < 1 || k > n)
        throw std::invalid_argument("kmeans_2d: k=" + std::to_string(k) + " with n=" + std::to_string(n));
    Rng rng = Rng(seed).fork(5);
    KmeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int64_t r = 0; r < restarts; ++r) {
        std::vector<std::array<double, 2>> centers;
        for (int64_t c = 0; c < k; ++c) centers.push_back(points[rng.below(static_cast<uint64_t>(n))]);
        std::vector<int64_t> assign(static_cast<size_t>(n), 0);
        for (int iter = 0; iter < 100; ++iter) {
            bool changed = false;
            for (int64_t i = 0; i < n; ++i) {
                int64_t arg = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (int64_t c = 0; c < k; ++c) {
                    double dx = points[i][0] - centers[c][0], dy = points[i][1] - centers[c][1];
                    double dist = dx * dx + dy * dy;
                    if (dist < bd) {
                        bd = dist;
                        arg = c;
                    }
                }
                if (assign[i] != arg) {
                    assign[i] = arg;
                    changed = true;
                }
            }
            std::vector<std::array<double, 2>> sums(static_cast<size_t>(k), {0.0, 0.0});
            std::vector<int64_t> counts(static_cast<size_t>(k), 0);
            for (int64_t i = 0; i < n; ++i) {
                sums[assign[i]][0] += points[i][0];
                sums[assign[i]][1] += points[i][1];
                ++counts[assign[i]];
            }
            for (int64_t c = 0; c < k; ++c)
                if (counts[c] > 0)
                    centers[c] = {sums[c][0] / counts[c], sums[c][1] / counts[c]};
            if (!changed && iter > 0) break;
        }
        double inertia = 0;
        for (int64_t i = 0; i < n; ++i) {
            double dx = points[i][0] - centers[assign[i]][0], dy = points[i][1] - centers[assign[i]][1];
            inertia += dx * dx + dy * dy;
        }
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.assignment = assign;
        }
    }
    return best;
}

double purity(const std::vector<int64_t>& assignment, const std::vector<int64_t>& labels, int64_t k) {
    if (assignment.size() != labels.size())
        throw std::invalid_argument("purity: assignment/label length mismatch");
    int64_t n = static_cast<int64_t>(assignment.size());
    int64_t majority_sum = 0;
    for (int64_t c = 0; c < k; ++c) {
        std::map<int64_t, int64_t> counts;
        for (int64_t i = 0; i < n; ++i)
            if (assignment[i] == c) ++counts[labels[i]];
        int64_t mx = 0;
        for (auto& [lab, cnt] : counts) mx = std::max(mx, cnt);
        majority_sum += mx;
    }
    return double(majority_sum) / double(n);
}

int64_t routing_coverage(int64_t chunk, int64_t seq_len) {
    if (chunk < 2 || seq_len < 1) throw std::invalid_argument("routing_coverage: need C >= 2, T >= 1");
    int64_t groups = adaptive_depth(seq_len, chunk);
    std::vector<char> reach(static_cast<size_t>(seq_len), 0);
    reach[static_cast<size_t>(seq_len - 1)] = 1;
    // the readout sees the top group's edges first on the way down
    int64_t dil = 1;
    for (int64_t l = 1; l < groups; ++l) dil *= chunk;
    for (int64_t l = groups - 1; l >= 0; --l, dil /= chunk) {
        std::vector<char> next = reach;
        for (int64_t m = 0; m < seq_len; ++m)
            if (reach[static_cast<size_t>(m)])
                for (int64_t i = 1; i < chunk && m - i * dil >= 0; ++i)
                    next[static_cast<size_t>(m - i * dil)] = 1;
        reach = next;
    }
    int64_t count = 0;
    for (char c : reach) count += c;
    return count;
}

int64_t attention_cost(int64_t chunk, int64_t thickness, int64_t seq_len, int64_t groups) {
    int64_t total = 0;
    int64_t dil = 1;
    for (int64_t l = 0; l < groups; ++l) {
        for (int64_t m = 0; m < seq_len; ++m) total += std::min(chunk, m / dil + 1);
        dil *= chunk;
    }
    return total * thickness;
}

int64_t vanilla_cost(int64_t seq_len, int64_t layers) {
    return layers * seq_len * (seq_len + 1) / 2;
}

}  // namespace regulargpt
