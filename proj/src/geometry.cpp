#include "clcsca/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace clcsca {

namespace {

double dist2(const double* a, const double* b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

bool lex_less(const double* a, const double* b) {
    if (a[0] != b[0]) return a[0] < b[0];
    if (a[1] != b[1]) return a[1] < b[1];
    return a[2] < b[2];
}

// Canonical neighbor order: squared distance, then coords, then index.
bool canon_less(double d2a, const double* pa, std::size_t ia, double d2b, const double* pb,
                std::size_t ib) {
    if (d2a != d2b) return d2a < d2b;
    if (pa[0] != pb[0]) return pa[0] < pb[0];
    if (pa[1] != pb[1]) return pa[1] < pb[1];
    if (pa[2] != pb[2]) return pa[2] < pb[2];
    return ia < ib;
}

std::vector<std::size_t> fps_greedy(const PointCloud& pc, std::size_t m, std::size_t seed) {
    const std::size_t n = pc.n;
    std::vector<std::size_t> picks;
    picks.reserve(m);
    picks.push_back(seed);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t step = 1; step < m; ++step) {
        const double* last = pc.pt(picks.back());
        for (std::size_t i = 0; i < n; ++i) min_d2[i] = std::min(min_d2[i], dist2(pc.pt(i), last));
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (min_d2[i] == 0.0) continue;  // already chosen or a duplicate of one
            if (best == n || min_d2[i] > min_d2[best] ||
                (min_d2[i] == min_d2[best] && canon_less(0, pc.pt(i), i, 0, pc.pt(best), best))) {
                best = i;
            }
        }
        if (best == n) {
            // all remaining points duplicate chosen ones; fall back to index order
            std::vector<bool> taken(n, false);
            for (std::size_t p : picks) taken[p] = true;
            for (std::size_t i = 0; i < n && picks.size() < m; ++i)
                if (!taken[i]) picks.push_back(i);
            return picks;
        }
        picks.push_back(best);
        min_d2[best] = 0.0;
    }
    return picks;
}

}  // namespace

void PointCloud::validate() const {
    if (n == 0) throw ContractError("PointCloud: empty cloud");
    if (coords.size() != 3 * n) {
        throw ContractError("PointCloud: expected " + std::to_string(3 * n) + " coordinates, got " +
                            std::to_string(coords.size()));
    }
    if (attrs.size() != a * n) {
        throw ContractError("PointCloud: expected " + std::to_string(a * n) + " attribute values, got " +
                            std::to_string(attrs.size()));
    }
    if (!point_labels.empty() && point_labels.size() != n) {
        throw ContractError("PointCloud: " + std::to_string(point_labels.size()) + " labels for " +
                            std::to_string(n) + " points");
    }
    for (double c : coords) {
        if (!std::isfinite(c)) throw ContractError("PointCloud: non-finite coordinate");
    }
    for (double v : attrs) {
        if (!std::isfinite(v)) throw ContractError("PointCloud: non-finite attribute");
    }
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& pc, std::size_t m) {
    pc.validate();
    if (m < 1 || m > pc.n) {
        throw ContractError("farthest_point_sample: m = " + std::to_string(m) + " outside [1, " +
                            std::to_string(pc.n) + "]");
    }
    std::size_t seed = 0;
    for (std::size_t i = 1; i < pc.n; ++i)
        if (lex_less(pc.pt(i), pc.pt(seed))) seed = i;
    return fps_greedy(pc, m, seed);
}

std::vector<std::size_t> farthest_point_sample_from(const PointCloud& pc, std::size_t m,
                                                    std::size_t seed_index) {
    pc.validate();
    if (m < 1 || m > pc.n) {
        throw ContractError("farthest_point_sample_from: m = " + std::to_string(m) + " outside [1, " +
                            std::to_string(pc.n) + "]");
    }
    if (seed_index >= pc.n) throw ContractError("farthest_point_sample_from: seed index out of range");
    return fps_greedy(pc, m, seed_index);
}

std::vector<NeighborGroup> ball_query(const PointCloud& pc,
                                      const std::vector<std::size_t>& centroid_indices, double r,
                                      std::size_t k) {
    pc.validate();
    if (!(r > 0.0)) throw ContractError("ball_query: radius must be positive");
    if (k < 1) throw ContractError("ball_query: k must be at least 1");
    const double r2 = r * r;
    std::vector<NeighborGroup> out;
    out.reserve(centroid_indices.size());
    std::vector<std::pair<double, std::size_t>> hits;  // (d2, index)
    for (std::size_t c : centroid_indices) {
        if (c >= pc.n) throw ContractError("ball_query: centroid index out of range");
        const double* cp = pc.pt(c);
        hits.clear();
        for (std::size_t i = 0; i < pc.n; ++i) {
            const double d2 = dist2(pc.pt(i), cp);
            if (d2 <= r2) hits.emplace_back(d2, i);
        }
        std::sort(hits.begin(), hits.end(), [&](const auto& x, const auto& y) {
            return canon_less(x.first, pc.pt(x.second), x.second, y.first, pc.pt(y.second), y.second);
        });
        if (hits.size() > k) hits.resize(k);
        NeighborGroup g;
        g.centroid_index = c;
        g.member_indices.reserve(k);
        for (const auto& h : hits) g.member_indices.push_back(h.second);
        while (g.member_indices.size() < k) g.member_indices.push_back(g.member_indices.front());
        g.member_offsets.resize(3 * k);
        for (std::size_t j = 0; j < k; ++j) {
            const double* mp = pc.pt(g.member_indices[j]);
            g.member_offsets[3 * j + 0] = mp[0] - cp[0];
            g.member_offsets[3 * j + 1] = mp[1] - cp[1];
            g.member_offsets[3 * j + 2] = mp[2] - cp[2];
        }
        out.push_back(std::move(g));
    }
    return out;
}

KnnResult knn(const double* query_pts, std::size_t q, const double* source_pts, std::size_t s,
              std::size_t k) {
    if (k < 1 || k > s) {
        throw ContractError("knn: k = " + std::to_string(k) + " outside [1, " + std::to_string(s) + "]");
    }
    KnnResult res;
    res.k = k;
    res.indices.resize(q * k);
    res.distances.resize(q * k);
    std::vector<std::pair<double, std::size_t>> cand(s);
    for (std::size_t qi = 0; qi < q; ++qi) {
        const double* qp = query_pts + 3 * qi;
        for (std::size_t i = 0; i < s; ++i) cand[i] = {dist2(source_pts + 3 * i, qp), i};
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), [&](const auto& x, const auto& y) {
            return canon_less(x.first, source_pts + 3 * x.second, x.second, y.first,
                              source_pts + 3 * y.second, y.second);
        });
        for (std::size_t j = 0; j < k; ++j) {
            res.indices[qi * k + j] = cand[j].second;
            res.distances[qi * k + j] = std::sqrt(cand[j].first);
        }
    }
    return res;
}

KnnResult knn(const std::vector<double>& query_pts, const std::vector<double>& source_pts,
              std::size_t k) {
    if (query_pts.size() % 3 != 0 || source_pts.size() % 3 != 0) {
        throw ContractError("knn: coordinate buffers must be multiples of 3");
    }
    return knn(query_pts.data(), query_pts.size() / 3, source_pts.data(), source_pts.size() / 3, k);
}

Tensor interpolate_knn(const Tensor& source_feats, const std::vector<double>& source_pts,
                       const std::vector<double>& query_pts, std::size_t k) {
    if (source_feats.rank() != 2) {
        throw ContractError("interpolate_knn: features must be rank-2, got " +
                            shape_str(source_feats.shape()));
    }
    if (source_pts.size() != 3 * source_feats.rows()) {
        throw ContractError("interpolate_knn: feature rows and source points disagree");
    }
    const KnnResult nn = knn(query_pts, source_pts, k);
    const std::size_t q = query_pts.size() / 3;
    constexpr double kEps = 1e-8;
    std::vector<double> w(q * k);
    for (std::size_t qi = 0; qi < q; ++qi) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            w[qi * k + j] = 1.0 / (nn.distances[qi * k + j] + kEps);
            sum += w[qi * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) w[qi * k + j] /= sum;
    }
    return weighted_gather_rows(source_feats, nn.indices, w, k);
}

}  // namespace clcsca
