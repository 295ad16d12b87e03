#include "clcsca/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace clcsca::oracle {

namespace {

double d2(const double* a, const double* b) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

using Key = std::tuple<double, double, double, double, std::size_t>;  // d2, x, y, z, index

Key key_of(double dist2, const double* p, std::size_t i) {
    return {dist2, p[0], p[1], p[2], i};
}

}  // namespace

std::vector<std::size_t> fps_brute(const PointCloud& pc, std::size_t m) {
    std::vector<std::size_t> chosen;
    std::vector<bool> taken(pc.n, false);
    // seed: lexicographically smallest point
    std::size_t seed = 0;
    for (std::size_t i = 1; i < pc.n; ++i) {
        if (std::make_tuple(pc.pt(i)[0], pc.pt(i)[1], pc.pt(i)[2]) <
            std::make_tuple(pc.pt(seed)[0], pc.pt(seed)[1], pc.pt(seed)[2])) {
            seed = i;
        }
    }
    chosen.push_back(seed);
    taken[seed] = true;
    while (chosen.size() < m) {
        bool found = false;
        std::size_t best = 0;
        double best_min = -1.0;
        Key best_key{};
        for (std::size_t i = 0; i < pc.n; ++i) {
            if (taken[i]) continue;
            double mind = std::numeric_limits<double>::infinity();
            for (std::size_t c : chosen) mind = std::min(mind, d2(pc.pt(i), pc.pt(c)));
            if (mind == 0.0) continue;  // duplicate of a chosen point
            const Key k = key_of(0.0, pc.pt(i), i);
            if (!found || mind > best_min || (mind == best_min && k < best_key)) {
                found = true;
                best = i;
                best_min = mind;
                best_key = k;
            }
        }
        if (!found) {
            for (std::size_t i = 0; i < pc.n && chosen.size() < m; ++i) {
                if (!taken[i]) {
                    chosen.push_back(i);
                    taken[i] = true;
                }
            }
            break;
        }
        chosen.push_back(best);
        taken[best] = true;
    }
    return chosen;
}

std::vector<NeighborGroup> ball_query_brute(const PointCloud& pc,
                                            const std::vector<std::size_t>& centroid_indices,
                                            double radius, std::size_t k) {
    std::vector<NeighborGroup> out;
    for (std::size_t c : centroid_indices) {
        const double* cp = pc.pt(c);
        std::vector<std::pair<Key, std::size_t>> inside;
        for (std::size_t i = 0; i < pc.n; ++i) {
            const double dist2 = d2(pc.pt(i), cp);
            if (dist2 <= radius * radius) inside.push_back({key_of(dist2, pc.pt(i), i), i});
        }
        std::sort(inside.begin(), inside.end());
        NeighborGroup g;
        g.centroid_index = c;
        for (std::size_t j = 0; j < std::min(k, inside.size()); ++j) {
            g.member_indices.push_back(inside[j].second);
        }
        while (g.member_indices.size() < k) g.member_indices.push_back(g.member_indices.front());
        for (std::size_t m : g.member_indices) {
            for (int dim = 0; dim < 3; ++dim) g.member_offsets.push_back(pc.pt(m)[dim] - cp[dim]);
        }
        out.push_back(std::move(g));
    }
    return out;
}

KnnResult knn_brute(const double* query_pts, std::size_t q, const double* source_pts,
                    std::size_t s, std::size_t k) {
    KnnResult res;
    res.k = k;
    for (std::size_t qi = 0; qi < q; ++qi) {
        std::vector<std::pair<Key, std::size_t>> all;
        for (std::size_t i = 0; i < s; ++i) {
            all.push_back({key_of(d2(source_pts + 3 * i, query_pts + 3 * qi), source_pts + 3 * i, i), i});
        }
        std::sort(all.begin(), all.end());
        for (std::size_t j = 0; j < k; ++j) {
            res.indices.push_back(all[j].second);
            res.distances.push_back(std::sqrt(std::get<0>(all[j].first)));
        }
    }
    return res;
}

std::vector<double> interpolate_brute(const Tensor& source_feats,
                                      const std::vector<double>& source_pts,
                                      const std::vector<double>& query_pts, std::size_t k) {
    const std::size_t q = query_pts.size() / 3;
    const std::size_t c = source_feats.cols();
    const KnnResult nn =
        knn_brute(query_pts.data(), q, source_pts.data(), source_pts.size() / 3, k);
    std::vector<double> out(q * c, 0.0);
    for (std::size_t qi = 0; qi < q; ++qi) {
        std::vector<double> w(k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            w[j] = 1.0 / (nn.distances[qi * k + j] + 1e-8);
            sum += w[j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t src = nn.indices[qi * k + j];
            for (std::size_t col = 0; col < c; ++col) {
                out[qi * c + col] += (w[j] / sum) * source_feats.values()[src * c + col];
            }
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& pred,
                                                       const std::vector<int>& gt,
                                                       std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < gt.size(); ++i) {
        m[static_cast<std::size_t>(gt[i])][static_cast<std::size_t>(pred[i])] += 1;
    }
    return m;
}

ClassificationMetrics classification_metrics_brute(const std::vector<int>& pred,
                                                   const std::vector<int>& gt,
                                                   std::size_t num_classes) {
    const auto m = confusion_matrix(pred, gt, num_classes);
    std::size_t diag = 0, total = 0;
    double recalls = 0.0;
    std::size_t with_support = 0;
    for (std::size_t r = 0; r < num_classes; ++r) {
        std::size_t row = 0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            row += m[r][c];
            total += m[r][c];
        }
        diag += m[r][r];
        if (row > 0) {
            recalls += static_cast<double>(m[r][r]) / static_cast<double>(row);
            with_support += 1;
        }
    }
    ClassificationMetrics out;
    out.oa = static_cast<double>(diag) / static_cast<double>(total);
    out.acc = with_support == 0 ? 0.0 : recalls / static_cast<double>(with_support);
    return out;
}

double shape_iou_brute(const std::vector<int>& pred, const std::vector<int>& gt,
                       const std::vector<int>& part_set) {
    double sum = 0.0;
    for (int part : part_set) {
        std::set<std::size_t> p, g;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == part) p.insert(i);
            if (gt[i] == part) g.insert(i);
        }
        std::set<std::size_t> inter, uni;
        std::set_intersection(p.begin(), p.end(), g.begin(), g.end(),
                              std::inserter(inter, inter.begin()));
        std::set_union(p.begin(), p.end(), g.begin(), g.end(), std::inserter(uni, uni.begin()));
        sum += uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    }
    return sum / static_cast<double>(part_set.size());
}

}  // namespace clcsca::oracle
