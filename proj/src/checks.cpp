#include "clcsca/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "clcsca/attention.hpp"
#include "clcsca/data.hpp"
#include "clcsca/geometry.hpp"
#include "clcsca/model.hpp"
#include "clcsca/oracles.hpp"
#include "clcsca/pyramid.hpp"
#include "clcsca/rng.hpp"
#include "clcsca/tensor.hpp"
#include "clcsca/train.hpp"

namespace clcsca {

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string format(const char* fmt, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), fmt, a, b);
    return buf;
}

Tensor rand_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor(shape, std::move(v));
}

// ---- gradient suite -------------------------------------------------------------

constexpr double kFdStep = 1e-5;
constexpr double kOpTol = 1e-4;       // per-op / per-block relative error bound
constexpr double kEndToEndTol = 1e-3;  // full forward + loss

// Runs `instances` randomized rounds of `one`, which appends one report per
// differentiable input it probed.
CheckResult run_fd(const std::string& name, std::size_t instances, std::uint64_t seed,
                   const std::function<void(Rng&, std::vector<FiniteDiffReport>&)>& one) {
    Timer timer;
    CheckResult res;
    res.name = name;
    res.passed = true;
    double worst = 0.0;
    double tol = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        Rng rng = Rng::stream(seed, {"check", name, std::to_string(i)});
        std::vector<FiniteDiffReport> reports;
        one(rng, reports);
        for (const FiniteDiffReport& r : reports) {
            worst = std::max(worst, r.max_rel_err);
            tol = std::max(tol, r.tol);
            res.passed = res.passed && r.passed;
        }
    }
    res.detail = std::to_string(instances) + " instances, " +
                 format("max rel err %.3g (tol %.2g)", worst, tol);
    res.seconds = timer.elapsed();
    return res;
}

using Fd = std::function<Tensor(const Tensor&)>;

void probe(std::vector<FiniteDiffReport>& out, const Fd& f, const Tensor& x,
           double tol = kOpTol) {
    out.push_back(finite_diff_check(f, x, kFdStep, tol));
}

AttentionParams rand_self(Rng& rng, std::size_t c) {
    AttentionParams p;
    p.wq = rand_tensor(rng, {c, c / 4});
    p.wk = rand_tensor(rng, {c, c / 4});
    p.wv = rand_tensor(rng, {c, c});
    return p;
}

AttentionParams rand_cross(Rng& rng, std::size_t c) {
    AttentionParams p;
    p.w1 = rand_tensor(rng, {c, c / 4});
    p.w2 = rand_tensor(rng, {c, c / 4});
    p.w3 = rand_tensor(rng, {c, c});
    return p;
}

// Small network exercising every block on a 64-point cloud.
NetworkConfig mini_config(const std::string& task) {
    NetworkConfig cfg;
    cfg.task = task;
    cfg.num_classes = task == "segmentation" ? 7 : 4;
    cfg.input_points = 64;
    // Radii must exceed the nearest-neighbor spacing of each path's subsample
    // (~4/sqrt(m) on a unit sphere), or every group degenerates to its centroid.
    cfg.paths[0].resolution = 16;
    cfg.paths[0].layers = {{1.1, 4, {3, 8}}, {1.5, 4, {16, 8}}, {1.9, 4, {16, 8}}};
    cfg.paths[1].resolution = 8;
    cfg.paths[1].layers = {{1.3, 4, {3, 8}}, {1.6, 4, {16, 8}}, {2.0, 4, {16, 8}}};
    cfg.paths[2].resolution = 4;
    cfg.paths[2].layers = {{1.7, 4, {3, 8}}, {1.9, 4, {16, 8}}, {2.1, 4, {16, 8}}};
    cfg.clca_channels = 8;
    cfg.csca_channels = 8;
    cfg.upsample_mlp = task == "segmentation" ? std::vector<std::size_t>{11, 8}
                                              : std::vector<std::size_t>{8, 8};
    cfg.head = {8};
    cfg.dropout = 0.0;
    return cfg;
}

CheckResult fd_end_to_end(const std::string& task, std::uint64_t seed) {
    Timer timer;
    CheckResult res;
    res.name = "grad/end-to-end-" + task;
    res.passed = true;
    const NetworkConfig cfg = mini_config(task);
    Rng rng = Rng::stream(seed, {"check", res.name});
    const bool seg = task == "segmentation";
    const PointCloud pc = seg ? gen_part_shape(PartShapeKind::mug, 64, rng)
                              : gen_shape(ShapeKind::sphere, 64, 0.02, rng);
    std::vector<int> targets;
    if (seg) {
        targets = pc.point_labels;
    } else {
        targets.push_back(static_cast<int>(rng.below(cfg.num_classes)));
    }
    // Probe at a generic point: product init zeroes every bias, which parks each
    // relu whose input row is exactly zero (a padded group repeats its centroid at
    // offset (0,0,0)) precisely on the kink, where one-sided and two-sided slopes
    // disagree. A small deterministic jitter moves all pre-activations off zero.
    ParamMap params;
    for (const auto& [name, value] : init_params(cfg, seed)) {
        Rng jitter = Rng::stream(seed, {"check", "jitter", name});
        std::vector<double> v = value.values();
        for (double& x : v) x += jitter.uniform(-0.1, 0.1);
        params.emplace(name, Tensor(value.shape(), std::move(v)));
    }
    double worst = 0.0;
    for (const auto& [name, value] : params) {
        auto f = [&](const Tensor& t) {
            ParamMap swapped;
            for (const auto& [k, v] : params) swapped.emplace(k, k == name ? t : v);
            const Tensor logits =
                seg ? segment_forward(pc, cfg, swapped) : classify_forward(pc, cfg, swapped);
            return cross_entropy(logits, targets, cfg);
        };
        const FiniteDiffReport r = finite_diff_check(f, value, kFdStep, kEndToEndTol);
        worst = std::max(worst, r.max_rel_err);
        res.passed = res.passed && r.passed;
    }
    res.detail = std::to_string(params.size()) + " parameter tensors, " +
                 format("max rel err %.3g (tol %.2g)", worst, kEndToEndTol);
    res.seconds = timer.elapsed();
    return res;
}

// ---- invariance suite -------------------------------------------------------------

std::vector<std::size_t> random_perm(Rng& rng, std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    return perm;
}

PointCloud permute_cloud(const PointCloud& pc, const std::vector<std::size_t>& perm) {
    PointCloud out;
    out.n = pc.n;
    out.a = pc.a;
    out.cloud_label = pc.cloud_label;
    out.coords.resize(3 * pc.n);
    out.attrs.resize(pc.a * pc.n);
    if (!pc.point_labels.empty()) out.point_labels.resize(pc.n);
    for (std::size_t i = 0; i < pc.n; ++i) {
        const std::size_t src = perm[i];
        for (std::size_t d = 0; d < 3; ++d) out.coords[3 * i + d] = pc.coords[3 * src + d];
        for (std::size_t d = 0; d < pc.a; ++d) out.attrs[pc.a * i + d] = pc.attrs[pc.a * src + d];
        if (!pc.point_labels.empty()) out.point_labels[i] = pc.point_labels[src];
    }
    return out;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
    std::vector<double> v(t.size());
    const std::size_t c = t.cols();
    for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) v[i * c + j] = t.values()[perm[i] * c + j];
    }
    return Tensor(t.shape(), std::move(v));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    }
    return worst;
}

CheckResult run_max_diff(const std::string& name, std::size_t instances, std::uint64_t seed,
                         double tol, const std::function<double(Rng&)>& one) {
    Timer timer;
    CheckResult res;
    res.name = name;
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        Rng rng = Rng::stream(seed, {"check", name, std::to_string(i)});
        worst = std::max(worst, one(rng));
    }
    res.passed = worst <= tol;
    res.detail = std::to_string(instances) + " instances, " +
                 format("max abs diff %.3g (tol %.2g)", worst, tol);
    res.seconds = timer.elapsed();
    return res;
}

// ---- oracle suite --------------------------------------------------------------------

PointCloud random_cloud(Rng& rng, std::size_t n) {
    PointCloud pc;
    pc.n = n;
    pc.coords.resize(3 * n);
    for (double& c : pc.coords) c = rng.uniform(-1.0, 1.0);
    // occasional exact duplicates exercise the tie-break rules
    for (std::size_t i = 1; i < n; ++i) {
        if (rng.uniform() < 0.1) {
            const std::size_t src = rng.below(i);
            for (std::size_t d = 0; d < 3; ++d) pc.coords[3 * i + d] = pc.coords[3 * src + d];
        }
    }
    return pc;
}

template <typename T>
bool same_vec(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

double vec_max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace

std::vector<CheckResult> check_gradients(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const std::size_t kInstances = 100;
    auto dims = [](Rng& rng) { return 1 + rng.below(4); };   // rows
    auto chans = [](Rng& rng) { return 1 + rng.below(8); };  // columns

    out.push_back(run_fd("grad/matmul", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t m = dims(rng), k = chans(rng), c = chans(rng);
        const Tensor a = rand_tensor(rng, {m, k}), b = rand_tensor(rng, {k, c});
        probe(reps, [&](const Tensor& t) { return matmul(t, b); }, a);
        probe(reps, [&](const Tensor& t) { return matmul(a, t); }, b);
    }));
    out.push_back(run_fd("grad/matmul-nt", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t m = dims(rng), k = chans(rng), c = dims(rng);
        const Tensor a = rand_tensor(rng, {m, k}), b = rand_tensor(rng, {c, k});
        probe(reps, [&](const Tensor& t) { return matmul_nt(t, b); }, a);
        probe(reps, [&](const Tensor& t) { return matmul_nt(a, t); }, b);
    }));
    out.push_back(run_fd("grad/linear", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t m = dims(rng), k = chans(rng), c = chans(rng);
        const Tensor x = rand_tensor(rng, {m, k}), w = rand_tensor(rng, {k, c}),
                     b = rand_tensor(rng, {c});
        probe(reps, [&](const Tensor& t) { return linear(t, w, b); }, x);
        probe(reps, [&](const Tensor& t) { return linear(x, t, b); }, w);
        probe(reps, [&](const Tensor& t) { return linear(x, w, t); }, b);
    }));
    out.push_back(run_fd("grad/softmax", kInstances, seed, [&](Rng& rng, auto& reps) {
        const Tensor x = rand_tensor(rng, {dims(rng), 1 + chans(rng)}, -3.0, 3.0);
        probe(reps, [](const Tensor& t) { return softmax_rows(t); }, x);
    }));
    out.push_back(run_fd("grad/relu", kInstances, seed, [&](Rng& rng, auto& reps) {
        const Tensor x = rand_tensor(rng, {dims(rng), chans(rng)});
        probe(reps, [](const Tensor& t) { return relu(t); }, x);
    }));
    out.push_back(run_fd("grad/add-mul-scale", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t m = dims(rng), c = chans(rng);
        const Tensor a = rand_tensor(rng, {m, c}), b = rand_tensor(rng, {m, c});
        const double s = rng.uniform(-2.0, 2.0);
        probe(reps, [&](const Tensor& t) { return add(t, b); }, a);
        probe(reps, [&](const Tensor& t) { return add(a, t); }, b);
        probe(reps, [&](const Tensor& t) { return mul(t, b); }, a);
        probe(reps, [&](const Tensor& t) { return mul(a, t); }, b);
        probe(reps, [&](const Tensor& t) { return scale(t, s); }, a);
    }));
    out.push_back(run_fd("grad/shape-ops", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t m = dims(rng), c = chans(rng);
        const Tensor a = rand_tensor(rng, {m, c}), b = rand_tensor(rng, {m, chans(rng)});
        probe(reps, [](const Tensor& t) { return transpose(t); }, a);
        probe(reps, [&](const Tensor& t) { return concat_cols(t, b); }, a);
        probe(reps, [&](const Tensor& t) { return concat_cols(a, t); }, b);
        probe(reps, [&](const Tensor& t) { return reshape(t, {t.size()}); }, a);
    }));
    out.push_back(run_fd("grad/reductions", kInstances, seed, [&](Rng& rng, auto& reps) {
        const Tensor x = rand_tensor(rng, {dims(rng), chans(rng)});
        probe(reps, [](const Tensor& t) { return max_over_rows(t); }, x);
        probe(reps, [](const Tensor& t) { return mean_over_rows(t); }, x);
        probe(reps, [](const Tensor& t) { return sum_all(t); }, x);
    }));
    out.push_back(run_fd("grad/gather", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t m = 2 + rng.below(3), c = chans(rng);
        const Tensor x = rand_tensor(rng, {m, c});
        std::vector<std::size_t> idx(1 + rng.below(6));
        for (std::size_t& i : idx) i = rng.below(m);
        probe(reps, [&](const Tensor& t) { return gather_rows(t, idx); }, x);
        const std::size_t k = 1 + rng.below(3), q = 1 + rng.below(3);
        std::vector<std::size_t> widx(q * k);
        for (std::size_t& i : widx) i = rng.below(m);
        std::vector<double> w(q * k);
        for (double& wi : w) wi = rng.uniform(0.1, 1.0);
        probe(reps, [&](const Tensor& t) { return weighted_gather_rows(t, widx, w, k); }, x);
    }));
    out.push_back(run_fd("grad/group-max", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t g = dims(rng), k = 1 + rng.below(4), c = chans(rng);
        const Tensor x = rand_tensor(rng, {g * k, c});
        probe(reps, [&](const Tensor& t) { return group_max_pool(t, k); }, x);
    }));
    out.push_back(run_fd("grad/cross-entropy", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t m = dims(rng), c = 2 + rng.below(7);
        const Tensor x = rand_tensor(rng, {m, c}, -3.0, 3.0);
        std::vector<int> targets(m);
        for (int& t : targets) t = static_cast<int>(rng.below(c));
        probe(reps, [&](const Tensor& t) { return cross_entropy_rows(t, targets, Reduction::mean); },
              x);
        probe(reps, [&](const Tensor& t) { return cross_entropy_rows(t, targets, Reduction::sum); },
              x);
    }));

    // attention blocks
    const std::size_t c = 8;
    out.push_back(run_fd("grad/self-attention", kInstances, seed, [&](Rng& rng, auto& reps) {
        const Tensor f = rand_tensor(rng, {1 + rng.below(4), c});
        const AttentionParams p = rand_self(rng, c);
        probe(reps, [&](const Tensor& t) { return self_attention(t, p); }, f);
        auto with = [&](const Tensor& q, const Tensor& k, const Tensor& v) {
            AttentionParams pp;
            pp.wq = q;
            pp.wk = k;
            pp.wv = v;
            return self_attention(f, pp);
        };
        probe(reps, [&](const Tensor& t) { return with(t, p.wk, p.wv); }, p.wq);
        probe(reps, [&](const Tensor& t) { return with(p.wq, t, p.wv); }, p.wk);
        probe(reps, [&](const Tensor& t) { return with(p.wq, p.wk, t); }, p.wv);
    }));
    out.push_back(run_fd("grad/cross-attention", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t rows = 1 + rng.below(4);
        const bool scaled = rng.below(2) == 0;
        const Tensor a = rand_tensor(rng, {rows, c});
        const Tensor b = rand_tensor(rng, {rows, c});
        const Tensor g = rand_tensor(rng, {rows, c});
        const AttentionParams p = rand_cross(rng, c);
        probe(reps, [&](const Tensor& t) { return cross_attention_trio(t, b, g, p, scaled); }, a);
        probe(reps, [&](const Tensor& t) { return cross_attention_trio(a, t, g, p, scaled); }, b);
        probe(reps, [&](const Tensor& t) { return cross_attention_trio(a, b, t, p, scaled); }, g);
        auto with = [&](const Tensor& w1, const Tensor& w2, const Tensor& w3) {
            AttentionParams pp;
            pp.w1 = w1;
            pp.w2 = w2;
            pp.w3 = w3;
            return cross_attention_trio(a, b, g, pp, scaled);
        };
        probe(reps, [&](const Tensor& t) { return with(t, p.w2, p.w3); }, p.w1);
        probe(reps, [&](const Tensor& t) { return with(p.w1, t, p.w3); }, p.w2);
        probe(reps, [&](const Tensor& t) { return with(p.w1, p.w2, t); }, p.w3);
    }));
    out.push_back(run_fd("grad/cross-level-block", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t rows = 1 + rng.below(4), level_c = 6;
        LevelFeatures lv;
        lv.low = rand_tensor(rng, {rows, level_c});
        lv.mid = rand_tensor(rng, {rows, level_c});
        lv.high = rand_tensor(rng, {rows, level_c});
        ClcaParams p;
        p.lift = rand_tensor(rng, {level_c, c});
        for (auto& l : p.level) l = rand_self(rng, c);
        p.cross = rand_cross(rng, c);
        auto run = [&](const LevelFeatures& l) { return clca(l, p, true); };
        probe(reps, [&](const Tensor& t) {
            LevelFeatures l = lv;
            l.low = t;
            return run(l);
        }, lv.low);
        probe(reps, [&](const Tensor& t) {
            LevelFeatures l = lv;
            l.mid = t;
            return run(l);
        }, lv.mid);
        probe(reps, [&](const Tensor& t) {
            LevelFeatures l = lv;
            l.high = t;
            return run(l);
        }, lv.high);
        probe(reps, [&](const Tensor& t) {
            ClcaParams pp = p;
            pp.lift = t;
            return clca(lv, pp, true);
        }, p.lift);
        probe(reps, [&](const Tensor& t) {
            ClcaParams pp = p;
            pp.level[1].wq = t;
            return clca(lv, pp, true);
        }, p.level[1].wq);
        probe(reps, [&](const Tensor& t) {
            ClcaParams pp = p;
            pp.level[2].wv = t;
            return clca(lv, pp, true);
        }, p.level[2].wv);
        probe(reps, [&](const Tensor& t) {
            ClcaParams pp = p;
            pp.cross.w3 = t;
            return clca(lv, pp, true);
        }, p.cross.w3);
    }));
    out.push_back(run_fd("grad/interpolation-mlp", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t s = 2 + rng.below(3), q = 1 + rng.below(4), fc = 4;
        const Tensor f = rand_tensor(rng, {s, fc});
        std::vector<double> src(3 * s), dst(3 * q);
        for (double& v : src) v = rng.uniform(-1.0, 1.0);
        for (double& v : dst) v = rng.uniform(-1.0, 1.0);
        const bool with_coords = rng.below(2) == 0;
        MlpParams mlp;
        mlp.w.push_back(rand_tensor(rng, {fc + (with_coords ? 3u : 0u), 4}));
        mlp.b.push_back(rand_tensor(rng, {4}));
        probe(reps, [&](const Tensor& t) { return upsample(t, src, dst, mlp, with_coords); }, f);
        probe(reps, [&](const Tensor& t) {
            MlpParams m2 = mlp;
            m2.w[0] = t;
            return upsample(f, src, dst, m2, with_coords);
        }, mlp.w[0]);
        probe(reps, [&](const Tensor& t) {
            MlpParams m2 = mlp;
            m2.b[0] = t;
            return upsample(f, src, dst, m2, with_coords);
        }, mlp.b[0]);
    }));
    out.push_back(run_fd("grad/cross-scale-block", kInstances, seed, [&](Rng& rng, auto& reps) {
        const std::size_t rows = 1 + rng.below(4);
        const Tensor s1 = rand_tensor(rng, {rows, c});
        const Tensor s2 = rand_tensor(rng, {rows, c});
        const Tensor s3 = rand_tensor(rng, {rows, c});
        CscaParams p;
        p.self = rand_self(rng, c);
        p.cross = rand_cross(rng, c);
        probe(reps, [&](const Tensor& t) { return csca(t, s2, s3, p, true); }, s1);
        probe(reps, [&](const Tensor& t) { return csca(s1, t, s3, p, true); }, s2);
        probe(reps, [&](const Tensor& t) { return csca(s1, s2, t, p, true); }, s3);
        probe(reps, [&](const Tensor& t) {
            CscaParams pp = p;
            pp.self.wq = t;
            return csca(s1, s2, s3, pp, true);
        }, p.self.wq);
        probe(reps, [&](const Tensor& t) {
            CscaParams pp = p;
            pp.self.wv = t;
            return csca(s1, s2, s3, pp, true);
        }, p.self.wv);
        probe(reps, [&](const Tensor& t) {
            CscaParams pp = p;
            pp.cross.w3 = t;
            return csca(s1, s2, s3, pp, true);
        }, p.cross.w3);
    }));

    out.push_back(fd_end_to_end("classification", seed));
    out.push_back(fd_end_to_end("segmentation", seed));
    return out;
}

std::vector<CheckResult> check_invariance(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const std::size_t kClouds = 50;
    const std::size_t kBlocks = 50;
    const std::size_t c = 8;

    {
        const NetworkConfig cfg = mini_config("classification");
        const ParamMap params = init_params(cfg, seed);
        out.push_back(run_max_diff(
            "invariance/classification-logits", kClouds, seed, 1e-9, [&](Rng& rng) {
                const auto kind = static_cast<ShapeKind>(rng.below(4));
                const PointCloud pc = gen_shape(kind, 64, 0.02, rng);
                const PointCloud shuffled = permute_cloud(pc, random_perm(rng, pc.n));
                NoTapeScope inference;
                return max_abs_diff(classify_forward(pc, cfg, params),
                                    classify_forward(shuffled, cfg, params));
            }));
    }
    {
        const NetworkConfig cfg = mini_config("segmentation");
        const ParamMap params = init_params(cfg, seed);
        out.push_back(run_max_diff(
            "invariance/segmentation-logits", kClouds, seed, 1e-9, [&](Rng& rng) {
                const auto kind = static_cast<PartShapeKind>(rng.below(3));
                const PointCloud pc = gen_part_shape(kind, 64, rng);
                const std::vector<std::size_t> perm = random_perm(rng, pc.n);
                const PointCloud shuffled = permute_cloud(pc, perm);
                NoTapeScope inference;
                const Tensor base = segment_forward(pc, cfg, params);
                const Tensor moved = segment_forward(shuffled, cfg, params);
                return max_abs_diff(moved, permute_rows(base, perm));
            }));
    }
    out.push_back(run_max_diff("invariance/self-attention", kBlocks, seed, 1e-12, [&](Rng& rng) {
        const std::size_t rows = 2 + rng.below(8);
        const Tensor f = rand_tensor(rng, {rows, c});
        const AttentionParams p = rand_self(rng, c);
        const std::vector<std::size_t> perm = random_perm(rng, rows);
        NoTapeScope inference;
        return max_abs_diff(self_attention(permute_rows(f, perm), p),
                            permute_rows(self_attention(f, p), perm));
    }));
    out.push_back(run_max_diff("invariance/cross-attention", kBlocks, seed, 1e-12, [&](Rng& rng) {
        const std::size_t rows = 2 + rng.below(8);
        const Tensor a = rand_tensor(rng, {rows, c});
        const Tensor b = rand_tensor(rng, {rows, c});
        const Tensor g = rand_tensor(rng, {rows, c});
        const AttentionParams p = rand_cross(rng, c);
        const std::vector<std::size_t> perm = random_perm(rng, rows);
        NoTapeScope inference;
        const Tensor base = cross_attention_trio(a, b, g, p, true);
        // queries permuted: rows follow; keys+values permuted together: invariant
        const double d1 =
            max_abs_diff(cross_attention_trio(permute_rows(a, perm), b, g, p, true),
                         permute_rows(base, perm));
        const double d2 = max_abs_diff(
            cross_attention_trio(a, permute_rows(b, perm), permute_rows(g, perm), p, true), base);
        return std::max(d1, d2);
    }));
    out.push_back(
        run_max_diff("invariance/cross-level-block", kBlocks, seed, 1e-12, [&](Rng& rng) {
            const std::size_t rows = 2 + rng.below(8), level_c = 6;
            LevelFeatures lv;
            lv.low = rand_tensor(rng, {rows, level_c});
            lv.mid = rand_tensor(rng, {rows, level_c});
            lv.high = rand_tensor(rng, {rows, level_c});
            ClcaParams p;
            p.lift = rand_tensor(rng, {level_c, c});
            for (auto& l : p.level) l = rand_self(rng, c);
            p.cross = rand_cross(rng, c);
            const std::vector<std::size_t> perm = random_perm(rng, rows);
            LevelFeatures shuffled;
            shuffled.low = permute_rows(lv.low, perm);
            shuffled.mid = permute_rows(lv.mid, perm);
            shuffled.high = permute_rows(lv.high, perm);
            NoTapeScope inference;
            return max_abs_diff(clca(shuffled, p, true), permute_rows(clca(lv, p, true), perm));
        }));
    out.push_back(
        run_max_diff("invariance/cross-scale-block", kBlocks, seed, 1e-12, [&](Rng& rng) {
            const std::size_t rows = 2 + rng.below(8);
            const Tensor s1 = rand_tensor(rng, {rows, c});
            const Tensor s2 = rand_tensor(rng, {rows, c});
            const Tensor s3 = rand_tensor(rng, {rows, c});
            CscaParams p;
            p.self = rand_self(rng, c);
            p.cross = rand_cross(rng, c);
            const std::vector<std::size_t> perm = random_perm(rng, rows);
            NoTapeScope inference;
            return max_abs_diff(csca(permute_rows(s1, perm), permute_rows(s2, perm),
                                     permute_rows(s3, perm), p, true),
                                permute_rows(csca(s1, s2, s3, p, true), perm));
        }));
    return out;
}

std::vector<CheckResult> check_oracles(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const std::size_t kInstances = 200;

    {
        Timer timer;
        CheckResult res;
        res.name = "oracle/sampling-and-grouping";
        res.passed = true;
        double worst = 0.0;
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < kInstances; ++i) {
            Rng rng = Rng::stream(seed, {"check", res.name, std::to_string(i)});
            const std::size_t n = 4 + rng.below(29);  // [4, 32]
            const PointCloud pc = random_cloud(rng, n);

            const std::size_t m = 1 + rng.below(n);
            if (!same_vec(farthest_point_sample(pc, m), oracle::fps_brute(pc, m))) mismatches += 1;

            const std::vector<std::size_t> centroids = farthest_point_sample(pc, std::min<std::size_t>(4, n));
            const double radius = rng.uniform(0.2, 1.5);
            const std::size_t k = 1 + rng.below(8);
            const auto groups = ball_query(pc, centroids, radius, k);
            const auto groups_brute = oracle::ball_query_brute(pc, centroids, radius, k);
            for (std::size_t gidx = 0; gidx < groups.size(); ++gidx) {
                if (!same_vec(groups[gidx].member_indices, groups_brute[gidx].member_indices) ||
                    groups[gidx].centroid_index != groups_brute[gidx].centroid_index) {
                    mismatches += 1;
                }
                worst = std::max(worst, vec_max_diff(groups[gidx].member_offsets,
                                                     groups_brute[gidx].member_offsets));
            }

            const std::size_t q = 1 + rng.below(8), kk = 1 + rng.below(n);
            std::vector<double> queries(3 * q);
            for (double& v : queries) v = rng.uniform(-1.0, 1.0);
            const KnnResult nn = knn(queries.data(), q, pc.coords.data(), n, kk);
            const KnnResult nb = oracle::knn_brute(queries.data(), q, pc.coords.data(), n, kk);
            if (!same_vec(nn.indices, nb.indices)) mismatches += 1;
            worst = std::max(worst, vec_max_diff(nn.distances, nb.distances));

            const std::size_t fc = 1 + rng.below(4);
            const Tensor feats = rand_tensor(rng, {n, fc});
            const std::size_t ik = std::min<std::size_t>(3, n);
            const Tensor inter = interpolate_knn(feats, pc.coords, queries, ik);
            const std::vector<double> inter_brute =
                oracle::interpolate_brute(feats, pc.coords, queries, ik);
            worst = std::max(worst, vec_max_diff(inter.values(), inter_brute));
        }
        res.passed = mismatches == 0 && worst <= 1e-12;
        res.detail = std::to_string(kInstances) + " instances, " +
                     std::to_string(mismatches) + " index mismatches, " +
                     format("max value diff %.3g (tol %.2g)", worst, 1e-12);
        res.seconds = timer.elapsed();
        out.push_back(res);
    }
    {
        Timer timer;
        CheckResult res;
        res.name = "oracle/metrics";
        res.passed = true;
        double worst = 0.0;
        for (std::size_t i = 0; i < kInstances; ++i) {
            Rng rng = Rng::stream(seed, {"check", res.name, std::to_string(i)});
            const std::size_t n = 1 + rng.below(64), classes = 2 + rng.below(5);
            std::vector<int> pred(n), gt(n);
            for (std::size_t j = 0; j < n; ++j) {
                pred[j] = static_cast<int>(rng.below(classes));
                gt[j] = static_cast<int>(rng.below(classes));
            }
            const ClassificationMetrics a = classification_metrics(pred, gt, classes);
            const ClassificationMetrics b = oracle::classification_metrics_brute(pred, gt, classes);
            worst = std::max({worst, std::abs(a.oa - b.oa), std::abs(a.acc - b.acc)});

            const int base = static_cast<int>(rng.below(4));
            std::vector<int> parts;
            const std::size_t nparts = 2 + rng.below(4);
            for (std::size_t p = 0; p < nparts; ++p) parts.push_back(base + 2 * static_cast<int>(p));
            std::vector<int> spred(n), sgt(n);
            for (std::size_t j = 0; j < n; ++j) {
                spred[j] = parts[rng.below(parts.size())];
                sgt[j] = parts[rng.below(parts.size())];
            }
            worst = std::max(worst, std::abs(shape_iou(spred, sgt, parts) -
                                             oracle::shape_iou_brute(spred, sgt, parts)));
        }
        res.passed = worst <= 1e-12;
        res.detail = std::to_string(kInstances) + " instances, " +
                     format("max metric diff %.3g (tol %.2g)", worst, 1e-12);
        res.seconds = timer.elapsed();
        out.push_back(res);
    }
    return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const CheckResult& r) { return r.passed; });
}

}  // namespace clcsca
