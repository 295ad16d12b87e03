#include "clcsca/attention.hpp"

#include <cmath>
#include <string>

namespace clcsca {

namespace {

thread_local AttentionProbe* g_probe = nullptr;

void require_projection(const Tensor& w, std::size_t c, const char* name) {
    if (!w.defined() || w.rank() != 2 || w.rows() != c) {
        throw ContractError(std::string(name) + ": projection expects " + std::to_string(c) +
                            " input channels, got " +
                            (w.defined() ? shape_str(w.shape()) : std::string("<undefined>")));
    }
}

Tensor attend(const Tensor& q_src, const Tensor& wq, const Tensor& k_src, const Tensor& wk,
              const Tensor& v_src, const Tensor& wv, bool scaled, const char* name) {
    const std::size_t c = q_src.cols();
    require_projection(wq, c, name);
    require_projection(wk, k_src.cols(), name);
    require_projection(wv, v_src.cols(), name);
    if (wq.cols() != wk.cols()) {
        throw ContractError(std::string(name) + ": query/key widths disagree, " + shape_str(wq.shape()) +
                            " vs " + shape_str(wk.shape()));
    }
    Tensor scores = matmul_nt(matmul(q_src, wq), matmul(k_src, wk));
    if (scaled) scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(wq.cols())));
    Tensor attn = softmax_rows(scores);
    if (g_probe != nullptr) g_probe->weights.push_back(attn.detached());
    return matmul(attn, matmul(v_src, wv));
}

}  // namespace

void set_attention_probe(AttentionProbe* probe) { g_probe = probe; }

Tensor self_attention(const Tensor& f, const AttentionParams& p) {
    if (f.rank() != 2) {
        throw ContractError("self_attention: expected rank-2 features, got " + shape_str(f.shape()));
    }
    if (p.wv.defined() && (p.wv.rank() != 2 || p.wv.rows() != p.wv.cols())) {
        throw ContractError("self_attention: value projection must be square, got " +
                            shape_str(p.wv.shape()));
    }
    return add(attend(f, p.wq, f, p.wk, f, p.wv, true, "self_attention"), f);
}

Tensor cross_attention_trio(const Tensor& a, const Tensor& b, const Tensor& g,
                            const AttentionParams& p, bool scaled) {
    if (a.rank() != 2 || a.shape() != b.shape() || a.shape() != g.shape()) {
        throw ContractError("cross_attention_trio: operand shapes disagree");
    }
    return attend(a, p.w1, b, p.w2, g, p.w3, scaled, "cross_attention_trio");
}

Tensor clca(const LevelFeatures& lv, const ClcaParams& p, bool scaled) {
    if (lv.low.shape() != lv.mid.shape() || lv.low.shape() != lv.high.shape()) {
        throw ContractError("clca: level shapes disagree");
    }
    Tensor low = self_attention(matmul(lv.low, p.lift), p.level[0]);
    Tensor mid = self_attention(matmul(lv.mid, p.lift), p.level[1]);
    Tensor high = self_attention(matmul(lv.high, p.lift), p.level[2]);
    Tensor at = cross_attention_trio(low, mid, high, p.cross, scaled);
    return add(add(add(at, low), mid), high);
}

Tensor level_sum(const LevelFeatures& lv, const Tensor& lift) {
    if (lv.low.shape() != lv.mid.shape() || lv.low.shape() != lv.high.shape()) {
        throw ContractError("level_sum: level shapes disagree");
    }
    return add(add(matmul(lv.low, lift), matmul(lv.mid, lift)), matmul(lv.high, lift));
}

Tensor upsample(const Tensor& f, const std::vector<double>& path_pts,
                const std::vector<double>& full_pts, const MlpParams& mlp, bool with_coords) {
    const std::size_t k = std::min<std::size_t>(3, f.rows());
    Tensor x = interpolate_knn(f, path_pts, full_pts, k);
    if (with_coords) {
        x = concat_cols(x, Tensor({full_pts.size() / 3, 3}, full_pts));
    }
    return apply_mlp(x, mlp);
}

Tensor csca(const Tensor& s1, const Tensor& s2, const Tensor& s3, const CscaParams& p,
            bool scaled) {
    if (s1.rank() != 2 || s1.shape() != s2.shape() || s1.shape() != s3.shape()) {
        throw ContractError("csca: scale shapes disagree");
    }
    Tensor a1 = self_attention(s1, p.self);
    Tensor a2 = self_attention(s2, p.self);
    Tensor a3 = self_attention(s3, p.self);
    Tensor at = cross_attention_trio(a1, a2, a3, p.cross, scaled);
    return add(add(add(at, a1), a2), a3);
}

}  // namespace clcsca
