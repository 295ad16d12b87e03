#include "clcsca/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "clcsca/rng.hpp"
#include "kernels.hpp"

namespace clcsca {

namespace {

thread_local Tape* g_tape = nullptr;

void ensure_grad(TensorData& d) {
    if (d.grad.empty()) d.grad.assign(d.values.size(), 0.0);
}

bool needs_grad(const std::shared_ptr<TensorData>& d) {
    return d->requires_grad || (d->tape != nullptr && d->tape == g_tape);
}

// A freshly built op output is recorded when a tape is active and any input
// wants gradients.
bool recording(std::initializer_list<const Tensor*> inputs) {
    if (g_tape == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && needs_grad(t->d_)) return true;
    }
    return false;
}

void attach(Tensor& out, std::function<void()> fn) {
    out.d_->node = g_tape->record(std::move(fn));
    out.d_->tape = g_tape;
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ContractError(std::string(op) + ": expected a rank-2 tensor, got shape " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ContractError("Tensor: shape " + shape_str(shape) + " implies " +
                            std::to_string(shape_numel(shape)) + " values, got " +
                            std::to_string(values.size()));
    }
    d_ = std::make_shared<TensorData>();
    d_->shape = std::move(shape);
    d_->values = std::move(values);
    d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double value) {
    std::vector<double> v(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vec(std::vector<double> values) {
    Shape s{values.size()};
    return Tensor(std::move(s), std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ContractError("rows(): tensor is not rank-2, shape " + shape_str(shape()));
    return d_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ContractError("cols(): tensor is not rank-2, shape " + shape_str(shape()));
    return d_->shape[1];
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item(): tensor has " + std::to_string(size()) + " elements");
    return d_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return d_->values[r * cols() + c];
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad(): no gradient populated");
    return d_->grad;
}

void Tensor::zero_grad() {
    if (d_ && !d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::detached() const {
    return Tensor(d_->shape, d_->values);
}

// ---- Tape ------------------------------------------------------------------

Tape::Tape() {
    prev_ = g_tape;
    g_tape = this;
}

Tape::~Tape() { g_tape = prev_; }

Tape* Tape::current() { return g_tape; }

std::size_t Tape::record(std::function<void()> fn) {
    nodes_.push_back(std::move(fn));
    return nodes_.size() - 1;
}

void Tape::run_backward() {
    for (std::size_t i = nodes_.size(); i-- > 0;) nodes_[i]();
}

NoTapeScope::NoTapeScope() {
    saved_ = g_tape;
    g_tape = nullptr;
}

NoTapeScope::~NoTapeScope() { g_tape = saved_; }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar tensor, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (g_tape == nullptr) throw ContractError("backward: no active tape");
    if (loss.d_->tape != nullptr && loss.d_->tape != g_tape) {
        throw ContractError("backward: loss was recorded on a different tape");
    }
    ensure_grad(*loss.d_);
    loss.d_->grad[0] += 1.0;
    g_tape->run_backward();
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ContractError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    kernels::mm_nn(a.values().data(), b.values().data(), out.d_->values.data(), m, k, n, false);
    if (recording({&a, &b})) {
        auto ad = a.d_, bd = b.d_, od = out.d_;
        attach(out, [ad, bd, od, m, k, n] {
            if (od->grad.empty()) return;
            if (needs_grad(ad)) {
                ensure_grad(*ad);
                kernels::mm_nt(od->grad.data(), bd->values.data(), ad->grad.data(), m, n, k, true);
            }
            if (needs_grad(bd)) {
                ensure_grad(*bd);
                kernels::mm_tn(ad->values.data(), od->grad.data(), bd->grad.data(), m, k, n, true);
            }
        });
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw ContractError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    kernels::mm_nt(a.values().data(), b.values().data(), out.d_->values.data(), m, k, n, false);
    if (recording({&a, &b})) {
        auto ad = a.d_, bd = b.d_, od = out.d_;
        attach(out, [ad, bd, od, m, k, n] {
            if (od->grad.empty()) return;
            if (needs_grad(ad)) {
                ensure_grad(*ad);
                kernels::mm_nn(od->grad.data(), bd->values.data(), ad->grad.data(), m, n, k, true);
            }
            if (needs_grad(bd)) {
                ensure_grad(*bd);
                kernels::mm_tn(od->grad.data(), ad->values.data(), bd->grad.data(), m, n, k, true);
            }
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank2(x, "linear");
    require_rank2(w, "linear");
    const std::size_t m = x.rows(), ci = x.cols(), co = w.cols();
    if (w.rows() != ci) {
        throw ContractError("linear: input/weight shapes disagree, " + shape_str(x.shape()) + " vs " +
                            shape_str(w.shape()));
    }
    if (b.defined() && b.size() != co) {
        throw ContractError("linear: bias shape " + shape_str(b.shape()) + " does not match " +
                            std::to_string(co) + " output channels");
    }
    Tensor out = Tensor::zeros({m, co});
    kernels::mm_nn(x.values().data(), w.values().data(), out.d_->values.data(), m, ci, co, false);
    if (b.defined()) {
        double* o = out.d_->values.data();
        const double* bv = b.values().data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < co; ++j) o[i * co + j] += bv[j];
    }
    if (recording({&x, &w, &b})) {
        auto xd = x.d_, wd = w.d_, od = out.d_;
        auto bd = b.defined() ? b.d_ : nullptr;
        attach(out, [xd, wd, bd, od, m, ci, co] {
            if (od->grad.empty()) return;
            if (needs_grad(xd)) {
                ensure_grad(*xd);
                kernels::mm_nt(od->grad.data(), wd->values.data(), xd->grad.data(), m, co, ci, true);
            }
            if (needs_grad(wd)) {
                ensure_grad(*wd);
                kernels::mm_tn(xd->values.data(), od->grad.data(), wd->grad.data(), m, ci, co, true);
            }
            if (bd && needs_grad(bd)) {
                ensure_grad(*bd);
                const double* g = od->grad.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < co; ++j) bd->grad[j] += g[i * co + j];
            }
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({m, n});
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = xv + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double e = std::exp(row[j] - mx);
            ov[i * n + j] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] *= inv;
    }
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, m, n] {
            if (od->grad.empty()) return;
            if (!needs_grad(xd)) return;
            ensure_grad(*xd);
            const double* y = od->values.data();
            const double* dy = od->grad.data();
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    xd->grad[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot);
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, n] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            // relu'(0) := 0
            for (std::size_t i = 0; i < n; ++i)
                if (xd->values[i] > 0.0) xd->grad[i] += od->grad[i];
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
    if (recording({&a, &b})) {
        auto ad = a.d_, bd = b.d_, od = out.d_;
        attach(out, [ad, bd, od, n] {
            if (od->grad.empty()) return;
            if (needs_grad(ad)) {
                ensure_grad(*ad);
                for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i];
            }
            if (needs_grad(bd)) {
                ensure_grad(*bd);
                for (std::size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
    if (recording({&a, &b})) {
        auto ad = a.d_, bd = b.d_, od = out.d_;
        attach(out, [ad, bd, od, n] {
            if (od->grad.empty()) return;
            if (needs_grad(ad)) {
                ensure_grad(*ad);
                for (std::size_t i = 0; i < n; ++i) ad->grad[i] += od->grad[i] * bd->values[i];
            }
            if (needs_grad(bd)) {
                ensure_grad(*bd);
                for (std::size_t i = 0; i < n; ++i) bd->grad[i] += od->grad[i] * ad->values[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double s) {
    Tensor out = Tensor::zeros(x.shape());
    const std::size_t n = x.size();
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = s * xv[i];
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, n, s] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            for (std::size_t i = 0; i < n; ++i) xd->grad[i] += s * od->grad[i];
        });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    require_rank2(x, "transpose");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({n, m});
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = xv[i * n + j];
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, m, n] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) xd->grad[i * n + j] += od->grad[j * m + i];
        });
    }
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    if (a.rows() != b.rows()) {
        throw ContractError("concat_cols: row counts disagree, " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
    const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor out = Tensor::zeros({m, ca + cb});
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(av + i * ca, av + (i + 1) * ca, ov + i * (ca + cb));
        std::copy(bv + i * cb, bv + (i + 1) * cb, ov + i * (ca + cb) + ca);
    }
    if (recording({&a, &b})) {
        auto ad = a.d_, bd = b.d_, od = out.d_;
        attach(out, [ad, bd, od, m, ca, cb] {
            if (od->grad.empty()) return;
            const double* g = od->grad.data();
            if (needs_grad(ad)) {
                ensure_grad(*ad);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < ca; ++j) ad->grad[i * ca + j] += g[i * (ca + cb) + j];
            }
            if (needs_grad(bd)) {
                ensure_grad(*bd);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < cb; ++j) bd->grad[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
        });
    }
    return out;
}

Tensor max_over_rows(const Tensor& x) {
    require_rank2(x, "max_over_rows");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({n});
    std::vector<std::size_t> argmax(n, 0);
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t j = 0; j < n; ++j) ov[j] = xv[j];
    for (std::size_t i = 1; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            // strict > keeps the first row on ties
            if (xv[i * n + j] > ov[j]) {
                ov[j] = xv[i * n + j];
                argmax[j] = i;
            }
        }
    }
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, n, argmax = std::move(argmax)] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            for (std::size_t j = 0; j < n; ++j) xd->grad[argmax[j] * n + j] += od->grad[j];
        });
    }
    return out;
}

Tensor mean_over_rows(const Tensor& x) {
    require_rank2(x, "mean_over_rows");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({n});
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[j] += xv[i * n + j];
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < n; ++j) ov[j] *= inv;
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, m, n, inv] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) xd->grad[i * n + j] += inv * od->grad[j];
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    Tensor out = Tensor::zeros({1});
    double s = 0.0;
    for (double v : x.values()) s += v;
    out.d_->values[0] = s;
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            const double g = od->grad[0];
            for (double& gi : xd->grad) gi += g;
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
        throw ContractError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
    }
    Tensor out(std::move(shape), x.values());
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            for (std::size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += od->grad[i];
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx) {
    require_rank2(x, "gather_rows");
    const std::size_t s = x.rows(), c = x.cols();
    for (std::size_t i : idx) {
        if (i >= s) {
            throw ContractError("gather_rows: index " + std::to_string(i) + " out of range for " +
                                shape_str(x.shape()));
        }
    }
    Tensor out = Tensor::zeros({idx.size(), c});
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(xv + idx[r] * c, xv + (idx[r] + 1) * c, ov + r * c);
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, c, idx = std::move(idx)] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            const double* g = od->grad.data();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < c; ++j) xd->grad[idx[r] * c + j] += g[r * c + j];
        });
    }
    return out;
}

Tensor group_max_pool(const Tensor& x, std::size_t group_size) {
    require_rank2(x, "group_max_pool");
    if (group_size == 0 || x.rows() % group_size != 0) {
        throw ContractError("group_max_pool: row count " + std::to_string(x.rows()) +
                            " is not a multiple of group size " + std::to_string(group_size));
    }
    const std::size_t g = x.rows() / group_size, c = x.cols();
    Tensor out = Tensor::zeros({g, c});
    std::vector<std::size_t> argmax(g * c);
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t gi = 0; gi < g; ++gi) {
        const std::size_t base = gi * group_size;
        for (std::size_t j = 0; j < c; ++j) {
            double best = xv[base * c + j];
            std::size_t bi = base;
            for (std::size_t r = 1; r < group_size; ++r) {
                double v = xv[(base + r) * c + j];
                if (v > best) {
                    best = v;
                    bi = base + r;
                }
            }
            ov[gi * c + j] = best;
            argmax[gi * c + j] = bi;
        }
    }
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, g, c, argmax = std::move(argmax)] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            const double* gr = od->grad.data();
            for (std::size_t i = 0; i < g * c; ++i) xd->grad[argmax[i] * c + (i % c)] += gr[i];
        });
    }
    return out;
}

Tensor weighted_gather_rows(const Tensor& x, const std::vector<std::size_t>& idx,
                            const std::vector<double>& w, std::size_t k) {
    require_rank2(x, "weighted_gather_rows");
    if (k == 0 || idx.size() != w.size() || idx.size() % k != 0) {
        throw ContractError("weighted_gather_rows: index/weight layout invalid");
    }
    const std::size_t s = x.rows(), c = x.cols(), r = idx.size() / k;
    for (std::size_t i : idx) {
        if (i >= s) {
            throw ContractError("weighted_gather_rows: index " + std::to_string(i) + " out of range");
        }
    }
    Tensor out = Tensor::zeros({r, c});
    const double* xv = x.values().data();
    double* ov = out.d_->values.data();
    for (std::size_t q = 0; q < r; ++q) {
        for (std::size_t j = 0; j < k; ++j) {
            const double wq = w[q * k + j];
            const double* src = xv + idx[q * k + j] * c;
            double* dst = ov + q * c;
            for (std::size_t t = 0; t < c; ++t) dst[t] += wq * src[t];
        }
    }
    if (recording({&x})) {
        auto xd = x.d_, od = out.d_;
        attach(out, [xd, od, c, k, r, idx, w] {
            if (od->grad.empty() || !needs_grad(xd)) return;
            ensure_grad(*xd);
            const double* g = od->grad.data();
            for (std::size_t q = 0; q < r; ++q) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double wq = w[q * k + j];
                    double* dst = xd->grad.data() + idx[q * k + j] * c;
                    for (std::size_t t = 0; t < c; ++t) dst[t] += wq * g[q * c + t];
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets, Reduction red) {
    require_rank2(logits, "cross_entropy_rows");
    const std::size_t m = logits.rows(), c = logits.cols();
    if (targets.size() != m) {
        throw ContractError("cross_entropy_rows: " + std::to_string(m) + " rows but " +
                            std::to_string(targets.size()) + " targets");
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw ContractError("cross_entropy_rows: target " + std::to_string(t) +
                                " outside [0, " + std::to_string(c) + ")");
        }
    }
    const double* lv = logits.values().data();
    std::vector<double> probs(m * c);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = lv + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(row[j] - mx);
            sum += probs[i * c + j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] *= inv;
        total += (mx + std::log(sum)) - row[targets[i]];
    }
    if (red == Reduction::mean) total /= static_cast<double>(m);
    Tensor out = Tensor::scalar(total);
    if (recording({&logits})) {
        auto ld = logits.d_, od = out.d_;
        const double gscale = red == Reduction::mean ? 1.0 / static_cast<double>(m) : 1.0;
        attach(out, [ld, od, m, c, gscale, targets, probs = std::move(probs)] {
            if (od->grad.empty() || !needs_grad(ld)) return;
            ensure_grad(*ld);
            const double g = od->grad[0] * gscale;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    double p = probs[i * c + j];
                    if (j == static_cast<std::size_t>(targets[i])) p -= 1.0;
                    ld->grad[i * c + j] += g * p;
                }
            }
        });
    }
    return out;
}

// ---- finite differences ------------------------------------------------------

FiniteDiffReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& x, double step, double tol) {
    FiniteDiffReport report;
    report.tol = tol;

    std::vector<double> u;
    {
        NoTapeScope no_tape;
        Tensor base = f(x.detached());
        Rng rng = Rng::stream(0x5eedu, {"finite-diff-weights"});
        u.resize(base.size());
        for (double& v : u) v = rng.uniform(0.25, 1.75) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }

    auto weighted = [&u](const Tensor& y) {
        double s = 0.0;
        const auto& v = y.values();
        for (std::size_t i = 0; i < v.size(); ++i) s += u[i] * v[i];
        return s;
    };

    Tensor xp = x.detached();
    xp.set_requires_grad(true);
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor y = f(xp);
        Tensor uy = mul(y, Tensor(y.shape(), u));
        Tensor loss = sum_all(uy);
        backward(loss);
        analytic = xp.grad();
    }

    NoTapeScope no_tape;
    report.checked = x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor hi = x.detached();
        Tensor lo = x.detached();
        hi.values_mut()[i] += step;
        lo.values_mut()[i] -= step;
        const double num = (weighted(f(hi)) - weighted(f(lo))) / (2.0 * step);
        const double a = analytic[i];
        const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-3});
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_err <= tol;
    return report;
}

}  // namespace clcsca
