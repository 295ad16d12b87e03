#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "clcsca/common.hpp"

namespace clcsca {

class Tape;

struct TensorData {
    Shape shape;
    std::vector<double> values;  // flat, row-major
    std::vector<double> grad;    // empty until backward touches it
    bool requires_grad = false;
    const Tape* tape = nullptr;  // tape that recorded this tensor, if any
    std::size_t node = 0;        // index of the recording node in that tape
};

// Dense float64 tensor handle. Copies share the underlying buffer.
// Tensors not attached to a tape are plain immutable values and safe to
// share across threads; graph construction and backward are single-threaded
// per tape.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);               // shape {1}
    static Tensor vec(std::vector<double> values);    // shape {n}

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t size() const { return d_->values.size(); }
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only

    const std::vector<double>& values() const { return d_->values; }
    // In-place access for optimizer updates on detached leaves.
    std::vector<double>& values_mut() { return d_->values; }

    double item() const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool v) { d_->requires_grad = v; }
    bool has_grad() const { return d_ && !d_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    // Value copy with no graph attachment and no grad.
    Tensor detached() const;

    std::shared_ptr<TensorData> d_;
};

// Dynamic tape, rebuilt per forward pass. Constructing a Tape makes it the
// active tape for the current thread (RAII, nestable); ops record backward
// closures onto the active tape whenever an input needs gradients.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current();

    std::size_t size() const { return nodes_.size(); }

    // internal: ops only
    std::size_t record(std::function<void()> fn);

    // internal: reverse sweep in exact reverse creation order
    void run_backward();

private:
    std::vector<std::function<void()>> nodes_;
    Tape* prev_ = nullptr;
};

// Seeds d(loss)/d(loss) = 1 and sweeps the active tape in reverse creation
// order, accumulating into the grad of every tensor that needs one.
// loss must be scalar (single element) and recorded on the active tape.
void backward(const Tensor& loss);

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k] -> [m,n], A*B^T
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});
Tensor softmax_rows(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor transpose(const Tensor& x);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor max_over_rows(const Tensor& x);   // [m,n] -> {n}, column-wise max
Tensor mean_over_rows(const Tensor& x);  // [m,n] -> {n}
Tensor sum_all(const Tensor& x);         // -> {1}
Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx);
// Max over each consecutive block of group_size rows: [g*k, c] -> [g, c].
Tensor group_max_pool(const Tensor& x, std::size_t group_size);
// out[r] = sum_j w[r*k+j] * x[idx[r*k+j]]; weights are constants.
Tensor weighted_gather_rows(const Tensor& x, const std::vector<std::size_t>& idx,
                            const std::vector<double>& w, std::size_t k);

enum class Reduction { mean, sum };
// Stable softmax + negative log-likelihood over the class dimension.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets, Reduction red);

// ---- gradient verification -------------------------------------------------

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool passed = true;
    std::size_t checked = 0;
    std::size_t worst_index = 0;
};

// Suspends the active tape for the current thread (RAII).
class NoTapeScope {
public:
    NoTapeScope();
    ~NoTapeScope();
    NoTapeScope(const NoTapeScope&) = delete;
    NoTapeScope& operator=(const NoTapeScope&) = delete;

private:
    Tape* saved_;
};

// Central finite differences of sum(u * f(x)) against the analytic gradient,
// where u is a fixed pseudo-random weighting (so row-sum-invariant outputs
// like softmax still get a meaningful probe). f must be pure.
FiniteDiffReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& x, double step, double tol);

}  // namespace clcsca
