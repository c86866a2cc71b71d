#pragma once

// Dense f64 tensors with tape-based reverse-mode autodiff.
//
// The tape is rebuilt on every forward pass: each op appends one backward
// closure, and Tape::backward() replays them in reverse append order, which
// is a valid topological order by construction. Gradients accumulate
// additively at fan-out points. No broadcasting except bias-add.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <cblas.h>

namespace sb {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(shape_numel(shape_), fill)) {
        if (requires_grad) enable_grad();
    }

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(std::move(values))) {
        if (data_->size() != shape_numel(shape_))
            throw std::invalid_argument("Tensor: data size " + std::to_string(data_->size()) +
                                        " does not match shape " + shape_str(shape_));
        if (requires_grad) enable_grad();
    }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_ ? data_->size() : 0; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    double& operator[](std::size_t i) { return (*data_)[i]; }
    double operator[](std::size_t i) const { return (*data_)[i]; }

    bool requires_grad() const { return grad_ != nullptr; }
    void enable_grad() {
        if (!grad_) grad_ = std::make_shared<std::vector<double>>(numel(), 0.0);
    }
    double* grad() { return grad_->data(); }
    const double* grad() const { return grad_->data(); }
    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
    }

    // Same storage, new shape. Grad flows through for free since the grad
    // buffer is shared too.
    Tensor reshape(Shape new_shape) const {
        if (shape_numel(new_shape) != numel())
            throw std::invalid_argument("reshape: cannot view " + shape_str(shape_) + " as " +
                                        shape_str(new_shape));
        Tensor out;
        out.shape_ = std::move(new_shape);
        out.data_ = data_;
        out.grad_ = grad_;
        return out;
    }

    Tensor clone() const {
        Tensor out(shape_, *data_);
        return out;
    }

    bool shares_storage(const Tensor& other) const { return data_ == other.data_; }

    bool all_finite() const {
        for (double v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<std::vector<double>> grad_;
};

class Tape {
public:
    void record(std::function<void()> backward_op) { nodes_.push_back(std::move(backward_op)); }

    std::size_t size() const { return nodes_.size(); }

    // Seed d(loss)/d(loss) = 1 and replay in reverse append order.
    void backward(Tensor& loss) {
        if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
        if (!loss.requires_grad()) throw std::invalid_argument("backward: loss has no grad");
        loss.grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
        nodes_.clear();
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

namespace detail {

inline bool track(Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// Row-major C[m x n] += or = A[m x k] * B[k x n], with optional transposes
// on the logical A and B.
inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, double beta) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, a, static_cast<int>(trans_a ? m : k), b,
                static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    // row-by-row so equal input rows yield bit-identical output rows
    // regardless of their batch position
    for (std::size_t i = 0; i < m; ++i)
        cblas_dgemv(CblasRowMajor, CblasTrans, static_cast<int>(k), static_cast<int>(n), 1.0,
                    b.data(), static_cast<int>(n), a.data() + i * k, 1, 0.0, out.data() + i * n,
                    1);
    if (detail::track(tape, {&a, &b})) {
        out.enable_grad();
        Tensor ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, m, n, k]() mutable {
            if (ac.requires_grad())  // dA += dC * B^T
                detail::gemm(false, true, m, k, n, oc.grad(), bc.data(), ac.grad(), 1.0);
            if (bc.requires_grad())  // dB += A^T * dC
                detail::gemm(true, false, k, n, m, ac.data(), oc.grad(), bc.grad(), 1.0);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv2d (cross-correlation), NCHW input, FCkk kernel
// ---------------------------------------------------------------------------

namespace detail {

inline void im2col(const double* img, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
                   std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW,
                   double* cols) {
    // cols is [C*k*k x OH*OW]
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                double* row = cols + ((c * k + ki) * k + kj) * OH * OW;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                              static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        double v = 0.0;
                        if (ih >= 0 && ih < static_cast<std::ptrdiff_t>(H) && iw >= 0 &&
                            iw < static_cast<std::ptrdiff_t>(W))
                            v = img[(c * H + static_cast<std::size_t>(ih)) * W +
                                    static_cast<std::size_t>(iw)];
                        row[oh * OW + ow] = v;
                    }
                }
            }
        }
    }
}

inline void col2im_accum(const double* cols, std::size_t C, std::size_t H, std::size_t W,
                         std::size_t k, std::size_t stride, std::size_t pad, std::size_t OH,
                         std::size_t OW, double* img) {
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                const double* row = cols + ((c * k + ki) * k + kj) * OH * OW;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        img[(c * H + static_cast<std::size_t>(ih)) * W +
                            static_cast<std::size_t>(iw)] += row[oh * OW + ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

inline Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& kernel, std::size_t stride = 1,
                     std::size_t pad = 0) {
    if (input.rank() != 4 || kernel.rank() != 4)
        throw std::invalid_argument("conv2d: need NCHW input and FCkk kernel, got " +
                                    shape_str(input.shape()) + " and " +
                                    shape_str(kernel.shape()));
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t F = kernel.dim(0), KC = kernel.dim(1), k = kernel.dim(2);
    if (KC != C || kernel.dim(3) != k)
        throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                    " does not match input " + shape_str(input.shape()));
    if (k > H + 2 * pad || k > W + 2 * pad)
        throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                    " larger than padded input " + shape_str(input.shape()));
    const std::size_t OH = (H + 2 * pad - k) / stride + 1;
    const std::size_t OW = (W + 2 * pad - k) / stride + 1;
    const std::size_t ckk = C * k * k, ohw = OH * OW;

    Tensor out({N, F, OH, OW});
    std::vector<double> cols(ckk * ohw);
    for (std::size_t n = 0; n < N; ++n) {
        detail::im2col(input.data() + n * C * H * W, C, H, W, k, stride, pad, OH, OW, cols.data());
        detail::gemm(false, false, F, ohw, ckk, kernel.data(), cols.data(),
                     out.data() + n * F * ohw, 0.0);
    }

    if (detail::track(tape, {&input, &kernel})) {
        out.enable_grad();
        Tensor in_c = input, ker_c = kernel, out_c = out;
        tape->record([in_c, ker_c, out_c, N, C, H, W, F, k, stride, pad, OH, OW, ckk,
                      ohw]() mutable {
            std::vector<double> cols(ckk * ohw);
            std::vector<double> dcols(ckk * ohw);
            for (std::size_t n = 0; n < N; ++n) {
                const double* dout = out_c.grad() + n * F * ohw;
                if (ker_c.requires_grad()) {
                    // im2col recomputed rather than saved; memory stays flat
                    detail::im2col(in_c.data() + n * C * H * W, C, H, W, k, stride, pad, OH, OW,
                                   cols.data());
                    detail::gemm(false, true, F, ckk, ohw, dout, cols.data(), ker_c.grad(), 1.0);
                }
                if (in_c.requires_grad()) {
                    detail::gemm(true, false, ckk, ohw, F, ker_c.data(), dout, dcols.data(), 0.0);
                    detail::col2im_accum(dcols.data(), C, H, W, k, stride, pad, OH, OW,
                                         in_c.grad() + n * C * H * W);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
    if (detail::track(tape, {&a, &b})) {
        out.enable_grad();
        Tensor ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, n]() mutable {
            if (ac.requires_grad())
                for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += oc.grad()[i];
            if (bc.requires_grad())
                for (std::size_t i = 0; i < n; ++i) bc.grad()[i] += oc.grad()[i];
        });
    }
    return out;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    if (detail::track(tape, {&a, &b})) {
        out.enable_grad();
        Tensor ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, n]() mutable {
            if (ac.requires_grad())
                for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += oc.grad()[i] * bc[i];
            if (bc.requires_grad())
                for (std::size_t i = 0; i < n; ++i) bc.grad()[i] += oc.grad()[i] * ac[i];
        });
    }
    return out;
}

inline Tensor scale(Tape* tape, const Tensor& a, double s) {
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
    if (detail::track(tape, {&a})) {
        out.enable_grad();
        Tensor ac = a, oc = out;
        tape->record([ac, oc, s, n]() mutable {
            for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += oc.grad()[i] * s;
        });
    }
    return out;
}

inline Tensor relu(Tape* tape, const Tensor& a) {
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    if (detail::track(tape, {&a})) {
        out.enable_grad();
        Tensor ac = a, oc = out;
        tape->record([ac, oc, n]() mutable {
            for (std::size_t i = 0; i < n; ++i)
                if (ac[i] > 0.0) ac.grad()[i] += oc.grad()[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// bias-add broadcasts: rows (dense layers) and channels (conv layers).
// The only broadcasting in the library.
// ---------------------------------------------------------------------------

inline Tensor bias_add_rows(Tape* tape, const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
        throw std::invalid_argument("bias_add_rows: shapes " + shape_str(x.shape()) + " and " +
                                    shape_str(bias.shape()));
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + bias[j];
    if (detail::track(tape, {&x, &bias})) {
        out.enable_grad();
        Tensor xc = x, bc = bias, oc = out;
        tape->record([xc, bc, oc, n, d]() mutable {
            if (xc.requires_grad())
                for (std::size_t i = 0; i < n * d; ++i) xc.grad()[i] += oc.grad()[i];
            if (bc.requires_grad())
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) bc.grad()[j] += oc.grad()[i * d + j];
        });
    }
    return out;
}

inline Tensor bias_add_channels(Tape* tape, const Tensor& x, const Tensor& bias) {
    if (x.rank() != 4 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
        throw std::invalid_argument("bias_add_channels: shapes " + shape_str(x.shape()) + " and " +
                                    shape_str(bias.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor out(x.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double b = bias[c];
            const std::size_t base = (n * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) out[base + i] = x[base + i] + b;
        }
    if (detail::track(tape, {&x, &bias})) {
        out.enable_grad();
        Tensor xc = x, bc = bias, oc = out;
        tape->record([xc, bc, oc, N, C, hw]() mutable {
            if (xc.requires_grad())
                for (std::size_t i = 0; i < N * C * hw; ++i) xc.grad()[i] += oc.grad()[i];
            if (bc.requires_grad())
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t base = (n * C + c) * hw;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < hw; ++i) acc += oc.grad()[base + i];
                        bc.grad()[c] += acc;
                    }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(Tape* tape, const Tensor& a) {
    Tensor out({1});
    double acc = 0.0;
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    out[0] = acc;
    if (detail::track(tape, {&a})) {
        out.enable_grad();
        Tensor ac = a, oc = out;
        tape->record([ac, oc, n]() mutable {
            const double g = oc.grad()[0];
            for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += g;
        });
    }
    return out;
}

inline Tensor mean_all(Tape* tape, const Tensor& a) {
    Tensor s = sum_all(tape, a);
    return scale(tape, s, 1.0 / static_cast<double>(a.numel()));
}

// mean over axis 1 of a rank-3 tensor: [N x T x D] -> [N x D]
inline Tensor mean_axis1(Tape* tape, const Tensor& a) {
    if (a.rank() != 3)
        throw std::invalid_argument("mean_axis1: need rank-3 tensor, got " +
                                    shape_str(a.shape()));
    const std::size_t N = a.dim(0), T = a.dim(1), D = a.dim(2);
    Tensor out({N, D});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < D; ++d)
                out[n * D + d] += a[(n * T + t) * D + d] / static_cast<double>(T);
    if (detail::track(tape, {&a})) {
        out.enable_grad();
        Tensor ac = a, oc = out;
        tape->record([ac, oc, N, T, D]() mutable {
            const double inv = 1.0 / static_cast<double>(T);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t d = 0; d < D; ++d)
                        ac.grad()[(n * T + t) * D + d] += oc.grad()[n * D + d] * inv;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// max-pool 2x2 stride 2, NCHW
// ---------------------------------------------------------------------------

inline Tensor maxpool2(Tape* tape, const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("maxpool2: need NCHW, got " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < 2 || W < 2)
        throw std::invalid_argument("maxpool2: spatial dims too small " + shape_str(x.shape()));
    const std::size_t OH = H / 2, OW = W / 2;
    Tensor out({N, C, OH, OW});
    auto argmax = std::make_shared<std::vector<std::size_t>>(N * C * OH * OW);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* in = x.data() + nc * H * W;
        double* o = out.data() + nc * OH * OW;
        std::size_t* am = argmax->data() + nc * OH * OW;
        for (std::size_t oh = 0; oh < OH; ++oh)
            for (std::size_t ow = 0; ow < OW; ++ow) {
                std::size_t best = (2 * oh) * W + 2 * ow;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        const std::size_t idx = (2 * oh + di) * W + (2 * ow + dj);
                        if (in[idx] > in[best]) best = idx;
                    }
                o[oh * OW + ow] = in[best];
                am[oh * OW + ow] = nc * H * W + best;
            }
    }
    if (detail::track(tape, {&x})) {
        out.enable_grad();
        Tensor xc = x, oc = out;
        tape->record([xc, oc, argmax]() mutable {
            const std::size_t n = oc.numel();
            for (std::size_t i = 0; i < n; ++i) xc.grad()[(*argmax)[i]] += oc.grad()[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy, max-subtraction stabilized
// ---------------------------------------------------------------------------

namespace detail {

inline void softmax_rows(const Tensor& logits, std::vector<double>& probs) {
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    probs.resize(N * K);
    for (std::size_t i = 0; i < N; ++i) {
        const double* row = logits.data() + i * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            probs[i * K + k] = std::exp(row[k] - mx);
            z += probs[i * K + k];
        }
        for (std::size_t k = 0; k < K; ++k) probs[i * K + k] /= z;
    }
}

}  // namespace detail

// Inference-only softmax probabilities.
inline std::vector<double> softmax(const Tensor& logits) {
    if (logits.rank() != 2)
        throw std::invalid_argument("softmax: need [N x K] logits, got " +
                                    shape_str(logits.shape()));
    std::vector<double> probs;
    detail::softmax_rows(logits, probs);
    return probs;
}

// Mean over the batch of -sum_k t_k * log softmax(logits)_k, where targets
// is a full [N x K] mixture matrix (rows must sum to 1).
inline Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits, const Tensor& targets) {
    if (logits.rank() != 2 || logits.dim(1) < 2)
        throw std::invalid_argument("softmax_cross_entropy: need [N x K], K >= 2, got " +
                                    shape_str(logits.shape()));
    check_same_shape(logits, targets, "softmax_cross_entropy");
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += targets[i * K + k];
        if (std::abs(s - 1.0) > 1e-6)
            throw std::invalid_argument("softmax_cross_entropy: target row " + std::to_string(i) +
                                        " sums to " + std::to_string(s) + ", expected 1");
    }

    auto probs = std::make_shared<std::vector<double>>();
    detail::softmax_rows(logits, *probs);

    Tensor out({1});
    double loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double* row = logits.data() + i * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
        const double logz = std::log(z) + mx;
        for (std::size_t k = 0; k < K; ++k) loss -= targets[i * K + k] * (row[k] - logz);
    }
    out[0] = loss / static_cast<double>(N);

    if (detail::track(tape, {&logits, &targets})) {
        out.enable_grad();
        Tensor lc = logits, tc = targets, oc = out;
        tape->record([lc, tc, oc, probs, N, K]() mutable {
            const double g = oc.grad()[0] / static_cast<double>(N);
            if (lc.requires_grad())
                for (std::size_t i = 0; i < N * K; ++i)
                    lc.grad()[i] += g * ((*probs)[i] - tc[i]);
        });
    }
    return out;
}

inline Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t K) {
    Tensor out({labels.size(), K});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= K)
            throw std::invalid_argument("one_hot: label " + std::to_string(labels[i]) +
                                        " out of range for K=" + std::to_string(K));
        out[i * K + labels[i]] = 1.0;
    }
    return out;
}

inline Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits,
                                    const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2 || labels.size() != logits.dim(0))
        throw std::invalid_argument("softmax_cross_entropy: batch/label count mismatch");
    return softmax_cross_entropy(tape, logits, one_hot(labels, logits.dim(1)));
}

// ---------------------------------------------------------------------------
// SGD with momentum: v <- momentum*v + g; p <- p - lr*v
// ---------------------------------------------------------------------------

struct SgdState {
    double learning_rate = 0.01;
    double momentum = 0.0;
    std::vector<std::vector<double>> velocity;

    SgdState(double lr, double mom) : learning_rate(lr), momentum(mom) {
        if (lr < 0.0) throw std::invalid_argument("SgdState: learning rate must be >= 0");
        if (mom < 0.0 || mom >= 1.0) throw std::invalid_argument("SgdState: momentum must be in [0,1)");
    }
};

inline void sgd_step(std::vector<Tensor>& params, SgdState& state) {
    if (state.velocity.empty())
        for (const Tensor& p : params) state.velocity.emplace_back(p.numel(), 0.0);
    if (state.velocity.size() != params.size())
        throw std::invalid_argument("sgd_step: parameter count changed under the optimizer");
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        std::vector<double>& v = state.velocity[pi];
        if (v.size() != p.numel())
            throw std::invalid_argument("sgd_step: velocity shape mismatch at param " +
                                        std::to_string(pi));
        const double* g = p.grad();
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = state.momentum * v[i] + g[i];
            p[i] -= state.learning_rate * v[i];
        }
    }
}

}  // namespace sb
