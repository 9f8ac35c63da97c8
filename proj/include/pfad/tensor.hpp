#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfad {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // empty until first accumulation

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

/// Value-semantics handle over a shared tensor node. Copies alias the
/// same storage; the tape holds references through these handles.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw std::invalid_argument("data length does not match shape " + shape_str(shape));
        node_ = std::make_shared<TensorNode<T>>();
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> d(static_cast<size_t>(shape_numel(shape)), T(0));
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        std::vector<T> d(static_cast<size_t>(shape_numel(shape)), value);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw std::invalid_argument("item() requires a scalar tensor");
        return node_->data[0];
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    TensorNode<T>* node() const { return node_.get(); }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

/// Records backward rules in forward order; backward() replays them once
/// in reverse. Ops append themselves, so topological order holds by
/// construction.
template <typename T>
class Tape {
public:
    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    size_t size() const { return ops_.size(); }

    void clear() { ops_.clear(); }

    void backward(Tensor<T> loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                        shape_str(loss.shape()));
        loss.grad()[0] += T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> ops_;
};

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* op) {
    for (T v : t.data())
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite value produced by ") + op);
}

// ---------------------------------------------------------------------------
// Broadcasting: b is compatible with a if b's shape is a trailing suffix of
// a's shape, or b is a single element.

template <typename T>
inline bool broadcast_compatible(const Tensor<T>& a, const Tensor<T>& b) {
    if (b.numel() == 1) return true;
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() > sa.size()) return false;
    size_t off = sa.size() - sb.size();
    for (size_t i = 0; i < sb.size(); ++i)
        if (sa[off + i] != sb[i]) return false;
    return true;
}

enum class EwOp { Add, Sub, Mul };

template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
    if (!broadcast_compatible(a, b))
        throw std::invalid_argument("elementwise: shape " + shape_str(b.shape()) +
                                    " not broadcastable to " + shape_str(a.shape()));
    const std::int64_t n = a.numel();
    const std::int64_t bn = b.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape(), false);
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    switch (op) {
        case EwOp::Add:
            for (std::int64_t i = 0; i < n; ++i) od[i] = ad[i] + bd[i % bn];
            break;
        case EwOp::Sub:
            for (std::int64_t i = 0; i < n; ++i) od[i] = ad[i] - bd[i % bn];
            break;
        case EwOp::Mul:
            for (std::int64_t i = 0; i < n; ++i) od[i] = ad[i] * bd[i % bn];
            break;
    }
    check_finite(out, "elementwise");
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([op, ac, bc, oc]() mutable {
            const auto& go = oc.grad();
            const std::int64_t n = ac.numel();
            const std::int64_t bn = bc.numel();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                if (op == EwOp::Mul) {
                    const auto& bd = bc.data();
                    for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i] * bd[i % bn];
                } else {
                    for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i];
                }
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                if (op == EwOp::Mul) {
                    const auto& ad = ac.data();
                    for (std::int64_t i = 0; i < n; ++i) gb[i % bn] += go[i] * ad[i];
                } else if (op == EwOp::Sub) {
                    for (std::int64_t i = 0; i < n; ++i) gb[i % bn] -= go[i];
                } else {
                    for (std::int64_t i = 0; i < n; ++i) gb[i % bn] += go[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    return elementwise(EwOp::Add, a, b, tape);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    return elementwise(EwOp::Sub, a, b, tape);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    return elementwise(EwOp::Mul, a, b, tape);
}

/// [m,k] x [k,n] -> [m,n]; fixed k-order accumulation per output element.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul requires rank-2 tensors");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                    shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros({m, n}, false);
    const T* ad = a.data().data();
    const T* bd = b.data().data();
    T* od = out.data().data();
    for (int i = 0; i < m; ++i) {
        const T* arow = ad + static_cast<std::int64_t>(i) * k;
        T* orow = od + static_cast<std::int64_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = bd + static_cast<std::int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    check_finite(out, "matmul");
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, m, k, n]() mutable {
            const T* go = oc.grad().data();
            if (ac.requires_grad()) {
                T* ga = ac.grad().data();
                const T* bd = bc.data().data();
                // dA = dOut * B^T
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        T acc = 0;
                        const T* gorow = go + static_cast<std::int64_t>(i) * n;
                        const T* brow = bd + static_cast<std::int64_t>(kk) * n;
                        for (int j = 0; j < n; ++j) acc += gorow[j] * brow[j];
                        ga[static_cast<std::int64_t>(i) * k + kk] += acc;
                    }
            }
            if (bc.requires_grad()) {
                T* gb = bc.grad().data();
                const T* ad = ac.data().data();
                // dB = A^T * dOut
                for (int i = 0; i < m; ++i) {
                    const T* arow = ad + static_cast<std::int64_t>(i) * k;
                    const T* gorow = go + static_cast<std::int64_t>(i) * n;
                    for (int kk = 0; kk < k; ++kk) {
                        const T av = arow[kk];
                        T* gbrow = gb + static_cast<std::int64_t>(kk) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += av * gorow[j];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    Tensor<T> out = Tensor<T>::zeros(x.shape(), false);
    const auto& xd = x.data();
    auto& od = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc]() mutable {
            const auto& go = oc.grad();
            const auto& xd = xc.data();
            auto& gx = xc.grad();
            const std::int64_t n = xc.numel();
            for (std::int64_t i = 0; i < n; ++i)
                if (xd[i] > T(0)) gx[i] += go[i];
        });
    }
    return out;
}

/// Zero-mean, unit population-std along `axis`, regularized by eps.
/// Parameter-free.
template <typename T>
Tensor<T> standardize(const Tensor<T>& x, int axis, T eps, Tape<T>* tape = nullptr) {
    if (axis < 0 || axis >= x.rank())
        throw std::invalid_argument("standardize: axis " + std::to_string(axis) +
                                    " out of range for rank " + std::to_string(x.rank()));
    const int n_axis = x.dim(axis);
    if (n_axis < 2)
        throw std::invalid_argument("standardize: need at least 2 elements along axis");
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    Tensor<T> out = Tensor<T>::zeros(x.shape(), false);
    // one inv-std per (outer, inner) slice, kept for the backward rule
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(outer * inner));
    const auto& xd = x.data();
    auto& od = out.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n_axis * inner + in;
            T mean = 0;
            for (int j = 0; j < n_axis; ++j) mean += xd[base + j * inner];
            mean /= T(n_axis);
            T var = 0;
            for (int j = 0; j < n_axis; ++j) {
                const T d = xd[base + j * inner] - mean;
                var += d * d;
            }
            var /= T(n_axis);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_std)[static_cast<size_t>(o * inner + in)] = is;
            for (int j = 0; j < n_axis; ++j)
                od[base + j * inner] = (xd[base + j * inner] - mean) * is;
        }
    }
    check_finite(out, "standardize");
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc, inv_std, outer, inner, n_axis]() mutable {
            const auto& go = oc.grad();
            const auto& yd = oc.data();
            auto& gx = xc.grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = o * n_axis * inner + in;
                    const T is = (*inv_std)[static_cast<size_t>(o * inner + in)];
                    T gmean = 0, gymean = 0;
                    for (int j = 0; j < n_axis; ++j) {
                        gmean += go[base + j * inner];
                        gymean += go[base + j * inner] * yd[base + j * inner];
                    }
                    gmean /= T(n_axis);
                    gymean /= T(n_axis);
                    for (int j = 0; j < n_axis; ++j) {
                        const std::int64_t idx = base + j * inner;
                        gx[idx] += is * (go[idx] - gmean - yd[idx] * gymean);
                    }
                }
            }
        });
    }
    return out;
}

/// Stride-1 same-size average pooling over a [H,W] map; edge windows
/// average only the in-bounds elements. Window rows for output i cover
/// [i-(k-1)/2, i+k/2].
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int kernel, Tape<T>* tape = nullptr) {
    if (x.rank() != 2) throw std::invalid_argument("avg_pool2d requires a rank-2 map");
    if (kernel < 1) throw std::invalid_argument("avg_pool2d: kernel must be >= 1");
    const int h = x.dim(0), w = x.dim(1);
    const int lo = (kernel - 1) / 2, hi = kernel / 2;
    Tensor<T> out = Tensor<T>::zeros({h, w}, false);
    const auto& xd = x.data();
    auto& od = out.data();
    for (int i = 0; i < h; ++i) {
        const int r0 = std::max(0, i - lo), r1 = std::min(h - 1, i + hi);
        for (int j = 0; j < w; ++j) {
            const int c0 = std::max(0, j - lo), c1 = std::min(w - 1, j + hi);
            T acc = 0;
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c) acc += xd[static_cast<std::int64_t>(r) * w + c];
            od[static_cast<std::int64_t>(i) * w + j] =
                acc / T((r1 - r0 + 1) * (c1 - c0 + 1));
        }
    }
    check_finite(out, "avg_pool2d");
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc, h, w, lo, hi]() mutable {
            const auto& go = oc.grad();
            auto& gx = xc.grad();
            for (int i = 0; i < h; ++i) {
                const int r0 = std::max(0, i - lo), r1 = std::min(h - 1, i + hi);
                for (int j = 0; j < w; ++j) {
                    const int c0 = std::max(0, j - lo), c1 = std::min(w - 1, j + hi);
                    const T g = go[static_cast<std::int64_t>(i) * w + j] /
                                T((r1 - r0 + 1) * (c1 - c0 + 1));
                    for (int r = r0; r <= r1; ++r)
                        for (int c = c0; c <= c1; ++c)
                            gx[static_cast<std::int64_t>(r) * w + c] += g;
                }
            }
        });
    }
    return out;
}

namespace detail {

struct BilinearTap {
    int i0, i1;
    double w0, w1;  // w0 + w1 == 1
};

inline BilinearTap bilinear_tap(int dst, int src_size, int dst_size) {
    // align-corners-false sampling
    const double scale = static_cast<double>(src_size) / dst_size;
    double s = (dst + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 > src_size - 1) i0 = src_size - 1;
    int i1 = std::min(i0 + 1, src_size - 1);
    double frac = s - i0;
    if (frac < 0) frac = 0;
    if (frac > 1) frac = 1;
    return {i0, i1, 1.0 - frac, frac};
}

}  // namespace detail

/// Bilinear resize of a [H,W] or [H,W,C] tensor to (h_out, w_out),
/// align-corners-false. Output values stay inside the input range.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int h_out, int w_out, Tape<T>* tape = nullptr) {
    if (x.rank() != 2 && x.rank() != 3)
        throw std::invalid_argument("bilinear_resize requires rank 2 or 3");
    if (h_out < 1 || w_out < 1)
        throw std::invalid_argument("bilinear_resize: target dims must be positive");
    const int h = x.dim(0), w = x.dim(1);
    const int ch = x.rank() == 3 ? x.dim(2) : 1;
    Shape out_shape = x.rank() == 3 ? Shape{h_out, w_out, ch} : Shape{h_out, w_out};
    Tensor<T> out = Tensor<T>::zeros(out_shape, false);
    const auto& xd = x.data();
    auto& od = out.data();
    std::vector<detail::BilinearTap> rows(static_cast<size_t>(h_out)),
        cols(static_cast<size_t>(w_out));
    for (int i = 0; i < h_out; ++i) rows[static_cast<size_t>(i)] = detail::bilinear_tap(i, h, h_out);
    for (int j = 0; j < w_out; ++j) cols[static_cast<size_t>(j)] = detail::bilinear_tap(j, w, w_out);
    auto src = [&](int r, int c, int k) -> T {
        return xd[(static_cast<std::int64_t>(r) * w + c) * ch + k];
    };
    for (int i = 0; i < h_out; ++i) {
        const auto& rt = rows[static_cast<size_t>(i)];
        for (int j = 0; j < w_out; ++j) {
            const auto& ct = cols[static_cast<size_t>(j)];
            for (int k = 0; k < ch; ++k) {
                const double v = rt.w0 * (ct.w0 * src(rt.i0, ct.i0, k) + ct.w1 * src(rt.i0, ct.i1, k)) +
                                 rt.w1 * (ct.w0 * src(rt.i1, ct.i0, k) + ct.w1 * src(rt.i1, ct.i1, k));
                od[(static_cast<std::int64_t>(i) * w_out + j) * ch + k] = static_cast<T>(v);
            }
        }
    }
    check_finite(out, "bilinear_resize");
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc, rows, cols, w, ch, h_out, w_out]() mutable {
            const auto& go = oc.grad();
            auto& gx = xc.grad();
            auto at = [&](int r, int c, int k) -> T& {
                return gx[(static_cast<std::int64_t>(r) * w + c) * ch + k];
            };
            for (int i = 0; i < h_out; ++i) {
                const auto& rt = rows[static_cast<size_t>(i)];
                for (int j = 0; j < w_out; ++j) {
                    const auto& ct = cols[static_cast<size_t>(j)];
                    for (int k = 0; k < ch; ++k) {
                        const T g = go[(static_cast<std::int64_t>(i) * w_out + j) * ch + k];
                        at(rt.i0, ct.i0, k) += static_cast<T>(rt.w0 * ct.w0) * g;
                        at(rt.i0, ct.i1, k) += static_cast<T>(rt.w0 * ct.w1) * g;
                        at(rt.i1, ct.i0, k) += static_cast<T>(rt.w1 * ct.w0) * g;
                        at(rt.i1, ct.i1, k) += static_cast<T>(rt.w1 * ct.w1) * g;
                    }
                }
            }
        });
    }
    return out;
}

/// Upsample-only wrapper; target must not shrink either dimension.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int h_out, int w_out, Tape<T>* tape = nullptr) {
    if (h_out < x.dim(0) || w_out < x.dim(1))
        throw std::invalid_argument("bilinear_upsample: target smaller than source");
    return bilinear_resize(x, h_out, w_out, tape);
}

/// Reconstruction loss: sum of squared differences divided by the number
/// of spatial positions (numel / last-dim channels). Channels are summed,
/// positions averaged.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const std::int64_t n = a.numel();
    const std::int64_t channels = a.dim(a.rank() - 1);
    const T positions = T(n / channels);
    const auto& ad = a.data();
    const auto& bd = b.data();
    T acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const T d = ad[i] - bd[i];
        acc += d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(acc / positions);
    check_finite(out, "mse");
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, positions]() mutable {
            const T go = oc.grad()[0];
            const auto& ad = ac.data();
            const auto& bd = bc.data();
            const std::int64_t n = ac.numel();
            const T f = T(2) * go / positions;
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += f * (ad[i] - bd[i]);
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                for (std::int64_t i = 0; i < n; ++i) gb[i] -= f * (ad[i] - bd[i]);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    const auto& xd = x.data();
    T acc = 0;
    for (T v : xd) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    check_finite(out, "sum");
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc]() mutable {
            const T go = oc.grad()[0];
            auto& gx = xc.grad();
            for (auto& g : gx) g += go;
        });
    }
    return out;
}

/// Copy into a new shape with identical element count; grads flow through.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape, Tape<T>* tape = nullptr) {
    if (shape_numel(shape) != x.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor<T> out(std::move(shape), x.data(), false);
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc]() mutable {
            const auto& go = oc.grad();
            auto& gx = xc.grad();
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
        });
    }
    return out;
}

}  // namespace pfad
