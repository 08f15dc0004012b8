// Reverse-mode differentiation over a per-forward tape of matrix nodes.
// A Tape owns the nodes of one forward pass; backward() walks them in reverse
// creation order. Parameters live outside the tape (see Param) so one set of
// weights can serve many forward passes.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "metal/errors.hpp"
#include "metal/tensor.hpp"

namespace metal {

template <class S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;

    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

    void zero_grad() { grad.fill(S(0)); }
};

enum class DiagMask { None, NegInf, ZeroLogit };

template <class S>
class Tape;

template <class S>
struct Var {
    Tape<S>* tape = nullptr;
    int idx = -1;

    const Mat<S>& val() const { return tape->node(idx).val; }
    const Mat<S>& grad() const { return tape->node(idx).grad; }
    int rows() const { return val().rows; }
    int cols() const { return val().cols; }
};

template <class S>
class Tape {
  public:
    struct Node {
        Mat<S> val;
        Mat<S> grad;  // sized on first accumulation
        std::function<void(Tape&)> back;
        bool needs_grad = false;
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    Node& node(int i) { return nodes_[i]; }
    const Node& node(int i) const { return nodes_[i]; }
    size_t num_nodes() const { return nodes_.size(); }

    Var<S> make(Mat<S> val, bool needs_grad, std::function<void(Tape&)> back = nullptr) {
        Node n;
        n.val = std::move(val);
        n.needs_grad = needs_grad && grad_enabled_;
        if (n.needs_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
    }

    Var<S> constant(Mat<S> val) { return make(std::move(val), false); }

    // Parameter leaf: on backward, the node gradient is added to p.grad.
    Var<S> leaf(Param<S>& p) {
        Param<S>* pp = &p;
        Var<S> v = make(p.value, true, nullptr);
        int i = v.idx;
        if (grad_enabled_)
            nodes_[i].back = [i, pp](Tape& t) {
                Node& n = t.node(i);
                if (n.grad.size() == 0) return;
                for (size_t k = 0; k < n.grad.size(); ++k) pp->grad.a[k] += n.grad.a[k];
            };
        return v;
    }

    void accum(int i, const Mat<S>& g) {
        Node& n = nodes_[i];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) n.grad = Mat<S>(n.val.rows, n.val.cols);
        for (size_t k = 0; k < g.size(); ++k) n.grad.a[k] += g.a[k];
    }

    Mat<S>& grad_buf(int i) {
        Node& n = nodes_[i];
        if (n.grad.size() == 0) n.grad = Mat<S>(n.val.rows, n.val.cols);
        return n.grad;
    }

    bool wants_grad(int i) const { return nodes_[i].needs_grad; }

    void backward(const Var<S>& loss) {
        if (!grad_enabled_) throw MetalError("backward() on a grad-disabled tape");
        if (loss.val().rows != 1 || loss.val().cols != 1)
            throw ShapeError("backward() expects a 1x1 loss node");
        Mat<S> seed(1, 1);
        seed(0, 0) = S(1);
        accum(loss.idx, seed);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.back && n.grad.size() != 0) n.back(*this);
        }
    }

  private:
    bool grad_enabled_;
    std::vector<Node> nodes_;
};

// Matrix product with optional transposes: C = op(A) op(B).
template <class S>
Var<S> op_matmul(Var<S> a, Var<S> b, bool ta = false, bool tb = false) {
    Tape<S>& t = *a.tape;
    const Mat<S>& A = a.val();
    const Mat<S>& B = b.val();
    const int ka = ta ? A.rows : A.cols;
    const int kb = tb ? B.cols : B.rows;
    if (ka != kb) throw ShapeError("matmul: inner dimensions differ");
    Mat<S> C = matmul_val(A, B, ta, tb);
    bool ng = t.wants_grad(a.idx) || t.wants_grad(b.idx);
    Var<S> out = t.make(std::move(C), ng);
    if (!ng) return out;
    int ai = a.idx, bi = b.idx, oi = out.idx;
    t.node(oi).back = [ai, bi, oi, ta, tb](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        const Mat<S>& A = tp.node(ai).val;
        const Mat<S>& B = tp.node(bi).val;
        if (tp.wants_grad(ai)) {
            Mat<S>& dA = tp.grad_buf(ai);
            if (!ta)
                gemm(false, !tb, S(1), dC, B, S(1), dA);  // dA = dC op(B)^T
            else
                gemm(tb, true, S(1), B, dC, S(1), dA);  // dA = op(B) dC^T
        }
        if (tp.wants_grad(bi)) {
            Mat<S>& dB = tp.grad_buf(bi);
            if (!tb)
                gemm(!ta, false, S(1), A, dC, S(1), dB);  // dB = op(A)^T dC
            else
                gemm(true, ta, S(1), dC, A, S(1), dB);  // dB = dC^T op(A)
        }
    };
    return out;
}

namespace detail {

template <class S, class F, class DF>
Var<S> elementwise_unary(Var<S> a, F f, DF df) {
    Tape<S>& t = *a.tape;
    Mat<S> out(a.rows(), a.cols());
    const Mat<S>& A = a.val();
    for (size_t k = 0; k < A.size(); ++k) out.a[k] = f(A.a[k]);
    bool ng = t.wants_grad(a.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, oi = v.idx;
    t.node(oi).back = [ai, oi, df](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        const Mat<S>& A = tp.node(ai).val;
        const Mat<S>& C = tp.node(oi).val;
        Mat<S>& dA = tp.grad_buf(ai);
        for (size_t k = 0; k < dC.size(); ++k) dA.a[k] += dC.a[k] * df(A.a[k], C.a[k]);
    };
    return v;
}

}  // namespace detail

template <class S>
Var<S> op_add(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    if (!a.val().same_shape(b.val())) throw ShapeError("add: shape mismatch");
    Mat<S> out = a.val();
    for (size_t k = 0; k < out.size(); ++k) out.a[k] += b.val().a[k];
    bool ng = t.wants_grad(a.idx) || t.wants_grad(b.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, bi = b.idx, oi = v.idx;
    t.node(oi).back = [ai, bi, oi](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        tp.accum(ai, dC);
        tp.accum(bi, dC);
    };
    return v;
}

template <class S>
Var<S> op_sub(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    if (!a.val().same_shape(b.val())) throw ShapeError("sub: shape mismatch");
    Mat<S> out = a.val();
    for (size_t k = 0; k < out.size(); ++k) out.a[k] -= b.val().a[k];
    bool ng = t.wants_grad(a.idx) || t.wants_grad(b.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, bi = b.idx, oi = v.idx;
    t.node(oi).back = [ai, bi, oi](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        tp.accum(ai, dC);
        if (tp.wants_grad(bi)) {
            Mat<S>& dB = tp.grad_buf(bi);
            for (size_t k = 0; k < dC.size(); ++k) dB.a[k] -= dC.a[k];
        }
    };
    return v;
}

template <class S>
Var<S> op_mul(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    if (!a.val().same_shape(b.val())) throw ShapeError("mul: shape mismatch");
    Mat<S> out = a.val();
    for (size_t k = 0; k < out.size(); ++k) out.a[k] *= b.val().a[k];
    bool ng = t.wants_grad(a.idx) || t.wants_grad(b.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, bi = b.idx, oi = v.idx;
    t.node(oi).back = [ai, bi, oi](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        const Mat<S>& A = tp.node(ai).val;
        const Mat<S>& B = tp.node(bi).val;
        if (tp.wants_grad(ai)) {
            Mat<S>& dA = tp.grad_buf(ai);
            for (size_t k = 0; k < dC.size(); ++k) dA.a[k] += dC.a[k] * B.a[k];
        }
        if (tp.wants_grad(bi)) {
            Mat<S>& dB = tp.grad_buf(bi);
            for (size_t k = 0; k < dC.size(); ++k) dB.a[k] += dC.a[k] * A.a[k];
        }
    };
    return v;
}

template <class S>
Var<S> op_div(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    if (!a.val().same_shape(b.val())) throw ShapeError("div: shape mismatch");
    Mat<S> out = a.val();
    for (size_t k = 0; k < out.size(); ++k) out.a[k] /= b.val().a[k];
    bool ng = t.wants_grad(a.idx) || t.wants_grad(b.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, bi = b.idx, oi = v.idx;
    t.node(oi).back = [ai, bi, oi](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        const Mat<S>& B = tp.node(bi).val;
        const Mat<S>& C = tp.node(oi).val;
        if (tp.wants_grad(ai)) {
            Mat<S>& dA = tp.grad_buf(ai);
            for (size_t k = 0; k < dC.size(); ++k) dA.a[k] += dC.a[k] / B.a[k];
        }
        if (tp.wants_grad(bi)) {
            Mat<S>& dB = tp.grad_buf(bi);
            for (size_t k = 0; k < dC.size(); ++k) dB.a[k] -= dC.a[k] * C.a[k] / B.a[k];
        }
    };
    return v;
}

// y = alpha * x + beta, alpha/beta plain scalars
template <class S>
Var<S> op_affine(Var<S> a, S alpha, S beta) {
    return detail::elementwise_unary(
        a, [alpha, beta](S x) { return alpha * x + beta; },
        [alpha](S, S) { return alpha; });
}

template <class S>
Var<S> op_abs(Var<S> a) {
    return detail::elementwise_unary(
        a, [](S x) { return std::abs(x); },
        [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <class S>
Var<S> op_gelu(Var<S> a) {
    const S inv_sqrt2 = S(0.7071067811865475244);
    const S inv_sqrt2pi = S(0.3989422804014326779);
    return detail::elementwise_unary(
        a, [=](S x) { return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2)); },
        [=](S x, S) {
            S phi = inv_sqrt2pi * std::exp(S(-0.5) * x * x);
            return S(0.5) * (S(1) + std::erf(x * inv_sqrt2)) + x * phi;
        });
}

template <class S>
Var<S> op_relu(Var<S> a) {
    return detail::elementwise_unary(
        a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <class S>
Var<S> op_sigmoid(Var<S> a) {
    return detail::elementwise_unary(
        a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
        [](S, S y) { return y * (S(1) - y); });
}

// Broadcast a 1 x d row vector over all rows of an n x d matrix.
template <class S>
Var<S> op_add_rowvec(Var<S> a, Var<S> b) {
    Tape<S>& t = *a.tape;
    if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("add_rowvec: bad bias shape");
    Mat<S> out = a.val();
    const Mat<S>& B = b.val();
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out(r, c) += B(0, c);
    bool ng = t.wants_grad(a.idx) || t.wants_grad(b.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, bi = b.idx, oi = v.idx;
    t.node(oi).back = [ai, bi, oi](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        tp.accum(ai, dC);
        if (tp.wants_grad(bi)) {
            Mat<S>& dB = tp.grad_buf(bi);
            for (int r = 0; r < dC.rows; ++r)
                for (int c = 0; c < dC.cols; ++c) dB(0, c) += dC(r, c);
        }
    };
    return v;
}

template <class S>
Var<S> op_sum(Var<S> a) {
    Tape<S>& t = *a.tape;
    Mat<S> out(1, 1);
    S s = 0;
    for (S x : a.val().a) s += x;
    out(0, 0) = s;
    bool ng = t.wants_grad(a.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, oi = v.idx;
    t.node(oi).back = [ai, oi](Tape<S>& tp) {
        S g = tp.node(oi).grad(0, 0);
        if (!tp.wants_grad(ai)) return;
        Mat<S>& dA = tp.grad_buf(ai);
        for (size_t k = 0; k < dA.size(); ++k) dA.a[k] += g;
    };
    return v;
}

template <class S>
Var<S> op_mean(Var<S> a) {
    S n = S(a.val().size());
    return op_affine(op_sum(a), S(1) / n, S(0));
}

// Row-wise softmax with optional diagonal masking (requires square input for
// the masked modes). -inf entries in the input act as hard masks.
template <class S>
Var<S> op_softmax_rows(Var<S> a, DiagMask mode = DiagMask::None) {
    Tape<S>& t = *a.tape;
    const Mat<S>& A = a.val();
    if (mode != DiagMask::None && A.rows != A.cols)
        throw ShapeError("softmax: diagonal mask needs a square matrix");
    const S neg_inf = -std::numeric_limits<S>::infinity();
    Mat<S> out(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        S m = neg_inf;
        for (int c = 0; c < A.cols; ++c) {
            S s = A(r, c);
            if (mode == DiagMask::NegInf && c == r) continue;
            if (mode == DiagMask::ZeroLogit && c == r) s = S(0);
            if (std::isfinite(s) && s > m) m = s;
        }
        if (!std::isfinite(m))
            throw MaskedSoftmaxError("softmax row " + std::to_string(r) +
                                     " has no finite entry after masking");
        S denom = 0;
        for (int c = 0; c < A.cols; ++c) {
            S s = A(r, c);
            if (mode == DiagMask::NegInf && c == r) {
                out(r, c) = S(0);
                continue;
            }
            if (mode == DiagMask::ZeroLogit && c == r) s = S(0);
            S e = std::isfinite(s) ? std::exp(s - m) : S(0);
            out(r, c) = e;
            denom += e;
        }
        for (int c = 0; c < A.cols; ++c) out(r, c) /= denom;
    }
    bool ng = t.wants_grad(a.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, oi = v.idx;
    t.node(oi).back = [ai, oi, mode](Tape<S>& tp) {
        if (!tp.wants_grad(ai)) return;
        const Mat<S>& dY = tp.node(oi).grad;
        const Mat<S>& Y = tp.node(oi).val;
        Mat<S>& dA = tp.grad_buf(ai);
        for (int r = 0; r < Y.rows; ++r) {
            S dot = 0;
            for (int c = 0; c < Y.cols; ++c) dot += dY(r, c) * Y(r, c);
            for (int c = 0; c < Y.cols; ++c) {
                if (mode != DiagMask::None && c == r) continue;  // diagonal logit is replaced
                dA(r, c) += Y(r, c) * (dY(r, c) - dot);
            }
        }
    };
    return v;
}

// Row-wise layer norm followed by the affine (gain, shift), both 1 x d.
template <class S>
Var<S> op_layer_norm_rows(Var<S> x, Var<S> gain, Var<S> shift, S eps = S(1e-5)) {
    Tape<S>& t = *x.tape;
    const Mat<S>& X = x.val();
    const int n = X.rows, d = X.cols;
    if (d < 2) throw ShapeError("layer_norm: needs dim >= 2");
    if (gain.rows() != 1 || gain.cols() != d || shift.rows() != 1 || shift.cols() != d)
        throw ShapeError("layer_norm: gain/shift must be 1 x dim");
    auto xhat = std::make_shared<Mat<S>>(n, d);
    auto inv_std = std::make_shared<std::vector<S>>(n);
    Mat<S> out(n, d);
    const Mat<S>& G = gain.val();
    const Mat<S>& B = shift.val();
    for (int r = 0; r < n; ++r) {
        S mu = 0;
        for (int c = 0; c < d; ++c) mu += X(r, c);
        mu /= S(d);
        S var = 0;
        for (int c = 0; c < d; ++c) {
            S dv = X(r, c) - mu;
            var += dv * dv;
        }
        var /= S(d);
        S is = S(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (int c = 0; c < d; ++c) {
            S xh = (X(r, c) - mu) * is;
            (*xhat)(r, c) = xh;
            out(r, c) = G(0, c) * xh + B(0, c);
        }
    }
    bool ng = t.wants_grad(x.idx) || t.wants_grad(gain.idx) || t.wants_grad(shift.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int xi = x.idx, gi = gain.idx, si = shift.idx, oi = v.idx;
    t.node(oi).back = [xi, gi, si, oi, xhat, inv_std](Tape<S>& tp) {
        const Mat<S>& dY = tp.node(oi).grad;
        const Mat<S>& G = tp.node(gi).val;
        const int n = dY.rows, d = dY.cols;
        if (tp.wants_grad(gi)) {
            Mat<S>& dG = tp.grad_buf(gi);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c) dG(0, c) += dY(r, c) * (*xhat)(r, c);
        }
        if (tp.wants_grad(si)) {
            Mat<S>& dB = tp.grad_buf(si);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < d; ++c) dB(0, c) += dY(r, c);
        }
        if (tp.wants_grad(xi)) {
            Mat<S>& dX = tp.grad_buf(xi);
            for (int r = 0; r < n; ++r) {
                S mean_gdy = 0, mean_gdyx = 0;
                for (int c = 0; c < d; ++c) {
                    S gdy = G(0, c) * dY(r, c);
                    mean_gdy += gdy;
                    mean_gdyx += gdy * (*xhat)(r, c);
                }
                mean_gdy /= S(d);
                mean_gdyx /= S(d);
                S is = (*inv_std)[r];
                for (int c = 0; c < d; ++c) {
                    S gdy = G(0, c) * dY(r, c);
                    dX(r, c) += is * (gdy - mean_gdy - (*xhat)(r, c) * mean_gdyx);
                }
            }
        }
    };
    return v;
}

template <class S>
Var<S> op_slice_cols(Var<S> a, int c0, int c1) {
    Tape<S>& t = *a.tape;
    const Mat<S>& A = a.val();
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw ShapeError("slice_cols: bad range");
    Mat<S> out(A.rows, c1 - c0);
    for (int r = 0; r < A.rows; ++r)
        for (int c = c0; c < c1; ++c) out(r, c - c0) = A(r, c);
    bool ng = t.wants_grad(a.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, oi = v.idx;
    t.node(oi).back = [ai, oi, c0](Tape<S>& tp) {
        if (!tp.wants_grad(ai)) return;
        const Mat<S>& dC = tp.node(oi).grad;
        Mat<S>& dA = tp.grad_buf(ai);
        for (int r = 0; r < dC.rows; ++r)
            for (int c = 0; c < dC.cols; ++c) dA(r, c + c0) += dC(r, c);
    };
    return v;
}

template <class S>
Var<S> op_slice_rows(Var<S> a, int r0, int r1) {
    Tape<S>& t = *a.tape;
    const Mat<S>& A = a.val();
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw ShapeError("slice_rows: bad range");
    Mat<S> out(r1 - r0, A.cols);
    for (int r = r0; r < r1; ++r)
        for (int c = 0; c < A.cols; ++c) out(r - r0, c) = A(r, c);
    bool ng = t.wants_grad(a.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, oi = v.idx;
    t.node(oi).back = [ai, oi, r0](Tape<S>& tp) {
        if (!tp.wants_grad(ai)) return;
        const Mat<S>& dC = tp.node(oi).grad;
        Mat<S>& dA = tp.grad_buf(ai);
        for (int r = 0; r < dC.rows; ++r)
            for (int c = 0; c < dC.cols; ++c) dA(r + r0, c) += dC(r, c);
    };
    return v;
}

template <class S>
Var<S> op_concat_cols(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    Tape<S>& t = *parts[0].tape;
    int rows = parts[0].rows();
    int cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p.cols();
    }
    Mat<S> out(rows, cols);
    int off = 0;
    bool ng = false;
    std::vector<int> idxs;
    std::vector<int> offs;
    for (const auto& p : parts) {
        const Mat<S>& P = p.val();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < P.cols; ++c) out(r, off + c) = P(r, c);
        idxs.push_back(p.idx);
        offs.push_back(off);
        off += P.cols;
        ng = ng || t.wants_grad(p.idx);
    }
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int oi = v.idx;
    t.node(oi).back = [idxs, offs, oi](Tape<S>& tp) {
        const Mat<S>& dC = tp.node(oi).grad;
        for (size_t pi = 0; pi < idxs.size(); ++pi) {
            int ai = idxs[pi];
            if (!tp.wants_grad(ai)) continue;
            Mat<S>& dA = tp.grad_buf(ai);
            int off = offs[pi];
            for (int r = 0; r < dC.rows; ++r)
                for (int c = 0; c < dA.cols; ++c) dA(r, c) += dC(r, off + c);
        }
    };
    return v;
}

// out[i] = a.flat[src_index[i]], reshaped to out_rows x out_cols. Used for
// pure reindexing (patch grid -> image plane).
template <class S>
Var<S> op_permute_flat(Var<S> a, std::shared_ptr<const std::vector<int>> src_index, int out_rows,
                       int out_cols) {
    Tape<S>& t = *a.tape;
    const Mat<S>& A = a.val();
    if (src_index->size() != static_cast<size_t>(out_rows) * out_cols)
        throw ShapeError("permute_flat: index size mismatch");
    Mat<S> out(out_rows, out_cols);
    for (size_t k = 0; k < out.size(); ++k) out.a[k] = A.a[(*src_index)[k]];
    bool ng = t.wants_grad(a.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, oi = v.idx;
    t.node(oi).back = [ai, oi, src_index](Tape<S>& tp) {
        if (!tp.wants_grad(ai)) return;
        const Mat<S>& dC = tp.node(oi).grad;
        Mat<S>& dA = tp.grad_buf(ai);
        for (size_t k = 0; k < dC.size(); ++k) dA.a[(*src_index)[k]] += dC.a[k];
    };
    return v;
}

// out[s, :] = emb[assign[s].first, assign[s].second*seg_len : +seg_len]
template <class S>
Var<S> op_gather_segments(Var<S> emb, std::shared_ptr<const std::vector<std::pair<int, int>>> assign,
                          int seg_len) {
    Tape<S>& t = *emb.tape;
    const Mat<S>& E = emb.val();
    Mat<S> out(static_cast<int>(assign->size()), seg_len);
    for (size_t s = 0; s < assign->size(); ++s) {
        auto [stripe, off] = (*assign)[s];
        if (stripe < 0 || stripe >= E.rows || (off + 1) * seg_len > E.cols)
            throw ShapeError("gather_segments: assignment out of range");
        for (int c = 0; c < seg_len; ++c)
            out(static_cast<int>(s), c) = E(stripe, off * seg_len + c);
    }
    bool ng = t.wants_grad(emb.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ei = emb.idx, oi = v.idx;
    t.node(oi).back = [ei, oi, assign, seg_len](Tape<S>& tp) {
        if (!tp.wants_grad(ei)) return;
        const Mat<S>& dC = tp.node(oi).grad;
        Mat<S>& dE = tp.grad_buf(ei);
        for (size_t s = 0; s < assign->size(); ++s) {
            auto [stripe, off] = (*assign)[s];
            for (int c = 0; c < seg_len; ++c)
                dE(stripe, off * seg_len + c) += dC(static_cast<int>(s), c);
        }
    };
    return v;
}

// Separable valid-mode convolution of an H x W plane with a 1-D kernel applied
// along both axes. Output is (H-m+1) x (W-m+1).
template <class S>
Var<S> op_sepconv_valid(Var<S> a, const std::vector<S>& kernel_taps) {
    auto kernel = std::make_shared<const std::vector<S>>(kernel_taps);
    Tape<S>& t = *a.tape;
    const Mat<S>& X = a.val();
    const int m = static_cast<int>(kernel->size());
    const int H = X.rows, W = X.cols;
    if (H < m || W < m) throw ShapeError("sepconv_valid: plane smaller than kernel");
    const int OH = H - m + 1, OW = W - m + 1;
    Mat<S> tmp(H, OW);
    for (int y = 0; y < H; ++y)
        for (int u = 0; u < OW; ++u) {
            S s = 0;
            for (int k = 0; k < m; ++k) s += (*kernel)[k] * X(y, u + k);
            tmp(y, u) = s;
        }
    Mat<S> out(OH, OW);
    for (int v = 0; v < OH; ++v)
        for (int u = 0; u < OW; ++u) {
            S s = 0;
            for (int k = 0; k < m; ++k) s += (*kernel)[k] * tmp(v + k, u);
            out(v, u) = s;
        }
    bool ng = t.wants_grad(a.idx);
    Var<S> v = t.make(std::move(out), ng);
    if (!ng) return v;
    int ai = a.idx, oi = v.idx;
    t.node(oi).back = [ai, oi, kernel, H, W, OH, OW, m](Tape<S>& tp) {
        if (!tp.wants_grad(ai)) return;
        const Mat<S>& dC = tp.node(oi).grad;
        Mat<S>& dA = tp.grad_buf(ai);
        Mat<S> dtmp(H, OW);
        for (int v2 = 0; v2 < OH; ++v2)
            for (int u = 0; u < OW; ++u) {
                S g = dC(v2, u);
                for (int k = 0; k < m; ++k) dtmp(v2 + k, u) += (*kernel)[k] * g;
            }
        for (int y = 0; y < H; ++y)
            for (int u = 0; u < OW; ++u) {
                S g = dtmp(y, u);
                for (int k = 0; k < m; ++k) dA(y, u + k) += (*kernel)[k] * g;
            }
    };
    return v;
}

}  // namespace metal
