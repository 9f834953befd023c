#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "vad/numeric.hpp"

namespace vad {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
};

/// Reverse-mode automatic differentiation over whole tensors.
///
/// Every op evaluates eagerly and, if any operand requires a gradient, pushes
/// a closure that propagates the output gradient to its operands. Parameters
/// are recorded by reference, so the referenced tensors must outlive the tape.
/// Row-broadcasting is supported wherever the second operand has one row.
template <typename T>
class Tape {
public:
    using Mat = Tensor<T>;

    Var constant(Mat value) { return push(std::move(value), nullptr, false); }
    Var constant_ref(const Mat& value) { return push(Mat{}, &value, false); }
    Var variable(Mat value) { return push(std::move(value), nullptr, true); }
    Var parameter(const Mat& value) { return push(Mat{}, &value, true); }

    const Mat& value(Var v) const { return nodes_[v.id].get(); }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    /// Gradient accumulated by the last backward(); zeros if none reached v.
    Mat grad(Var v) const {
        const Node& n = nodes_[v.id];
        if (n.grad.size() == 0) {
            return Mat::Zero(n.get().rows(), n.get().cols());
        }
        return n.grad;
    }

    /// Summed gradient of every node recorded by reference to `param`.
    Mat grad_of(const Mat& param) const {
        Mat out = Mat::Zero(param.rows(), param.cols());
        for (const auto& n : nodes_) {
            if (n.ref == &param && n.grad.size() != 0) {
                out += n.grad;
            }
        }
        return out;
    }

    /// x * w + b, b being 1 x w.cols().
    Var affine(Var x, Var w, Var b) {
        const Mat& xv = value(x);
        const Mat& wv = value(w);
        const Mat& bv = value(b);
        if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
            require_shape(xv.cols(), bv.cols(), wv.rows(), wv.cols(), "tape.affine");
        }
        Mat out(xv.rows(), wv.cols());
        out.noalias() = xv * wv;
        out.rowwise() += bv.row(0);
        const Var y = push(std::move(out), nullptr, any_grad({x, w, b}));
        if (requires_grad(y)) {
            record(y, [x, w, b, y](Tape& t) {
                const Mat& g = t.nodes_[y.id].grad;
                if (t.requires_grad(x)) {
                    Mat gx(g.rows(), t.value(w).rows());
                    gx.noalias() = g * t.value(w).transpose();
                    t.accumulate(x, gx);
                }
                if (t.requires_grad(w)) {
                    Mat gw(t.value(w).rows(), t.value(w).cols());
                    gw.noalias() = t.value(x).transpose() * g;
                    t.accumulate(w, gw);
                }
                if (t.requires_grad(b)) {
                    t.accumulate(b, Mat(column_sums<T>(g)));
                }
            });
        }
        return y;
    }

    /// x * sigmoid(x)
    Var silu(Var x) {
        const Mat& xv = value(x);
        Mat out = xv.unaryExpr([](T v) { return v / (T(1) + std::exp(-v)); });
        const Var y = push(std::move(out), nullptr, requires_grad(x));
        if (requires_grad(y)) {
            record(y, [x, y](Tape& t) {
                const Mat& g = t.nodes_[y.id].grad;
                const Mat& xv = t.value(x);
                Mat gx = g.binaryExpr(xv, [](T gi, T v) {
                    const T s = T(1) / (T(1) + std::exp(-v));
                    return gi * s * (T(1) + v * (T(1) - s));
                });
                t.accumulate(x, gx);
            });
        }
        return y;
    }

    Var relu(Var x) {
        Mat out = value(x).cwiseMax(T(0));
        const Var y = push(std::move(out), nullptr, requires_grad(x));
        if (requires_grad(y)) {
            record(y, [x, y](Tape& t) {
                Mat gx = t.nodes_[y.id].grad.binaryExpr(
                    t.value(x), [](T gi, T v) { return v > T(0) ? gi : T(0); });
                t.accumulate(x, gx);
            });
        }
        return y;
    }

    Var tanh(Var x) {
        Mat out = value(x).array().tanh().matrix();
        const Var y = push(std::move(out), nullptr, requires_grad(x));
        if (requires_grad(y)) {
            record(y, [x, y](Tape& t) {
                const Mat& yv = t.value(y);
                Mat gx = t.nodes_[y.id].grad.binaryExpr(
                    yv, [](T gi, T v) { return gi * (T(1) - v * v); });
                t.accumulate(x, gx);
            });
        }
        return y;
    }

    /// Elementwise product; b may be a single row broadcast over a's rows.
    Var mul(Var a, Var b) {
        const Mat& av = value(a);
        const Mat& bv = value(b);
        check_broadcast(av, bv, "tape.mul");
        Mat out = bv.rows() == av.rows() ? Mat(av.cwiseProduct(bv))
                                         : Mat(av.array().rowwise() * bv.row(0).array());
        const Var y = push(std::move(out), nullptr, any_grad({a, b}));
        if (requires_grad(y)) {
            record(y, [a, b, y](Tape& t) {
                const Mat& g = t.nodes_[y.id].grad;
                const Mat& av = t.value(a);
                const Mat& bv = t.value(b);
                const bool broadcast = bv.rows() != av.rows();
                if (t.requires_grad(a)) {
                    Mat ga = broadcast ? Mat(g.array().rowwise() * bv.row(0).array())
                                       : Mat(g.cwiseProduct(bv));
                    t.accumulate(a, ga);
                }
                if (t.requires_grad(b)) {
                    Mat prod = g.cwiseProduct(av);
                    t.accumulate(b, broadcast ? Mat(column_sums<T>(prod)) : prod);
                }
            });
        }
        return y;
    }

    /// Elementwise sum; b may be a single row broadcast over a's rows.
    Var add(Var a, Var b) {
        const Mat& av = value(a);
        const Mat& bv = value(b);
        check_broadcast(av, bv, "tape.add");
        Mat out = bv.rows() == av.rows() ? Mat(av + bv) : Mat(av.rowwise() + bv.row(0));
        const Var y = push(std::move(out), nullptr, any_grad({a, b}));
        if (requires_grad(y)) {
            record(y, [a, b, y](Tape& t) {
                const Mat& g = t.nodes_[y.id].grad;
                const bool broadcast = t.value(b).rows() != t.value(a).rows();
                if (t.requires_grad(a)) {
                    t.accumulate(a, g);
                }
                if (t.requires_grad(b)) {
                    t.accumulate(b, broadcast ? Mat(column_sums<T>(g)) : g);
                }
            });
        }
        return y;
    }

    /// Row i multiplied by the constant scale[i].
    Var scale_rows(Var x, std::vector<T> scale) {
        const Mat& xv = value(x);
        if (static_cast<Eigen::Index>(scale.size()) != xv.rows()) {
            require_shape(xv.rows(), 1, static_cast<Eigen::Index>(scale.size()), 1,
                          "tape.scale_rows");
        }
        Mat out = xv;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            out.row(i) *= scale[static_cast<std::size_t>(i)];
        }
        const Var y = push(std::move(out), nullptr, requires_grad(x));
        if (requires_grad(y)) {
            record(y, [x, y, s = std::move(scale)](Tape& t) {
                Mat gx = t.nodes_[y.id].grad;
                for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                    gx.row(i) *= s[static_cast<std::size_t>(i)];
                }
                t.accumulate(x, gx);
            });
        }
        return y;
    }

    /// 1x1 result: sum_i weight[i] * sum_j x(i,j)^2, accumulated in double.
    Var weighted_sum_squares(Var x, std::vector<double> weight) {
        const Mat& xv = value(x);
        if (static_cast<Eigen::Index>(weight.size()) != xv.rows()) {
            require_shape(xv.rows(), 1, static_cast<Eigen::Index>(weight.size()), 1,
                          "tape.weighted_sum_squares");
        }
        double acc = 0.0;
        for (Eigen::Index i = 0; i < xv.rows(); ++i) {
            double row = 0.0;
            for (Eigen::Index j = 0; j < xv.cols(); ++j) {
                const double v = static_cast<double>(xv(i, j));
                row += v * v;
            }
            acc += weight[static_cast<std::size_t>(i)] * row;
        }
        Mat out(1, 1);
        out(0, 0) = static_cast<T>(acc);
        const Var y = push(std::move(out), nullptr, requires_grad(x));
        if (requires_grad(y)) {
            record(y, [x, y, w = std::move(weight)](Tape& t) {
                const T g = t.nodes_[y.id].grad(0, 0);
                Mat gx = t.value(x);
                for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                    gx.row(i) *= static_cast<T>(2.0 * w[static_cast<std::size_t>(i)]) * g;
                }
                t.accumulate(x, gx);
            });
        }
        return y;
    }

    /// 1x1 sum of all entries.
    Var sum(Var x) {
        Mat out(1, 1);
        out(0, 0) = static_cast<T>(total_sum<T>(value(x)));
        const Var y = push(std::move(out), nullptr, requires_grad(x));
        if (requires_grad(y)) {
            record(y, [x, y](Tape& t) {
                const Mat& xv = t.value(x);
                t.accumulate(x, Mat::Constant(xv.rows(), xv.cols(), t.nodes_[y.id].grad(0, 0)));
            });
        }
        return y;
    }

    /// Propagates seed_grad (shaped like out) back to every recorded operand.
    void backward(Var out, const Mat& seed_grad) {
        if (nodes_.empty()) {
            throw UsageError("backward: tape is empty");
        }
        const Mat& ov = value(out);
        require_shape(ov.rows(), ov.cols(), seed_grad.rows(), seed_grad.cols(), "backward seed");
        for (auto& n : nodes_) {
            n.grad.resize(0, 0);
        }
        nodes_[out.id].grad = seed_grad;
        for (std::size_t i = out.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward && n.grad.size() != 0) {
                n.backward(*this);
            }
        }
    }

private:
    struct Node {
        Mat owned;
        const Mat* ref = nullptr;
        Mat grad;
        bool requires_grad = false;
        std::function<void(Tape&)> backward;

        const Mat& get() const { return ref != nullptr ? *ref : owned; }
    };

    Var push(Mat value, const Mat* ref, bool requires_grad) {
        Node n;
        n.owned = std::move(value);
        n.ref = ref;
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    void record(Var y, std::function<void(Tape&)> fn) { nodes_[y.id].backward = std::move(fn); }

    bool any_grad(std::initializer_list<Var> vars) const {
        for (Var v : vars) {
            if (nodes_[v.id].requires_grad) {
                return true;
            }
        }
        return false;
    }

    void accumulate(Var v, const Mat& g) {
        Node& n = nodes_[v.id];
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    static void check_broadcast(const Mat& a, const Mat& b, const char* what) {
        if (b.cols() != a.cols() || (b.rows() != a.rows() && b.rows() != 1)) {
            require_shape(a.rows(), a.cols(), b.rows(), b.cols(), what);
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace vad
