#include "ihan/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "ihan/errors.hpp"

namespace ihan {

namespace {
constexpr double kBceEps = 1e-12;
}

Var Tape::record(Tensor value, bool needs_grad, std::function<void(Tape&, int)> backprop) {
    Var v{static_cast<int>(values_.size()), value.rows(), value.cols()};
    values_.push_back(std::move(value));
    grads_.emplace_back();
    nodes_.push_back(Node{std::move(backprop), needs_grad});
    return v;
}

Tensor& Tape::grad_buf(int idx) {
    if (grads_[idx].empty()) {
        grads_[idx] = Tensor(values_[idx].rows(), values_[idx].cols());
    }
    return grads_[idx];
}

const Tensor& Tape::grad(Var v) const {
    static const Tensor empty;
    return grads_[v.idx].empty() ? empty : grads_[v.idx];
}

bool Tape::any_needs_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs) {
        if (nodes_[v.idx].needs_grad) return true;
    }
    return false;
}

void Tape::check_compatible(Var a, Var b, const char* op) const {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw DimensionError(std::string(op) + ": shapes " + values_[a.idx].shape_str() + " and " +
                             values_[b.idx].shape_str() + " differ");
    }
}

Var Tape::leaf(const Tensor& value) {
    return record(value, true, nullptr);
}

Var Tape::constant(const Tensor& value) {
    return record(value, false, nullptr);
}

Var Tape::matmul(Var a, Var b) {
    Tensor out = ihan::matmul(values_[a.idx], values_[b.idx]);
    bool ng = any_needs_grad({a, b});
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a, b](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        const Tensor& av = t.values_[a.idx];
        const Tensor& bv = t.values_[b.idx];
        const int m = av.rows(), k = av.cols(), n = bv.cols();
        if (t.nodes_[a.idx].needs_grad) {
            Tensor& da = t.grad_buf(a.idx); // da(i,p) += sum_j g(i,j) b(p,j)
            for (int i = 0; i < m; ++i) {
                const double* grow = g.data() + static_cast<std::size_t>(i) * n;
                double* darow = da.data() + static_cast<std::size_t>(i) * k;
                for (int p = 0; p < k; ++p) {
                    const double* brow = bv.data() + static_cast<std::size_t>(p) * n;
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    darow[p] += acc;
                }
            }
        }
        if (t.nodes_[b.idx].needs_grad) {
            Tensor& db = t.grad_buf(b.idx); // db(p,j) += sum_i a(i,p) g(i,j)
            for (int i = 0; i < m; ++i) {
                const double* arow = av.data() + static_cast<std::size_t>(i) * k;
                const double* grow = g.data() + static_cast<std::size_t>(i) * n;
                for (int p = 0; p < k; ++p) {
                    const double ap = arow[p];
                    if (ap == 0.0) continue;
                    double* dbrow = db.data() + static_cast<std::size_t>(p) * n;
                    for (int j = 0; j < n; ++j) dbrow[j] += ap * grow[j];
                }
            }
        }
    }));
}

Var Tape::add(Var a, Var b) {
    check_compatible(a, b, "add");
    Tensor out = values_[a.idx];
    out.add_scaled(values_[b.idx], 1.0);
    bool ng = any_needs_grad({a, b});
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a, b](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        if (t.nodes_[a.idx].needs_grad) t.grad_buf(a.idx).add_scaled(g, 1.0);
        if (t.nodes_[b.idx].needs_grad) t.grad_buf(b.idx).add_scaled(g, 1.0);
    }));
}

Var Tape::sub(Var a, Var b) {
    check_compatible(a, b, "sub");
    Tensor out = values_[a.idx];
    out.add_scaled(values_[b.idx], -1.0);
    bool ng = any_needs_grad({a, b});
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a, b](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        if (t.nodes_[a.idx].needs_grad) t.grad_buf(a.idx).add_scaled(g, 1.0);
        if (t.nodes_[b.idx].needs_grad) t.grad_buf(b.idx).add_scaled(g, -1.0);
    }));
}

Var Tape::hadamard(Var a, Var b) {
    check_compatible(a, b, "hadamard");
    Tensor out = values_[a.idx];
    const Tensor& bv = values_[b.idx];
    for (int i = 0; i < out.size(); ++i) out[i] *= bv[i];
    bool ng = any_needs_grad({a, b});
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a, b](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        const Tensor& av = t.values_[a.idx];
        const Tensor& bv2 = t.values_[b.idx];
        if (t.nodes_[a.idx].needs_grad) {
            Tensor& da = t.grad_buf(a.idx);
            for (int i = 0; i < g.size(); ++i) da[i] += g[i] * bv2[i];
        }
        if (t.nodes_[b.idx].needs_grad) {
            Tensor& db = t.grad_buf(b.idx);
            for (int i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
        }
    }));
}

Var Tape::scale(Var a, double s) {
    Tensor out = values_[a.idx];
    out.scale_inplace(s);
    bool ng = nodes_[a.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a, s](Tape& t, int self) {
        t.grad_buf(a.idx).add_scaled(t.grads_[self], s);
    }));
}

Var Tape::sigmoid(Var a) {
    Tensor out = values_[a.idx];
    for (int i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    bool ng = nodes_[a.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        const Tensor& y = t.values_[self];
        Tensor& da = t.grad_buf(a.idx);
        for (int i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
    }));
}

Var Tape::tanh_op(Var a) {
    Tensor out = values_[a.idx];
    for (int i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    bool ng = nodes_[a.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        const Tensor& y = t.values_[self];
        Tensor& da = t.grad_buf(a.idx);
        for (int i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
    }));
}

Var Tape::one_minus(Var a) {
    Tensor out = values_[a.idx];
    for (int i = 0; i < out.size(); ++i) out[i] = 1.0 - out[i];
    bool ng = nodes_[a.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a](Tape& t, int self) {
        t.grad_buf(a.idx).add_scaled(t.grads_[self], -1.0);
    }));
}

Var Tape::masked_softmax(Var scores, const std::vector<bool>& mask) {
    const Tensor& s = values_[scores.idx];
    if (s.rows() != 1) {
        throw DimensionError("masked_softmax: expected a 1xn row, got " + s.shape_str());
    }
    if (static_cast<int>(mask.size()) != s.cols()) {
        throw DimensionError("masked_softmax: mask length " + std::to_string(mask.size()) +
                             " does not match row " + s.shape_str());
    }
    int n_active = 0;
    double max_v = 0.0;
    for (int j = 0; j < s.cols(); ++j) {
        if (!mask[j]) continue;
        if (n_active == 0 || s(0, j) > max_v) max_v = s(0, j);
        ++n_active;
    }
    if (n_active == 0) {
        throw DegenerateInputError("masked_softmax: all positions masked out");
    }
    Tensor out(1, s.cols());
    double sum = 0.0;
    for (int j = 0; j < s.cols(); ++j) {
        if (!mask[j]) continue;
        out(0, j) = std::exp(s(0, j) - max_v);
        sum += out(0, j);
    }
    for (int j = 0; j < s.cols(); ++j) {
        if (mask[j]) out(0, j) /= sum;
    }
    bool ng = nodes_[scores.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([scores, mask](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        const Tensor& y = t.values_[self];
        Tensor& ds = t.grad_buf(scores.idx);
        double dot = 0.0;
        for (int j = 0; j < g.cols(); ++j) {
            if (mask[j]) dot += g(0, j) * y(0, j);
        }
        for (int j = 0; j < g.cols(); ++j) {
            if (mask[j]) ds(0, j) += y(0, j) * (g(0, j) - dot);
        }
    }));
}

Var Tape::concat_row(const std::vector<Var>& scalars) {
    if (scalars.empty()) {
        throw DegenerateInputError("concat_row: no entries");
    }
    Tensor out(1, static_cast<int>(scalars.size()));
    bool ng = false;
    for (std::size_t j = 0; j < scalars.size(); ++j) {
        const Var v = scalars[j];
        if (v.rows != 1 || v.cols != 1) {
            throw DimensionError("concat_row: entry " + std::to_string(j) + " has shape " +
                                 values_[v.idx].shape_str() + ", expected 1x1");
        }
        out(0, static_cast<int>(j)) = values_[v.idx](0, 0);
        ng = ng || nodes_[v.idx].needs_grad;
    }
    return record(std::move(out), ng,
                  !ng ? nullptr : std::function<void(Tape&, int)>([scalars](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        for (std::size_t j = 0; j < scalars.size(); ++j) {
            const Var v = scalars[j];
            if (t.nodes_[v.idx].needs_grad) t.grad_buf(v.idx)(0, 0) += g(0, static_cast<int>(j));
        }
    }));
}

Var Tape::concat_cols(const std::vector<Var>& columns) {
    if (columns.empty()) {
        throw DegenerateInputError("concat_cols: no columns");
    }
    const int d = columns[0].rows;
    Tensor out(d, static_cast<int>(columns.size()));
    bool ng = false;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const Var v = columns[j];
        if (v.cols != 1 || v.rows != d) {
            throw DimensionError("concat_cols: column " + std::to_string(j) + " has shape " +
                                 values_[v.idx].shape_str() + ", expected " + std::to_string(d) + "x1");
        }
        const Tensor& cv = values_[v.idx];
        for (int i = 0; i < d; ++i) out(i, static_cast<int>(j)) = cv(i, 0);
        ng = ng || nodes_[v.idx].needs_grad;
    }
    return record(std::move(out), ng,
                  !ng ? nullptr : std::function<void(Tape&, int)>([columns, d](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        for (std::size_t j = 0; j < columns.size(); ++j) {
            const Var v = columns[j];
            if (!t.nodes_[v.idx].needs_grad) continue;
            Tensor& dc = t.grad_buf(v.idx);
            for (int i = 0; i < d; ++i) dc(i, 0) += g(i, static_cast<int>(j));
        }
    }));
}

Var Tape::transpose(Var a) {
    const Tensor& av = values_[a.idx];
    Tensor out(av.cols(), av.rows());
    for (int i = 0; i < av.rows(); ++i) {
        for (int j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
    }
    bool ng = nodes_[a.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([a](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        Tensor& da = t.grad_buf(a.idx);
        for (int i = 0; i < g.rows(); ++i) {
            for (int j = 0; j < g.cols(); ++j) da(j, i) += g(i, j);
        }
    }));
}

Var Tape::pick_col(Var matrix, int col) {
    const Tensor& m = values_[matrix.idx];
    if (col < 0 || col >= m.cols()) {
        throw DimensionError("pick_col: column " + std::to_string(col) + " out of range for " + m.shape_str());
    }
    Tensor out(m.rows(), 1);
    for (int i = 0; i < m.rows(); ++i) out(i, 0) = m(i, col);
    bool ng = nodes_[matrix.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([matrix, col](Tape& t, int self) {
        const Tensor& g = t.grads_[self];
        Tensor& dm = t.grad_buf(matrix.idx);
        for (int i = 0; i < g.rows(); ++i) dm(i, col) += g(i, 0);
    }));
}

Var Tape::bce(Var y_hat, double y) {
    if (y_hat.rows != 1 || y_hat.cols != 1) {
        throw DimensionError("bce: prediction must be 1x1, got " + values_[y_hat.idx].shape_str());
    }
    if (y != 0.0 && y != 1.0) {
        throw DegenerateInputError("bce: label must be 0 or 1");
    }
    double p = values_[y_hat.idx](0, 0);
    p = std::min(std::max(p, kBceEps), 1.0 - kBceEps);
    Tensor out = Tensor::scalar(-(y * std::log(p) + (1.0 - y) * std::log(1.0 - p)));
    bool ng = nodes_[y_hat.idx].needs_grad;
    return record(std::move(out), ng, !ng ? nullptr : std::function<void(Tape&, int)>([y_hat, y, p](Tape& t, int self) {
        const double g = t.grads_[self](0, 0);
        t.grad_buf(y_hat.idx)(0, 0) += g * (p - y) / (p * (1.0 - p));
    }));
}

void Tape::backward(Var loss) {
    if (backward_done_) {
        throw std::logic_error("Tape::backward called twice");
    }
    backward_done_ = true;
    if (loss.rows != 1 || loss.cols != 1) {
        throw DimensionError("backward: loss must be 1x1, got " + values_[loss.idx].shape_str());
    }
    grad_buf(loss.idx)(0, 0) = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        if (grads_[i].empty() || !nodes_[i].needs_grad) continue;
        if (nodes_[i].backprop) nodes_[i].backprop(*this, i);
    }
    // every trainable leaf ends up with a gradient of its own shape, even if
    // it never reached the loss
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].needs_grad && !nodes_[i].backprop) grad_buf(static_cast<int>(i));
    }
}

} // namespace ihan
