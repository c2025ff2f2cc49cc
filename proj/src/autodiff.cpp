#include "psda/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psda/error.hpp"

namespace psda::ad {

namespace {

void check_finite(const char* primitive, const Matrix& m) {
    for (double v : m.data()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite output in primitive '") + primitive +
                               "'");
        }
    }
}

[[noreturn]] void shape_error(const char* primitive, const Matrix& a, const Matrix& b) {
    throw ConfigError(std::string(primitive) + ": shape mismatch " + a.shape_string() +
                      " vs " + b.shape_string());
}

enum class Broadcast { kNone, kRow, kCol, kScalar };

Broadcast broadcast_kind(const char* primitive, const Matrix& a, const Matrix& b) {
    if (a.same_shape(b)) return Broadcast::kNone;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
    shape_error(primitive, a, b);
}

inline std::size_t bindex(Broadcast kind, std::size_t r, std::size_t c, std::size_t cols) {
    switch (kind) {
        case Broadcast::kNone:
            return r * cols + c;
        case Broadcast::kRow:
            return c;
        case Broadcast::kCol:
            return r;
        case Broadcast::kScalar:
            return 0;
    }
    return 0;
}

// Sums a full-shape gradient down to the broadcast operand's shape.
Matrix reduce_to(Broadcast kind, const Matrix& g, const Matrix& like) {
    if (kind == Broadcast::kNone) return g;
    Matrix out(like.rows(), like.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) out[bindex(kind, r, c, g.cols())] += g(r, c);
    return out;
}

template <typename F>
Matrix map(const Matrix& a, F f) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {  // a * b^T
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto br = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
            out(i, j) = s;
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {  // a^T * b
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto ar = a.row(k);
        const auto br = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double av = ar[i];
            if (av == 0.0) continue;
            auto orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * br[j];
        }
    }
    return out;
}

Matrix log_softmax_value(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto in = a.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double s = 0.0;
        for (double v : in) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        auto o = out.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) o[c] = in[c] - lse;
    }
    return out;
}

}  // namespace

Tensor Tensor::leaf(Matrix value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) {
        throw ConfigError("Tensor::item: expected (1 x 1), got " + value().shape_string());
    }
    return value()[0];
}

Tensor Tensor::clone() const { return leaf(value(), requires_grad()); }

Tensor Tape::record(const char* primitive, Matrix value, std::initializer_list<Tensor> inputs,
                    BackwardRule rule) {
    check_finite(primitive, value);
    const bool needs =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    Tensor out = Tensor::leaf(std::move(value), needs);
    if (needs) entries_.push_back({out.node_, std::move(rule)});
    return out;
}

Tensor Tape::record(const char* primitive, Matrix value, const std::vector<Tensor>& inputs,
                    BackwardRule rule) {
    check_finite(primitive, value);
    const bool needs =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    Tensor out = Tensor::leaf(std::move(value), needs);
    if (needs) entries_.push_back({out.node_, std::move(rule)});
    return out;
}

void Tape::accumulate(const Tensor& t, const Matrix& g) {
    if (!t.requires_grad()) return;
    Matrix& dst = t.node_->grad;
    if (dst.empty()) {
        dst = g;
        return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Tape::backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw ConfigError("backward: loss must be (1 x 1), got " + loss.value().shape_string());
    }
    if (entries_.empty()) throw ConfigError("backward: tape is empty");
    accumulate(loss, Matrix(1, 1, 1.0));
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not on a path to the loss
        it->rule(it->output->grad);
    }
    clear();
}

// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = ar[k];
            if (av == 0.0) continue;
            const auto br = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * br[j];
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto in = logits.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double s = 0.0;
        auto o = out.row(r);
        for (std::size_t c = 0; c < logits.cols(); ++c) s += (o[c] = std::exp(in[c] - mx));
        for (double& v : o) v /= s;
    }
    return out;
}

std::vector<std::size_t> argmax_rows(const Matrix& m) {
    std::vector<std::size_t> out(m.rows(), 0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        // max_element returns the first maximum: ties go to the lowest index.
        out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    Matrix value = matmul(a.value(), b.value());
    return tape.record("matmul", std::move(value), {a, b}, [a, b](const Matrix& g) {
        if (a.requires_grad()) Tape::accumulate(a, matmul_nt(g, b.value()));
        if (b.requires_grad()) Tape::accumulate(b, matmul_tn(a.value(), g));
    });
}

Tensor transpose(Tape& tape, const Tensor& a) {
    const Matrix& av = a.value();
    Matrix value(av.cols(), av.rows());
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < av.cols(); ++c) value(c, r) = av(r, c);
    return tape.record("transpose", std::move(value), {a}, [a](const Matrix& g) {
        Matrix ga(g.cols(), g.rows());
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) = g(r, c);
        Tape::accumulate(a, ga);
    });
}

namespace {

Tensor add_impl(Tape& tape, const char* name, const Tensor& a, const Tensor& b, double sign) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    const Broadcast kind = broadcast_kind(name, av, bv);
    Matrix value(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < av.cols(); ++c)
            value(r, c) = av(r, c) + sign * bv[bindex(kind, r, c, av.cols())];
    return tape.record(name, std::move(value), {a, b}, [a, b, kind, sign](const Matrix& g) {
        Tape::accumulate(a, g);
        if (b.requires_grad()) {
            Matrix gb = reduce_to(kind, g, b.value());
            if (sign != 1.0)
                for (double& v : gb.data()) v *= sign;
            Tape::accumulate(b, gb);
        }
    });
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return add_impl(tape, "add", a, b, 1.0); }

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    return add_impl(tape, "sub", a, b, -1.0);
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    const Broadcast kind = broadcast_kind("mul", av, bv);
    Matrix value(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < av.cols(); ++c)
            value(r, c) = av(r, c) * bv[bindex(kind, r, c, av.cols())];
    return tape.record("mul", std::move(value), {a, b}, [a, b, kind](const Matrix& g) {
        const Matrix& av = a.value();
        const Matrix& bv = b.value();
        if (a.requires_grad()) {
            Matrix ga(g.rows(), g.cols());
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c)
                    ga(r, c) = g(r, c) * bv[bindex(kind, r, c, g.cols())];
            Tape::accumulate(a, ga);
        }
        if (b.requires_grad()) {
            Matrix full(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) full[i] = g[i] * av[i];
            Tape::accumulate(b, reduce_to(kind, full, bv));
        }
    });
}

Tensor affine(Tape& tape, const Tensor& a, double s, double shift) {
    Matrix value = map(a.value(), [s, shift](double v) { return s * v + shift; });
    return tape.record("affine", std::move(value), {a}, [a, s](const Matrix& g) {
        Tape::accumulate(a, map(g, [s](double v) { return s * v; }));
    });
}

Tensor neg(Tape& tape, const Tensor& a) { return affine(tape, a, -1.0, 0.0); }

Tensor scale(Tape& tape, const Tensor& a, double s) { return affine(tape, a, s, 0.0); }

Tensor relu(Tape& tape, const Tensor& a) {
    Matrix value = map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
    return tape.record("relu", std::move(value), {a}, [a](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = a.value()[i] > 0.0 ? g[i] : 0.0;
        Tape::accumulate(a, ga);
    });
}

Tensor tanh(Tape& tape, const Tensor& a) {
    Matrix value = map(a.value(), [](double v) { return std::tanh(v); });
    return tape.record("tanh", value, {a}, [a, value](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (1.0 - value[i] * value[i]);
        Tape::accumulate(a, ga);
    });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
    Matrix value = map(a.value(), [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
    return tape.record("sigmoid", value, {a}, [a, value](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * value[i] * (1.0 - value[i]);
        Tape::accumulate(a, ga);
    });
}

Tensor exp(Tape& tape, const Tensor& a) {
    Matrix value = map(a.value(), [](double v) { return std::exp(v); });
    return tape.record("exp", value, {a}, [a, value](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * value[i];
        Tape::accumulate(a, ga);
    });
}

Tensor log(Tape& tape, const Tensor& a) {
    Matrix value = map(a.value(), [](double v) { return std::log(std::max(v, kLogFloor)); });
    return tape.record("log", std::move(value), {a}, [a](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = a.value()[i];
            ga[i] = x > kLogFloor ? g[i] / x : 0.0;
        }
        Tape::accumulate(a, ga);
    });
}

Tensor clamp(Tape& tape, const Tensor& a, double lo, double hi) {
    Matrix value = map(a.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); });
    return tape.record("clamp", std::move(value), {a}, [a, lo, hi](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = a.value()[i];
            ga[i] = (x >= lo && x <= hi) ? g[i] : 0.0;
        }
        Tape::accumulate(a, ga);
    });
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
    Matrix value = softmax_rows(a.value());
    return tape.record("softmax_rows", value, {a}, [a, value](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * value(r, c);
            for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) = value(r, c) * (g(r, c) - dot);
        }
        Tape::accumulate(a, ga);
    });
}

Tensor log_softmax_rows(Tape& tape, const Tensor& a) {
    Matrix value = log_softmax_value(a.value());
    return tape.record("log_softmax_rows", value, {a}, [a, value](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double gsum = 0.0;
            for (std::size_t c = 0; c < g.cols(); ++c) gsum += g(r, c);
            for (std::size_t c = 0; c < g.cols(); ++c)
                ga(r, c) = g(r, c) - std::exp(value(r, c)) * gsum;
        }
        Tape::accumulate(a, ga);
    });
}

Tensor sum_rows(Tape& tape, const Tensor& a) {
    const Matrix& av = a.value();
    Matrix value(av.rows(), 1);
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (double v : av.row(r)) value[r] += v;
    return tape.record("sum_rows", std::move(value), {a}, [a](const Matrix& g) {
        Matrix ga(a.rows(), a.cols());
        for (std::size_t r = 0; r < ga.rows(); ++r)
            for (double& v : ga.row(r)) v = g[r];
        Tape::accumulate(a, ga);
    });
}

Tensor sum(Tape& tape, const Tensor& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return tape.record("sum", Matrix(1, 1, s), {a}, [a](const Matrix& g) {
        Tape::accumulate(a, Matrix(a.rows(), a.cols(), g[0]));
    });
}

Tensor mean(Tape& tape, const Tensor& a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw ConfigError("mean: empty tensor");
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return tape.record("mean", Matrix(1, 1, s / n), {a}, [a, n](const Matrix& g) {
        Tape::accumulate(a, Matrix(a.rows(), a.cols(), g[0] / n));
    });
}

Tensor mean_cols(Tape& tape, const Tensor& a) {
    const Matrix& av = a.value();
    if (av.rows() == 0) throw ConfigError("mean_cols: no rows");
    const double n = static_cast<double>(av.rows());
    Matrix value(1, av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < av.cols(); ++c) value[c] += av(r, c);
    for (double& v : value.data()) v /= n;
    return tape.record("mean_cols", std::move(value), {a}, [a, n](const Matrix& g) {
        Matrix ga(a.rows(), a.cols());
        for (std::size_t r = 0; r < ga.rows(); ++r)
            for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) = g[c] / n;
        Tape::accumulate(a, ga);
    });
}

Tensor l2_normalize_rows(Tape& tape, const Tensor& a) {
    const Matrix& av = a.value();
    Matrix value(av.rows(), av.cols());
    std::vector<double> norms(av.rows());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        double s = 0.0;
        for (double v : av.row(r)) s += v * v;
        norms[r] = std::max(std::sqrt(s), kLogFloor);
        for (std::size_t c = 0; c < av.cols(); ++c) value(r, c) = av(r, c) / norms[r];
    }
    return tape.record("l2_normalize_rows", value, {a}, [a, value, norms](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * value(r, c);
            for (std::size_t c = 0; c < g.cols(); ++c)
                ga(r, c) = (g(r, c) - value(r, c) * dot) / norms[r];
        }
        Tape::accumulate(a, ga);
    });
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ConfigError("concat_rows: no inputs");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
        rows += p.rows();
    }
    Matrix value(rows, cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(),
                  value.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
        offset += p.rows();
    }
    return tape.record("concat_rows", std::move(value), parts, [parts, cols](const Matrix& g) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            if (p.requires_grad()) {
                Matrix gp(p.rows(), cols);
                std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(offset * cols),
                            gp.size(), gp.data().begin());
                Tape::accumulate(p, gp);
            }
            offset += p.rows();
        }
    });
}

Tensor grl(Tape& tape, const Tensor& a, double coefficient) {
    if (coefficient < 0.0) throw ConfigError("grl: coefficient must be nonnegative");
    return tape.record("grl", a.value(), {a}, [a, coefficient](const Matrix& g) {
        Tape::accumulate(a, map(g, [coefficient](double v) { return -coefficient * v; }));
    });
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.value()); }

}  // namespace psda::ad
