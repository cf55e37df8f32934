#include "canids/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "canids/error.hpp"
#include "canids/nn/kernels.hpp"

namespace canids::nn {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

Tape& same_tape(Var a, Var b, const char* op) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape())
        throw StateError(std::string(op) + ": operands belong to different tapes");
    return *a.tape();
}

// Records a unary element-wise op given forward f(x) and derivative df(x, y).
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
    Tape& t = *a.tape();
    const Matrix& x = a.value();
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const auto ia = a.id();
    return t.record(std::move(y), a.requires_grad(), [ia, df](Tape& t, std::uint32_t self) {
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op, bool allow_col) {
    if (a.same_shape(b)) return Broadcast::Same;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    if (allow_col && b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
    if (allow_col && b.size() == 1) return Broadcast::Scalar;
    shape_error(op, a, b);
}

std::size_t bindex(Broadcast kind, std::size_t r, std::size_t c, std::size_t cols) {
    switch (kind) {
        case Broadcast::Same: return r * cols + c;
        case Broadcast::Row: return c;
        case Broadcast::Col: return r;
        case Broadcast::Scalar: return 0;
    }
    return 0;
}

void check_index(const Index& idx, std::size_t bound, const char* op) {
    for (auto i : idx)
        if (i >= bound)
            throw DimensionError(std::string(op) + ": index " + std::to_string(i) + " out of range " + std::to_string(bound));
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul");
    const Matrix& x = a.value();
    const Matrix& w = b.value();
    if (x.cols() != w.rows()) shape_error("matmul", x, w);
    Matrix y(x.rows(), w.cols());
    kernels::gemm_nn(x, w, y);
    const auto ia = a.id(), ib = b.id();
    return t.record(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) kernels::gemm_nt(g, t.value(ib), t.grad_ref(ia));
        if (t.requires_grad(ib)) kernels::gemm_tn(t.value(ia), g, t.grad_ref(ib));
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape();
    const Matrix& x = a.value();
    Matrix y(x.cols(), x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) y(c, r) = x(r, c);
    const auto ia = a.id();
    return t.record(std::move(y), a.requires_grad(), [ia](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < ga.rows(); ++r)
            for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(c, r);
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    const Matrix& x = a.value();
    const Matrix& z = b.value();
    const auto kind = broadcast_kind(x, z, "add", true);
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) + z[bindex(kind, r, c, x.cols())];
    const auto ia = a.id(), ib = b.id();
    return t.record(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib, kind](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) t.grad_ref(ia) += g;
        if (t.requires_grad(ib)) {
            Matrix& gb = t.grad_ref(ib);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) gb[bindex(kind, r, c, g.cols())] += g(r, c);
        }
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b, "sub");
    const Matrix& x = a.value();
    const Matrix& z = b.value();
    if (!x.same_shape(z)) shape_error("sub", x, z);
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - z[i];
    const auto ia = a.id(), ib = b.id();
    return t.record(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) t.grad_ref(ia) += g;
        if (t.requires_grad(ib)) kernels::axpy(-1.0, g, t.grad_ref(ib));
    });
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b, "mul");
    const Matrix& x = a.value();
    const Matrix& z = b.value();
    const auto kind = broadcast_kind(x, z, "mul", false);
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) * z[bindex(kind, r, c, x.cols())];
    const auto ia = a.id(), ib = b.id();
    return t.record(std::move(y), a.requires_grad() || b.requires_grad(), [ia, ib, kind](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ia);
        const Matrix& z = t.value(ib);
        const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) {
                const auto j = bindex(kind, r, c, g.cols());
                if (need_a) t.grad_ref(ia)(r, c) += g(r, c) * z[j];
                if (need_b) t.grad_ref(ib)[j] += g(r, c) * x(r, c);
            }
    });
}

Var scale(Var a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double value) {
    return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    Tape& t = *parts[0].tape();
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    bool rg = false;
    std::vector<std::uint32_t> ids;
    for (const auto& p : parts) {
        if (p.tape() != &t) throw StateError("concat_cols: operands belong to different tapes");
        if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
        cols += p.cols();
        rg = rg || p.requires_grad();
        ids.push_back(p.id());
    }
    Matrix y(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Matrix& x = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) y(r, off + c) = x(r, c);
        off += x.cols();
    }
    return t.record(std::move(y), rg, [ids](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        std::size_t off = 0;
        for (auto id : ids) {
            const std::size_t w = t.value(id).cols();
            if (t.requires_grad(id)) {
                Matrix& gi = t.grad_ref(id);
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < w; ++c) gi(r, c) += g(r, off + c);
            }
            off += w;
        }
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Matrix& x = a.value();
    if (begin > end || end > x.cols())
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") outside " + x.shape_string());
    Matrix y(x.rows(), end - begin);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = begin; c < end; ++c) y(r, c - begin) = x(r, c);
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, begin](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
    });
}

Var sum(Var a) {
    const Matrix& x = a.value();
    double s = 0.0;
    for (auto v : x.values()) s += v;
    const auto ia = a.id();
    return a.tape()->record(Matrix::scalar(s), a.requires_grad(), [ia](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        for (auto& v : t.grad_ref(ia).values()) v += g;
    });
}

Var mean(Var a) {
    const auto n = static_cast<double>(a.value().size());
    if (n == 0) throw DimensionError("mean: empty input");
    return scale(sum(a), 1.0 / n);
}

Var sum_rows(Var a) {
    const Matrix& x = a.value();
    Matrix y(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) y[c] += x(r, c);
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < ga.rows(); ++r)
            for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c];
    });
}

Var mean_rows(Var a) {
    if (a.rows() == 0) throw DimensionError("mean_rows: empty input");
    return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var sum_cols(Var a) {
    const Matrix& x = a.value();
    Matrix y(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) y[r] += x(r, c);
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < ga.rows(); ++r)
            for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[r];
    });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(Var a, double slope) {
    return unary(a, [slope](double x) { return x > 0 ? x : slope * x; },
                 [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var elu(Var a, double alpha) {
    return unary(a, [alpha](double x) { return x > 0 ? x : alpha * std::expm1(x); },
                 [alpha](double x, double y) { return x > 0 ? 1.0 : y + alpha; });
}

Var clamp(Var a, double lo, double hi) {
    return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax(Var a, Axis axis) {
    const Matrix& x = a.value();
    Matrix y(x.rows(), x.cols());
    const bool per_row = axis == Axis::Cols;
    const std::size_t outer = per_row ? x.rows() : x.cols();
    const std::size_t inner = per_row ? x.cols() : x.rows();
    auto at = [per_row](auto& m, std::size_t o, std::size_t i) -> decltype(m(0, 0)) {
        return per_row ? m(o, i) : m(i, o);
    };
    for (std::size_t o = 0; o < outer; ++o) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, at(x, o, i));
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) s += (at(y, o, i) = std::exp(at(x, o, i) - mx));
        for (std::size_t i = 0; i < inner; ++i) at(y, o, i) /= s;
    }
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, per_row, outer, inner](Tape& t, std::uint32_t self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t o = 0; o < outer; ++o) {
            double dot = 0.0;
            for (std::size_t i = 0; i < inner; ++i) dot += per_row ? g(o, i) * y(o, i) : g(i, o) * y(i, o);
            for (std::size_t i = 0; i < inner; ++i) {
                if (per_row)
                    ga(o, i) += y(o, i) * (g(o, i) - dot);
                else
                    ga(i, o) += y(i, o) * (g(i, o) - dot);
            }
        }
    });
}

Var log_softmax(Var a) {
    const Matrix& x = a.value();
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += std::exp(x(r, c) - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) - lse;
    }
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia](Tape& t, std::uint32_t self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) gs += g(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
        }
    });
}

Var gather_rows(Var a, const Index& rows) {
    const Matrix& x = a.value();
    check_index(rows, x.rows(), "gather_rows");
    Matrix y(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = x.row(rows[i]);
        std::copy(src.begin(), src.end(), y.row(i).begin());
    }
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, rows](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto dst = ga.row(rows[i]);
            auto src = g.row(i);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
    });
}

Var scatter_add_rows(Var a, const Index& rows, std::size_t count) {
    const Matrix& x = a.value();
    if (rows.size() != x.rows())
        throw DimensionError("scatter_add_rows: " + std::to_string(rows.size()) + " targets for " + x.shape_string());
    check_index(rows, count, "scatter_add_rows");
    Matrix y(count, x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto dst = y.row(rows[i]);
        auto src = x.row(i);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, rows](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto dst = ga.row(i);
            auto src = g.row(rows[i]);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
    });
}

Var pick(Var a, const Index& columns) {
    const Matrix& x = a.value();
    if (columns.size() != x.rows())
        throw DimensionError("pick: " + std::to_string(columns.size()) + " columns for " + x.shape_string());
    check_index(columns, x.cols(), "pick");
    Matrix y(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) y[r] = x(r, columns[r]);
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, columns](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < columns.size(); ++r) ga(r, columns[r]) += g[r];
    });
}

Var block_sum(Var a, std::size_t blocks) {
    const Matrix& x = a.value();
    if (blocks == 0 || x.cols() % blocks != 0)
        throw DimensionError("block_sum: " + x.shape_string() + " not divisible into " + std::to_string(blocks) + " blocks");
    const std::size_t width = x.cols() / blocks;
    Matrix y(x.rows(), blocks);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t h = 0; h < blocks; ++h) {
            double s = 0.0;
            for (std::size_t f = 0; f < width; ++f) s += x(r, h * width + f);
            y(r, h) = s;
        }
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, blocks, width](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t h = 0; h < blocks; ++h)
                for (std::size_t f = 0; f < width; ++f) ga(r, h * width + f) += g(r, h);
    });
}

Var block_scale(Var a, Var s) {
    Tape& t = same_tape(a, s, "block_scale");
    const Matrix& x = a.value();
    const Matrix& w = s.value();
    if (w.rows() != x.rows() || w.cols() == 0 || x.cols() % w.cols() != 0) shape_error("block_scale", x, w);
    const std::size_t blocks = w.cols(), width = x.cols() / blocks;
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t h = 0; h < blocks; ++h)
            for (std::size_t f = 0; f < width; ++f) y(r, h * width + f) = x(r, h * width + f) * w(r, h);
    const auto ia = a.id(), is = s.id();
    return t.record(std::move(y), a.requires_grad() || s.requires_grad(),
                    [ia, is, blocks, width](Tape& t, std::uint32_t self) {
                        const Matrix& g = t.grad(self);
                        const Matrix& x = t.value(ia);
                        const Matrix& w = t.value(is);
                        const bool need_a = t.requires_grad(ia), need_s = t.requires_grad(is);
                        for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t h = 0; h < blocks; ++h) {
                                double acc = 0.0;
                                for (std::size_t f = 0; f < width; ++f) {
                                    const auto c = h * width + f;
                                    if (need_a) t.grad_ref(ia)(r, c) += g(r, c) * w(r, h);
                                    acc += g(r, c) * x(r, c);
                                }
                                if (need_s) t.grad_ref(is)(r, h) += acc;
                            }
                    });
}

Var block_mean(Var a, std::size_t blocks) {
    const Matrix& x = a.value();
    if (blocks == 0 || x.cols() % blocks != 0)
        throw DimensionError("block_mean: " + x.shape_string() + " not divisible into " + std::to_string(blocks) + " blocks");
    const std::size_t width = x.cols() / blocks;
    const double inv = 1.0 / static_cast<double>(blocks);
    Matrix y(x.rows(), width);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t f = 0; f < width; ++f) {
            double s = 0.0;
            for (std::size_t h = 0; h < blocks; ++h) s += x(r, h * width + f);
            y(r, f) = s * inv;
        }
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, blocks, width, inv](Tape& t, std::uint32_t self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t h = 0; h < blocks; ++h)
                for (std::size_t f = 0; f < width; ++f) ga(r, h * width + f) += g(r, f) * inv;
    });
}

Var segment_softmax(Var a, const Index& segments, std::size_t count) {
    const Matrix& x = a.value();
    if (segments.size() != x.rows())
        throw DimensionError("segment_softmax: " + std::to_string(segments.size()) + " segment ids for " + x.shape_string());
    check_index(segments, count, "segment_softmax");
    const std::size_t cols = x.cols();
    Matrix mx(count, cols, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) mx(segments[r], c) = std::max(mx(segments[r], c), x(r, c));
    Matrix y(x.rows(), cols);
    Matrix denom(count, cols);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) denom(segments[r], c) += (y(r, c) = std::exp(x(r, c) - mx(segments[r], c)));
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) y(r, c) /= denom(segments[r], c);
    const auto ia = a.id();
    return a.tape()->record(std::move(y), a.requires_grad(), [ia, segments, count](Tape& t, std::uint32_t self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_ref(ia);
        Matrix dot(count, y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r)
            for (std::size_t c = 0; c < y.cols(); ++c) dot(segments[r], c) += g(r, c) * y(r, c);
        for (std::size_t r = 0; r < y.rows(); ++r)
            for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot(segments[r], c));
    });
}

}  // namespace canids::nn
