#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "canids/nn/tape.hpp"

namespace canids::nn {

using Index = std::vector<std::uint32_t>;

enum class Axis { Rows, Cols };  // softmax over each row (Cols) or each column (Rows)

// Element-wise and linear-algebra ops. Every op records an exact analytic backward.
// Shape mismatches raise DimensionError naming the op and the offending shapes.

Var matmul(Var a, Var b);
Var transpose(Var a);

// b may match a's shape, be a 1xC row (broadcast down rows), an Rx1 column
// (broadcast across columns) or a 1x1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);  // same shapes only
// b may match a's shape or be a 1xC row.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);

Var sum(Var a);        // -> 1x1
Var mean(Var a);       // -> 1x1
Var sum_rows(Var a);   // column sums -> 1xC
Var mean_rows(Var a);  // column means -> 1xC
Var sum_cols(Var a);   // row sums -> Rx1

Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope);
Var elu(Var a, double alpha = 1.0);
Var clamp(Var a, double lo, double hi);  // zero gradient where clamped

Var softmax(Var a, Axis axis = Axis::Cols);
Var log_softmax(Var a);  // per row

Var gather_rows(Var a, const Index& rows);                         // out[i] = a[rows[i]]
Var scatter_add_rows(Var a, const Index& rows, std::size_t count);  // out[rows[i]] += a[i]
Var pick(Var a, const Index& columns);                             // out[i] = a[i, columns[i]], Rx1

// Multi-head helpers. An RxHF matrix is viewed as H contiguous blocks of F columns.
Var block_sum(Var a, std::size_t blocks);   // RxHF -> RxH, sum inside each block
Var block_scale(Var a, Var s);              // RxHF * RxH -> RxHF, block h scaled by s[:, h]
Var block_mean(Var a, std::size_t blocks);  // RxHF -> RxF, mean across blocks

// Softmax over rows that share a segment id, independently per column.
Var segment_softmax(Var a, const Index& segments, std::size_t count);

}  // namespace canids::nn
