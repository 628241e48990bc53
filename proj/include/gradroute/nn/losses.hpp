#pragma once

#include <cstdint>

#include "gradroute/core/ops.hpp"

namespace gradroute {

// Pixel-wise mean absolute error, averaged over every element.
template <class T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape != target.shape)
        throw usage_error("mae_loss: shape mismatch " + shape_str(pred.shape) + " vs " +
                          shape_str(target.shape));
    return mean_all(abs(sub(pred, target)));
}

// Mean over the batch of the L1 norm of each encoding row.
template <class T>
Tensor<T> l1_penalty(const Tensor<T>& encoding) {
    if (encoding.shape.size() != 2)
        throw usage_error("l1_penalty: expected 2-D encoding, got " + shape_str(encoding.shape));
    T inv_n = T(1) / T(encoding.shape[0]);
    return scale(sum_all(abs(encoding)), inv_n);
}

// Sum of absolute-correlation statistics between every (top-half, bottom-half)
// column pair of the encoding, normalized by the number of pairs. The numerator
// uses absolute deviations; each square-root denominator gets +eps to guard
// zero-variance columns.
template <class T>
Tensor<T> correlation_penalty(const Tensor<T>& encoding, size_t split_index, T eps = T(1e-8)) {
    if (encoding.shape.size() != 2)
        throw usage_error("correlation_penalty: expected 2-D encoding, got " +
                          shape_str(encoding.shape));
    size_t n = encoding.shape[0], width = encoding.shape[1];
    if (n < 2) throw usage_error("correlation_penalty: batch must be >= 2");
    if (split_index == 0 || split_index >= width)
        throw usage_error("correlation_penalty: split_index " + std::to_string(split_index) +
                          " not strictly inside width " + std::to_string(width));
    size_t top = split_index, bottom = width - split_index;

    Tensor<T> dev = sub(encoding, mean_axis(encoding, 0));            // [n, W]
    Tensor<T> adev = abs(dev);
    Tensor<T> num = slice(slice(matmul(transpose(adev, 0, 1), adev), 0, 0, top), 1, top, bottom);
    Tensor<T> s = sqrt(add_scalar(sum_axis(mul(dev, dev), 0), eps));  // [1, W]
    Tensor<T> denom = matmul(reshape(slice(s, 1, 0, top), {top, 1}), slice(s, 1, top, bottom));
    return scale(sum_all(div(num, denom)), T(1) / T(top * bottom));
}

// Mean negative log-probability of the target token over unignored positions.
// ignore_mask[i] != 0 means position i is excluded from the average.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                        const std::vector<uint8_t>& ignore_mask) {
    size_t rows = logits.shape.empty() ? 0 : logits.size() / logits.shape.back();
    if (targets.size() != rows || ignore_mask.size() != rows)
        throw usage_error("cross_entropy: targets/ignore_mask length " +
                          std::to_string(targets.size()) + "/" + std::to_string(ignore_mask.size()) +
                          " does not match logits rows " + std::to_string(rows));
    size_t kept = 0;
    std::vector<T> w(rows);
    for (size_t i = 0; i < rows; ++i)
        if (!ignore_mask[i]) { w[i] = T(1); ++kept; }
    if (kept == 0) throw usage_error("cross_entropy: every position is ignored");

    Tensor<T> nll = neg(gather_last(log_softmax(logits), targets));
    Shape wshape = nll.shape;
    Tensor<T> weights{wshape, std::make_shared<std::vector<T>>(std::move(w))};
    return scale(sum_all(mul(nll, weights)), T(1) / T(kept));
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets) {
    size_t rows = logits.shape.empty() ? 0 : logits.size() / logits.shape.back();
    return cross_entropy(logits, targets, std::vector<uint8_t>(rows, 0));
}

} // namespace gradroute
