#pragma once

#include <span>

#include "cutrack/tensor.hpp"

namespace cutrack::ag {

/// Mean binary cross-entropy of logits against 0/1 labels; logits hold one
/// value per label in any shape.
Var bce_with_logits(Var logits, std::span<const int> labels);

/// Mean Huber (smooth-L1, transition at 1) over the selected rows of a
/// rank-2 prediction. rows empty means all rows. target has pred's shape.
Var smooth_l1(Var pred, const Tensor& target, std::span<const std::size_t> rows = {});

}  // namespace cutrack::ag
