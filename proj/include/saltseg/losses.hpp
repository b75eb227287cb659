#pragma once

#include <torch/torch.h>

namespace saltseg {

enum class LossKind { bce, lovasz };

const char* to_string(LossKind kind);

/// Mean binary cross-entropy on logits in the stable form
/// max(s,0) - s*y + log(1 + exp(-|s|)). Throws ShapeError on mismatch.
torch::Tensor bce_loss(const torch::Tensor& logits, const torch::Tensor& targets);

/// Gradient of the Lovasz extension of the Jaccard loss with respect to the
/// sorted errors, for a 1-D binary vector ordered by decreasing error.
/// Throws DomainError for an empty vector.
torch::Tensor lovasz_grad(const torch::Tensor& sorted_gt);

/// Lovasz hinge: errors 1 - (2y-1)s sorted in decreasing order (stable on
/// ties), dotted with lovasz_grad of the matching targets after a ReLU.
/// Computed per image (dimension 0 indexes images; a 1-D input is one image)
/// and averaged over the batch. Throws ShapeError on mismatch.
torch::Tensor lovasz_hinge(const torch::Tensor& logits, const torch::Tensor& targets);

torch::Tensor compute_loss(LossKind kind, const torch::Tensor& logits, const torch::Tensor& targets);

}  // namespace saltseg
