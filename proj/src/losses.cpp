#include "saltseg/losses.hpp"

#include "saltseg/errors.hpp"

namespace saltseg {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes()))
    throw ShapeError(std::string(what) + ": logits " + c10::str(a.sizes()) + " vs targets " + c10::str(b.sizes()));
}

torch::Tensor lovasz_hinge_flat(const torch::Tensor& logits, const torch::Tensor& targets) {
  const auto signs = 2.0 * targets - 1.0;
  const auto errors = 1.0 - logits * signs;
  auto [errors_sorted, perm] = torch::sort(errors, /*stable=*/true, /*dim=*/0, /*descending=*/true);
  const auto gt_sorted = targets.index_select(0, perm);
  const auto grad = lovasz_grad(gt_sorted);
  return torch::dot(torch::relu(errors_sorted), grad);
}

}  // namespace

const char* to_string(LossKind kind) { return kind == LossKind::bce ? "bce" : "lovasz"; }

torch::Tensor bce_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
  require_same_shape(logits, targets, "bce_loss");
  const auto per_pixel = torch::clamp_min(logits, 0) - logits * targets + torch::log1p(torch::exp(-logits.abs()));
  return per_pixel.mean();
}

torch::Tensor lovasz_grad(const torch::Tensor& sorted_gt) {
  if (sorted_gt.numel() == 0) throw DomainError("lovasz_grad of an empty vector");
  const auto gt = sorted_gt.reshape({-1});
  const auto positives = gt.sum();
  const auto intersection = positives - gt.cumsum(0);
  const auto union_ = positives + (1.0 - gt).cumsum(0);
  auto jaccard = 1.0 - intersection / union_;
  const auto n = jaccard.size(0);
  if (n > 1) {
    using torch::indexing::Slice;
    jaccard = torch::cat({jaccard.slice(0, 0, 1), jaccard.slice(0, 1, n) - jaccard.slice(0, 0, n - 1)});
  }
  return jaccard;
}

torch::Tensor lovasz_hinge(const torch::Tensor& logits, const torch::Tensor& targets) {
  require_same_shape(logits, targets, "lovasz_hinge");
  if (logits.numel() == 0) throw ShapeError("lovasz_hinge of an empty tensor");
  if (logits.dim() <= 1) return lovasz_hinge_flat(logits.reshape({-1}), targets.reshape({-1}));
  const auto batch = logits.size(0);
  const auto flat_logits = logits.reshape({batch, -1});
  const auto flat_targets = targets.reshape({batch, -1});
  std::vector<torch::Tensor> per_image;
  per_image.reserve(static_cast<std::size_t>(batch));
  for (int64_t i = 0; i < batch; ++i) per_image.push_back(lovasz_hinge_flat(flat_logits[i], flat_targets[i]));
  return torch::stack(per_image).mean();
}

torch::Tensor compute_loss(LossKind kind, const torch::Tensor& logits, const torch::Tensor& targets) {
  return kind == LossKind::bce ? bce_loss(logits, targets) : lovasz_hinge(logits, targets);
}

}  // namespace saltseg
