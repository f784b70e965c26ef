#include "dcdm/objective.hpp"

#include <stdexcept>
#include <string>

namespace dcdm {

Tensor nelbo_loss(Tape* tape, const Tensor& logits, const DiffusionBatch& batch) {
  const int l = static_cast<int>(batch.x.size());
  if (logits.shape.size() != 2 || logits.rows() != l)
    throw std::invalid_argument("nelbo_loss: logits " + shape_str(logits.shape) +
                                " do not cover the " + std::to_string(l) + " noisy positions");
  Tensor sum = masked_nll(tape, logits, batch.x, batch.nu);
  return scale(tape, sum, batch.weight / double(l));
}

LossBreakdown total_loss(Tape* tape, const DenoiserOutput& out, const DiffusionBatch& batch,
                         const ModelConfig& cfg) {
  LossBreakdown lb;
  lb.nelbo = nelbo_loss(tape, out.logits, batch);
  lb.aux = cfg.mode == Mode::dcdm ? out.aux : Tensor::scalar(0.0);
  lb.total = add(tape, lb.nelbo, scale(tape, lb.aux, cfg.lambda_chunk));
  lb.masked_token_count = 0;
  for (auto m : batch.nu) lb.masked_token_count += m != 0;
  return lb;
}

}  // namespace dcdm
