#pragma once

#include "dcdm/model.hpp"

namespace dcdm {

struct LossBreakdown {
  Tensor nelbo;  // scalar
  Tensor aux;    // scalar; forced zero outside routed mode
  Tensor total;  // nelbo + lambda_chunk * aux
  int masked_token_count = 0;
};

// weight(t) * sum over masked positions of -log p(x_l | logits_l), divided by
// the sequence length. Zero when nothing is masked.
Tensor nelbo_loss(Tape* tape, const Tensor& logits, const DiffusionBatch& batch);

LossBreakdown total_loss(Tape* tape, const DenoiserOutput& out, const DiffusionBatch& batch,
                         const ModelConfig& cfg);

}  // namespace dcdm
