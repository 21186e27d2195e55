#pragma once

#include <cstdint>
#include <vector>

#include "alignkit/collate.h"
#include "alignkit/model.h"
#include "alignkit/ops.h"

namespace alignkit {

/// Mean negative log-likelihood over the masked positions of a batch.
/// logits is [B x T x V]; tokens and mask are the row-major [B x T] layout
/// produced by collate_sft, where mask[b][t] = 1 means "score the prediction
/// of tokens[b][t]" (made from position t-1, so column 0 must be unmasked).
/// Throws ContractError when the mask selects nothing or covers column 0.
Tensor sft_loss(const Tensor& logits, const std::vector<int>& tokens,
                const std::vector<uint8_t>& mask, Tape* tape = nullptr);

/// Runs the model over every row of the batch and evaluates sft_loss.
Tensor sft_batch_loss(const TransformerModel& model, const SftBatch& batch,
                      Tape* tape = nullptr);

/// One preference pair's DPO terms. margin is the sigmoid argument
/// beta * (chosen log-ratio - rejected log-ratio); the pair is counted
/// correct when the margin is strictly positive.
struct DpoTerms {
    Tensor loss;  // scalar softplus(-margin), differentiable
    double margin = 0.0;
    bool pair_correct = false;
};

/// Reference-free DPO loss from scalar policy log-probabilities.
DpoTerms dpo_loss(const Tensor& logp_chosen, const Tensor& logp_rejected, double beta,
                  Tape* tape = nullptr);

/// Reference-anchored DPO loss; the reference log-probabilities are plain
/// numbers because no gradient flows through the frozen reference model.
DpoTerms dpo_loss_ref(const Tensor& logp_chosen, const Tensor& logp_rejected,
                      double ref_logp_chosen, double ref_logp_rejected, double beta,
                      Tape* tape = nullptr);

}  // namespace alignkit
