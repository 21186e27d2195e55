#include "alignkit/losses.h"

#include <string>

namespace alignkit {

Tensor sft_loss(const Tensor& logits, const std::vector<int>& tokens,
                const std::vector<uint8_t>& mask, Tape* tape) {
    const Shape& shape = logits.shape();
    if (shape.size() != 3) {
        throw DimensionError("sft_loss expects [batch x time x vocab] logits, got " +
                             shape_str(shape));
    }
    const int64_t rows = shape[0];
    const int64_t cols = shape[1];
    const size_t positions = static_cast<size_t>(rows * cols);
    if (tokens.size() != positions || mask.size() != positions) {
        throw DimensionError("sft_loss tokens/mask must hold " + std::to_string(positions) +
                             " entries matching logits " + shape_str(shape));
    }

    // The mask marks target tokens; the prediction comes from the previous
    // position, so fold the shift into gathered targets here.
    std::vector<int> shifted_targets(positions, 0);
    std::vector<double> shifted_mask(positions, 0.0);
    int64_t count = 0;
    for (int64_t b = 0; b < rows; ++b) {
        if (mask[static_cast<size_t>(b * cols)] != 0) {
            throw ContractError("mask covers column 0 of row " + std::to_string(b) +
                                ", which has no preceding context");
        }
        for (int64_t t = 0; t + 1 < cols; ++t) {
            const size_t here = static_cast<size_t>(b * cols + t);
            const size_t next = here + 1;
            if (mask[next] != 0) {
                shifted_targets[here] = tokens[next];
                shifted_mask[here] = 1.0;
                ++count;
            }
        }
    }
    if (count == 0) {
        throw ContractError("sft_loss mask selects no positions");
    }

    Tensor logprobs = gather_logprob(logits, shifted_targets, tape);
    Tensor mask_tensor = Tensor::from_values({rows, cols}, shifted_mask, logits.dtype());
    Tensor masked = mul(logprobs, mask_tensor, tape);
    return scale(sum(masked, tape), -1.0 / static_cast<double>(count), tape);
}

Tensor sft_batch_loss(const TransformerModel& model, const SftBatch& batch, Tape* tape) {
    if (batch.rows == 0) {
        throw ContractError("sft_batch_loss needs a non-empty batch");
    }
    std::vector<Tensor> row_logits;
    row_logits.reserve(static_cast<size_t>(batch.rows));
    for (int64_t r = 0; r < batch.rows; ++r) {
        auto begin = batch.tokens.begin() + static_cast<ptrdiff_t>(r * batch.cols);
        std::vector<int> row(begin, begin + static_cast<ptrdiff_t>(batch.cols));
        row_logits.push_back(model.forward(row, tape));
    }
    return sft_loss(stack(row_logits, tape), batch.tokens, batch.mask, tape);
}

namespace {

DpoTerms dpo_terms_from_diff(const Tensor& scaled_diff, Tape* tape) {
    DpoTerms terms;
    terms.margin = scaled_diff.item();
    terms.pair_correct = terms.margin > 0.0;
    terms.loss = softplus(negate(scaled_diff, tape), tape);
    return terms;
}

void check_beta(double beta) {
    if (!(beta > 0.0)) {
        throw ContractError("beta must be positive, got " + std::to_string(beta));
    }
}

void check_scalar_logprob(const Tensor& t, const char* name) {
    if (t.numel() != 1) {
        throw ContractError(std::string(name) + " must be a scalar log-probability");
    }
}

}  // namespace

DpoTerms dpo_loss(const Tensor& logp_chosen, const Tensor& logp_rejected, double beta,
                  Tape* tape) {
    check_beta(beta);
    check_scalar_logprob(logp_chosen, "logp_chosen");
    check_scalar_logprob(logp_rejected, "logp_rejected");
    Tensor diff = sub(logp_chosen, logp_rejected, tape);
    return dpo_terms_from_diff(scale(diff, beta, tape), tape);
}

DpoTerms dpo_loss_ref(const Tensor& logp_chosen, const Tensor& logp_rejected,
                      double ref_logp_chosen, double ref_logp_rejected, double beta,
                      Tape* tape) {
    check_beta(beta);
    check_scalar_logprob(logp_chosen, "logp_chosen");
    check_scalar_logprob(logp_rejected, "logp_rejected");
    Tensor diff = sub(logp_chosen, logp_rejected, tape);
    Tensor anchored = add_const(diff, ref_logp_rejected - ref_logp_chosen, tape);
    return dpo_terms_from_diff(scale(anchored, beta, tape), tape);
}

}  // namespace alignkit
