#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alignkit/model.h"

namespace alignkit {

struct GenerationConfig {
    int64_t max_new_tokens = 50;
    bool stop_on_eos = true;

    void validate() const;  // max_new_tokens must be >= 0
};

struct GenerationResult {
    std::vector<int> tokens;  // the response only; a terminating EOS is not included
    std::string stop_reason;  // "eos" or "length"
};

/// Greedy decoding: at every step the next token is the argmax of the final
/// position's logits, ties broken by the LOWEST token id so the output is a
/// total deterministic function of (checkpoint, prompt). Generation stops
/// when EOS is produced (stop reason "eos") or when max_new_tokens content
/// tokens have been emitted (stop reason "length"). Once the context reaches
/// max_seq_len it is left-truncated, keeping the newest tokens.
/// Throws ContractError on an empty prompt and LengthError when the prompt
/// has no room left to generate (length >= max_seq_len).
GenerationResult generate_greedy(const TransformerModel& model,
                                 const std::vector<int>& prompt_tokens,
                                 const GenerationConfig& config = {});

/// Index of the largest logit in the final row, lowest index on ties.
/// Shared by decoding and by tests that replay it against raw logits.
int64_t argmax_last_row(const Tensor& logits);

}  // namespace alignkit
