#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "alignkit/data.h"

namespace alignkit {

/// A padded SFT batch. tokens and mask are row-major [rows x cols] with
/// cols equal to the longest row in this batch, so an all-pad column never
/// occurs. Row layout: BOS + prompt + chosen + EOS, padded with PAD.
/// mask is 1 exactly on the chosen-response tokens and the closing EOS
/// (the positions whose prediction is scored); prompt, BOS and padding
/// are 0. Column 0 is BOS in every row, so mask[.][0] is always 0.
struct SftBatch {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<int> tokens;
    std::vector<uint8_t> mask;

    int token_at(int64_t r, int64_t c) const { return tokens[static_cast<size_t>(r * cols + c)]; }
    bool masked_at(int64_t r, int64_t c) const { return mask[static_cast<size_t>(r * cols + c)] != 0; }
};

/// One DPO example: a shared prompt (BOS included) and the two responses
/// (EOS appended). Responses are scored by appending them to the prompt,
/// so no padding is needed here.
struct DpoExample {
    std::vector<int> prompt;
    std::vector<int> chosen;
    std::vector<int> rejected;
    int64_t source_index = 0;
};

struct DpoBatch {
    std::vector<DpoExample> examples;
};

/// Builds SFT batches in record order. Records with an empty chosen response
/// are skipped, as are records whose response cannot fit even with the whole
/// prompt truncated away; otherwise the prompt is truncated from the LEFT
/// (oldest context dropped, BOS kept). Returns the batches and the skip
/// count. Throws ContractError on batch_size < 1 or max_seq_len < 3.
std::pair<std::vector<SftBatch>, int64_t> collate_sft(
    const std::vector<PreferenceRecord>& records, int64_t max_seq_len, int64_t batch_size);

/// Builds DPO batches in record order. Records with an empty chosen or
/// rejected response are skipped, as are records where either response
/// cannot fit. The shared prompt is truncated identically for both
/// responses so their log-probabilities stay comparable.
std::pair<std::vector<DpoBatch>, int64_t> collate_dpo(
    const std::vector<PreferenceRecord>& records, int64_t max_seq_len, int64_t batch_size);

}  // namespace alignkit
