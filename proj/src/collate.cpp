#include "alignkit/collate.h"

#include <algorithm>

#include "alignkit/tokenizer.h"

namespace alignkit {

namespace {

void check_collate_args(int64_t max_seq_len, int64_t batch_size) {
    if (batch_size < 1) {
        throw ContractError("batch_size must be at least 1, got " + std::to_string(batch_size));
    }
    if (max_seq_len < 3) {
        throw ContractError("max_seq_len must be at least 3 (BOS + token + EOS), got " +
                            std::to_string(max_seq_len));
    }
}

// Last keep_count prompt tokens; dropping the oldest context preserves the
// dialogue turn the response answers.
std::vector<int> prompt_tail(const std::vector<int>& prompt, int64_t keep_count) {
    return {prompt.end() - static_cast<ptrdiff_t>(keep_count), prompt.end()};
}

struct SftRow {
    std::vector<int> tokens;
    std::vector<uint8_t> mask;
};

}  // namespace

std::pair<std::vector<SftBatch>, int64_t> collate_sft(
    const std::vector<PreferenceRecord>& records, int64_t max_seq_len, int64_t batch_size) {
    check_collate_args(max_seq_len, batch_size);

    std::vector<SftRow> rows;
    int64_t skipped = 0;
    for (const auto& record : records) {
        if (record.chosen.empty()) {
            ++skipped;
            continue;
        }
        std::vector<int> prompt = tokenize(record.prompt);
        std::vector<int> response = tokenize(record.chosen);
        const int64_t response_len = static_cast<int64_t>(response.size());
        const int64_t budget = max_seq_len - 2 - response_len;  // room left for prompt
        if (budget < 0) {
            ++skipped;
            continue;
        }
        const int64_t keep = std::min<int64_t>(budget, static_cast<int64_t>(prompt.size()));

        SftRow row;
        row.tokens.reserve(static_cast<size_t>(1 + keep + response_len + 1));
        row.tokens.push_back(kBosId);
        for (int id : prompt_tail(prompt, keep)) row.tokens.push_back(id);
        for (int id : response) row.tokens.push_back(id);
        row.tokens.push_back(kEosId);

        row.mask.assign(row.tokens.size(), 0);
        for (size_t t = static_cast<size_t>(1 + keep); t < row.tokens.size(); ++t) {
            row.mask[t] = 1;
        }
        rows.push_back(std::move(row));
    }

    std::vector<SftBatch> batches;
    for (size_t start = 0; start < rows.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(rows.size(), start + static_cast<size_t>(batch_size));
        SftBatch batch;
        batch.rows = static_cast<int64_t>(end - start);
        size_t cols = 0;
        for (size_t r = start; r < end; ++r) cols = std::max(cols, rows[r].tokens.size());
        batch.cols = static_cast<int64_t>(cols);
        batch.tokens.assign(static_cast<size_t>(batch.rows) * cols, kPadId);
        batch.mask.assign(static_cast<size_t>(batch.rows) * cols, 0);
        for (size_t r = start; r < end; ++r) {
            const size_t base = (r - start) * cols;
            std::copy(rows[r].tokens.begin(), rows[r].tokens.end(), batch.tokens.begin() + static_cast<ptrdiff_t>(base));
            std::copy(rows[r].mask.begin(), rows[r].mask.end(), batch.mask.begin() + static_cast<ptrdiff_t>(base));
        }
        batches.push_back(std::move(batch));
    }
    return {std::move(batches), skipped};
}

std::pair<std::vector<DpoBatch>, int64_t> collate_dpo(
    const std::vector<PreferenceRecord>& records, int64_t max_seq_len, int64_t batch_size) {
    check_collate_args(max_seq_len, batch_size);

    std::vector<DpoExample> examples;
    int64_t skipped = 0;
    for (const auto& record : records) {
        if (record.chosen.empty() || record.rejected.empty()) {
            ++skipped;
            continue;
        }
        std::vector<int> prompt = tokenize(record.prompt);
        std::vector<int> chosen = tokenize(record.chosen);
        std::vector<int> rejected = tokenize(record.rejected);
        // The prompt must fit alongside EITHER response, and identically for
        // both, so the preference margin compares like with like.
        const int64_t longest_response =
            std::max<int64_t>(static_cast<int64_t>(chosen.size()), static_cast<int64_t>(rejected.size()));
        const int64_t budget = max_seq_len - 2 - longest_response;
        if (budget < 0) {
            ++skipped;
            continue;
        }
        const int64_t keep = std::min<int64_t>(budget, static_cast<int64_t>(prompt.size()));

        DpoExample example;
        example.prompt.reserve(static_cast<size_t>(1 + keep));
        example.prompt.push_back(kBosId);
        for (int id : prompt_tail(prompt, keep)) example.prompt.push_back(id);
        example.chosen = std::move(chosen);
        example.chosen.push_back(kEosId);
        example.rejected = std::move(rejected);
        example.rejected.push_back(kEosId);
        example.source_index = record.source_index;
        examples.push_back(std::move(example));
    }

    std::vector<DpoBatch> batches;
    for (size_t start = 0; start < examples.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(examples.size(), start + static_cast<size_t>(batch_size));
        DpoBatch batch;
        batch.examples.assign(std::make_move_iterator(examples.begin() + static_cast<ptrdiff_t>(start)),
                              std::make_move_iterator(examples.begin() + static_cast<ptrdiff_t>(end)));
        batches.push_back(std::move(batch));
    }
    return {std::move(batches), skipped};
}

}  // namespace alignkit
