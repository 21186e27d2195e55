#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alignkit/checkpoint.h"
#include "alignkit/data.h"
#include "alignkit/model.h"
#include "alignkit/optim.h"

namespace alignkit {

struct TrainConfig {
    uint64_t seed = 0;
    int64_t batch_size = 8;
    int64_t epochs = 2;
    double clip_norm = 1.0;
    double beta = 0.1;  // DPO preference temperature; unused by SFT
    AdamWConfig adamw;
    std::string log_path;  // when non-empty, one JSONL line per step

    /// SFT defaults: lr 5e-5, 2 epochs.
    static TrainConfig sft_defaults();
    /// DPO defaults: lr 1e-4, 1 epoch.
    static TrainConfig dpo_defaults();

    void validate() const;
};

struct LogEntry {
    int64_t step = 0;   // global, 1-based
    int64_t epoch = 0;  // 0-based
    double loss = 0.0;
    double grad_norm = 0.0;
    double margin = 0.0;         // DPO only
    double pair_accuracy = 0.0;  // DPO only, fraction within the batch
};

struct TrainResult {
    int64_t steps = 0;
    double final_loss = 0.0;
    double mean_loss = 0.0;            // over the last epoch
    double mean_margin = 0.0;          // DPO: over the last epoch
    double pair_accuracy = 0.0;        // DPO: over the last epoch
    Provenance provenance;
    std::vector<LogEntry> log;
};

/// Supervised fine-tuning on the chosen responses. Shuffles record order
/// freshly each epoch (seed derived per epoch), updates the model's
/// trainable parameters in place, and returns the composed provenance for
/// checkpointing. Throws DataError when no record survives collation.
TrainResult train_sft(TransformerModel& model, const std::vector<PreferenceRecord>& records,
                      const TrainConfig& config, const Provenance& init_provenance = {});

/// Direct preference optimization. With reference == nullptr the loss uses
/// raw policy log-probabilities; otherwise log-ratios against the frozen
/// reference model. Provenance method becomes "sft+dpo" when the starting
/// checkpoint was SFT-tuned, else "dpo".
TrainResult train_dpo(TransformerModel& model, const TransformerModel* reference,
                      const std::vector<PreferenceRecord>& records, const TrainConfig& config,
                      const Provenance& init_provenance = {});

struct DpoEvalStats {
    double mean_margin = 0.0;
    double pair_accuracy = 0.0;
    int64_t pairs = 0;
};

/// Margin statistics of a model over a preference set, without training.
DpoEvalStats evaluate_dpo(const TransformerModel& model, const TransformerModel* reference,
                          const std::vector<PreferenceRecord>& records, double beta);

}  // namespace alignkit
