#include "alignkit/trainer.h"

#include <fstream>
#include <numeric>

#include "alignkit/collate.h"
#include "alignkit/losses.h"
#include "alignkit/ops.h"
#include "alignkit/rng.h"
#include "alignkit/tape.h"
#include "json.hpp"

namespace alignkit {

TrainConfig TrainConfig::sft_defaults() {
    TrainConfig config;
    config.adamw.lr = 5e-5;
    config.epochs = 2;
    return config;
}

TrainConfig TrainConfig::dpo_defaults() {
    TrainConfig config;
    config.adamw.lr = 1e-4;
    config.epochs = 1;
    return config;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    adamw.validate();
}

namespace {

class StepLogger {
  public:
    explicit StepLogger(const std::string& path) {
        if (path.empty()) return;
        out_.open(path, std::ios::trunc);
        if (!out_) throw IoError("cannot open \"" + path + "\" for writing");
    }

    void write(const LogEntry& entry, bool dpo) {
        if (!out_.is_open()) return;
        nlohmann::json line;
        line["step"] = entry.step;
        line["epoch"] = entry.epoch;
        line["loss"] = entry.loss;
        line["grad_norm"] = entry.grad_norm;
        if (dpo) {
            line["margin"] = entry.margin;
            line["pair_accuracy"] = entry.pair_accuracy;
        }
        out_ << line.dump() << "\n";
    }

  private:
    std::ofstream out_;
};

std::vector<PreferenceRecord> shuffled_records(const std::vector<PreferenceRecord>& records,
                                               uint64_t root_seed, int64_t epoch) {
    std::vector<PreferenceRecord> order = records;
    Rng rng(derive_seed(root_seed, "epoch-" + std::to_string(epoch)));
    rng.shuffle(order);
    return order;
}

std::string composed_method(const Provenance& init, const char* phase) {
    if (std::string(phase) == "dpo" && init.method == "sft") return "sft+dpo";
    return phase;
}

void summarize_last_epoch(TrainResult& result, int64_t last_epoch) {
    double loss_total = 0.0;
    double margin_total = 0.0;
    double accuracy_total = 0.0;
    int64_t batches = 0;
    for (const LogEntry& entry : result.log) {
        if (entry.epoch != last_epoch) continue;
        loss_total += entry.loss;
        margin_total += entry.margin;
        accuracy_total += entry.pair_accuracy;
        ++batches;
    }
    if (batches > 0) {
        result.mean_loss = loss_total / static_cast<double>(batches);
        result.mean_margin = margin_total / static_cast<double>(batches);
        result.pair_accuracy = accuracy_total / static_cast<double>(batches);
        result.final_loss = result.log.back().loss;
    }
    result.steps = static_cast<int64_t>(result.log.size());
}

}  // namespace

TrainResult train_sft(TransformerModel& model, const std::vector<PreferenceRecord>& records,
                      const TrainConfig& config, const Provenance& init_provenance) {
    config.validate();
    std::vector<Tensor> params = model.trainable_params();
    if (params.empty()) throw StateError("model has no trainable parameters");
    AdamW optimizer(params, config.adamw);
    StepLogger logger(config.log_path);

    TrainResult result;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto order = shuffled_records(records, config.seed, epoch);
        auto [batches, skipped] = collate_sft(order, model.config.max_seq_len, config.batch_size);
        if (batches.empty()) {
            throw DataError("no usable SFT rows: " + std::to_string(records.size()) +
                            " records, " + std::to_string(skipped) + " skipped");
        }
        for (const SftBatch& batch : batches) {
            Tape tape;
            Tensor loss = sft_batch_loss(model, batch, &tape);
            LogEntry entry;
            entry.step = ++step;
            entry.epoch = epoch;
            entry.loss = loss.item();
            optimizer.zero_grad();
            tape.backward(loss);
            entry.grad_norm = clip_grad_norm(params, config.clip_norm);
            optimizer.step();
            logger.write(entry, false);
            result.log.push_back(entry);
        }
    }

    summarize_last_epoch(result, config.epochs - 1);
    result.provenance.method = composed_method(init_provenance, "sft");
    result.provenance.epochs = config.epochs;
    result.provenance.seed = config.seed;
    return result;
}

namespace {

struct BatchDpoOutcome {
    Tensor mean_loss;
    double margin_total = 0.0;
    int64_t correct = 0;
};

BatchDpoOutcome dpo_batch_loss(const TransformerModel& model, const TransformerModel* reference,
                               const DpoBatch& batch, double beta, Tape* tape) {
    BatchDpoOutcome outcome;
    std::vector<Tensor> losses;
    losses.reserve(batch.examples.size());
    for (const DpoExample& example : batch.examples) {
        Tensor logp_chosen = model.sequence_logprob(example.prompt, example.chosen, tape);
        Tensor logp_rejected = model.sequence_logprob(example.prompt, example.rejected, tape);
        DpoTerms terms;
        if (reference != nullptr) {
            double ref_chosen = reference->sequence_logprob(example.prompt, example.chosen).item();
            double ref_rejected =
                reference->sequence_logprob(example.prompt, example.rejected).item();
            terms = dpo_loss_ref(logp_chosen, logp_rejected, ref_chosen, ref_rejected, beta, tape);
        } else {
            terms = dpo_loss(logp_chosen, logp_rejected, beta, tape);
        }
        outcome.margin_total += terms.margin;
        outcome.correct += terms.pair_correct ? 1 : 0;
        losses.push_back(terms.loss);
    }
    Tensor stacked = stack(losses, tape);
    outcome.mean_loss = scale(sum(stacked, tape), 1.0 / static_cast<double>(losses.size()), tape);
    return outcome;
}

}  // namespace

TrainResult train_dpo(TransformerModel& model, const TransformerModel* reference,
                      const std::vector<PreferenceRecord>& records, const TrainConfig& config,
                      const Provenance& init_provenance) {
    config.validate();
    if (reference != nullptr && reference->config != model.config) {
        throw ConfigError("reference model configuration differs from the policy's");
    }
    std::vector<Tensor> params = model.trainable_params();
    if (params.empty()) throw StateError("model has no trainable parameters");
    AdamW optimizer(params, config.adamw);
    StepLogger logger(config.log_path);

    TrainResult result;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto order = shuffled_records(records, config.seed, epoch);
        auto [batches, skipped] = collate_dpo(order, model.config.max_seq_len, config.batch_size);
        if (batches.empty()) {
            throw DataError("no usable DPO pairs: " + std::to_string(records.size()) +
                            " records, " + std::to_string(skipped) + " skipped");
        }
        for (const DpoBatch& batch : batches) {
            Tape tape;
            BatchDpoOutcome outcome = dpo_batch_loss(model, reference, batch, config.beta, &tape);
            LogEntry entry;
            entry.step = ++step;
            entry.epoch = epoch;
            entry.loss = outcome.mean_loss.item();
            entry.margin = outcome.margin_total / static_cast<double>(batch.examples.size());
            entry.pair_accuracy =
                static_cast<double>(outcome.correct) / static_cast<double>(batch.examples.size());
            optimizer.zero_grad();
            tape.backward(outcome.mean_loss);
            entry.grad_norm = clip_grad_norm(params, config.clip_norm);
            optimizer.step();
            logger.write(entry, true);
            result.log.push_back(entry);
        }
    }

    summarize_last_epoch(result, config.epochs - 1);
    result.provenance.method = composed_method(init_provenance, "dpo");
    result.provenance.epochs = config.epochs;
    result.provenance.seed = config.seed;
    return result;
}

DpoEvalStats evaluate_dpo(const TransformerModel& model, const TransformerModel* reference,
                          const std::vector<PreferenceRecord>& records, double beta) {
    auto [batches, skipped] = collate_dpo(records, model.config.max_seq_len, 1);
    DpoEvalStats stats;
    for (const DpoBatch& batch : batches) {
        for (const DpoExample& example : batch.examples) {
            double logp_chosen = model.sequence_logprob(example.prompt, example.chosen).item();
            double logp_rejected = model.sequence_logprob(example.prompt, example.rejected).item();
            double margin = beta * (logp_chosen - logp_rejected);
            if (reference != nullptr) {
                double ref_chosen =
                    reference->sequence_logprob(example.prompt, example.chosen).item();
                double ref_rejected =
                    reference->sequence_logprob(example.prompt, example.rejected).item();
                margin -= beta * (ref_chosen - ref_rejected);
            }
            stats.mean_margin += margin;
            stats.pair_accuracy += margin > 0.0 ? 1.0 : 0.0;
            ++stats.pairs;
        }
    }
    if (stats.pairs > 0) {
        stats.mean_margin /= static_cast<double>(stats.pairs);
        stats.pair_accuracy /= static_cast<double>(stats.pairs);
    }
    return stats;
}

}  // namespace alignkit
