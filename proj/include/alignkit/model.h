#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alignkit/ops.h"
#include "alignkit/tape.h"
#include "alignkit/tensor.h"

namespace alignkit {

/// Architecture hyperparameters. Defaults are the desk-scale configuration:
/// byte tokenizer vocabulary (256 bytes + PAD/BOS/EOS) and a small OPT-style
/// decoder.
struct ModelConfig {
    int64_t vocab_size = 259;
    int64_t d_model = 128;
    int64_t n_layers = 4;
    int64_t n_heads = 4;
    int64_t d_ff = 512;
    int64_t max_seq_len = 256;
    int pad_id = 256;
    int bos_id = 257;
    int eos_id = 258;

    int64_t head_dim() const { return d_model / n_heads; }

    bool operator==(const ModelConfig&) const = default;

    /// Throws ConfigError naming the violated constraint.
    void validate() const;
};

/// Low-rank adapter settings. Targets name attention projections out of
/// {"q", "k", "v", "o"}; the effective update is W + (alpha/r) * B * A.
struct LoraConfig {
    int64_t rank = 8;
    double alpha = 16.0;
    std::vector<std::string> targets = {"q", "v"};

    void validate(const ModelConfig& model) const;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
};

/// One adapter pair: a is [r x d_model], b is [d_model x r], b zero-initialized.
struct LoraPair {
    Tensor a, b;
};

struct LoraState {
    LoraConfig config;
    // Per layer, adapters in the order config.targets were given.
    std::vector<std::vector<std::pair<std::string, LoraPair>>> layers;
};

/// Pre-LN decoder-only transformer with a tied output head. Parameters are
/// shared Tensor handles; the struct is cheap to copy but copies alias.
struct TransformerModel {
    ModelConfig config;
    DType dtype = DType::F32;

    Tensor tok_emb;  // [vocab_size x d_model], also the output head
    Tensor pos_emb;  // [max_seq_len x d_model]
    std::vector<LayerParams> layers;
    Tensor final_gain, final_bias;

    std::optional<LoraState> lora;

    /// Logits [T x vocab_size] for a token sequence, causal attention.
    /// Records on `tape` when training.
    Tensor forward(const std::vector<int>& tokens, Tape* tape = nullptr) const;

    /// Sum over response positions of log pi(response_t | prompt, response_<t).
    /// Differentiable; always <= 0 on finite weights.
    Tensor sequence_logprob(const std::vector<int>& prompt_tokens,
                            const std::vector<int>& response_tokens, Tape* tape = nullptr) const;

    /// Adds zero-initialized adapters to the configured targets and freezes
    /// every base parameter. Throws StateError when adapters already exist.
    void attach_lora(const LoraConfig& cfg, uint64_t seed);

    /// Bakes adapters into the base weights (bit-identical to the adapter
    /// forward path), removes them, and unfreezes the base parameters.
    void merge_lora();

    bool has_lora() const { return lora.has_value(); }

    /// All parameters in declaration order (adapters last), with stable names.
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    /// Parameters the optimizer may update: adapters when attached, else all.
    std::vector<Tensor> trainable_params() const;

    /// Deep copy: fresh storage for every parameter.
    TransformerModel clone() const;
};

/// Fresh model with Normal(0, 0.02) weight matrices, zero biases, unit
/// layernorm gains. Deterministic per seed.
TransformerModel init_model(const ModelConfig& config, uint64_t seed, DType dtype = DType::F32);

}  // namespace alignkit
