#include "alignkit/model.h"

#include <cmath>
#include <set>

#include "alignkit/errors.h"
#include "alignkit/rng.h"

namespace alignkit {

namespace {

const std::set<std::string> kLoraTargets = {"q", "k", "v", "o"};

Tensor normal_tensor(Shape shape, Rng& rng, DType dtype) {
    Tensor t = Tensor::zeros(std::move(shape), dtype, true);
    if (dtype == DType::F32) {
        for (auto& v : t.mutable_data<float>()) v = static_cast<float>(rng.normal(0.0, 0.02));
    } else {
        for (auto& v : t.mutable_data<double>()) v = rng.normal(0.0, 0.02);
    }
    return t;
}

Tensor zeros_param(Shape shape, DType dtype) { return Tensor::zeros(std::move(shape), dtype, true); }

Tensor ones_param(Shape shape, DType dtype) {
    Tensor t = Tensor::full(std::move(shape), 1.0, dtype);
    t.set_requires_grad(true);
    return t;
}

Tensor cloned(const Tensor& t) {
    Tensor c = t.clone();
    c.set_requires_grad(t.requires_grad());
    return c;
}

/// The one adapter composition used by both forward and merge, so the merged
/// weights agree with the adapter path bit for bit.
Tensor effective_weight(const Tensor& w, const LoraPair& pair, double factor, Tape* tape) {
    return add(w, scale(matmul(pair.b, pair.a, tape), factor, tape), tape);
}

const LoraPair* find_adapter(const LoraState& lora, size_t layer, const std::string& target) {
    for (const auto& [name, pair] : lora.layers[layer]) {
        if (name == target) return &pair;
    }
    return nullptr;
}

}  // namespace

void ModelConfig::validate() const {
    auto positive = [](int64_t v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(d_model, "d_model");
    positive(n_layers, "n_layers");
    positive(n_heads, "n_heads");
    positive(d_ff, "d_ff");
    positive(max_seq_len, "max_seq_len");
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    for (auto [id, name] : {std::pair{pad_id, "pad_id"}, {bos_id, "bos_id"}, {eos_id, "eos_id"}}) {
        if (id < 0 || id >= vocab_size) {
            throw ConfigError(std::string(name) + " (" + std::to_string(id) +
                              ") must be a valid token id below vocab_size");
        }
    }
    if (pad_id == bos_id || pad_id == eos_id || bos_id == eos_id) {
        throw ConfigError("pad_id, bos_id and eos_id must be pairwise distinct");
    }
}

void LoraConfig::validate(const ModelConfig& model) const {
    if (rank <= 0) throw ConfigError("lora rank must be positive");
    if (rank > model.d_model) throw ConfigError("lora rank must not exceed d_model");
    if (alpha <= 0.0) throw ConfigError("lora alpha must be positive");
    if (targets.empty()) throw ConfigError("lora targets must not be empty");
    std::set<std::string> seen;
    for (const std::string& t : targets) {
        if (!kLoraTargets.count(t)) {
            throw ConfigError("unknown lora target '" + t + "' (expected q, k, v or o)");
        }
        if (!seen.insert(t).second) throw ConfigError("duplicate lora target '" + t + "'");
    }
}

TransformerModel init_model(const ModelConfig& config, uint64_t seed, DType dtype) {
    config.validate();
    TransformerModel m;
    m.config = config;
    m.dtype = dtype;

    Rng rng(seed);
    const int64_t d = config.d_model;
    m.tok_emb = normal_tensor({config.vocab_size, d}, rng, dtype);
    m.pos_emb = normal_tensor({config.max_seq_len, d}, rng, dtype);
    m.layers.resize(static_cast<size_t>(config.n_layers));
    for (auto& layer : m.layers) {
        layer.ln1_gain = ones_param({d}, dtype);
        layer.ln1_bias = zeros_param({d}, dtype);
        layer.wq = normal_tensor({d, d}, rng, dtype);
        layer.bq = zeros_param({d}, dtype);
        layer.wk = normal_tensor({d, d}, rng, dtype);
        layer.bk = zeros_param({d}, dtype);
        layer.wv = normal_tensor({d, d}, rng, dtype);
        layer.bv = zeros_param({d}, dtype);
        layer.wo = normal_tensor({d, d}, rng, dtype);
        layer.bo = zeros_param({d}, dtype);
        layer.ln2_gain = ones_param({d}, dtype);
        layer.ln2_bias = zeros_param({d}, dtype);
        layer.w1 = normal_tensor({d, config.d_ff}, rng, dtype);
        layer.b1 = zeros_param({config.d_ff}, dtype);
        layer.w2 = normal_tensor({config.d_ff, d}, rng, dtype);
        layer.b2 = zeros_param({d}, dtype);
    }
    m.final_gain = ones_param({d}, dtype);
    m.final_bias = zeros_param({d}, dtype);
    return m;
}

Tensor TransformerModel::forward(const std::vector<int>& tokens, Tape* tape) const {
    const int64_t t = static_cast<int64_t>(tokens.size());
    if (t == 0) throw ContractError("forward: empty token sequence");
    if (t > config.max_seq_len) {
        throw LengthError("forward: sequence length " + std::to_string(t) +
                          " exceeds max_seq_len " + std::to_string(config.max_seq_len));
    }

    auto projection = [&](size_t layer_idx, const std::string& target, const Tensor& w) {
        if (lora) {
            if (const LoraPair* pair = find_adapter(*lora, layer_idx, target)) {
                double factor = lora->config.alpha / static_cast<double>(lora->config.rank);
                return effective_weight(w, *pair, factor, tape);
            }
        }
        return w;
    };

    Tensor x = add(embedding_rows(tok_emb, tokens, tape), slice_rows(pos_emb, 0, t, tape), tape);
    const int64_t hd = config.head_dim();
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    for (size_t li = 0; li < layers.size(); ++li) {
        const LayerParams& l = layers[li];

        Tensor h = layernorm(x, l.ln1_gain, l.ln1_bias, tape);
        Tensor q = add_bias(matmul(h, projection(li, "q", l.wq), tape), l.bq, tape);
        Tensor k = add_bias(matmul(h, projection(li, "k", l.wk), tape), l.bk, tape);
        Tensor v = add_bias(matmul(h, projection(li, "v", l.wv), tape), l.bv, tape);

        std::vector<Tensor> head_outputs;
        head_outputs.reserve(static_cast<size_t>(config.n_heads));
        for (int64_t head = 0; head < config.n_heads; ++head) {
            Tensor qh = slice_cols(q, head * hd, hd, tape);
            Tensor kh = slice_cols(k, head * hd, hd, tape);
            Tensor vh = slice_cols(v, head * hd, hd, tape);
            Tensor probs = causal_softmax(scale(matmul_nt(qh, kh, tape), attn_scale, tape), tape);
            head_outputs.push_back(matmul(probs, vh, tape));
        }
        Tensor attn = add_bias(
            matmul(concat_cols(head_outputs, tape), projection(li, "o", l.wo), tape), l.bo, tape);
        x = add(x, attn, tape);

        Tensor h2 = layernorm(x, l.ln2_gain, l.ln2_bias, tape);
        Tensor inner = gelu(add_bias(matmul(h2, l.w1, tape), l.b1, tape), tape);
        Tensor ff = add_bias(matmul(inner, l.w2, tape), l.b2, tape);
        x = add(x, ff, tape);
    }

    x = layernorm(x, final_gain, final_bias, tape);
    return matmul_nt(x, tok_emb, tape);  // tied output head
}

Tensor TransformerModel::sequence_logprob(const std::vector<int>& prompt_tokens,
                                          const std::vector<int>& response_tokens,
                                          Tape* tape) const {
    if (prompt_tokens.empty()) throw ContractError("sequence_logprob: empty prompt");
    if (response_tokens.empty()) throw ContractError("sequence_logprob: empty response");
    const int64_t p = static_cast<int64_t>(prompt_tokens.size());
    const int64_t r = static_cast<int64_t>(response_tokens.size());
    if (p + r > config.max_seq_len) {
        throw LengthError("sequence_logprob: combined length " + std::to_string(p + r) +
                          " exceeds max_seq_len " + std::to_string(config.max_seq_len));
    }

    std::vector<int> full = prompt_tokens;
    full.insert(full.end(), response_tokens.begin(), response_tokens.end());
    Tensor logits = forward(full, tape);
    // Row p-1 predicts the first response token, row p+r-2 the last.
    Tensor response_logits = slice_rows(logits, p - 1, r, tape);
    return sum(gather_logprob(response_logits, response_tokens, tape), tape);
}

void TransformerModel::attach_lora(const LoraConfig& cfg, uint64_t seed) {
    if (lora) throw StateError("lora adapters already attached");
    cfg.validate(config);

    for (auto& [name, param] : named_params()) param.set_requires_grad(false);

    Rng rng(seed);
    LoraState state;
    state.config = cfg;
    state.layers.resize(layers.size());
    for (size_t li = 0; li < layers.size(); ++li) {
        for (const std::string& target : cfg.targets) {
            LoraPair pair;
            pair.a = normal_tensor({cfg.rank, config.d_model}, rng, dtype);
            pair.b = zeros_param({config.d_model, cfg.rank}, dtype);
            state.layers[li].emplace_back(target, std::move(pair));
        }
    }
    lora = std::move(state);
}

void TransformerModel::merge_lora() {
    if (!lora) throw StateError("no lora adapters to merge");
    const double factor = lora->config.alpha / static_cast<double>(lora->config.rank);
    for (size_t li = 0; li < layers.size(); ++li) {
        LayerParams& l = layers[li];
        for (const auto& [target, pair] : lora->layers[li]) {
            Tensor& w = target == "q"   ? l.wq
                        : target == "k" ? l.wk
                        : target == "v" ? l.wv
                                        : l.wo;
            w.copy_values_from(effective_weight(w, pair, factor, nullptr));
        }
    }
    lora.reset();
    for (auto& [name, param] : named_params()) param.set_requires_grad(true);
}

std::vector<std::pair<std::string, Tensor>> TransformerModel::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (size_t li = 0; li < layers.size(); ++li) {
        const LayerParams& l = layers[li];
        const std::string prefix = "layers." + std::to_string(li) + ".";
        out.emplace_back(prefix + "ln1.gain", l.ln1_gain);
        out.emplace_back(prefix + "ln1.bias", l.ln1_bias);
        out.emplace_back(prefix + "attn.wq", l.wq);
        out.emplace_back(prefix + "attn.bq", l.bq);
        out.emplace_back(prefix + "attn.wk", l.wk);
        out.emplace_back(prefix + "attn.bk", l.bk);
        out.emplace_back(prefix + "attn.wv", l.wv);
        out.emplace_back(prefix + "attn.bv", l.bv);
        out.emplace_back(prefix + "attn.wo", l.wo);
        out.emplace_back(prefix + "attn.bo", l.bo);
        out.emplace_back(prefix + "ln2.gain", l.ln2_gain);
        out.emplace_back(prefix + "ln2.bias", l.ln2_bias);
        out.emplace_back(prefix + "ffn.w1", l.w1);
        out.emplace_back(prefix + "ffn.b1", l.b1);
        out.emplace_back(prefix + "ffn.w2", l.w2);
        out.emplace_back(prefix + "ffn.b2", l.b2);
    }
    out.emplace_back("final_ln.gain", final_gain);
    out.emplace_back("final_ln.bias", final_bias);
    if (lora) {
        for (size_t li = 0; li < lora->layers.size(); ++li) {
            const std::string prefix = "layers." + std::to_string(li) + ".attn.";
            for (const auto& [target, pair] : lora->layers[li]) {
                out.emplace_back(prefix + target + ".lora_a", pair.a);
                out.emplace_back(prefix + target + ".lora_b", pair.b);
            }
        }
    }
    return out;
}

std::vector<Tensor> TransformerModel::trainable_params() const {
    std::vector<Tensor> out;
    for (const auto& [name, param] : named_params()) {
        if (param.requires_grad()) out.push_back(param);
    }
    return out;
}

TransformerModel TransformerModel::clone() const {
    TransformerModel m;
    m.config = config;
    m.dtype = dtype;
    m.tok_emb = cloned(tok_emb);
    m.pos_emb = cloned(pos_emb);
    m.layers.reserve(layers.size());
    for (const LayerParams& l : layers) {
        m.layers.push_back(LayerParams{cloned(l.ln1_gain), cloned(l.ln1_bias), cloned(l.wq),
                                       cloned(l.bq), cloned(l.wk), cloned(l.bk), cloned(l.wv),
                                       cloned(l.bv), cloned(l.wo), cloned(l.bo),
                                       cloned(l.ln2_gain), cloned(l.ln2_bias), cloned(l.w1),
                                       cloned(l.b1), cloned(l.w2), cloned(l.b2)});
    }
    m.final_gain = cloned(final_gain);
    m.final_bias = cloned(final_bias);
    if (lora) {
        LoraState state;
        state.config = lora->config;
        state.layers.resize(lora->layers.size());
        for (size_t li = 0; li < lora->layers.size(); ++li) {
            for (const auto& [target, pair] : lora->layers[li]) {
                state.layers[li].emplace_back(target, LoraPair{cloned(pair.a), cloned(pair.b)});
            }
        }
        m.lora = std::move(state);
    }
    return m;
}

}  // namespace alignkit
