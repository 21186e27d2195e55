#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "alignkit/errors.h"
#include "alignkit/gen.h"
#include "alignkit/model.h"
#include "alignkit/rng.h"
#include "alignkit/tokenizer.h"

using namespace alignkit;

namespace {

ModelConfig tiny_config() {
    ModelConfig config;
    config.d_model = 16;
    config.n_layers = 1;
    config.n_heads = 2;
    config.d_ff = 32;
    config.max_seq_len = 24;
    return config;
}

void zero_all_params(TransformerModel& model) {
    for (auto& [name, tensor] : model.named_params()) {
        tensor.copy_values_from(Tensor::zeros(tensor.shape(), tensor.dtype()));
    }
}

// A zeroed model plus a final-layernorm bias spike makes the logits equal to
// the first embedding column, giving exact control over the argmax.
TransformerModel steered_model(const std::vector<std::pair<int, double>>& token_logits) {
    TransformerModel model = init_model(tiny_config(), 0, DType::F64);
    zero_all_params(model);
    model.final_bias.set(0, 1.0);
    for (auto [token, logit] : token_logits) {
        model.tok_emb.set(static_cast<int64_t>(token) * model.config.d_model, logit);
    }
    return model;
}

}  // namespace

TEST_CASE("max_new_tokens zero yields an empty length-stopped response") {
    TransformerModel model = init_model(tiny_config(), 1, DType::F32);
    GenerationConfig config;
    config.max_new_tokens = 0;
    GenerationResult result = generate_greedy(model, {kBosId, 'h', 'i'}, config);
    CHECK(result.tokens.empty());
    CHECK(result.stop_reason == "length");
}

TEST_CASE("a model that forces EOS stops immediately with reason eos") {
    TransformerModel model = steered_model({{kEosId, 5.0}});
    GenerationResult result = generate_greedy(model, {kBosId, 'q'});
    CHECK(result.tokens.empty());
    CHECK(result.stop_reason == "eos");

    SUBCASE("with eos stopping disabled the budget is spent on EOS tokens") {
        GenerationConfig config;
        config.max_new_tokens = 3;
        config.stop_on_eos = false;
        GenerationResult streamed = generate_greedy(model, {kBosId, 'q'}, config);
        CHECK(streamed.tokens == std::vector<int>{kEosId, kEosId, kEosId});
        CHECK(streamed.stop_reason == "length");
    }
}

TEST_CASE("logit ties resolve to the lowest token id") {
    SUBCASE("two-token tie") {
        TransformerModel model = steered_model({{7, 5.0}, {3, 5.0}});
        GenerationConfig config;
        config.max_new_tokens = 2;
        GenerationResult result = generate_greedy(model, {kBosId}, config);
        CHECK(result.tokens == std::vector<int>{3, 3});
    }
    SUBCASE("all-zero logits tie across the whole vocabulary") {
        TransformerModel model = init_model(tiny_config(), 0, DType::F64);
        zero_all_params(model);
        GenerationConfig config;
        config.max_new_tokens = 4;
        GenerationResult result = generate_greedy(model, {kBosId}, config);
        CHECK(result.tokens == std::vector<int>{0, 0, 0, 0});
        CHECK(result.stop_reason == "length");
    }
}

TEST_CASE("every emitted token replays as the argmax of its forward logits") {
    TransformerModel model = init_model(tiny_config(), 99, DType::F64);
    std::vector<int> prompt = {kBosId, 'h', 'e', 'l', 'p'};
    GenerationConfig config;
    config.max_new_tokens = 12;
    GenerationResult result = generate_greedy(model, prompt, config);
    REQUIRE(result.tokens.size() <= 12);

    std::vector<int> context = prompt;
    for (int token : result.tokens) {
        if (context.size() > static_cast<size_t>(model.config.max_seq_len)) {
            context.erase(context.begin(),
                          context.end() - static_cast<ptrdiff_t>(model.config.max_seq_len));
        }
        Tensor logits = model.forward(context);
        CHECK(argmax_last_row(logits) == token);
        context.push_back(token);
    }
    if (result.stop_reason == "eos") {
        Tensor logits = model.forward(context);
        CHECK(argmax_last_row(logits) == model.config.eos_id);
    }
}

TEST_CASE("generation is deterministic across calls") {
    for (DType dtype : {DType::F32, DType::F64}) {
        TransformerModel model = init_model(tiny_config(), 7, dtype);
        GenerationConfig config;
        config.max_new_tokens = 16;
        GenerationResult a = generate_greedy(model, {kBosId, 'a', 'b'}, config);
        GenerationResult b = generate_greedy(model, {kBosId, 'a', 'b'}, config);
        CHECK(a.tokens == b.tokens);
        CHECK(a.stop_reason == b.stop_reason);
    }
}

TEST_CASE("context slides left once it reaches max_seq_len") {
    TransformerModel model = init_model(tiny_config(), 3, DType::F32);
    // Prompt of 23 tokens against max_seq_len 24: generation must keep
    // going well past the window without raising length errors.
    std::vector<int> prompt(23, 'x');
    prompt[0] = kBosId;
    GenerationConfig config;
    config.max_new_tokens = 40;
    config.stop_on_eos = false;
    GenerationResult result = generate_greedy(model, prompt, config);
    CHECK(result.tokens.size() == 40);
    CHECK(result.stop_reason == "length");
}

TEST_CASE("generate_greedy argument errors") {
    TransformerModel model = init_model(tiny_config(), 1, DType::F32);
    CHECK_THROWS_AS(generate_greedy(model, {}), ContractError);

    std::vector<int> too_long(static_cast<size_t>(model.config.max_seq_len), 'x');
    CHECK_THROWS_AS(generate_greedy(model, too_long), LengthError);

    GenerationConfig bad;
    bad.max_new_tokens = -1;
    CHECK_THROWS_AS(generate_greedy(model, {kBosId}, bad), ConfigError);

    CHECK_THROWS_AS(argmax_last_row(Tensor::zeros({3}, DType::F32)), DimensionError);
}
