#include "alignkit/gen.h"

#include <string>

#include "alignkit/errors.h"

namespace alignkit {

void GenerationConfig::validate() const {
    if (max_new_tokens < 0) {
        throw ConfigError("max_new_tokens must be non-negative, got " +
                          std::to_string(max_new_tokens));
    }
}

namespace {

template <typename T>
int64_t argmax_lowest_id(std::span<const T> row) {
    int64_t best = 0;
    for (int64_t i = 1; i < static_cast<int64_t>(row.size()); ++i) {
        if (row[static_cast<size_t>(i)] > row[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

}  // namespace

int64_t argmax_last_row(const Tensor& logits) {
    const Shape& shape = logits.shape();
    if (shape.size() != 2) {
        throw DimensionError("argmax_last_row expects a [time x vocab] matrix, got " +
                             shape_str(shape));
    }
    const int64_t vocab = shape[1];
    const int64_t offset = (shape[0] - 1) * vocab;
    if (logits.dtype() == DType::F32) {
        return argmax_lowest_id(logits.data<float>().subspan(static_cast<size_t>(offset)));
    }
    return argmax_lowest_id(logits.data<double>().subspan(static_cast<size_t>(offset)));
}

GenerationResult generate_greedy(const TransformerModel& model,
                                 const std::vector<int>& prompt_tokens,
                                 const GenerationConfig& config) {
    config.validate();
    if (prompt_tokens.empty()) {
        throw ContractError("generate_greedy needs a non-empty prompt");
    }
    if (static_cast<int64_t>(prompt_tokens.size()) >= model.config.max_seq_len) {
        throw LengthError("prompt of " + std::to_string(prompt_tokens.size()) +
                          " tokens leaves no room to generate within max_seq_len " +
                          std::to_string(model.config.max_seq_len));
    }

    std::vector<int> context = prompt_tokens;
    GenerationResult result;
    result.stop_reason = "length";
    const size_t window = static_cast<size_t>(model.config.max_seq_len);
    for (int64_t emitted = 0; emitted < config.max_new_tokens; ++emitted) {
        std::vector<int> view = context.size() <= window
                                    ? context
                                    : std::vector<int>(context.end() - static_cast<ptrdiff_t>(window),
                                                       context.end());
        Tensor logits = model.forward(view);
        int next = static_cast<int>(argmax_last_row(logits));
        if (config.stop_on_eos && next == model.config.eos_id) {
            result.stop_reason = "eos";
            break;
        }
        result.tokens.push_back(next);
        context.push_back(next);
    }
    return result;
}

}  // namespace alignkit
