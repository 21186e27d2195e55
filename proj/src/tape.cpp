#include "alignkit/tape.h"

namespace alignkit {

int64_t Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
    int64_t id = static_cast<int64_t>(nodes_.size());
    output.impl_->node_id = id;
    output.impl_->requires_grad = true;
    nodes_.push_back(TapeNode{std::move(inputs), std::move(output), std::move(backward)});
    return id;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss");
    }
    int64_t id = loss.node_id();
    bool on_tape = id >= 0 && id < static_cast<int64_t>(nodes_.size()) &&
                   nodes_[static_cast<size_t>(id)].output.same_storage(loss);
    // A recorded output (node_id >= 0) must sit on this tape; anything else
    // is only a valid loss if it is a differentiable leaf.
    if (!on_tape && (id >= 0 || !loss.requires_grad())) {
        throw ContractError("loss is not reachable from this tape");
    }

    // Seed d(loss)/d(loss) = 1.
    detail::dispatch(loss.dtype(), [&](auto tag) {
        using T = decltype(tag);
        detail::ensure_grad<T>(*loss.impl())[0] = T{1};
    });

    // Reverse walk; creation order is topological, so every node runs after
    // all of its consumers. Nodes whose output gradient never materialized
    // contribute nothing and are skipped.
    for (size_t i = nodes_.size(); i-- > 0;) {
        TapeNode& node = nodes_[i];
        Tensor& out = node.output;
        bool has_out_grad = detail::dispatch(out.dtype(), [&](auto tag) -> bool {
            using T = decltype(tag);
            auto* g = std::get_if<std::vector<T>>(&out.impl()->grad);
            return g != nullptr && g->size() == static_cast<size_t>(out.numel());
        });
        if (has_out_grad && node.backward) node.backward();
    }
    clear();
}

void Tape::clear() { nodes_.clear(); }

}  // namespace alignkit
