#pragma once

#include <functional>
#include <vector>

#include "alignkit/tensor.h"

namespace alignkit {

/// One recorded operation: the tensors it consumed, the tensor it produced,
/// and the rule that maps the output gradient onto the input gradients.
struct TapeNode {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
};

/// Ordered record of operations. Creation order is a topological order, so a
/// reverse walk implements reverse-mode differentiation. A tape and its
/// tensors belong to one training session; no concurrent use.
class Tape {
  public:
    /// Appends a node and stamps the output with its node id.
    /// The backward callable must accumulate (+=) into input gradients.
    int64_t record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);

    /// Reverse-mode sweep from a scalar loss. Populates grad on every
    /// requires_grad tensor reachable from the loss; gradients accumulate
    /// additively across calls. The recorded nodes are consumed.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }
    const TapeNode& node(size_t i) const { return nodes_[i]; }

    /// Drops all recorded nodes (also done by backward()).
    void clear();

  private:
    std::vector<TapeNode> nodes_;
};

}  // namespace alignkit
