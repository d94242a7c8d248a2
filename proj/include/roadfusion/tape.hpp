#pragma once

#include <functional>
#include <vector>

#include "roadfusion/tensor.hpp"

namespace rf {

// Recording-based reverse-mode autodiff over the fixed op set the fusion
// network needs. Forward calls append nodes; backward() accumulates
// gradients by summation, so calling it twice doubles every gradient.
class Tape {
public:
    using NodeId = int;

    // Custom-op backward: receives the upstream gradient and the recorded
    // input values, and adds into the input gradients.
    using BackwardFn = std::function<void(const Tensor& upstream,
                                          const std::vector<const Tensor*>& inputs,
                                          const std::vector<Tensor*>& input_grads)>;

    NodeId leaf(Tensor value);

    NodeId conv2d(NodeId x, NodeId w, NodeId b, Padding pad = Padding::same, int stride = 1);
    NodeId relu(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId concat_channels(NodeId a, NodeId b);
    NodeId upsample_nearest2x(NodeId x);
    NodeId avg_pool_global(NodeId x);
    NodeId fully_connected(NodeId x, NodeId w, NodeId b);
    NodeId reshape(NodeId x, std::vector<int> dims);
    // Scalar loss node; probabilities retrievable via value() of the node
    // returned in `probs_out` when non-null.
    NodeId softmax_ce(NodeId logits, const LabelImage& labels,
                      std::vector<double> class_weights = {}, int ignore_class = 0,
                      Tensor* probs_out = nullptr);

    // Generic extension point for ops defined outside this module.
    NodeId custom(std::vector<NodeId> inputs, Tensor value, BackwardFn backward);

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;

    // Reverse sweep from `root`. A null seed requires a scalar root (seeded
    // with 1); otherwise `seed` must match the root's shape.
    void backward(NodeId root, const Tensor* seed = nullptr);
    void zero_grad();

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor value;
        Tensor grad;          // allocated lazily, same shape as value
        std::vector<NodeId> inputs;
        BackwardFn backward;  // empty for leaves
    };

    NodeId push(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);
    Tensor& grad_buffer(NodeId id);
    void check(NodeId id) const;

    std::vector<Node> nodes_;
};

}  // namespace rf
