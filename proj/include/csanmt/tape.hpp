#pragma once

#include <functional>
#include <vector>

#include "csanmt/tensor.hpp"

namespace csanmt {

using NodeId = int;
inline constexpr NodeId kNoNode = -1;

// Padded batch of packed sequences: sequence b occupies rows
// [b*stride, b*stride + lens[b]) of the row dimension; the remainder is PAD.
struct BatchSpec {
    int n_seq = 0;
    int stride = 0;
    std::vector<int> lens;

    int64_t total_rows() const { return static_cast<int64_t>(n_seq) * stride; }
};

// Attention geometry. kv_of maps each query sequence to its key/value
// sequence; empty means the identity (self-attention). Causal masking
// requires self-attention geometry.
struct AttnSpec {
    BatchSpec q;
    BatchSpec kv;
    std::vector<int> kv_of;
    int heads = 1;
    bool causal = false;
};

// Reverse-mode tape. Operations append nodes eagerly; backward() walks the
// recorded closures in reverse. With grads disabled the same ops run as a
// plain forward evaluator and record nothing, so training and inference
// share one implementation.
class Tape {
public:
    explicit Tape(bool enable_grad = true) : grad_enabled_(enable_grad) {}

    NodeId leaf(Tensor value, bool needs_grad);
    NodeId constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    // Gradient of the last backward() target w.r.t. this node. Zero tensor
    // if the node is unreachable from the target.
    const Tensor& grad(NodeId id);
    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return nodes_.size(); }

    // Seeds d(target)/d(target) = 1 and runs all recorded closures in
    // reverse order. target must hold a single element.
    void backward(NodeId target);

    // Elementwise.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId relu(NodeId a);

    // x [r,c] + row vector [c] broadcast over rows.
    NodeId add_rowvec(NodeId x, NodeId v);

    // Strict 2-D matrix product [m,k]x[k,n].
    NodeId matmul(NodeId a, NodeId b);

    // Row-wise softmax over the last dimension.
    NodeId softmax_rows(NodeId x);

    // Per-row layer norm with learned gain/bias, population variance.
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);

    // Row lookup: out[i] = table[ids[i]]. Backward scatter-adds into table.
    NodeId embedding(NodeId table, const std::vector<int>& ids);

    // out[i] = x[index[i]]; duplicate indices accumulate in backward.
    NodeId gather_rows(NodeId x, std::vector<int> index);

    // Vertical concatenation of equal-width matrices.
    NodeId concat_rows(NodeId a, NodeId b);

    // Masked mean over each sequence's real rows -> [n_seq, cols].
    NodeId mean_pool(NodeId x, const BatchSpec& spec);

    // Scalar mean over all elements.
    NodeId mean_all(NodeId x);

    // Row-wise cosine similarity of two [r,c] matrices -> [r].
    NodeId cos_rows(NodeId a, NodeId b);

    // Scalar L2 norm of all elements.
    NodeId l2norm(NodeId x);

    // Scaled dot-product attention over padded packed batches. Padded and
    // masked positions are exact zeros in the output.
    NodeId attention(NodeId q, NodeId k, NodeId v, const AttnSpec& spec);

    // Label-smoothed cross entropy over rows of logits, weighted per row and
    // normalized by the total weight -> scalar. gold ids index columns.
    NodeId cross_entropy_rows(NodeId logits, const std::vector<int>& gold,
                              const std::vector<double>& weight, double smooth_eps);

    // Escape hatch for fused operations defined outside the tape: the value
    // is recorded as a node and `backward` receives (tape, upstream grad).
    NodeId custom(Tensor value, std::function<void(Tape&, const Tensor&)> backward);

    // Accumulate into a node's gradient buffer (used by backward closures).
    void add_grad(NodeId id, const Tensor& g);
    void add_grad_scaled(NodeId id, const Tensor& g, double s);
    Tensor& grad_buffer(NodeId id);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, const Tensor&)> backward;
    };

    NodeId push(Tensor value, std::function<void(Tape&, const Tensor&)> backward);

    std::vector<Node> nodes_;
    bool grad_enabled_;
    Tensor zero_;
};

} // namespace csanmt
