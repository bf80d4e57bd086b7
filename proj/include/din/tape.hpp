#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "din/tensor.hpp"

namespace din {

// Dynamically recorded computation graph for reverse-mode differentiation.
//
// Operations append themselves in execution order, so the tape is always
// topologically sorted. A tape is owned by one thread; inference runs on a
// non-recording tape and shares parameters read-only. Tapes are cleared
// explicitly between training steps.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void()>;

    struct Node {
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        BackwardFn backward;
        const char* op = "";
    };

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool recording() const { return recording_; }

    // True when an op over `inputs` must be recorded.
    [[nodiscard]] bool needs_grad(std::initializer_list<const Tensor<T>*> inputs) const;
    [[nodiscard]] bool needs_grad(const std::vector<Tensor<T>>& inputs) const;

    // Marks `output` as produced by an op over `inputs`. The backward rule reads
    // output.grad() and accumulates into each requires_grad input.
    void record(const char* op, std::vector<Tensor<T>> inputs, Tensor<T>& output, BackwardFn fn);

    // Accumulates d(root)/d(leaf) into every requires_grad leaf reachable from
    // root. Intermediate gradients are recomputed from zero on every call.
    void backward(const Tensor<T>& root);

    void clear() { nodes_.clear(); }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] const Node& node(std::size_t i) const { return nodes_[i]; }

    // Index of the node that produced `t`, or -1 for leaves and foreign tensors.
    [[nodiscard]] std::ptrdiff_t producer(const Tensor<T>& t) const;

private:
    bool recording_;
    std::vector<Node> nodes_;
};

}  // namespace din
