#include "din/tape.hpp"

#include <algorithm>

namespace din {

template <typename T>
bool Tape<T>::needs_grad(std::initializer_list<const Tensor<T>*> inputs) const {
    if (!recording_) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>* t) { return t && t->defined() && t->requires_grad(); });
}

template <typename T>
bool Tape<T>::needs_grad(const std::vector<Tensor<T>>& inputs) const {
    if (!recording_) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>& t) { return t.defined() && t.requires_grad(); });
}

template <typename T>
void Tape<T>::record(const char* op, std::vector<Tensor<T>> inputs, Tensor<T>& output,
                     BackwardFn fn) {
    output.impl_->requires_grad = true;
    output.impl_->tape = this;
    output.impl_->node = nodes_.size();
    nodes_.push_back(Node{std::move(inputs), output, std::move(fn), op});
}

template <typename T>
std::ptrdiff_t Tape<T>::producer(const Tensor<T>& t) const {
    if (!t.defined() || t.impl_->tape != this || t.impl_->node >= nodes_.size()) return -1;
    const std::size_t idx = t.impl_->node;
    return nodes_[idx].output.same_storage(t) ? static_cast<std::ptrdiff_t>(idx) : -1;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
    if (!root.defined() || root.numel() != 1) {
        throw ShapeError("backward() needs a scalar root, got " +
                         (root.defined() ? root.shape().str() : std::string("undefined")));
    }
    const std::ptrdiff_t root_idx = producer(root);
    if (root_idx < 0) {
        throw Error("backward() root was not produced on this tape");
    }

    // Reachability sweep: which recorded ops contribute to root.
    std::vector<char> reached(static_cast<std::size_t>(root_idx) + 1, 0);
    reached[static_cast<std::size_t>(root_idx)] = 1;
    for (std::ptrdiff_t i = root_idx; i >= 0; --i) {
        if (!reached[static_cast<std::size_t>(i)]) continue;
        for (const auto& in : nodes_[static_cast<std::size_t>(i)].inputs) {
            const std::ptrdiff_t p = producer(in);
            if (p >= 0) reached[static_cast<std::size_t>(p)] = 1;
        }
    }

    for (std::ptrdiff_t i = root_idx; i >= 0; --i) {
        if (!reached[static_cast<std::size_t>(i)]) continue;
        auto grad = nodes_[static_cast<std::size_t>(i)].output.mutable_grad();
        std::fill(grad.begin(), grad.end(), T(0));
    }
    const_cast<Tensor<T>&>(root).mutable_grad()[0] = T(1);

    for (std::ptrdiff_t i = root_idx; i >= 0; --i) {
        if (!reached[static_cast<std::size_t>(i)]) continue;
        Node& node = nodes_[static_cast<std::size_t>(i)];
        node.backward();
        for (auto& in : node.inputs) {
            if (in.defined() && in.requires_grad() && producer(in) < 0) {
                require_finite<T>(in.grad(), node.op);
            }
        }
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace din
