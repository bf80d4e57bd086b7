#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "din/config.hpp"
#include "din/parameter_store.hpp"
#include "din/tape.hpp"
#include "din/tensor.hpp"

namespace din {

inline constexpr double kLeakySlope = 0.2;

// 1-based (branch m, depth d) coordinate of a WRDB in the interleaved grid.
struct NodeId {
    int branch = 1;
    int depth = 1;
    friend bool operator==(const NodeId&, const NodeId&) = default;
};

struct FusionInputs {
    NodeId first;   // x1 of the fusion node
    NodeId second;  // x2 of the fusion node
    friend bool operator==(const FusionInputs&, const FusionInputs&) = default;
};

// Wiring of the multi-branch framework. Branch 1 is a plain chain seeded by
// the shallow features. For m > 1 the WRDB at (m, d) consumes a fused pair:
//   d = 1: (F[m-1][D], F[m-1][1])
//   d > 1: (F[m-1][d], F[m][d-1])
class InterleaveTopology {
public:
    InterleaveTopology(int branches, int depth);

    [[nodiscard]] int branches() const { return branches_; }
    [[nodiscard]] int depth() const { return depth_; }

    // Branch-major, depth-minor; every node follows its inputs.
    [[nodiscard]] std::vector<NodeId> evaluation_order() const;

    // nullopt for branch 1.
    [[nodiscard]] std::optional<FusionInputs> fusion_inputs(NodeId node) const;

    [[nodiscard]] std::size_t wrdb_count() const {
        return static_cast<std::size_t>(branches_) * depth_;
    }
    [[nodiscard]] std::size_t fusion_node_count() const {
        return static_cast<std::size_t>(branches_ - 1) * depth_;
    }

private:
    int branches_;
    int depth_;
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // (out_c, in_c, k, k)
    Tensor<T> bias;    // (1, out_c, 1, 1)
    int padding = 0;

    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const;
};

// L densely connected 3x3 conv + LeakyReLU layers of G channels each, 1x1
// local feature fusion back to C channels, local residual.
template <typename T>
struct ResidualDenseBlock {
    std::vector<Conv2d<T>> layers;
    Conv2d<T> fusion;

    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const;
};

// Leading 3x3 conv X0, cascaded RDBs whose inputs are sums of per-channel
// rescaled earlier outputs, and a rescaled X0 shortcut to the block output.
template <typename T>
struct WeightedResidualDenseBlock {
    Conv2d<T> head;
    std::vector<ResidualDenseBlock<T>> rdbs;
    // dwc[b][i] scales X_i on its way into RDB b+1 (i = 0..b).
    std::vector<std::vector<Tensor<T>>> dwc;
    Tensor<T> dwc_out;
    bool use_dwc = true;

    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const;
    [[nodiscard]] std::size_t connection_count() const;
};

template <typename T>
struct AsymmetricCoAttention {
    Conv2d<T> integrate;  // 1x1, 2C -> C
    Conv2d<T> squeeze;    // 1x1, C -> C / reduction
    Conv2d<T> expand;     // 1x1, C / reduction -> 2C

    // Per-channel weight alpha applied to x1; x2 receives 1 - alpha.
    Tensor<T> attention(Tape<T>& tape, const Tensor<T>& x1, const Tensor<T>& x2) const;
    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x1, const Tensor<T>& x2) const;
};

template <typename T>
struct FusionNode {
    FusionMode mode = FusionMode::Asyca;
    Conv2d<T> reduce;  // concat mode only
    AsymmetricCoAttention<T> attention;

    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x1, const Tensor<T>& x2) const;
};

// What a forward pass actually consumed, for wiring inspection.
struct ForwardTrace {
    struct Fusion {
        NodeId node;
        FusionInputs inputs;
    };
    std::vector<NodeId> wrdb_order;
    std::vector<Fusion> fusions;
    std::vector<NodeId> gff_inputs;
};

template <typename T>
class DinModel {
public:
    // Parameters are initialised deterministically from (seed, parameter name).
    DinModel(const ModelConfig& config, std::uint64_t seed);

    [[nodiscard]] const ModelConfig& config() const { return config_; }
    [[nodiscard]] const InterleaveTopology& topology() const { return topology_; }
    [[nodiscard]] ParameterStore<T>& parameters() { return store_; }
    [[nodiscard]] const ParameterStore<T>& parameters() const { return store_; }

    // (n, 3, h, w) in [0, 1] -> (n, 3, r h, r w).
    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& lr, ForwardTrace* trace = nullptr) const;

    [[nodiscard]] const WeightedResidualDenseBlock<T>& wrdb(NodeId node) const;
    [[nodiscard]] const FusionNode<T>& fusion(NodeId node) const;

private:
    ModelConfig config_;
    InterleaveTopology topology_;
    ParameterStore<T> store_;
    Conv2d<T> shallow_;
    std::vector<WeightedResidualDenseBlock<T>> wrdbs_;
    std::vector<FusionNode<T>> fusions_;
    Conv2d<T> gff_fuse_;
    Conv2d<T> gff_conv_;
    Conv2d<T> up_conv_;
    Conv2d<T> out_conv_;
};

// Deterministic per-parameter initialisation.
//   conv weights: uniform(+-gain * sqrt(3 / fan_in)), gain matched to what
//   follows the conv (LeakyReLU(0.2) in dense layers, ReLU after the attention
//   squeeze, 1 elsewhere); a zero-initialised attention expansion if requested
//   biases: 0;  depth-wise 1x1 weights: 1
template <typename T>
void init_uniform(Tensor<T>& t, double bound, std::uint64_t seed, const std::string& name);

struct ParameterBreakdown {
    struct Row {
        std::string module;
        std::int64_t count = 0;
    };
    std::vector<Row> rows;
    std::int64_t total = 0;
};

// Learnable scalars by enumeration of a constructed parameter store, grouped
// by module kind.
[[nodiscard]] ParameterBreakdown count_parameters(const ModelConfig& config);
[[nodiscard]] std::string module_of(const std::string& parameter_name);

// Dihedral group D4 on the spatial axes: t in [0, 8), rotation by (t % 4)
// quarter turns after an optional horizontal flip (t >= 4).
template <typename T>
Tensor<T> dihedral_transform(const Tensor<T>& x, int t);

template <typename T>
Tensor<T> inverse_dihedral_transform(const Tensor<T>& x, int t);

// Mean over the D4 orbit: inverse_t(model(transform_t(lr))).
template <typename T, typename Forward>
Tensor<T> self_ensemble(const Forward& forward, const Tensor<T>& lr) {
    Tensor<T> acc;
    for (int t = 0; t < 8; ++t) {
        const Tensor<T> y = inverse_dihedral_transform(forward(dihedral_transform(lr, t)), t);
        if (!acc.defined()) {
            acc = y.clone();
            continue;
        }
        if (y.shape() != acc.shape()) throw ShapeError("self_ensemble: inconsistent output shapes");
        auto a = acc.mutable_data();
        const auto v = y.data();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += v[i];
    }
    for (auto& v : acc.mutable_data()) v *= T(0.125);
    return acc;
}

template <typename T>
Tensor<T> self_ensemble_infer(const DinModel<T>& model, const Tensor<T>& lr) {
    return self_ensemble<T>(
        [&model](const Tensor<T>& x) {
            Tape<T> tape(false);
            return model.forward(tape, x);
        },
        lr);
}

}  // namespace din
