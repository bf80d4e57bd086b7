#include "din/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "din/nn.hpp"
#include "din/ops.hpp"

namespace din {

InterleaveTopology::InterleaveTopology(int branches, int depth)
    : branches_(branches), depth_(depth) {
    if (branches < 1 || depth < 1) {
        throw ConfigError("interleave topology needs at least one branch and one block");
    }
}

std::vector<NodeId> InterleaveTopology::evaluation_order() const {
    std::vector<NodeId> order;
    order.reserve(wrdb_count());
    for (int m = 1; m <= branches_; ++m) {
        for (int d = 1; d <= depth_; ++d) order.push_back({m, d});
    }
    return order;
}

std::optional<FusionInputs> InterleaveTopology::fusion_inputs(NodeId node) const {
    if (node.branch < 1 || node.branch > branches_ || node.depth < 1 || node.depth > depth_) {
        throw Error("node (" + std::to_string(node.branch) + "," + std::to_string(node.depth) +
                    ") outside the interleave grid");
    }
    if (node.branch == 1) return std::nullopt;
    const int prev = node.branch - 1;
    if (node.depth == 1) return FusionInputs{{prev, depth_}, {prev, 1}};
    return FusionInputs{{prev, node.depth}, {node.branch, node.depth - 1}};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(Tape<T>& tape, const Tensor<T>& x) const {
    return nn::conv2d(tape, x, weight, bias, padding);
}

template <typename T>
Tensor<T> ResidualDenseBlock<T>::forward(Tape<T>& tape, const Tensor<T>& x) const {
    std::vector<Tensor<T>> features{x};
    for (const auto& layer : layers) {
        const Tensor<T> in =
            features.size() == 1 ? x : ops::concat_channels<T>(tape, features);
        features.push_back(nn::leaky_relu(tape, layer.forward(tape, in), T(kLeakySlope)));
    }
    const Tensor<T> fused = fusion.forward(tape, ops::concat_channels<T>(tape, features));
    return ops::add(tape, x, fused);
}

template <typename T>
Tensor<T> WeightedResidualDenseBlock<T>::forward(Tape<T>& tape, const Tensor<T>& x) const {
    auto route = [&](const Tensor<T>& src, const Tensor<T>& weight) {
        return use_dwc ? nn::depthwise_conv1x1(tape, src, weight) : src;
    };
    std::vector<Tensor<T>> outputs{head.forward(tape, x)};
    for (std::size_t b = 0; b < rdbs.size(); ++b) {
        Tensor<T> in = route(outputs[0], use_dwc ? dwc[b][0] : Tensor<T>{});
        for (std::size_t i = 1; i <= b; ++i) {
            in = ops::add(tape, in, route(outputs[i], use_dwc ? dwc[b][i] : Tensor<T>{}));
        }
        outputs.push_back(rdbs[b].forward(tape, in));
    }
    return ops::add(tape, outputs.back(), route(outputs[0], dwc_out));
}

template <typename T>
std::size_t WeightedResidualDenseBlock<T>::connection_count() const {
    const std::size_t b = rdbs.size();
    return b * (b + 1) / 2 + 1;
}

template <typename T>
Tensor<T> AsymmetricCoAttention<T>::attention(Tape<T>& tape, const Tensor<T>& x1,
                                              const Tensor<T>& x2) const {
    const std::vector<Tensor<T>> pair{x1, x2};
    const Tensor<T> u = integrate.forward(tape, ops::concat_channels<T>(tape, pair));
    const Tensor<T> z = nn::global_avg_pool(tape, u);
    const Tensor<T> s = expand.forward(tape, nn::relu(tape, squeeze.forward(tape, z)));
    return nn::channel_pair_softmax(tape, s);
}

template <typename T>
Tensor<T> AsymmetricCoAttention<T>::forward(Tape<T>& tape, const Tensor<T>& x1,
                                            const Tensor<T>& x2) const {
    if (x1.shape() != x2.shape()) {
        throw ShapeError("asyca: inputs " + x1.shape().str() + " and " + x2.shape().str() +
                         " differ");
    }
    return nn::attention_blend(tape, attention(tape, x1, x2), x1, x2);
}

template <typename T>
Tensor<T> FusionNode<T>::forward(Tape<T>& tape, const Tensor<T>& x1, const Tensor<T>& x2) const {
    if (x1.shape() != x2.shape()) {
        throw ShapeError("fusion: inputs " + x1.shape().str() + " and " + x2.shape().str() +
                         " differ");
    }
    switch (mode) {
        case FusionMode::Sum: return ops::add(tape, x1, x2);
        case FusionMode::Mean: return ops::scale(tape, ops::add(tape, x1, x2), T(0.5));
        case FusionMode::Concat: {
            const std::vector<Tensor<T>> pair{x1, x2};
            return reduce.forward(tape, ops::concat_channels<T>(tape, pair));
        }
        case FusionMode::Asyca: return attention.forward(tape, x1, x2);
    }
    throw ConfigError("fusion: unknown mode");
}

template <typename T>
void init_uniform(Tensor<T>& t, double bound, std::uint64_t seed, const std::string& name) {
    std::mt19937_64 rng(fnv1a64(name, fnv1a64(std::to_string(seed))));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
}

namespace {

template <typename T>
class Builder {
public:
    Builder(ParameterStore<T>& store, const ModelConfig& config, std::uint64_t seed)
        : store_(store), config_(config), seed_(seed) {}

    // Kaiming gain for the nonlinearity that follows the layer.
    enum class Init { Linear, Leaky, Relu, Zero };

    Conv2d<T> conv(const std::string& name, std::int64_t in_c, std::int64_t out_c, int k,
                   Init init = Init::Linear) {
        Conv2d<T> c;
        c.weight = store_.add(name + ".weight", Shape{out_c, in_c, k, k});
        c.bias = store_.add(name + ".bias", Shape{1, out_c, 1, 1});
        c.padding = k / 2;
        if (init != Init::Zero) {
            double gain = 1.0;
            if (init == Init::Leaky) gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
            if (init == Init::Relu) gain = std::sqrt(2.0);
            const double fan_in = static_cast<double>(in_c) * k * k;
            init_uniform(c.weight, gain * std::sqrt(3.0 / fan_in), seed_, name + ".weight");
        }
        return c;
    }

    Tensor<T> dwc(const std::string& name, std::int64_t channels) {
        auto w = store_.add(name + ".weight", Shape{channels, 1, 1, 1});
        for (auto& v : w.mutable_data()) v = T(1);
        return w;
    }

    ResidualDenseBlock<T> rdb(const std::string& name) {
        const std::int64_t c = config_.base_channels;
        const std::int64_t g = config_.growth;
        ResidualDenseBlock<T> block;
        for (int l = 0; l < config_.convs_per_rdb; ++l) {
            block.layers.push_back(conv(name + ".conv" + std::to_string(l), c + l * g, g, 3, Init::Leaky));
        }
        block.fusion = conv(name + ".lff", c + config_.convs_per_rdb * g, c, 1);
        return block;
    }

    WeightedResidualDenseBlock<T> wrdb(const std::string& name) {
        const std::int64_t c = config_.base_channels;
        WeightedResidualDenseBlock<T> block;
        block.use_dwc = config_.use_dwc;
        block.head = conv(name + ".conv0", c, c, 3);
        for (int b = 1; b <= config_.rdbs_per_wrdb; ++b) {
            block.rdbs.push_back(rdb(name + ".rdb" + std::to_string(b)));
            std::vector<Tensor<T>> weights;
            if (config_.use_dwc) {
                for (int i = 0; i < b; ++i) {
                    weights.push_back(
                        dwc(name + ".dwc" + std::to_string(b) + "_" + std::to_string(i), c));
                }
            }
            block.dwc.push_back(std::move(weights));
        }
        if (config_.use_dwc) block.dwc_out = dwc(name + ".dwc_out", c);
        return block;
    }

    FusionNode<T> fusion(const std::string& name) {
        const std::int64_t c = config_.base_channels;
        FusionNode<T> node;
        node.mode = config_.fusion_mode;
        if (node.mode == FusionMode::Concat) node.reduce = conv(name + ".reduce", 2 * c, c, 1);
        if (node.mode == FusionMode::Asyca) {
            const std::int64_t hidden = c / config_.attn_reduction;
            node.attention.integrate = conv(name + ".integrate", 2 * c, c, 1);
            node.attention.squeeze = conv(name + ".squeeze", c, hidden, 1, Init::Relu);
            node.attention.expand =
                conv(name + ".expand", hidden, 2 * c, 1, config_.asyca_zero_init ? Init::Zero : Init::Linear);
        }
        return node;
    }

private:
    ParameterStore<T>& store_;
    const ModelConfig& config_;
    std::uint64_t seed_;
};

std::string node_name(const char* kind, NodeId id) {
    return "branch" + std::to_string(id.branch) + "." + kind + std::to_string(id.depth);
}

}  // namespace

template <typename T>
DinModel<T>::DinModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), topology_(config.branches, config.wrdbs_per_branch) {
    config_.validate();
    Builder<T> b(store_, config_, seed);
    const std::int64_t c = config_.base_channels;
    const std::int64_t r = config_.scale;
    shallow_ = b.conv("sfe", 3, c, 3);
    for (const NodeId id : topology_.evaluation_order()) {
        if (topology_.fusion_inputs(id)) fusions_.push_back(b.fusion(node_name("fuse", id)));
        wrdbs_.push_back(b.wrdb(node_name("wrdb", id)));
    }
    if (config_.use_gff) {
        gff_fuse_ = b.conv("gff.fuse", config_.branches * c, c, 1);
        gff_conv_ = b.conv("gff.conv", c, c, 3);
    }
    up_conv_ = b.conv("head.up", c, 3 * r * r, 3);
    out_conv_ = b.conv("head.out", 3, 3, 3);
}

template <typename T>
const WeightedResidualDenseBlock<T>& DinModel<T>::wrdb(NodeId node) const {
    return wrdbs_.at(static_cast<std::size_t>((node.branch - 1) * config_.wrdbs_per_branch +
                                              node.depth - 1));
}

template <typename T>
const FusionNode<T>& DinModel<T>::fusion(NodeId node) const {
    if (node.branch < 2) throw Error("branch 1 has no fusion nodes");
    return fusions_.at(static_cast<std::size_t>((node.branch - 2) * config_.wrdbs_per_branch +
                                                node.depth - 1));
}

template <typename T>
Tensor<T> DinModel<T>::forward(Tape<T>& tape, const Tensor<T>& lr, ForwardTrace* trace) const {
    if (lr.shape().c != 3) {
        throw ShapeError("din forward: expected 3-channel input, got " + lr.shape().str());
    }
    const int depth = config_.wrdbs_per_branch;
    const Tensor<T> f0 = shallow_.forward(tape, lr);
    std::vector<Tensor<T>> out(topology_.wrdb_count());
    auto slot = [depth](NodeId id) {
        return static_cast<std::size_t>((id.branch - 1) * depth + id.depth - 1);
    };

    for (const NodeId id : topology_.evaluation_order()) {
        Tensor<T> in;
        if (const auto pair = topology_.fusion_inputs(id)) {
            in = fusion(id).forward(tape, out[slot(pair->first)], out[slot(pair->second)]);
            if (trace) trace->fusions.push_back({id, *pair});
        } else {
            in = id.depth == 1 ? f0 : out[slot({id.branch, id.depth - 1})];
        }
        out[slot(id)] = wrdb(id).forward(tape, in);
        if (trace) trace->wrdb_order.push_back(id);
    }

    Tensor<T> global;
    if (config_.use_gff) {
        std::vector<Tensor<T>> tails;
        for (int m = 1; m <= config_.branches; ++m) {
            tails.push_back(out[slot({m, depth})]);
            if (trace) trace->gff_inputs.push_back({m, depth});
        }
        global = gff_conv_.forward(tape, gff_fuse_.forward(tape, ops::concat_channels<T>(tape, tails)));
    } else {
        global = out[slot({config_.branches, depth})];
        if (trace) trace->gff_inputs.push_back({config_.branches, depth});
    }

    const Tensor<T> deep = ops::add(tape, f0, global);
    const Tensor<T> up = nn::pixel_shuffle(tape, up_conv_.forward(tape, deep), config_.scale);
    return out_conv_.forward(tape, up);
}

std::string module_of(const std::string& name) {
    if (name.rfind("sfe.", 0) == 0) return "shallow_feature";
    if (name.rfind("gff.", 0) == 0) return "global_feature_fusion";
    if (name.rfind("head.", 0) == 0) return "reconstruction";
    if (name.find(".fuse") != std::string::npos) return "fusion_nodes";
    if (name.find(".dwc") != std::string::npos) return "wrdb.dwc";
    if (name.find(".rdb") != std::string::npos) return "wrdb.rdb";
    if (name.find(".conv0") != std::string::npos) return "wrdb.conv0";
    return "other";
}

ParameterBreakdown count_parameters(const ModelConfig& config) {
    const DinModel<float> model(config, 0);
    ParameterBreakdown out;
    std::map<std::string, std::int64_t> by_module;
    std::vector<std::string> order;
    for (const auto& e : model.parameters().entries()) {
        const std::string m = module_of(e.name);
        if (!by_module.contains(m)) order.push_back(m);
        by_module[m] += e.tensor.numel();
        out.total += e.tensor.numel();
    }
    for (const auto& m : order) out.rows.push_back({m, by_module[m]});
    return out;
}

namespace {

// Counter-clockwise quarter turn on every (n, c) plane.
template <typename T>
Tensor<T> rot90(const Tensor<T>& x) {
    const Shape s = x.shape();
    auto out = Tensor<T>::zeros(Shape{s.n, s.c, s.w, s.h});
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
        const T* src = x.data().data() + nc * s.plane();
        T* dst = out.mutable_data().data() + nc * s.plane();
        for (std::int64_t i = 0; i < s.w; ++i) {
            for (std::int64_t j = 0; j < s.h; ++j) dst[i * s.h + j] = src[j * s.w + (s.w - 1 - i)];
        }
    }
    return out;
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& x) {
    const Shape s = x.shape();
    auto out = Tensor<T>::zeros(s);
    for (std::int64_t row = 0; row < s.n * s.c * s.h; ++row) {
        const T* src = x.data().data() + row * s.w;
        T* dst = out.mutable_data().data() + row * s.w;
        for (std::int64_t j = 0; j < s.w; ++j) dst[j] = src[s.w - 1 - j];
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> dihedral_transform(const Tensor<T>& x, int t) {
    if (t < 0 || t >= 8) throw Error("dihedral transform index must lie in [0, 8)");
    Tensor<T> y = t >= 4 ? hflip(x) : x.clone();
    for (int k = 0; k < t % 4; ++k) y = rot90(y);
    return y;
}

template <typename T>
Tensor<T> inverse_dihedral_transform(const Tensor<T>& x, int t) {
    if (t < 0 || t >= 8) throw Error("dihedral transform index must lie in [0, 8)");
    Tensor<T> y = x.clone();
    for (int k = 0; k < (4 - t % 4) % 4; ++k) y = rot90(y);
    return t >= 4 ? hflip(y) : y;
}

#define DIN_INSTANTIATE_MODEL(T)                                                           \
    template struct Conv2d<T>;                                                             \
    template struct ResidualDenseBlock<T>;                                                 \
    template struct WeightedResidualDenseBlock<T>;                                         \
    template struct AsymmetricCoAttention<T>;                                              \
    template struct FusionNode<T>;                                                         \
    template class DinModel<T>;                                                            \
    template void init_uniform<T>(Tensor<T>&, double, std::uint64_t, const std::string&);  \
    template Tensor<T> dihedral_transform<T>(const Tensor<T>&, int);                       \
    template Tensor<T> inverse_dihedral_transform<T>(const Tensor<T>&, int);

DIN_INSTANTIATE_MODEL(float)
DIN_INSTANTIATE_MODEL(double)

}  // namespace din
