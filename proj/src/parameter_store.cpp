#include "din/parameter_store.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace din {

template <typename T>
Tensor<T> ParameterStore<T>::add(std::string name, Shape shape) {
    if (index_.contains(name)) throw Error("duplicate parameter name '" + name + "'");
    auto t = Tensor<T>::zeros(shape, true);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), t});
    return t;
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
    return index_.contains(std::string(name));
}

template <typename T>
Tensor<T> ParameterStore<T>::get(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error("no parameter named '" + std::string(name) + "'");
    return entries_[it->second].tensor;
}

template <typename T>
std::int64_t ParameterStore<T>::scalar_count() const {
    std::int64_t total = 0;
    for (const auto& e : entries_) total += e.tensor.numel();
    return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

namespace {

constexpr std::array<char, 4> kMagic{'D', 'I', 'N', 'W'};

template <typename U>
void put_le(std::ostream& os, U value) {
    static_assert(std::is_unsigned_v<U>);
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    }
    os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> bytes{};
    is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is) throw IoError("weight container truncated");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

template <typename T>
void put_scalar(std::ostream& os, T v) {
    if constexpr (sizeof(T) == 4) {
        put_le(os, std::bit_cast<std::uint32_t>(v));
    } else {
        put_le(os, std::bit_cast<std::uint64_t>(v));
    }
}

}  // namespace

template <typename T>
void write_container(std::ostream& os, const std::vector<NamedTensor<T>>& tensors,
                     std::uint64_t config_hash) {
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, kContainerVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    put_le<std::uint32_t>(os, sizeof(T));
    put_le<std::uint64_t>(os, config_hash);
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > 0xFFFF) throw IoError("parameter name too long: " + name);
        put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape s = tensor.shape();
        for (const std::int64_t d : {s.n, s.c, s.h, s.w}) {
            put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        }
        for (const T v : tensor.data()) put_scalar(os, v);
    }
    if (!os) throw IoError("failed writing weight container");
}

template <typename T>
std::vector<NamedTensor<T>> read_container(std::istream& is, ContainerInfo* info) {
    std::array<char, 4> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw IoError("not a DINW weight container");
    ContainerInfo hdr;
    hdr.version = get_le<std::uint32_t>(is);
    if (hdr.version != kContainerVersion) {
        throw IoError("unsupported weight container version " + std::to_string(hdr.version));
    }
    const auto count = get_le<std::uint32_t>(is);
    hdr.scalar_bytes = get_le<std::uint32_t>(is);
    if (hdr.scalar_bytes != 4 && hdr.scalar_bytes != 8) {
        throw IoError("unsupported scalar width " + std::to_string(hdr.scalar_bytes));
    }
    hdr.config_hash = get_le<std::uint64_t>(is);

    std::vector<NamedTensor<T>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get_le<std::uint16_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw IoError("weight container truncated in name");
        Shape s;
        s.n = get_le<std::uint32_t>(is);
        s.c = get_le<std::uint32_t>(is);
        s.h = get_le<std::uint32_t>(is);
        s.w = get_le<std::uint32_t>(is);
        if (!s.valid()) throw IoError("invalid shape for '" + name + "'");
        std::vector<T> values(static_cast<std::size_t>(s.numel()));
        for (auto& v : values) {
            if (hdr.scalar_bytes == 4) {
                v = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(is)));
            } else {
                v = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(is)));
            }
        }
        out.push_back({std::move(name), Tensor<T>::from(s, std::move(values))});
    }
    if (info) *info = hdr;
    return out;
}

template <typename T>
void save_container(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors,
                    std::uint64_t config_hash) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_container(os, tensors, config_hash);
}

template <typename T>
std::vector<NamedTensor<T>> load_container(const std::filesystem::path& path, ContainerInfo* info) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return read_container<T>(is, info);
}

template <typename T>
void assign_parameters(ParameterStore<T>& store, const std::vector<NamedTensor<T>>& loaded) {
    if (loaded.size() != store.size()) {
        throw ConfigError("weight file holds " + std::to_string(loaded.size()) +
                          " tensors, model expects " + std::to_string(store.size()));
    }
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        const auto& expect = store.entries()[i];
        const auto& got = loaded[i];
        if (expect.name != got.name || expect.tensor.shape() != got.tensor.shape()) {
            throw ConfigError("weight file entry " + std::to_string(i) + " is '" + got.name + "' " +
                              got.tensor.shape().str() + ", model expects '" + expect.name + "' " +
                              expect.tensor.shape().str());
        }
    }
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        auto dst = store.entries()[i].tensor;
        const auto src = loaded[i].tensor.data();
        std::copy(src.begin(), src.end(), dst.mutable_data().begin());
    }
}

template <typename T>
void save_parameters(const std::filesystem::path& path, const ParameterStore<T>& store,
                     std::uint64_t config_hash) {
    save_container(path, store.entries(), config_hash);
}

template <typename T>
void load_parameters(const std::filesystem::path& path, ParameterStore<T>& store,
                     std::optional<std::uint64_t> expected_hash) {
    ContainerInfo info;
    const auto loaded = load_container<T>(path, &info);
    if (expected_hash && info.config_hash != *expected_hash) {
        std::ostringstream msg;
        msg << "weight file '" << path.string() << "' was written for config hash " << std::hex
            << info.config_hash << ", model config hashes to " << *expected_hash;
        throw ConfigError(msg.str());
    }
    assign_parameters(store, loaded);
}

#define DIN_INSTANTIATE_STORE(T)                                                                 \
    template class ParameterStore<T>;                                                            \
    template void write_container<T>(std::ostream&, const std::vector<NamedTensor<T>>&,         \
                                     std::uint64_t);                                             \
    template std::vector<NamedTensor<T>> read_container<T>(std::istream&, ContainerInfo*);      \
    template void save_container<T>(const std::filesystem::path&,                               \
                                    const std::vector<NamedTensor<T>>&, std::uint64_t);         \
    template std::vector<NamedTensor<T>> load_container<T>(const std::filesystem::path&,        \
                                                           ContainerInfo*);                      \
    template void assign_parameters<T>(ParameterStore<T>&, const std::vector<NamedTensor<T>>&); \
    template void save_parameters<T>(const std::filesystem::path&, const ParameterStore<T>&,   \
                                     std::uint64_t);                                             \
    template void load_parameters<T>(const std::filesystem::path&, ParameterStore<T>&,         \
                                     std::optional<std::uint64_t>);

DIN_INSTANTIATE_STORE(float)
DIN_INSTANTIATE_STORE(double)

}  // namespace din
