#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "din/tensor.hpp"

namespace din {

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

// Ordered, uniquely named collection of learnable tensors.
template <typename T>
class ParameterStore {
public:
    // Registers a zero-filled tensor that requires grad.
    Tensor<T> add(std::string name, Shape shape);

    [[nodiscard]] const std::vector<NamedTensor<T>>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] Tensor<T> get(std::string_view name) const;
    [[nodiscard]] std::int64_t scalar_count() const;
    void zero_grad();

private:
    std::vector<NamedTensor<T>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Binary tensor container, little-endian throughout:
//   "DINW" | version u32 | count u32 | scalar_bytes u32 | config_hash u64
//   count x ( name_len u16 | utf-8 name | n,c,h,w u32 x4 | n*c*h*w IEEE-754 values )
inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerInfo {
    std::uint32_t version = 0;
    std::uint32_t scalar_bytes = 0;
    std::uint64_t config_hash = 0;
};

template <typename T>
void write_container(std::ostream& os, const std::vector<NamedTensor<T>>& tensors,
                     std::uint64_t config_hash);

// Values stored at another width are converted to T.
template <typename T>
std::vector<NamedTensor<T>> read_container(std::istream& is, ContainerInfo* info = nullptr);

template <typename T>
void save_container(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors,
                    std::uint64_t config_hash);

template <typename T>
std::vector<NamedTensor<T>> load_container(const std::filesystem::path& path,
                                           ContainerInfo* info = nullptr);

// Copies values from a container into a store whose names and shapes must
// match one-to-one.
template <typename T>
void assign_parameters(ParameterStore<T>& store, const std::vector<NamedTensor<T>>& loaded);

template <typename T>
void save_parameters(const std::filesystem::path& path, const ParameterStore<T>& store,
                     std::uint64_t config_hash);

// A config hash mismatch is a ConfigError when `expected_hash` is set.
template <typename T>
void load_parameters(const std::filesystem::path& path, ParameterStore<T>& store,
                     std::optional<std::uint64_t> expected_hash);

}  // namespace din
