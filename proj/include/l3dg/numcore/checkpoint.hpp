#pragma once

#include "l3dg/numcore/tensor.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace l3dg::nc {

    class CheckpointError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    inline constexpr char kCheckpointMagic[8] = {'L', '3', 'D', 'G', 'T', 'N', 'S', 'R'};
    inline constexpr std::uint32_t kCheckpointVersion = 1;

    /// Named tensors, ordered by name. The on-disk dtype is recorded per tensor.
    template <typename T>
    using TensorMap = std::map<std::string, Tensor<T>>;

    /// Layout (little-endian): magic "L3DGTNSR", u32 version, then per tensor
    /// u32 name length, UTF-8 name, u32 rank, rank x u64 extents, u8 dtype tag
    /// (0 = f32, 1 = f64), raw values. Tensors run to end of file.
    template <typename T>
    void save_checkpoint(const std::filesystem::path& path, const TensorMap<T>& tensors);

    /// Loads every tensor, converting to T when the stored dtype differs.
    template <typename T>
    TensorMap<T> load_checkpoint(const std::filesystem::path& path);

} // namespace l3dg::nc
