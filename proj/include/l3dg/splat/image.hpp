#pragma once

#include "l3dg/numcore/tensor.hpp"

#include <filesystem>
#include <stdexcept>

namespace l3dg::splat {

    class ImageError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    /// 8-bit RGB PNG as [H, W, 3] values in [0, 1].
    nc::Tensor<float> read_png(const std::filesystem::path& path);

    /// Values are clamped to [0, 1] and rounded to 8 bits.
    template <typename T>
    void write_png(const std::filesystem::path& path, const nc::Tensor<T>& image);

} // namespace l3dg::splat
