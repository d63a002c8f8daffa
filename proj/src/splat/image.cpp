#include "l3dg/splat/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace l3dg::splat {

    nc::Tensor<float> read_png(const std::filesystem::path& path) {
        png_image img;
        std::memset(&img, 0, sizeof(img));
        img.version = PNG_IMAGE_VERSION;
        if (!png_image_begin_read_from_file(&img, path.c_str()))
            throw ImageError("cannot read " + path.string() + ": " + img.message);
        img.format = PNG_FORMAT_RGB;
        std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
        if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
            png_image_free(&img);
            throw ImageError("cannot decode " + path.string() + ": " + img.message);
        }
        nc::Tensor<float> out({static_cast<std::int64_t>(img.height), static_cast<std::int64_t>(img.width), 3});
        for (std::size_t i = 0; i < buf.size(); ++i)
            out[i] = buf[i] / 255.0f;
        return out;
    }

    template <typename T>
    void write_png(const std::filesystem::path& path, const nc::Tensor<T>& image) {
        if (image.rank() != 3 || image.dim(2) != 3)
            throw ImageError("write_png expects an [H, W, 3] image");
        png_image img;
        std::memset(&img, 0, sizeof(img));
        img.version = PNG_IMAGE_VERSION;
        img.width = static_cast<png_uint_32>(image.dim(1));
        img.height = static_cast<png_uint_32>(image.dim(0));
        img.format = PNG_FORMAT_RGB;
        std::vector<png_byte> buf(image.numel());
        for (std::int64_t i = 0; i < image.numel(); ++i)
            buf[i] = static_cast<png_byte>(std::lround(std::clamp<double>(image[i], 0.0, 1.0) * 255.0));
        if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
            throw ImageError("cannot write " + path.string() + ": " + img.message);
    }

    template void write_png(const std::filesystem::path&, const nc::Tensor<float>&);
    template void write_png(const std::filesystem::path&, const nc::Tensor<double>&);

} // namespace l3dg::splat
