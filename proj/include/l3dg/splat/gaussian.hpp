#pragma once

#include <array>
#include <cmath>
#include <span>

namespace l3dg::splat {

    inline constexpr int kShCoeffs = 4;  // degrees 0 and 1
    inline constexpr int kShValues = 12; // kShCoeffs x RGB, coefficient-major

    /// Offsets of each field inside a packed 23-float primitive row.
    namespace field {
        inline constexpr int delta = 0;
        inline constexpr int log_scale = 3;
        inline constexpr int rotation = 6;
        inline constexpr int sh = 10;
        inline constexpr int opacity = 22;
        inline constexpr int count = 23;
    } // namespace field

    inline constexpr double kShC0 = 0.28209479177387814;
    inline constexpr double kShC1 = 0.4886025119029199;

    struct GaussianPrimitive {
        std::array<double, 3> delta{};
        std::array<double, 3> log_scale{};
        std::array<double, 4> rotation{1, 0, 0, 0}; // (w, x, y, z), normalised at use
        std::array<double, kShValues> sh{};         // sh[k * 3 + channel]
        double opacity_logit = 0;

        double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }

        std::array<double, field::count> pack() const {
            std::array<double, field::count> row{};
            for (int i = 0; i < 3; ++i) {
                row[field::delta + i] = delta[i];
                row[field::log_scale + i] = log_scale[i];
            }
            for (int i = 0; i < 4; ++i)
                row[field::rotation + i] = rotation[i];
            for (int i = 0; i < kShValues; ++i)
                row[field::sh + i] = sh[i];
            row[field::opacity] = opacity_logit;
            return row;
        }

        template <typename T>
        static GaussianPrimitive unpack(std::span<const T> row) {
            GaussianPrimitive g;
            for (int i = 0; i < 3; ++i) {
                g.delta[i] = row[field::delta + i];
                g.log_scale[i] = row[field::log_scale + i];
            }
            for (int i = 0; i < 4; ++i)
                g.rotation[i] = row[field::rotation + i];
            for (int i = 0; i < kShValues; ++i)
                g.sh[i] = row[field::sh + i];
            g.opacity_logit = row[field::opacity];
            return g;
        }
    };

    /// DC coefficient that yields the given colour under sh_color.
    inline double sh_dc_for_color(double c) { return (c - 0.5) / kShC0; }

    /// Degree-0/1 real SH colour, offset by 0.5 and clamped at zero.
    std::array<double, 3> sh_color(std::span<const double> sh, const std::array<double, 3>& view_dir);

} // namespace l3dg::splat
