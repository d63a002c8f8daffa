#pragma once

// Small random splat scenes shared by the unit and acceptance suites.

#include "l3dg/numcore/random.hpp"
#include "l3dg/splat/render.hpp"

#include <cmath>

namespace l3dg::testing {

    inline splat::Camera small_camera(nc::Rng& rng, int size = 8) {
        const double theta = rng.uniform(0, 2 * M_PI), phi = rng.uniform(-0.6, 0.6);
        const std::array<double, 3> eye{2.0 * std::cos(phi) * std::cos(theta), 2.0 * std::sin(phi),
                                        2.0 * std::cos(phi) * std::sin(theta)};
        return splat::Camera::look_at(eye, {0, 0, 0}, {0, 1, 0}, 0.5, size, size);
    }

    template <typename T>
    splat::SplatScene<T> random_scene(nc::Rng& rng, int n) {
        splat::SplatScene<T> scene;
        scene.max_offset = 0.1;
        nc::Tensor<T> params({n, splat::field::count});
        scene.anchors = nc::Tensor<T>({n, 3});
        for (int i = 0; i < n; ++i) {
            T* row = params.ptr() + i * splat::field::count;
            for (int k = 0; k < 3; ++k) {
                scene.anchors[i * 3 + k] = static_cast<T>(rng.uniform(-0.25, 0.25));
                row[splat::field::delta + k] = static_cast<T>(rng.uniform(-0.8, 0.8));
                row[splat::field::log_scale + k] = static_cast<T>(std::log(rng.uniform(0.08, 0.25)));
            }
            for (int k = 0; k < 4; ++k)
                row[splat::field::rotation + k] = static_cast<T>(rng.normal());
            for (int k = 0; k < splat::kShValues; ++k)
                row[splat::field::sh + k] = static_cast<T>(rng.uniform(-0.6, 0.6));
            row[splat::field::opacity] = static_cast<T>(rng.uniform(-1.0, 2.0));
        }
        scene.params = nc::Var<T>::parameter(std::move(params));
        return scene;
    }

} // namespace l3dg::testing
