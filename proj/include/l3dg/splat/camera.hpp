#pragma once

#include <json.hpp>

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace l3dg::splat {

    class CameraError : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    /// Pinhole camera. Pixel centres sit at half-integer coordinates.
    struct Camera {
        std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; // world -> camera
        std::array<double, 3> translation{0, 0, 0};
        double fx = 1, fy = 1, cx = 0, cy = 0;
        int width = 1, height = 1;

        /// Throws CameraError unless the rotation is orthonormal within 1e-6
        /// and both focal lengths are positive.
        void validate() const;

        std::array<double, 3> to_camera(const std::array<double, 3>& world) const;
        std::array<double, 3> center() const;

        /// Camera at `eye` looking at `target`, +y image axis pointing down.
        static Camera look_at(const std::array<double, 3>& eye, const std::array<double, 3>& target,
                              const std::array<double, 3>& up, double fov_y_radians, int width, int height);

        /// Same projection for a scene transformed by x' = scale * x + offset.
        Camera in_normalized_space(double scale, const std::array<double, 3>& offset) const;
    };

    /// {width, height, fx, fy, cx, cy, world_to_cam: 4x4 row-major}
    nlohmann::json camera_to_json(const Camera& cam);
    Camera camera_from_json(const nlohmann::json& j);

    /// A posed target image on disk.
    struct CameraFrame {
        Camera camera;
        std::string image; // path relative to the camera file
    };

    /// {"cameras": [{...camera fields..., "image": "images/000.png"}]}
    void save_camera_set(const std::filesystem::path& path, const std::vector<CameraFrame>& frames);
    std::vector<CameraFrame> load_camera_set(const std::filesystem::path& path);

} // namespace l3dg::splat
