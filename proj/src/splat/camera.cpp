#include "l3dg/splat/camera.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace l3dg::splat {

    namespace {
        using Vec3 = std::array<double, 3>;

        Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
        Vec3 cross(const Vec3& a, const Vec3& b) {
            return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
        }
        Vec3 normalized(const Vec3& a) {
            const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
            if (n == 0)
                throw CameraError("degenerate direction in look_at");
            return {a[0] / n, a[1] / n, a[2] / n};
        }
    } // namespace

    void Camera::validate() const {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double dot = 0;
                for (int k = 0; k < 3; ++k)
                    dot += rotation[k][i] * rotation[k][j];
                if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-6)
                    throw CameraError("camera rotation is not orthonormal");
            }
        if (!(fx > 0) || !(fy > 0))
            throw CameraError("camera focal lengths must be positive");
        if (width <= 0 || height <= 0)
            throw CameraError("camera image size must be positive");
    }

    std::array<double, 3> Camera::to_camera(const std::array<double, 3>& w) const {
        std::array<double, 3> p{};
        for (int i = 0; i < 3; ++i)
            p[i] = rotation[i][0] * w[0] + rotation[i][1] * w[1] + rotation[i][2] * w[2] + translation[i];
        return p;
    }

    std::array<double, 3> Camera::center() const {
        std::array<double, 3> c{};
        for (int i = 0; i < 3; ++i)
            c[i] = -(rotation[0][i] * translation[0] + rotation[1][i] * translation[1] +
                     rotation[2][i] * translation[2]);
        return c;
    }

    Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y, int width,
                           int height) {
        const Vec3 forward = normalized(sub(target, eye));
        const Vec3 right = normalized(cross(forward, up));
        const Vec3 down = cross(forward, right);
        Camera cam;
        cam.rotation = {right, down, forward};
        for (int i = 0; i < 3; ++i)
            cam.translation[i] =
                -(cam.rotation[i][0] * eye[0] + cam.rotation[i][1] * eye[1] + cam.rotation[i][2] * eye[2]);
        cam.width = width;
        cam.height = height;
        cam.fy = 0.5 * height / std::tan(0.5 * fov_y);
        cam.fx = cam.fy;
        cam.cx = 0.5 * width;
        cam.cy = 0.5 * height;
        return cam;
    }

    Camera Camera::in_normalized_space(double scale, const Vec3& offset) const {
        // R (x' - o) / s + t  ~  R x' - R o + s t, up to a uniform depth scale.
        Camera out = *this;
        for (int i = 0; i < 3; ++i) {
            double ro = rotation[i][0] * offset[0] + rotation[i][1] * offset[1] + rotation[i][2] * offset[2];
            out.translation[i] = scale * translation[i] - ro;
        }
        return out;
    }

    nlohmann::json camera_to_json(const Camera& cam) {
        std::vector<double> m(16, 0.0);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                m[i * 4 + j] = cam.rotation[i][j];
            m[i * 4 + 3] = cam.translation[i];
        }
        m[15] = 1.0;
        return {{"width", cam.width}, {"height", cam.height}, {"fx", cam.fx},         {"fy", cam.fy},
                {"cx", cam.cx},       {"cy", cam.cy},         {"world_to_cam", m}};
    }

    Camera camera_from_json(const nlohmann::json& j) {
        Camera cam;
        try {
            cam.width = j.at("width").get<int>();
            cam.height = j.at("height").get<int>();
            cam.fx = j.at("fx").get<double>();
            cam.fy = j.at("fy").get<double>();
            cam.cx = j.at("cx").get<double>();
            cam.cy = j.at("cy").get<double>();
            const auto m = j.at("world_to_cam").get<std::vector<double>>();
            if (m.size() != 16)
                throw CameraError("world_to_cam must hold 16 values");
            for (int i = 0; i < 3; ++i) {
                for (int k = 0; k < 3; ++k)
                    cam.rotation[i][k] = m[i * 4 + k];
                cam.translation[i] = m[i * 4 + 3];
            }
        } catch (const nlohmann::json::exception& e) {
            throw CameraError(std::string("malformed camera JSON: ") + e.what());
        }
        cam.validate();
        return cam;
    }

    void save_camera_set(const std::filesystem::path& path, const std::vector<CameraFrame>& frames) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& f : frames) {
            auto j = camera_to_json(f.camera);
            j["image"] = f.image;
            arr.push_back(std::move(j));
        }
        std::ofstream out(path);
        if (!out)
            throw CameraError("cannot write " + path.string());
        out << nlohmann::json{{"cameras", arr}}.dump(2) << '\n';
    }

    std::vector<CameraFrame> load_camera_set(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in)
            throw CameraError("camera set not found: " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw CameraError("cannot parse " + path.string() + ": " + e.what());
        }
        std::vector<CameraFrame> frames;
        for (const auto& c : j.at("cameras"))
            frames.push_back({camera_from_json(c), c.value("image", std::string{})});
        return frames;
    }

} // namespace l3dg::splat
