#include "l3dg/gridfit/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace l3dg::gridfit {

    namespace {

        const std::vector<std::string>& grid_properties() {
            static const std::vector<std::string> names = [] {
                std::vector<std::string> n{"kx", "ky", "kz", "dx", "dy", "dz", "scale_0", "scale_1", "scale_2",
                                           "rot_0", "rot_1", "rot_2", "rot_3"};
                for (int i = 0; i < splat::kShValues; ++i)
                    n.push_back("sh_" + std::to_string(i));
                n.push_back("opacity");
                return n;
            }();
            return names;
        }

        std::filesystem::path sidecar(const std::filesystem::path& path) {
            auto p = path;
            p += ".json";
            return p;
        }

        // Header lines up to and including end_header.
        std::vector<std::string> read_header(std::istream& in, const std::filesystem::path& path) {
            std::vector<std::string> lines;
            std::string line;
            if (!std::getline(in, line) || line != "ply")
                throw GridIoError(path.string() + " is not a PLY file");
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                if (line == "end_header")
                    return lines;
                lines.push_back(line);
            }
            throw GridIoError(path.string() + ": missing end_header");
        }

    } // namespace

    void save_grid(const std::filesystem::path& path, const SparseGaussianGrid& grid) {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw GridIoError("cannot write " + path.string());
        const auto& names = grid_properties();
        out << "ply\nformat binary_little_endian 1.0\nelement vertex " << grid.size() << "\n";
        for (std::size_t i = 0; i < names.size(); ++i)
            out << "property " << (i < 3 ? "int " : "double ") << names[i] << "\n";
        out << "end_header\n";
        for (const auto& [v, g] : grid.cells) {
            const std::int32_t k[3] = {v.x, v.y, v.z};
            out.write(reinterpret_cast<const char*>(k), sizeof(k));
            const auto row = g.pack();
            out.write(reinterpret_cast<const char*>(row.data()), sizeof(double) * row.size());
        }
        if (!out)
            throw GridIoError("write failed: " + path.string());

        const nlohmann::json meta{{"resolution", grid.resolution},
                                  {"voxel_size", grid.voxel_size},
                                  {"normalization",
                                   {{"scale", grid.normalization.scale}, {"offset", grid.normalization.offset}}}};
        std::ofstream side(sidecar(path));
        side << meta.dump(2) << "\n";
    }

    SparseGaussianGrid load_grid(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw GridIoError("grid file not found: " + path.string());
        const auto header = read_header(in, path);
        std::size_t count = 0;
        std::vector<std::string> props;
        bool binary = false;
        for (const auto& line : header) {
            std::istringstream ls(line);
            std::string word;
            ls >> word;
            if (word == "format") {
                std::string fmt;
                ls >> fmt;
                binary = fmt == "binary_little_endian";
            } else if (word == "element") {
                std::string name;
                ls >> name >> count;
            } else if (word == "property") {
                std::string type, name;
                ls >> type >> name;
                props.push_back(name);
            }
        }
        if (!binary || props != grid_properties())
            throw GridIoError(path.string() + ": unexpected PLY layout for a Gaussian grid");

        std::ifstream side(sidecar(path));
        if (!side)
            throw GridIoError("grid sidecar not found: " + sidecar(path).string());
        nlohmann::json meta;
        try {
            side >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw GridIoError("cannot parse grid sidecar: " + std::string(e.what()));
        }
        SparseGaussianGrid grid;
        grid.resolution = meta.at("resolution").get<int>();
        grid.voxel_size = meta.at("voxel_size").get<double>();
        grid.normalization.scale = meta.at("normalization").at("scale").get<double>();
        grid.normalization.offset = meta.at("normalization").at("offset").get<std::array<double, 3>>();

        for (std::size_t i = 0; i < count; ++i) {
            std::int32_t k[3];
            std::array<double, splat::field::count> row{};
            in.read(reinterpret_cast<char*>(k), sizeof(k));
            in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * row.size());
            if (!in)
                throw GridIoError(path.string() + ": truncated vertex data");
            const Voxel v{k[0], k[1], k[2]};
            if (!grid.in_bounds(v))
                throw GridIoError(path.string() + ": voxel index outside the grid");
            if (!grid.cells.emplace(v, splat::GaussianPrimitive::unpack<double>(row)).second)
                throw GridIoError(path.string() + ": duplicate voxel index");
        }
        return grid;
    }

    void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
        std::ofstream out(path);
        if (!out)
            throw GridIoError("cannot write " + path.string());
        const bool rgb = !cloud.colors.empty();
        out << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
            << "\nproperty float x\nproperty float y\nproperty float z\n";
        if (rgb)
            out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
        out << "end_header\n";
        out.precision(9);
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            const auto& p = cloud.points[i];
            out << p[0] << ' ' << p[1] << ' ' << p[2];
            if (rgb)
                for (double c : cloud.colors[i])
                    out << ' ' << std::lround(std::clamp(c, 0.0, 1.0) * 255.0);
            out << '\n';
        }
    }

    PointCloud load_point_cloud(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in)
            throw GridIoError("point cloud not found: " + path.string());
        const auto header = read_header(in, path);
        std::size_t count = 0;
        std::vector<std::string> props;
        for (const auto& line : header) {
            std::istringstream ls(line);
            std::string word;
            ls >> word;
            if (word == "format") {
                std::string fmt;
                ls >> fmt;
                if (fmt != "ascii")
                    throw GridIoError(path.string() + ": only ASCII point clouds are supported");
            } else if (word == "element") {
                std::string name;
                ls >> name >> count;
            } else if (word == "property") {
                std::string type, name;
                ls >> type >> name;
                props.push_back(name);
            }
        }
        auto index = [&](const std::string& name) -> int {
            for (std::size_t i = 0; i < props.size(); ++i)
                if (props[i] == name)
                    return static_cast<int>(i);
            return -1;
        };
        const int ix = index("x"), iy = index("y"), iz = index("z");
        const int ir = index("red"), ig = index("green"), ib = index("blue");
        if (ix < 0 || iy < 0 || iz < 0)
            throw GridIoError(path.string() + ": point cloud lacks x/y/z");
        const bool rgb = ir >= 0 && ig >= 0 && ib >= 0;
        PointCloud cloud;
        std::vector<double> vals(props.size());
        for (std::size_t i = 0; i < count; ++i) {
            for (auto& v : vals)
                if (!(in >> v))
                    throw GridIoError(path.string() + ": truncated point data");
            cloud.points.push_back({vals[ix], vals[iy], vals[iz]});
            if (rgb)
                cloud.colors.push_back({vals[ir] / 255.0, vals[ig] / 255.0, vals[ib] / 255.0});
        }
        return cloud;
    }

} // namespace l3dg::gridfit
