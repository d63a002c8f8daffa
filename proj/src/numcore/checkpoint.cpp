#include "l3dg/numcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace l3dg::nc {

    namespace {
        template <typename V>
        void put(std::ofstream& out, V v) {
            out.write(reinterpret_cast<const char*>(&v), sizeof(V));
        }
        template <typename V>
        V get(std::ifstream& in, const std::filesystem::path& path) {
            V v{};
            if (!in.read(reinterpret_cast<char*>(&v), sizeof(V)))
                throw CheckpointError("truncated checkpoint " + path.string());
            return v;
        }
    } // namespace

    template <typename T>
    void save_checkpoint(const std::filesystem::path& path, const TensorMap<T>& tensors) {
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw CheckpointError("cannot open " + path.string() + " for writing");
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        put<std::uint32_t>(out, kCheckpointVersion);
        for (const auto& [name, t] : tensors) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
            for (auto e : t.shape())
                put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
            put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
            out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
        }
        if (!out)
            throw CheckpointError("write failed for " + path.string());
    }

    template <typename T>
    TensorMap<T> load_checkpoint(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw CheckpointError("cannot open checkpoint " + path.string());
        char magic[8];
        if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
            throw CheckpointError(path.string() + " is not a tensor checkpoint (bad magic)");
        const auto version = get<std::uint32_t>(in, path);
        if (version != kCheckpointVersion)
            throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
        TensorMap<T> result;
        while (in.peek() != std::char_traits<char>::eof()) {
            const auto len = get<std::uint32_t>(in, path);
            std::string name(len, '\0');
            if (!in.read(name.data(), len))
                throw CheckpointError("truncated tensor name in " + path.string());
            const auto rank = get<std::uint32_t>(in, path);
            Shape shape;
            for (std::uint32_t i = 0; i < rank; ++i)
                shape.push_back(static_cast<std::int64_t>(get<std::uint64_t>(in, path)));
            const auto tag = get<std::uint8_t>(in, path);
            Tensor<T> t(shape);
            if (tag == 0) {
                std::vector<float> raw(static_cast<std::size_t>(t.numel()));
                if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4)))
                    throw CheckpointError("truncated data for tensor " + name);
                std::copy(raw.begin(), raw.end(), t.data().begin());
            } else if (tag == 1) {
                std::vector<double> raw(static_cast<std::size_t>(t.numel()));
                if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8)))
                    throw CheckpointError("truncated data for tensor " + name);
                std::transform(raw.begin(), raw.end(), t.data().begin(), [](double v) { return static_cast<T>(v); });
            } else {
                throw CheckpointError("unknown dtype tag " + std::to_string(tag) + " for tensor " + name);
            }
            result.emplace(std::move(name), std::move(t));
        }
        return result;
    }

    template void save_checkpoint<float>(const std::filesystem::path&, const TensorMap<float>&);
    template void save_checkpoint<double>(const std::filesystem::path&, const TensorMap<double>&);
    template TensorMap<float> load_checkpoint<float>(const std::filesystem::path&);
    template TensorMap<double> load_checkpoint<double>(const std::filesystem::path&);

} // namespace l3dg::nc
