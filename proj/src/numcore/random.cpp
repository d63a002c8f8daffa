#include "l3dg/numcore/random.hpp"

namespace l3dg::nc {

    std::uint64_t mix_seed(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (char c : stream) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return mix_seed(root ^ mix_seed(h));
    }

} // namespace l3dg::nc
