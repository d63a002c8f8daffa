#pragma once

#include "l3dg/numcore/autodiff.hpp"
#include "l3dg/numcore/checkpoint.hpp"

#include <string>
#include <utility>
#include <vector>

namespace l3dg::nc {

    /// Named trainable parameters of a model, in registration order.
    template <typename T>
    class ParamStore {
    public:
        Var<T> add(const std::string& name, Tensor<T> init) {
            for (const auto& e : entries_)
                if (e.first == name)
                    throw ShapeError("duplicate parameter name " + name);
            auto v = Var<T>::parameter(std::move(init));
            entries_.emplace_back(name, v);
            return v;
        }

        const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }

        std::vector<Var<T>> vars() const {
            std::vector<Var<T>> out;
            for (const auto& e : entries_)
                out.push_back(e.second);
            return out;
        }

        std::int64_t count() const {
            std::int64_t n = 0;
            for (const auto& e : entries_)
                n += e.second.numel();
            return n;
        }

        TensorMap<T> state() const {
            TensorMap<T> m;
            for (const auto& [name, v] : entries_)
                m[name] = v.value();
            return m;
        }

        /// Copies values in place; every registered name must be present with its shape.
        void load(const TensorMap<T>& m) {
            for (auto& [name, v] : entries_) {
                const auto it = m.find(name);
                if (it == m.end())
                    throw CheckpointError("checkpoint lacks parameter " + name);
                if (it->second.shape() != v.shape())
                    throw CheckpointError("parameter " + name + " has shape " + shape_str(it->second.shape()) +
                                          ", expected " + shape_str(v.shape()));
                v.value_mut() = it->second;
            }
        }

    private:
        std::vector<std::pair<std::string, Var<T>>> entries_;
    };

} // namespace l3dg::nc
