#pragma once

#include <map>
#include <string>
#include <vector>

#include "srdet/core/tensor.hpp"

namespace srdet {

/// Named, shaped, trainable arrays with gradient slots. Entries are kept in
/// name order so iteration, checkpointing and optimizer sweeps are
/// deterministic. Gradient accumulation is single-writer.
template <typename T>
class ParameterStore {
public:
    struct Entry {
        Tensor<T> value;
        Tensor<T> grad;
    };

    Tensor<T>& create(const std::string& name, Shape shape, T fill = T(0)) {
        if (entries_.count(name)) throw ValidationError("duplicate parameter name: " + name);
        auto& e = entries_[name];
        e.value = Tensor<T>(shape, fill);
        e.grad = Tensor<T>(shape, T(0));
        return e.value;
    }

    Tensor<T>& add(const std::string& name, Tensor<T> value) {
        if (entries_.count(name)) throw ValidationError("duplicate parameter name: " + name);
        auto& e = entries_[name];
        e.grad = Tensor<T>(value.shape(), T(0));
        e.value = std::move(value);
        return e.value;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    /// Copies every entry of another store into this one; name collisions
    /// are an error.
    void merge_from(const ParameterStore<T>& other) {
        for (const auto& [name, entry] : other.entries_) add(name, entry.value);
    }

    Tensor<T>& value(const std::string& name) { return entry(name).value; }
    const Tensor<T>& value(const std::string& name) const { return entry(name).value; }
    Tensor<T>& grad(const std::string& name) { return entry(name).grad; }
    const Tensor<T>& grad(const std::string& name) const { return entry(name).grad; }

    void zero_grads() {
        for (auto& [_, e] : entries_) e.grad.fill(T(0));
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [name, _] : entries_) out.push_back(name);
        return out;
    }

    /// Names starting with the given prefix (e.g. "sr/").
    std::vector<std::string> names_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& [name, _] : entries_)
            if (name.rfind(prefix, 0) == 0) out.push_back(name);
        return out;
    }

    std::size_t count() const { return entries_.size(); }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& [_, e] : entries_) n += e.value.size();
        return n;
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        out.set_version(version_);
        for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>());
        return out;
    }

    const std::string& version() const { return version_; }
    void set_version(const std::string& v) { version_ = v; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ValidationError("unknown parameter: " + name);
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ValidationError("unknown parameter: " + name);
        return it->second;
    }

    std::map<std::string, Entry> entries_;
    std::string version_ = "1";
};

using ParameterStoreF = ParameterStore<float>;
using ParameterStoreD = ParameterStore<double>;

} // namespace srdet
