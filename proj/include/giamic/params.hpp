#pragma once

// Named, ordered collection of learnable tensors.
//
// Names have the form "<group>/<local name>", e.g. "gia.V->S/w_q". The group
// prefix is what gradient checks and reports aggregate over.

#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "giamic/errors.hpp"
#include "giamic/tensor.hpp"

namespace giamic {

template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    if (name.find('/') == std::string::npos) {
      throw ConfigError("parameter name must be <group>/<name>: " + name);
    }
    auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
    index_.emplace(name, entries_.size());
    entries_.push_back({name, t});
    return t;
  }

  /// Weight matrix drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor<T> uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return add(name, std::move(shape), std::move(v));
  }

  Tensor<T> filled(const std::string& name, Shape shape, T value) {
    std::vector<T> v(numel(shape), value);
    return add(name, std::move(shape), std::move(v));
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].tensor;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  static std::string group_of(const std::string& name) { return name.substr(0, name.find('/')); }

  /// Distinct groups in first-registration order.
  std::vector<std::string> groups() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      auto g = group_of(e.name);
      if (out.empty() || out.back() != g) {
        bool seen = false;
        for (const auto& o : out) seen = seen || o == g;
        if (!seen) out.push_back(g);
      }
    }
    return out;
  }

  /// Overwrites every parameter of group `to` with the same-named one of `from`.
  void copy_group(const std::string& from, const std::string& to) {
    for (auto& e : entries_) {
      if (group_of(e.name) != to) continue;
      const auto& src = get(from + e.name.substr(e.name.find('/')));
      if (src.shape() != e.tensor.shape()) throw DimensionError("copy_group: shape mismatch");
      auto dst = e.tensor.mutable_data();
      std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
  }

  /// Copies values from another store with identical names and shapes.
  template <typename U>
  void assign_from(const ParamStore<U>& other) {
    if (other.size() != size()) throw ConfigError("assign_from: parameter count differs");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& src = other.entries()[i];
      if (src.name != entries_[i].name || src.tensor.shape() != entries_[i].tensor.shape()) {
        throw ConfigError("assign_from: layout differs at " + entries_[i].name);
      }
      auto dst = entries_[i].tensor.mutable_data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(src.tensor.data()[k]);
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::mt19937_64 rng_;
};

}  // namespace giamic
