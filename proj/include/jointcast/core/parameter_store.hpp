#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jointcast/core/array.hpp"
#include "jointcast/core/random.hpp"

namespace jointcast {

/// Named, shaped, trainable arrays plus their AdamW moment buffers.
///
/// Iteration order is insertion order. Lookups are by name; a name can only be
/// registered once.
template <typename Scalar>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Array<Scalar> value;
    Matrix<Scalar> m1;  // first moment
    Matrix<Scalar> m2;  // second moment
  };

  explicit ParameterStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed), rng_(rng_seed) {}

  std::uint64_t rng_seed() const { return rng_seed_; }
  Rng& rng() { return rng_; }

  Array<Scalar>& add(const std::string& name, Shape shape) {
    if (index_.contains(name)) throw StateError("parameter '" + name + "' registered twice");
    Entry e{name, Array<Scalar>(std::move(shape)), {}, {}};
    e.m1 = Matrix<Scalar>::Zero(e.value.data.rows(), e.value.data.cols());
    e.m2 = e.m1;
    index_.emplace(name, entries_.size());
    entries_.push_back(std::move(e));
    return entries_.back().value;
  }

  /// Registers a parameter filled from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Array<Scalar>& add_uniform(const std::string& name, Shape shape, Index fan_in) {
    Array<Scalar>& a = add(name, std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
    for (Index i = 0; i < a.data.size(); ++i) a.data.data()[i] = static_cast<Scalar>(rng_.uniform(-bound, bound));
    return a;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Array<Scalar>& at(const std::string& name) { return entry(name).value; }
  const Array<Scalar>& at(const std::string& name) const { return entry(name).value; }

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw StateError("unknown parameter '" + name + "'");
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw StateError("unknown parameter '" + name + "'");
    return entries_[it->second];
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t size() const { return entries_.size(); }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Sets every gradient slot to zero (and marks it populated).
  void zero_grad() {
    for (auto& e : entries_) e.value.grad = Matrix<Scalar>::Zero(e.value.data.rows(), e.value.data.cols());
  }

  void clear_grad() {
    for (auto& e : entries_) e.value.grad.reset();
  }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  bool all_finite() const {
    for (const auto& e : entries_) {
      if (!e.value.data.allFinite()) return false;
    }
    return true;
  }

  /// Copies values (and optimizer state) into a store of another scalar type.
  template <typename Other>
  ParameterStore<Other> cast() const {
    ParameterStore<Other> out(rng_seed_);
    for (const auto& e : entries_) {
      auto& a = out.add(e.name, e.value.shape);
      a.data = e.value.data.template cast<Other>();
      auto& oe = out.entry(e.name);
      oe.m1 = e.m1.template cast<Other>();
      oe.m2 = e.m2.template cast<Other>();
    }
    out.set_step(step_);
    return out;
  }

 private:
  std::uint64_t rng_seed_;
  Rng rng_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

}  // namespace jointcast
