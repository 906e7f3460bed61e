#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jointcast/core/array.hpp"
#include "jointcast/core/parameter_store.hpp"

namespace jointcast {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return tape->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Reverse-mode tape. Every recorded node owns its forward value and, once
/// gradient reaches it, a same-shaped gradient buffer. Nodes are stored in
/// creation order, which is a topological order, so backward() is a single
/// reverse sweep.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(ParameterStore<Scalar>* store = nullptr) : store_(store) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix<Scalar> value) { return push(std::move(value), false, nullptr); }

  Var<Scalar> variable(Matrix<Scalar> value) { return push(std::move(value), true, nullptr); }

  /// Leaf bound to a ParameterStore entry; looked up once per tape.
  Var<Scalar> parameter(const std::string& name) {
    if (store_ == nullptr) throw StateError("tape has no parameter store (wanted '" + name + "')");
    auto it = params_.find(name);
    if (it != params_.end()) return Var<Scalar>{this, it->second};
    const Array<Scalar>& a = store_->at(name);
    Var<Scalar> v = push(a.data, true, nullptr);
    params_.emplace(name, v.id);
    return v;
  }

  /// Records an op output. `fn(tape, self)` runs during backward once gradient
  /// has reached node `self`.
  Var<Scalar> record(Matrix<Scalar> value, bool requires_grad, BackwardFn fn) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : BackwardFn{});
  }

  const Matrix<Scalar>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var<Scalar>& v) const { return nodes_[v.id].requires_grad; }
  bool has_grad(int id) const { return nodes_[id].has_grad; }

  /// Gradient buffer, zero-initialized on first access.
  Matrix<Scalar>& grad(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }
  Matrix<Scalar>& grad(const Var<Scalar>& v) { return grad(v.id); }

  /// Seeds d(root)/d(root) = seed and sweeps backward. Parameter gradients are
  /// added into the store's gradient slots.
  void backward(const Var<Scalar>& root, Scalar seed = Scalar(1)) {
    if (root.rows() != 1 || root.cols() != 1) throw DimensionError("backward root must be a scalar");
    grad(root.id)(0, 0) += seed;
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, id);
    }
    if (store_ != nullptr) {
      for (const auto& [name, id] : params_) {
        if (!nodes_[id].has_grad) continue;
        Array<Scalar>& a = store_->at(name);
        if (!a.grad) a.grad = Matrix<Scalar>::Zero(a.data.rows(), a.data.cols());
        *a.grad += nodes_[id].grad;
      }
    }
  }

  /// Gradient accumulated on a parameter leaf during the last backward (zero if none).
  Matrix<Scalar> parameter_grad(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end() || !nodes_[it->second].has_grad) {
      const Array<Scalar>& a = store_->at(name);
      return Matrix<Scalar>::Zero(a.data.rows(), a.data.cols());
    }
    return nodes_[it->second].grad;
  }

  const std::unordered_map<std::string, int>& parameters() const { return params_; }

  ParameterStore<Scalar>* store() const { return store_; }
  std::size_t size() const { return nodes_.size(); }

  /// Stop-gradient replay for finite-difference checks. While recording,
  /// every stop_value() call stores its input; while replaying, it returns the
  /// stored values in call order instead.
  void record_stops(std::vector<Matrix<Scalar>>* out) { stops_ = out, replay_ = false, next_stop_ = 0; }
  void replay_stops(const std::vector<Matrix<Scalar>>* in) {
    stops_ = const_cast<std::vector<Matrix<Scalar>>*>(in), replay_ = true, next_stop_ = 0;
  }
  Matrix<Scalar> stop_value(const Matrix<Scalar>& v) {
    if (stops_ == nullptr) return v;
    if (!replay_) {
      stops_->push_back(v);
      return v;
    }
    if (next_stop_ >= stops_->size() || (*stops_)[next_stop_].rows() != v.rows() ||
        (*stops_)[next_stop_].cols() != v.cols()) {
      throw StateError("stop-gradient replay diverged from the recorded pass");
    }
    return (*stops_)[next_stop_++];
  }

  /// Squared norm of gradient that reached detach barriers and was dropped.
  Scalar blocked_gradient_sq() const { return blocked_sq_; }
  void add_blocked_gradient(Scalar sq) { blocked_sq_ += sq; }

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var<Scalar> push(Matrix<Scalar> value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  ParameterStore<Scalar>* store_;
  std::deque<Node> nodes_;
  std::unordered_map<std::string, int> params_;
  Scalar blocked_sq_ = Scalar(0);
  std::vector<Matrix<Scalar>>* stops_ = nullptr;
  bool replay_ = false;
  std::size_t next_stop_ = 0;
};

}  // namespace jointcast
