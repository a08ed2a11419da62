#pragma once

// Dense 4-D tensor (n, c, h, w) of doubles with define-by-run reverse-mode
// differentiation. A Tensor is a shared handle: copies alias the same node.
// Every operation that touches a requires_grad input records a node holding
// its inputs and a backward rule; backward() replays those rules in strict
// reverse creation order. Graphs are confined to the creating thread.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ossdet {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t item() const { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

/// Raised for incompatible operand shapes; the message carries the dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace tensor {

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<const double> data() const;
  /// Direct write access. Intended for leaves (parameters, inputs); writing
  /// into an interior node does not invalidate recorded backward rules.
  std::span<double> data_mut();
  double item() const;
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  std::string_view op() const;
  std::uint64_t id() const;

  /// Copy of the values with no graph attached.
  Tensor detach(bool requires_grad = false) const;

  const detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct Access;
};

/// View handed to a backward rule. Gradients are accumulated, never assigned.
class GradContext {
 public:
  std::span<const double> out_grad() const { return out_grad_; }
  std::span<const double> out_data() const { return out_data_; }
  bool needs(std::size_t input) const;
  /// Accumulation buffer for input i; allocated on first use. Empty span if
  /// the input does not require a gradient.
  std::span<double> input_grad(std::size_t input) const;

 private:
  friend struct Access;
  std::span<const double> out_grad_;
  std::span<const double> out_data_;
  const std::vector<std::shared_ptr<detail::Node>>* inputs_ = nullptr;
};

using BackwardFn = std::function<void(const GradContext&)>;

/// Records an operation. `op` must have static storage duration. The backward
/// rule is dropped when no input requires a gradient.
Tensor make_op(std::string_view op, Shape shape, std::vector<double> values,
               std::vector<Tensor> inputs, BackwardFn backward);

/// Populates gradients of every requires_grad leaf reachable from a scalar
/// loss. Leaf gradients accumulate across calls; interior gradients are reset.
/// Returns the ids of the nodes visited, in visiting order.
std::vector<std::uint64_t> backward(const Tensor& loss);

/// Scoped inference mode for the current thread: operations record no
/// backward rules and their results do not require gradients.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

namespace testing {
/// Negative-control hook: perturbs the backward rule of every node whose op
/// name matches, so gradient checks must fail. nullopt restores normal rules.
void corrupt_backward(std::optional<std::string> op);
}  // namespace testing

}  // namespace tensor
}  // namespace ossdet
