#include "ossdet/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ossdet {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

namespace tensor {
namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

namespace {

thread_local std::uint64_t next_id = 1;
thread_local std::optional<std::string> corrupted_op;
thread_local bool record_grad = true;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->id = next_id++;
  return node;
}

void ensure_grad(Node& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
}

}  // namespace
}  // namespace detail

struct Access {
  static Tensor wrap(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }
  static const std::shared_ptr<detail::Node>& node(const Tensor& t) { return t.node_; }
  static GradContext context(const detail::Node& node) {
    GradContext ctx;
    ctx.out_grad_ = node.grad;
    ctx.out_data_ = node.data;
    ctx.inputs_ = &node.inputs;
    return ctx;
  }
  static GradContext context(const detail::Node& node, std::span<const double> grad) {
    GradContext ctx = context(node);
    ctx.out_grad_ = grad;
    return ctx;
  }
};

namespace {
detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw std::logic_error("operation on an undefined tensor");
  return *node;
}
}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(detail::new_node(shape, std::vector<double>(shape.numel(), 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return Tensor(detail::new_node(shape, std::vector<double>(shape.numel(), value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(detail::new_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{1, 1, 1, 1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return checked(node_).shape; }
std::span<const double> Tensor::data() const { return checked(node_).data; }
std::span<double> Tensor::data_mut() { return checked(node_).data; }

double Tensor::item() const {
  const auto& n = checked(node_);
  if (n.data.size() != 1) throw ShapeError("item() on non-scalar tensor " + n.shape.str());
  return n.data[0];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const auto& node = checked(node_);
  const Shape& s = node.shape;
  return node.data[((n * s.c + c) * s.h + h) * s.w + w];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
bool Tensor::is_leaf() const { return !checked(node_).backward; }
bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return checked(node_).grad; }

std::span<double> Tensor::grad_mut() {
  auto& n = checked(node_);
  detail::ensure_grad(n);
  return n.grad;
}

void Tensor::zero_grad() {
  auto& n = checked(node_);
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

std::string_view Tensor::op() const { return checked(node_).op; }
std::uint64_t Tensor::id() const { return checked(node_).id; }

Tensor Tensor::detach(bool requires_grad) const {
  const auto& n = checked(node_);
  return Tensor(detail::new_node(n.shape, n.data, requires_grad));
}

bool GradContext::needs(std::size_t input) const {
  return (*inputs_)[input]->requires_grad;
}

std::span<double> GradContext::input_grad(std::size_t input) const {
  detail::Node& node = *(*inputs_)[input];
  if (!node.requires_grad) return {};
  detail::ensure_grad(node);
  return node.grad;
}

Tensor make_op(std::string_view op, Shape shape, std::vector<double> values,
               std::vector<Tensor> inputs, BackwardFn backward) {
  bool any_grad = false;
  if (detail::record_grad) {
    for (const Tensor& t : inputs) any_grad = any_grad || t.requires_grad();
  }
  auto node = detail::new_node(shape, std::move(values), any_grad);
  node->op = op;
  if (any_grad) {
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(Access::node(t));
    node->backward = std::move(backward);
  }
  return Access::wrap(std::move(node));
}

std::vector<std::uint64_t> backward(const Tensor& loss) {
  const auto& root = Access::node(loss);
  checked(root);
  if (root->shape.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + root->shape.str());
  }
  if (!root->requires_grad) return {};

  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  // Ids are assigned at creation, so every input id is smaller than its consumer's.
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  for (detail::Node* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  detail::ensure_grad(*root);
  root->grad[0] += 1.0;

  const auto& corrupt = detail::corrupted_op;
  std::vector<std::uint64_t> visited;
  visited.reserve(order.size());
  for (detail::Node* n : order) {
    visited.push_back(n->id);
    if (!n->backward) continue;
    if (corrupt && *corrupt == n->op) {
      std::vector<double> skewed(n->grad);
      for (double& g : skewed) g *= 1.37;
      n->backward(Access::context(*n, skewed));
    } else {
      n->backward(Access::context(*n));
    }
  }
  return visited;
}

NoGradGuard::NoGradGuard() : previous_(detail::record_grad) { detail::record_grad = false; }
NoGradGuard::~NoGradGuard() { detail::record_grad = previous_; }
bool grad_enabled() { return detail::record_grad; }

namespace testing {
void corrupt_backward(std::optional<std::string> op) { detail::corrupted_op = std::move(op); }
}  // namespace testing

}  // namespace tensor
}  // namespace ossdet
