#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace miqa {

/// Dimensions of a dense row-major tensor. Rank 1 or 2 is all the MLP
/// stack needs; a scalar is shape {1}.
using Shape = std::vector<size_t>;

std::string shape_str(const Shape& shape);

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; the numeric
/// payload lives in the tape node it points at.
struct Tensor {
  Tape* tape = nullptr;
  size_t id = 0;

  const Shape& shape() const;
  size_t size() const;
  std::span<const double> value() const;
  double scalar() const;

  /// True once backward() has reached this node.
  bool has_grad() const;
  /// Gradient of the backward root w.r.t. this tensor. Throws if absent.
  std::span<const double> grad() const;
};

/// Define-by-run recording of forward operations, replayed in reverse for
/// backpropagation. Rebuilt per training step; single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Creates an input node. Every graph starts from leaves.
  Tensor leaf(Shape shape, std::vector<double> data);

  /// [m x k] . [k x n] -> [m x n]
  Tensor matmul(Tensor a, Tensor b);
  /// Elementwise add; also accepts [B x N] + [N] as a bias broadcast.
  Tensor add(Tensor a, Tensor b);
  /// Elementwise product of same-shape tensors.
  Tensor mul(Tensor a, Tensor b);
  /// Multiplication by a compile-time constant (not a tape node).
  Tensor scalar_mul(Tensor a, double c);
  Tensor relu(Tensor a);
  /// Row-wise log-softmax with max subtraction; rank-1 input is one row.
  Tensor log_softmax(Tensor a);
  /// Sum of all elements -> shape {1}.
  Tensor sum(Tensor a);
  /// Mean of all elements -> shape {1}.
  Tensor mean(Tensor a);
  /// Picks a[i, cols[i]] from a [B x C] tensor -> shape {B}.
  Tensor select_index(Tensor a, std::vector<size_t> cols);

  /// Populates grad on every node reachable from root (a scalar).
  /// Gradients accumulate across fan-out. One backward per tape.
  void backward(Tensor root);

  /// Drops all nodes and recorded operations; the tape can be reused.
  void reset();

  size_t node_count() const { return nodes_.size(); }

 private:
  friend struct Tensor;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until backward reaches it
  };

  Node& node(size_t id) { return nodes_[id]; }
  const Node& node(size_t id) const { return nodes_[id]; }

  Tensor emplace(Shape shape, std::vector<double> value);
  void check_owned(const Tensor& t, const char* op) const;
  /// Grad buffer of node, zero-initialized on first access.
  std::vector<double>& grad_buf(size_t id);

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backward_steps_;
  bool backward_done_ = false;
};

inline const Shape& Tensor::shape() const { return tape->node(id).shape; }

inline size_t Tensor::size() const { return tape->node(id).value.size(); }

inline std::span<const double> Tensor::value() const {
  return tape->node(id).value;
}

inline double Tensor::scalar() const { return tape->node(id).value.at(0); }

inline bool Tensor::has_grad() const { return !tape->node(id).grad.empty(); }

}  // namespace miqa
