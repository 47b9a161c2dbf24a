#include "miqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace miqa {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

size_t shape_product(const Shape& shape) {
  size_t p = 1;
  for (size_t d : shape) p *= d;
  return p;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

std::span<const double> Tensor::grad() const {
  const auto& g = tape->node(id).grad;
  if (g.empty()) {
    throw std::runtime_error("grad: node " + std::to_string(id) +
                             " has no gradient (backward not run or node "
                             "unreachable from the root)");
  }
  return g;
}

Tensor Tape::emplace(Shape shape, std::vector<double> value) {
  nodes_.push_back(Node{std::move(shape), std::move(value), {}});
  return Tensor{this, nodes_.size() - 1};
}

void Tape::check_owned(const Tensor& t, const char* op) const {
  if (t.tape != this || t.id >= nodes_.size()) {
    throw std::invalid_argument(std::string(op) +
                                ": tensor does not belong to this tape");
  }
}

std::vector<double>& Tape::grad_buf(size_t id) {
  auto& g = nodes_[id].grad;
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

Tensor Tape::leaf(Shape shape, std::vector<double> data) {
  if (shape.empty() || data.empty()) {
    throw std::invalid_argument("leaf: empty tensor");
  }
  for (size_t d : shape) {
    if (d == 0) throw std::invalid_argument("leaf: zero dimension in " + shape_str(shape));
  }
  if (shape_product(shape) != data.size()) {
    throw std::invalid_argument(
        "leaf: shape " + shape_str(shape) + " does not match buffer length " +
        std::to_string(data.size()));
  }
  return emplace(std::move(shape), std::move(data));
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    shape_error("matmul", sa, sb);
  }
  const size_t m = sa[0], k = sa[1], n = sb[1];
  const double* pa = nodes_[a.id].value.data();
  const double* pb = nodes_[b.id].value.data();
  std::vector<double> out(m * n, 0.0);
  for (size_t i = 0; i < m; ++i) {
    for (size_t l = 0; l < k; ++l) {
      const double av = pa[i * k + l];
      const double* brow = pb + l * n;
      double* crow = out.data() + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  Tensor c = emplace({m, n}, std::move(out));
  backward_steps_.push_back([this, a, b, c, m, k, n] {
    if (nodes_[c.id].grad.empty()) return;
    const double* dc = nodes_[c.id].grad.data();
    const double* pa2 = nodes_[a.id].value.data();
    const double* pb2 = nodes_[b.id].value.data();
    {
      double* da = grad_buf(a.id).data();
      for (size_t i = 0; i < m; ++i) {
        for (size_t l = 0; l < k; ++l) {
          const double* dcrow = dc + i * n;
          const double* brow = pb2 + l * n;
          double s = 0.0;
          for (size_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
          da[i * k + l] += s;
        }
      }
    }
    {
      double* db = grad_buf(b.id).data();
      for (size_t i = 0; i < m; ++i) {
        for (size_t l = 0; l < k; ++l) {
          const double av = pa2[i * k + l];
          const double* dcrow = dc + i * n;
          double* dbrow = db + l * n;
          for (size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
      }
    }
  });
  return c;
}

Tensor Tape::add(Tensor a, Tensor b) {
  check_owned(a, "add");
  check_owned(b, "add");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool same = sa == sb;
  const bool bias = sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0];
  if (!same && !bias) shape_error("add", sa, sb);

  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  std::vector<double> out(va.size());
  if (same) {
    for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
  } else {
    const size_t rows = sa[0], cols = sa[1];
    for (size_t r = 0; r < rows; ++r) {
      for (size_t j = 0; j < cols; ++j) out[r * cols + j] = va[r * cols + j] + vb[j];
    }
  }
  Tensor c = emplace(sa, std::move(out));
  backward_steps_.push_back([this, a, b, c, same] {
    if (nodes_[c.id].grad.empty()) return;
    const auto& dc = nodes_[c.id].grad;
    auto& da = grad_buf(a.id);
    for (size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
    auto& db = grad_buf(b.id);
    if (same) {
      for (size_t i = 0; i < dc.size(); ++i) db[i] += dc[i];
    } else {
      const size_t cols = db.size();
      const size_t rows = dc.size() / cols;
      for (size_t r = 0; r < rows; ++r) {
        for (size_t j = 0; j < cols; ++j) db[j] += dc[r * cols + j];
      }
    }
  });
  return c;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  check_owned(a, "mul_elementwise");
  check_owned(b, "mul_elementwise");
  if (a.shape() != b.shape()) shape_error("mul_elementwise", a.shape(), b.shape());
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
  Tensor c = emplace(a.shape(), std::move(out));
  backward_steps_.push_back([this, a, b, c] {
    if (nodes_[c.id].grad.empty()) return;
    const auto& dc = nodes_[c.id].grad;
    const auto& va2 = nodes_[a.id].value;
    const auto& vb2 = nodes_[b.id].value;
    auto& da = grad_buf(a.id);
    for (size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * vb2[i];
    auto& db = grad_buf(b.id);
    for (size_t i = 0; i < dc.size(); ++i) db[i] += dc[i] * va2[i];
  });
  return c;
}

Tensor Tape::scalar_mul(Tensor a, double c) {
  check_owned(a, "scalar_mul");
  const auto& va = nodes_[a.id].value;
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) out[i] = c * va[i];
  Tensor r = emplace(a.shape(), std::move(out));
  backward_steps_.push_back([this, a, r, c] {
    if (nodes_[r.id].grad.empty()) return;
    const auto& dr = nodes_[r.id].grad;
    auto& da = grad_buf(a.id);
    for (size_t i = 0; i < dr.size(); ++i) da[i] += c * dr[i];
  });
  return r;
}

Tensor Tape::relu(Tensor a) {
  check_owned(a, "relu");
  const auto& va = nodes_[a.id].value;
  std::vector<double> out(va.size());
  for (size_t i = 0; i < va.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
  Tensor r = emplace(a.shape(), std::move(out));
  backward_steps_.push_back([this, a, r] {
    if (nodes_[r.id].grad.empty()) return;
    const auto& dr = nodes_[r.id].grad;
    const auto& va2 = nodes_[a.id].value;
    auto& da = grad_buf(a.id);
    for (size_t i = 0; i < dr.size(); ++i) {
      if (va2[i] > 0.0) da[i] += dr[i];
    }
  });
  return r;
}

Tensor Tape::log_softmax(Tensor a) {
  check_owned(a, "log_softmax");
  const Shape& sa = a.shape();
  if (sa.size() > 2) shape_error("log_softmax", sa, sa);
  const size_t rows = sa.size() == 2 ? sa[0] : 1;
  const size_t cols = sa.size() == 2 ? sa[1] : sa[0];
  const auto& va = nodes_[a.id].value;
  std::vector<double> out(va.size());
  for (size_t r = 0; r < rows; ++r) {
    const double* x = va.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = x[0];
    for (size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (size_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
  }
  Tensor r = emplace(sa, std::move(out));
  backward_steps_.push_back([this, a, r, rows, cols] {
    if (nodes_[r.id].grad.empty()) return;
    const auto& dr = nodes_[r.id].grad;
    const auto& vy = nodes_[r.id].value;
    auto& da = grad_buf(a.id);
    for (size_t row = 0; row < rows; ++row) {
      const double* dy = dr.data() + row * cols;
      const double* y = vy.data() + row * cols;
      double* dx = da.data() + row * cols;
      double dsum = 0.0;
      for (size_t j = 0; j < cols; ++j) dsum += dy[j];
      for (size_t j = 0; j < cols; ++j) dx[j] += dy[j] - std::exp(y[j]) * dsum;
    }
  });
  return r;
}

Tensor Tape::sum(Tensor a) {
  check_owned(a, "sum");
  const auto& va = nodes_[a.id].value;
  double s = 0.0;
  for (double v : va) s += v;
  Tensor r = emplace({1}, {s});
  backward_steps_.push_back([this, a, r] {
    if (nodes_[r.id].grad.empty()) return;
    const double dr = nodes_[r.id].grad[0];
    auto& da = grad_buf(a.id);
    for (double& g : da) g += dr;
  });
  return r;
}

Tensor Tape::mean(Tensor a) {
  check_owned(a, "mean");
  const auto& va = nodes_[a.id].value;
  const size_t n = va.size();
  double s = 0.0;
  for (double v : va) s += v;
  Tensor r = emplace({1}, {s / static_cast<double>(n)});
  backward_steps_.push_back([this, a, r, n] {
    if (nodes_[r.id].grad.empty()) return;
    const double g = nodes_[r.id].grad[0] / static_cast<double>(n);
    auto& da = grad_buf(a.id);
    for (double& gi : da) gi += g;
  });
  return r;
}

Tensor Tape::select_index(Tensor a, std::vector<size_t> cols) {
  check_owned(a, "select_index");
  const Shape& sa = a.shape();
  if (sa.size() != 2) {
    throw std::invalid_argument("select_index: expected rank-2 input, got " +
                                shape_str(sa));
  }
  const size_t rows = sa[0], width = sa[1];
  if (cols.size() != rows) {
    throw std::invalid_argument(
        "select_index: " + std::to_string(cols.size()) + " indices for " +
        std::to_string(rows) + " rows");
  }
  const auto& va = nodes_[a.id].value;
  std::vector<double> out(rows);
  for (size_t i = 0; i < rows; ++i) {
    if (cols[i] >= width) {
      throw std::invalid_argument("select_index: index " +
                                  std::to_string(cols[i]) +
                                  " out of range for " + shape_str(sa));
    }
    out[i] = va[i * width + cols[i]];
  }
  Tensor r = emplace({rows}, std::move(out));
  backward_steps_.push_back([this, a, r, cols = std::move(cols), width] {
    if (nodes_[r.id].grad.empty()) return;
    const auto& dr = nodes_[r.id].grad;
    auto& da = grad_buf(a.id);
    for (size_t i = 0; i < dr.size(); ++i) da[i * width + cols[i]] += dr[i];
  });
  return r;
}

void Tape::backward(Tensor root) {
  check_owned(root, "backward");
  if (root.size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                shape_str(root.shape()));
  }
  if (backward_done_) {
    throw std::runtime_error("backward: already run on this tape; reset() first");
  }
  backward_done_ = true;
  grad_buf(root.id)[0] = 1.0;
  for (auto it = backward_steps_.rbegin(); it != backward_steps_.rend(); ++it) {
    (*it)();
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_steps_.clear();
  backward_done_ = false;
}

}  // namespace miqa
