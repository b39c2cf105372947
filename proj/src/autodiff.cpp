#include "metasac/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace metasac::ad {

// ---------------------------------------------------------------------------
// Shape

Shape::Shape(std::initializer_list<Eigen::Index> dims) : Shape(std::vector<Eigen::Index>(dims)) {}

Shape::Shape(std::vector<Eigen::Index> dims) : dims_(std::move(dims)) {
  if (dims_.size() > 2) throw ShapeError("shape rank > 2 is not supported: " + str());
  for (auto d : dims_) {
    if (d <= 0) throw ShapeError("shape dims must be positive: " + str());
  }
}

Eigen::Index Shape::numel() const {
  Eigen::Index n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

Eigen::Index Shape::rows() const { return dims_.empty() ? 1 : dims_[0]; }

Eigen::Index Shape::cols() const { return dims_.size() == 2 ? dims_[1] : 1; }

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// DiffValue / ParamSet

namespace {

const detail::Node& checked(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw std::logic_error("use of an empty DiffValue");
  return *n;
}

}  // namespace

const Matrix& DiffValue::data() const { return checked(node_).data; }
const Shape& DiffValue::shape() const { return checked(node_).shape; }
bool DiffValue::requires_grad() const { return checked(node_).requires_grad; }
const char* DiffValue::op() const { return checked(node_).op; }

const Matrix* DiffValue::adjoint() const {
  const auto& n = checked(node_);
  return n.has_adjoint ? &n.adjoint : nullptr;
}

double DiffValue::item() const {
  const auto& n = checked(node_);
  if (n.shape.numel() != 1) throw ShapeError(std::string("item() on non-scalar ") + n.shape.str());
  return n.data(0, 0);
}

ParamSet ParamSet::variables(const TensorMap& values) {
  ParamSet p;
  for (const auto& [id, m] : values) p.insert(id, variable(m));
  return p;
}

ParamSet ParamSet::constants(const TensorMap& values) {
  ParamSet p;
  for (const auto& [id, m] : values) p.insert(id, constant(m));
  return p;
}

void ParamSet::insert(const std::string& id, DiffValue v) {
  if (!leaves_.emplace(id, std::move(v)).second) {
    throw std::invalid_argument("duplicate parameter identifier: " + id);
  }
}

const DiffValue& ParamSet::at(const std::string& id) const {
  auto it = leaves_.find(id);
  if (it == leaves_.end()) throw std::out_of_range("unknown parameter identifier: " + id);
  return it->second;
}

// ---------------------------------------------------------------------------
// Construction

DiffValue leaf(Matrix data, Shape shape, bool requires_grad) {
  if (data.rows() != shape.rows() || data.cols() != shape.cols()) {
    throw ShapeError("leaf data does not match shape " + shape.str());
  }
  auto n = std::make_shared<detail::Node>();
  n->data = std::move(data);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return DiffValue(std::move(n));
}

DiffValue constant(const Matrix& m) { return leaf(m, Shape::of(m), false); }
DiffValue constant(double v) { return leaf(Matrix::Constant(1, 1, v), Shape::scalar(), false); }
DiffValue variable(const Matrix& m) { return leaf(m, Shape::of(m), true); }
DiffValue variable(double v) { return leaf(Matrix::Constant(1, 1, v), Shape::scalar(), true); }

DiffValue constant_vector(std::initializer_list<double> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return leaf(std::move(m), Shape{static_cast<Eigen::Index>(values.size())}, false);
}

DiffValue constant_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows.begin()->size());
  Matrix m(r, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != c) throw ShapeError("ragged matrix literal");
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return constant(m);
}

DiffValue make_node(Matrix data, Shape shape, const char* op, std::vector<DiffValue> parents,
                    std::function<void(detail::Node&)> propagate) {
  auto n = std::make_shared<detail::Node>();
  n->data = std::move(data);
  n->shape = std::move(shape);
  n->op = op;
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  // Constant subgraphs do not need to keep their history.
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(std::move(p.node_));
    n->propagate = std::move(propagate);
  }
  return DiffValue(std::move(n));
}

DiffValue detach(const DiffValue& v) { return leaf(v.data(), v.shape(), false); }

// ---------------------------------------------------------------------------
// Op helpers

namespace {

using detail::Node;

void accumulate(Node& n, const Matrix& g) {
  if (!n.requires_grad) return;
  if (n.has_adjoint) {
    n.adjoint += g;
  } else {
    n.adjoint = g;
    n.has_adjoint = true;
  }
}

template <typename Expr>
void accumulate_expr(Node& n, const Expr& g) {
  if (!n.requires_grad) return;
  if (n.has_adjoint) {
    n.adjoint += g;
  } else {
    n.adjoint = g;
    n.has_adjoint = true;
  }
}

bool is_scalar(const Shape& s) { return s.rank() == 0; }

// Result shape of an elementwise binary op; throws on mismatch.
Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (is_scalar(a)) return b;
  if (is_scalar(b)) return a;
  throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

Matrix expand(const Matrix& m, const Shape& from, const Shape& to) {
  if (from == to) return m;
  return Matrix::Constant(to.rows(), to.cols(), m(0, 0));
}

// Sums a broadcast gradient back down to the operand's shape.
void accumulate_reduced(Node& n, const Matrix& g) {
  if (!n.requires_grad) return;
  if (is_scalar(n.shape) && g.size() != 1) {
    accumulate(n, Matrix::Constant(1, 1, g.sum()));
  } else {
    accumulate(n, g);
  }
}

template <typename Fwd, typename Grad>
DiffValue unary(const char* op, const DiffValue& x, Fwd fwd, Grad grad) {
  Matrix out = fwd(x.data());
  Shape shape = x.shape();
  return make_node(std::move(out), std::move(shape), op, {x}, [grad](Node& self) {
    Node& in = *self.parents[0];
    accumulate(in, grad(in.data, self.data, self.adjoint));
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise binary ops

DiffValue add(const DiffValue& a, const DiffValue& b) {
  Shape s = broadcast_shape("add", a.shape(), b.shape());
  Matrix out = expand(a.data(), a.shape(), s) + expand(b.data(), b.shape(), s);
  return make_node(std::move(out), s, "add", {a, b}, [](Node& self) {
    accumulate_reduced(*self.parents[0], self.adjoint);
    accumulate_reduced(*self.parents[1], self.adjoint);
  });
}

DiffValue sub(const DiffValue& a, const DiffValue& b) {
  Shape s = broadcast_shape("sub", a.shape(), b.shape());
  Matrix out = expand(a.data(), a.shape(), s) - expand(b.data(), b.shape(), s);
  return make_node(std::move(out), s, "sub", {a, b}, [](Node& self) {
    accumulate_reduced(*self.parents[0], self.adjoint);
    accumulate_reduced(*self.parents[1], -self.adjoint);
  });
}

DiffValue mul(const DiffValue& a, const DiffValue& b) {
  Shape s = broadcast_shape("mul", a.shape(), b.shape());
  Matrix out = expand(a.data(), a.shape(), s).cwiseProduct(expand(b.data(), b.shape(), s));
  return make_node(std::move(out), s, "mul", {a, b}, [s](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      accumulate_reduced(pa, self.adjoint.cwiseProduct(expand(pb.data, pb.shape, s)));
    }
    if (pb.requires_grad) {
      accumulate_reduced(pb, self.adjoint.cwiseProduct(expand(pa.data, pa.shape, s)));
    }
  });
}

DiffValue div(const DiffValue& a, const DiffValue& b) {
  Shape s = broadcast_shape("div", a.shape(), b.shape());
  Matrix bx = expand(b.data(), b.shape(), s);
  Matrix out = expand(a.data(), a.shape(), s).cwiseQuotient(bx);
  return make_node(std::move(out), s, "div", {a, b}, [s](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    Matrix bx = expand(pb.data, pb.shape, s);
    if (pa.requires_grad) accumulate_reduced(pa, self.adjoint.cwiseQuotient(bx));
    if (pb.requires_grad) {
      // d(a/b)/db = -out / b
      accumulate_reduced(pb, -self.adjoint.cwiseProduct(self.data).cwiseQuotient(bx));
    }
  });
}

DiffValue minimum(const DiffValue& a, const DiffValue& b) {
  Shape s = broadcast_shape("minimum", a.shape(), b.shape());
  Matrix ax = expand(a.data(), a.shape(), s);
  Matrix bx = expand(b.data(), b.shape(), s);
  Matrix out = ax.cwiseMin(bx);
  // Ties route the gradient to the first operand.
  Eigen::ArrayXXd pick_a = (ax.array() <= bx.array()).cast<double>();
  return make_node(std::move(out), s, "minimum", {a, b}, [pick_a](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      accumulate_reduced(pa, (self.adjoint.array() * pick_a).matrix());
    }
    if (pb.requires_grad) {
      accumulate_reduced(pb, (self.adjoint.array() * (1.0 - pick_a)).matrix());
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops

DiffValue neg(const DiffValue& x) {
  return unary(
      "neg", x, [](const Matrix& v) -> Matrix { return -v; },
      [](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return -g; });
}

DiffValue scale(const DiffValue& x, double c) {
  return unary(
      "scale", x, [c](const Matrix& v) -> Matrix { return c * v; },
      [c](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return c * g; });
}

DiffValue shift(const DiffValue& x, double c) {
  return unary(
      "shift", x, [c](const Matrix& v) -> Matrix { return (v.array() + c).matrix(); },
      [](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return g; });
}

DiffValue tanh(const DiffValue& x) {
  return unary(
      "tanh", x, [](const Matrix& v) -> Matrix { return v.array().tanh().matrix(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return (g.array() * (1.0 - y.array().square())).matrix();
      });
}

DiffValue exp(const DiffValue& x) {
  return unary(
      "exp", x, [](const Matrix& v) -> Matrix { return v.array().exp().matrix(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix { return g.cwiseProduct(y); });
}

DiffValue log(const DiffValue& x) {
  if ((x.data().array() <= 0.0).any() || x.data().hasNaN()) {
    throw DomainError("log: non-positive input in tensor of shape " + x.shape().str());
  }
  return unary(
      "log", x, [](const Matrix& v) -> Matrix { return v.array().log().matrix(); },
      [](const Matrix& in, const Matrix&, const Matrix& g) -> Matrix { return g.cwiseQuotient(in); });
}

DiffValue square(const DiffValue& x) {
  return unary(
      "square", x, [](const Matrix& v) -> Matrix { return v.array().square().matrix(); },
      [](const Matrix& in, const Matrix&, const Matrix& g) -> Matrix {
        return 2.0 * g.cwiseProduct(in);
      });
}

DiffValue sqrt(const DiffValue& x) {
  if ((x.data().array() <= 0.0).any() || x.data().hasNaN()) {
    throw DomainError("sqrt: non-positive input in tensor of shape " + x.shape().str());
  }
  return unary(
      "sqrt", x, [](const Matrix& v) -> Matrix { return v.array().sqrt().matrix(); },
      [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
        return (0.5 * g.array() / y.array()).matrix();
      });
}

DiffValue relu(const DiffValue& x) {
  return unary(
      "relu", x, [](const Matrix& v) -> Matrix { return v.cwiseMax(0.0); },
      [](const Matrix& in, const Matrix&, const Matrix& g) -> Matrix {
        return (g.array() * (in.array() > 0.0).cast<double>()).matrix();
      });
}

DiffValue softplus(const DiffValue& x) {
  return unary(
      "softplus", x,
      [](const Matrix& v) -> Matrix {
        return (v.array().max(0.0) + (-v.array().abs()).exp().log1p()).matrix();
      },
      [](const Matrix& in, const Matrix&, const Matrix& g) -> Matrix {
        // sigmoid(x), evaluated without overflow
        Eigen::ArrayXXd e = (-in.array().abs()).exp();
        Eigen::ArrayXXd sig = (in.array() >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
        return (g.array() * sig).matrix();
      });
}

DiffValue clamp(const DiffValue& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  return unary(
      "clamp", x, [lo, hi](const Matrix& v) -> Matrix { return v.cwiseMax(lo).cwiseMin(hi); },
      [lo, hi](const Matrix& in, const Matrix&, const Matrix& g) -> Matrix {
        return (g.array() * ((in.array() >= lo) && (in.array() <= hi)).cast<double>()).matrix();
      });
}

// ---------------------------------------------------------------------------
// Reductions and structure

DiffValue sum(const DiffValue& x) {
  Matrix out = Matrix::Constant(1, 1, x.data().sum());
  return make_node(std::move(out), Shape::scalar(), "sum", {x}, [](Node& self) {
    Node& in = *self.parents[0];
    accumulate_expr(in, Matrix::Constant(in.data.rows(), in.data.cols(), self.adjoint(0, 0)));
  });
}

DiffValue mean(const DiffValue& x) {
  const double n = static_cast<double>(x.data().size());
  Matrix out = Matrix::Constant(1, 1, x.data().sum() / n);
  return make_node(std::move(out), Shape::scalar(), "mean", {x}, [n](Node& self) {
    Node& in = *self.parents[0];
    accumulate_expr(in, Matrix::Constant(in.data.rows(), in.data.cols(), self.adjoint(0, 0) / n));
  });
}

DiffValue sum_rows(const DiffValue& x) {
  if (x.shape().rank() != 2) throw ShapeError("sum_rows: expected rank 2, got " + x.shape().str());
  Matrix out = x.data().rowwise().sum();
  Shape s{x.shape().rows(), 1};
  return make_node(std::move(out), s, "sum_rows", {x}, [](Node& self) {
    Node& in = *self.parents[0];
    accumulate_expr(in, self.adjoint.replicate(1, in.data.cols()));
  });
}

DiffValue concat(const DiffValue& a, const DiffValue& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() != sb.rank() || sa.rank() == 0) {
    throw ShapeError("concat: incompatible shapes " + sa.str() + " vs " + sb.str());
  }
  Matrix out;
  Shape s;
  if (sa.rank() == 1) {
    out.resize(sa.rows() + sb.rows(), 1);
    out << a.data(), b.data();
    s = Shape{sa.rows() + sb.rows()};
  } else {
    if (sa.rows() != sb.rows()) {
      throw ShapeError("concat: incompatible shapes " + sa.str() + " vs " + sb.str());
    }
    out.resize(sa.rows(), sa.cols() + sb.cols());
    out << a.data(), b.data();
    s = Shape{sa.rows(), sa.cols() + sb.cols()};
  }
  const bool column = sa.rank() == 1;
  return make_node(std::move(out), s, "concat", {a, b}, [column](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (column) {
      accumulate_expr(pa, self.adjoint.topRows(pa.data.rows()));
      accumulate_expr(pb, self.adjoint.bottomRows(pb.data.rows()));
    } else {
      accumulate_expr(pa, self.adjoint.leftCols(pa.data.cols()));
      accumulate_expr(pb, self.adjoint.rightCols(pb.data.cols()));
    }
  });
}

DiffValue affine(const DiffValue& weight, const DiffValue& x, const DiffValue& bias) {
  const Shape& sw = weight.shape();
  const Shape& sx = x.shape();
  const Shape& sb = bias.shape();
  auto mismatch = [&] {
    return ShapeError("affine: incompatible shapes W" + sw.str() + " x" + sx.str() + " b" + sb.str());
  };
  const bool bias_ok = (sb.rank() == 1 || (sb.rank() == 2 && sb.cols() == 1)) && sb.rows() == sw.rows();
  if (sw.rank() != 2 || !bias_ok) throw mismatch();

  if (sx.rank() == 1) {
    if (sx.rows() != sw.cols()) throw mismatch();
    Matrix out = weight.data() * x.data() + bias.data();
    return make_node(std::move(out), Shape{sw.rows()}, "affine", {weight, x, bias}, [](Node& self) {
      Node& w = *self.parents[0];
      Node& in = *self.parents[1];
      Node& b = *self.parents[2];
      if (w.requires_grad) accumulate_expr(w, self.adjoint * in.data.transpose());
      if (in.requires_grad) accumulate_expr(in, w.data.transpose() * self.adjoint);
      accumulate(b, self.adjoint);
    });
  }
  if (sx.rank() != 2 || sx.cols() != sw.cols()) throw mismatch();
  Matrix out = x.data() * weight.data().transpose();
  out.rowwise() += bias.data().col(0).transpose();
  return make_node(std::move(out), Shape{sx.rows(), sw.rows()}, "affine", {weight, x, bias},
                   [](Node& self) {
                     Node& w = *self.parents[0];
                     Node& in = *self.parents[1];
                     Node& b = *self.parents[2];
                     if (w.requires_grad) accumulate_expr(w, self.adjoint.transpose() * in.data);
                     if (in.requires_grad) accumulate_expr(in, self.adjoint * w.data);
                     if (b.requires_grad) accumulate_expr(b, self.adjoint.colwise().sum().transpose());
                   });
}

// ---------------------------------------------------------------------------
// Backward

TensorMap backward(const DiffValue& root, const ParamSet& seeds) {
  if (!root.valid()) throw std::logic_error("backward on an empty DiffValue");
  if (root.shape().numel() != 1) {
    throw ShapeError("backward: root must be scalar, got " + root.shape().str());
  }

  // Reverse topological order over the grad-requiring subgraph.
  std::vector<Node*> order;
  if (root.node_->requires_grad) {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node_.get(), 0}};
    visited.insert(root.node_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (Node* n : order) n->has_adjoint = false;
    root.node_->adjoint = Matrix::Ones(1, 1);
    root.node_->has_adjoint = true;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->has_adjoint && n->propagate) n->propagate(*n);
    }
  }

  std::unordered_set<const Node*> reached(order.begin(), order.end());
  TensorMap grads;
  for (const auto& [id, leaf_value] : seeds) {
    const Node* n = leaf_value.node_.get();
    if (reached.count(n) && n->has_adjoint) {
      grads.emplace(id, n->adjoint);
    } else {
      grads.emplace(id, Matrix::Zero(n->data.rows(), n->data.cols()));
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// TensorMap helpers

TensorMap zeros_like(const TensorMap& m) {
  TensorMap out;
  for (const auto& [id, v] : m) out.emplace(id, Matrix::Zero(v.rows(), v.cols()));
  return out;
}

Eigen::Index total_size(const TensorMap& m) {
  Eigen::Index n = 0;
  for (const auto& [id, v] : m) n += v.size();
  return n;
}

double dot(const TensorMap& a, const TensorMap& b) {
  double acc = 0.0;
  for (const auto& [id, va] : a) {
    const Matrix& vb = b.at(id);
    if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
      throw ShapeError("dot: shape mismatch for " + id);
    }
    acc += va.cwiseProduct(vb).sum();
  }
  return acc;
}

Vector flatten(const TensorMap& m) {
  Vector out(total_size(m));
  Eigen::Index k = 0;
  for (const auto& [id, v] : m) {
    out.segment(k, v.size()) = v.reshaped();
    k += v.size();
  }
  return out;
}

void unflatten(const Vector& flat, TensorMap& into) {
  if (flat.size() != total_size(into)) throw ShapeError("unflatten: size mismatch");
  Eigen::Index k = 0;
  for (auto& [id, v] : into) {
    v.reshaped() = flat.segment(k, v.size());
    k += v.size();
  }
}

}  // namespace metasac::ad
