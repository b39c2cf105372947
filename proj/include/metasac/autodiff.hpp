#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace metasac::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Named dense arrays, ordered by identifier.
using TensorMap = std::map<std::string, Matrix>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Tensor shape of rank 0, 1 or 2.
///
/// Storage is always an Eigen matrix: rank 0 is 1x1, rank 1 [n] is an n x 1
/// column, rank 2 [r, c] is r x c. Batched quantities are rank 2 with one row
/// per sample.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Eigen::Index> dims);
  explicit Shape(std::vector<Eigen::Index> dims);

  static Shape scalar() { return Shape{}; }
  static Shape of(const Matrix& m) { return Shape{m.rows(), m.cols()}; }

  const std::vector<Eigen::Index>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  Eigen::Index numel() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;

  bool operator==(const Shape&) const = default;
  std::string str() const;

 private:
  std::vector<Eigen::Index> dims_;
};

class DiffValue;
class ParamSet;

namespace detail {

struct Node {
  Matrix data;
  Shape shape;
  Matrix adjoint;
  bool has_adjoint = false;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's adjoint and accumulates into parents.
  std::function<void(Node&)> propagate;
};

}  // namespace detail

/// Handle to a node of a dynamically built reverse-mode graph.
///
/// Copies share the node. Graphs are built per step and discarded; a node
/// keeps its parents alive.
class DiffValue {
 public:
  DiffValue() = default;

  const Matrix& data() const;
  const Shape& shape() const;
  bool requires_grad() const;
  const char* op() const;
  bool valid() const { return node_ != nullptr; }

  /// Adjoint written by the most recent backward pass, if this node was reached.
  const Matrix* adjoint() const;

  /// Value of a single-element tensor.
  double item() const;

 private:
  friend DiffValue make_node(Matrix, Shape, const char*, std::vector<DiffValue>,
                             std::function<void(detail::Node&)>);
  friend DiffValue leaf(Matrix, Shape, bool);
  friend TensorMap backward(const DiffValue&, const ParamSet&);

  explicit DiffValue(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Leaf parameters keyed by identifier; iteration is sorted by identifier.
class ParamSet {
 public:
  ParamSet() = default;

  static ParamSet variables(const TensorMap& values);
  static ParamSet constants(const TensorMap& values);

  void insert(const std::string& id, DiffValue v);
  const DiffValue& at(const std::string& id) const;
  bool contains(const std::string& id) const { return leaves_.count(id) != 0; }
  std::size_t size() const { return leaves_.size(); }

  auto begin() const { return leaves_.begin(); }
  auto end() const { return leaves_.end(); }

 private:
  std::map<std::string, DiffValue> leaves_;
};

// Leaf construction.
DiffValue leaf(Matrix data, Shape shape, bool requires_grad);
DiffValue constant(const Matrix& m);
DiffValue constant(double v);
DiffValue constant_vector(std::initializer_list<double> values);
DiffValue constant_matrix(std::initializer_list<std::initializer_list<double>> rows);
DiffValue variable(const Matrix& m);
DiffValue variable(double v);

/// Low-level node constructor used by the op set.
DiffValue make_node(Matrix data, Shape shape, const char* op, std::vector<DiffValue> parents,
                    std::function<void(detail::Node&)> propagate);

/// Same data, no parents: backward treats it as a constant.
DiffValue detach(const DiffValue& v);

// Elementwise arithmetic. Shapes must match, or one side must be rank 0.
DiffValue add(const DiffValue& a, const DiffValue& b);
DiffValue sub(const DiffValue& a, const DiffValue& b);
DiffValue mul(const DiffValue& a, const DiffValue& b);
DiffValue div(const DiffValue& a, const DiffValue& b);
DiffValue minimum(const DiffValue& a, const DiffValue& b);

DiffValue neg(const DiffValue& x);
DiffValue scale(const DiffValue& x, double c);
DiffValue shift(const DiffValue& x, double c);
DiffValue tanh(const DiffValue& x);
DiffValue exp(const DiffValue& x);
DiffValue log(const DiffValue& x);
DiffValue square(const DiffValue& x);
DiffValue sqrt(const DiffValue& x);
DiffValue relu(const DiffValue& x);
DiffValue softplus(const DiffValue& x);
/// Values clamped to [lo, hi]; the gradient is zero outside the interval.
DiffValue clamp(const DiffValue& x, double lo, double hi);

// Reductions.
DiffValue sum(const DiffValue& x);
DiffValue mean(const DiffValue& x);
/// [r, c] -> [r, 1]: sum across the last axis, one value per row.
DiffValue sum_rows(const DiffValue& x);

/// Joins along the last axis: [r, a] and [r, b] give [r, a + b].
DiffValue concat(const DiffValue& a, const DiffValue& b);

/// weight [out, in] applied to x [in] or to a batch x [n, in], plus bias [out] (or [out, 1]).
DiffValue affine(const DiffValue& weight, const DiffValue& x, const DiffValue& bias);

/// Gradient of a scalar root w.r.t. every leaf in `seeds`. Leaves that do not
/// reach the root get zeros. Adjoints are reset on each call.
TensorMap backward(const DiffValue& root, const ParamSet& seeds);

inline DiffValue operator+(const DiffValue& a, const DiffValue& b) { return add(a, b); }
inline DiffValue operator-(const DiffValue& a, const DiffValue& b) { return sub(a, b); }
inline DiffValue operator*(const DiffValue& a, const DiffValue& b) { return mul(a, b); }
inline DiffValue operator/(const DiffValue& a, const DiffValue& b) { return div(a, b); }
inline DiffValue operator-(const DiffValue& x) { return neg(x); }
inline DiffValue operator*(double c, const DiffValue& x) { return scale(x, c); }
inline DiffValue operator*(const DiffValue& x, double c) { return scale(x, c); }
inline DiffValue operator+(const DiffValue& x, double c) { return shift(x, c); }
inline DiffValue operator-(const DiffValue& x, double c) { return shift(x, -c); }

// Helpers over TensorMap used by optimizers and gradient checks.
TensorMap zeros_like(const TensorMap& m);
Eigen::Index total_size(const TensorMap& m);
double dot(const TensorMap& a, const TensorMap& b);
Vector flatten(const TensorMap& m);
void unflatten(const Vector& flat, TensorMap& into);

}  // namespace metasac::ad
