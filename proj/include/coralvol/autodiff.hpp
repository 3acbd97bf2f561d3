#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "coralvol/common.hpp"

// Reverse-mode automatic differentiation over dense row-major double arrays.
namespace coralvol::ad {

using Shape = std::vector<std::size_t>;
std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);  // throws ShapeError on size mismatch
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const;
  double item() const;  // the single value of a size-1 tensor
  bool all_finite() const;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const { return value().item(); }
};

class Tape {
 public:
  // Receives the gradient of the node's output and accumulates into its inputs
  // through grad_for().
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);  // leaf that receives a gradient

  // Appends an op node. The value is checked for finiteness (NumericError
  // naming `op`). The backward closure is dropped if no input needs a gradient.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const std::string& op(Var v) const { return nodes_.at(v.id).op; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient accumulator of node `id`, zero-initialized on first use, or
  // nullptr when the node does not need a gradient.
  Tensor* grad_for(std::uint32_t id);

  // Gradient of the last backward() root with respect to v (zeros if unreached).
  Tensor grad(Var v) const;

  // Reverse sweep from a size-1 root, visiting nodes in reverse creation order.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::uint32_t> parents;
    Backward backward;
  };
  Var push(Node node);
  std::vector<Node> nodes_;
};

// --- primitives --------------------------------------------------------------
//
// Binary ops broadcast when one shape is a suffix of the other (a scalar
// broadcasts against anything).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);  // [m,k] x [k,n]

Var sum(Var a);   // -> scalar
Var mean(Var a);  // -> scalar
Var sum_reduce(Var a, std::size_t axis);
Var mean_reduce(Var a, std::size_t axis);
// Max over an axis; the gradient goes to the first maximal element.
Var max_reduce(Var a, std::size_t axis);

Var leaky_relu(Var a, double slope);
Var log(Var a);
Var exp(Var a);
Var square(Var a);
Var abs(Var a);
Var softplus(Var a);

Var concat(const std::vector<Var>& parts, std::size_t axis);
// Rows of a (axis 0) in the given order; repeated indices accumulate gradient.
Var gather(Var a, const std::vector<std::uint32_t>& rows);
// Drops `axis`, keeping position `index` along it.
Var select(Var a, std::size_t axis, std::size_t index);
Var reshape(Var a, Shape shape);

inline constexpr double kNormEps = 1e-5;
// Normalizes each channel (last axis) over all leading positions, biased variance.
Var instance_norm(Var a, double eps = kNormEps);

// Inverted dropout: in training keeps each element with probability 1-p and
// scales it by 1/(1-p); identity otherwise.
Var dropout(Var a, double p, std::uint64_t seed, bool train);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }

// --- parameters --------------------------------------------------------------

// Named arrays iterated in name order.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return items_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::map<std::string, Tensor>& items() { return items_; }
  const std::map<std::string, Tensor>& items() const { return items_; }
  std::size_t count() const { return items_.size(); }
  std::size_t total_size() const;
  bool all_finite() const;

  bool operator==(const ParamSet& other) const;

 private:
  std::map<std::string, Tensor> items_;
};

using Bound = std::map<std::string, Var>;

// Registers every parameter on the tape as a gradient-receiving leaf.
Bound bind(Tape& tape, const ParamSet& params);
// Gradients of the tape's last backward root, same names and shapes as params.
ParamSet gradients(const Tape& tape, const Bound& bound);

// --- verification ------------------------------------------------------------

using ScalarFn = std::function<Var(Tape&, const Bound&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the reverse-mode gradient with central differences on a random
// subset of `coordinates` entries (all of them if fewer exist). Relative error
// uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckResult grad_check(const ScalarFn& f, const ParamSet& params, double eps,
                           std::size_t coordinates = 64, std::uint64_t seed = 0);

// --- parameter files ---------------------------------------------------------
//
// Little-endian:
//   char[4] "PARM" | u32 version (=1) | u32 header_len | header bytes (UTF-8 JSON)
//   u32 count, then per array in name order:
//     u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[prod(dims)]

inline constexpr std::uint32_t kParamVersion = 1;

struct ParamFile {
  ParamSet params;
  std::string header;
};

std::string encode_params(const ParamSet& params, std::string_view header = "{}");
ParamFile decode_params(std::string_view bytes);
void save_params(const ParamSet& params, const std::string& path, std::string_view header = "{}");
ParamFile load_params(const std::string& path);

}  // namespace coralvol::ad
