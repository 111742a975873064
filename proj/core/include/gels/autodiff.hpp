#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gels/rng.hpp"

namespace gels {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named dense parameter arrays with immutable shapes and a seeded
// initializer.  New entries are drawn uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
class ParamStore {
 public:
  struct Entry {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major
  };

  explicit ParamStore(std::uint64_t seed);

  // fan_in defaults to cols for matrices and to the length for vectors.
  void add_matrix(const std::string& name, int rows, int cols);
  void add_vector(const std::string& name, int len);
  void add_vector(const std::string& name, int len, int fan_in);

  bool contains(const std::string& name) const;
  std::pair<int, int> shape(const std::string& name) const;
  std::vector<double>& values(const std::string& name);
  const std::vector<double>& values(const std::string& name) const;

  // Name-ordered; the iteration order is deterministic.
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Checkpoint file: JSON object, name -> {"shape":[rows,cols],"values":[...]}.
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

 private:
  void add(const std::string& name, int rows, int cols, int fan_in);

  std::map<std::string, Entry> entries_;
  Rng rng_;
};

// Gradient per named parameter, flat row-major like the store entries.
using GradMap = std::map<std::string, std::vector<double>>;

// In-place descent step: every named parameter decremented by eta * grad.
// A negative eta ascends.
void sgd_step(ParamStore& store, const GradMap& grads, double eta);

// Diagonally preconditioned descent (Adam).  Keeps first/second gradient
// moments per parameter element; state is deterministic given the gradient
// sequence.  A negative eta ascends.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double eta, double beta1 = 0.9, double beta2 = 0.999,
                         double epsilon = 1e-8);

  void step(ParamStore& store, const GradMap& grads);

  double eta() const { return eta_; }

 private:
  double eta_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

// A recorded computation over vectors.  Nodes are appended in evaluation
// order (inputs always precede their consumers), values are computed
// eagerly, replay() re-evaluates the whole recording against the current
// store contents, and backward() runs exact reverse-mode differentiation of
// a scalar output with respect to every referenced parameter.
class Tape {
 public:
  using Ref = std::int32_t;

  explicit Tape(const ParamStore& store) : store_(&store) {}

  Ref constant(std::vector<double> value);
  Ref scalar_constant(double value);
  Ref param(const std::string& name);                 // whole entry, flattened
  Ref param_row(const std::string& name, int row);    // one row of a matrix
  Ref matvec(const std::string& matrix, Ref x);       // store matrix times x
  Ref affine(const std::string& matrix, Ref x, const std::string& bias);
  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref scale(Ref x, double factor);
  Ref relu(Ref x);
  Ref log(Ref x);                                     // elementwise ln, x > 0
  Ref softmax(Ref x);                                 // max-subtracted
  Ref concat(Ref a, Ref b);
  Ref slice(Ref x, int offset, int len);
  Ref scale_by(Ref x, Ref scalar);                    // scalar node times vector
  Ref dot(Ref a, Ref b);                              // scalar
  Ref sum(Ref x);                                     // scalar
  Ref squared_error(Ref a, Ref b);                    // 0.5 * sum((a-b)^2)

  const std::vector<double>& value(Ref node) const;
  double scalar_value(Ref node) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Recomputes every node from the current store values.
  void replay();

  // Reverse-mode gradients of the scalar `output` (seeded with seed_grad)
  // with respect to every parameter referenced by the recording.
  GradMap backward(Ref output, double seed_grad = 1.0) const;

 private:
  enum class Op {
    Const,
    Param,
    ParamRow,
    MatVec,
    Affine,
    Add,
    Sub,
    Scale,
    Relu,
    Log,
    Softmax,
    Concat,
    Slice,
    ScaleBy,
    Dot,
    Sum,
    SquaredError,
  };

  struct Node {
    Op op;
    Ref a = -1;
    Ref b = -1;
    std::string pname;  // parameter name for Param/ParamRow/MatVec/Affine
    std::string bias;   // bias name for Affine
    int row = -1;       // ParamRow row / Slice offset
    int len = -1;       // Slice length
    double factor = 0.0;
    std::vector<double> value;
  };

  Ref push(Node node);
  void eval(Node& node) const;
  [[noreturn]] void shape_fail(const Node& node, const std::string& what) const;
  const char* op_name(Op op) const;

  const ParamStore* store_;
  std::vector<Node> nodes_;
};

}  // namespace gels
