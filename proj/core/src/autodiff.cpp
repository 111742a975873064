#include "gels/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace gels {

ParamStore::ParamStore(std::uint64_t seed) : rng_(mix64(seed)) {}

void ParamStore::add(const std::string& name, int rows, int cols, int fan_in) {
  if (entries_.contains(name)) {
    throw std::invalid_argument("param store: duplicate name " + name);
  }
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("param store: bad shape for " + name);
  }
  Entry entry;
  entry.rows = rows;
  entry.cols = cols;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  entry.data.resize(static_cast<std::size_t>(rows) * cols);
  for (double& v : entry.data) v = rng_.uniform(-bound, bound);
  entries_.emplace(name, std::move(entry));
}

void ParamStore::add_matrix(const std::string& name, int rows, int cols) {
  add(name, rows, cols, cols);
}

void ParamStore::add_vector(const std::string& name, int len) {
  add(name, len, 1, len);
}

void ParamStore::add_vector(const std::string& name, int len, int fan_in) {
  add(name, len, 1, fan_in);
}

bool ParamStore::contains(const std::string& name) const {
  return entries_.contains(name);
}

std::pair<int, int> ParamStore::shape(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::invalid_argument("param store: unknown name " + name);
  }
  return {it->second.rows, it->second.cols};
}

std::vector<double>& ParamStore::values(const std::string& name) {
  const auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::invalid_argument("param store: unknown name " + name);
  }
  return it->second.data;
}

const std::vector<double>& ParamStore::values(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::invalid_argument("param store: unknown name " + name);
  }
  return it->second.data;
}

void ParamStore::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  for (const auto& [name, entry] : entries_) {
    nlohmann::ordered_json e;
    e["shape"] = {entry.rows, entry.cols};
    e["values"] = entry.data;
    j[name] = std::move(e);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("param store: cannot open " + path.string());
  }
  out << j.dump() << '\n';
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("param store: cannot open " + path.string());
  }
  nlohmann::json j;
  in >> j;
  ParamStore store(0);
  for (const auto& [name, e] : j.items()) {
    Entry entry;
    entry.rows = e.at("shape").at(0).get<int>();
    entry.cols = e.at("shape").at(1).get<int>();
    entry.data = e.at("values").get<std::vector<double>>();
    if (entry.data.size() != static_cast<std::size_t>(entry.rows) * entry.cols) {
      throw std::runtime_error("param store: value count does not match shape of " +
                               name);
    }
    store.entries_.emplace(name, std::move(entry));
  }
  return store;
}

void sgd_step(ParamStore& store, const GradMap& grads, double eta) {
  for (const auto& [name, grad] : grads) {
    auto& data = store.values(name);
    if (grad.size() != data.size()) {
      throw ShapeError("sgd_step: gradient shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= eta * grad[i];
  }
}

AdamOptimizer::AdamOptimizer(double eta, double beta1, double beta2,
                             double epsilon)
    : eta_(eta), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void AdamOptimizer::step(ParamStore& store, const GradMap& grads) {
  ++t_;
  const double m_correction = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double v_correction = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, grad] : grads) {
    auto& data = store.values(name);
    if (grad.size() != data.size()) {
      throw ShapeError("adam step: gradient shape mismatch for " + name);
    }
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(grad.size(), 0.0);
      v.assign(grad.size(), 0.0);
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double m_hat = m[i] / m_correction;
      const double v_hat = v[i] / v_correction;
      data[i] -= eta_ * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
}

const char* Tape::op_name(Op op) const {
  switch (op) {
    case Op::Const: return "const";
    case Op::Param: return "param";
    case Op::ParamRow: return "param_row";
    case Op::MatVec: return "matvec";
    case Op::Affine: return "affine";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::Log: return "log";
    case Op::Softmax: return "softmax";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::ScaleBy: return "scale_by";
    case Op::Dot: return "dot";
    case Op::Sum: return "sum";
    case Op::SquaredError: return "squared_error";
  }
  return "?";
}

void Tape::shape_fail(const Node& node, const std::string& what) const {
  throw ShapeError("tape node #" + std::to_string(&node - nodes_.data()) + " (" +
                   op_name(node.op) + "): " + what);
}

Tape::Ref Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  eval(nodes_.back());
  return static_cast<Ref>(nodes_.size() - 1);
}

void Tape::eval(Node& node) const {
  switch (node.op) {
    case Op::Const:
      break;
    case Op::Param:
      node.value = store_->values(node.pname);
      break;
    case Op::ParamRow: {
      const auto [rows, cols] = store_->shape(node.pname);
      if (node.row < 0 || node.row >= rows) shape_fail(node, "row out of range");
      const auto& data = store_->values(node.pname);
      node.value.assign(data.begin() + static_cast<std::ptrdiff_t>(node.row) * cols,
                        data.begin() + static_cast<std::ptrdiff_t>(node.row + 1) * cols);
      break;
    }
    case Op::MatVec:
    case Op::Affine: {
      const auto [rows, cols] = store_->shape(node.pname);
      const auto& x = nodes_[node.a].value;
      if (static_cast<int>(x.size()) != cols) {
        shape_fail(node, "matrix expects input of length " + std::to_string(cols) +
                             ", got " + std::to_string(x.size()));
      }
      const auto& m = store_->values(node.pname);
      node.value.assign(static_cast<std::size_t>(rows), 0.0);
      for (int i = 0; i < rows; ++i) {
        double acc = 0.0;
        const double* row = m.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
        node.value[static_cast<std::size_t>(i)] = acc;
      }
      if (node.op == Op::Affine) {
        const auto& bias = store_->values(node.bias);
        if (static_cast<int>(bias.size()) != rows) {
          shape_fail(node, "bias length does not match matrix rows");
        }
        for (int i = 0; i < rows; ++i) node.value[static_cast<std::size_t>(i)] += bias[static_cast<std::size_t>(i)];
      }
      break;
    }
    case Op::Add:
    case Op::Sub: {
      const auto& a = nodes_[node.a].value;
      const auto& b = nodes_[node.b].value;
      if (a.size() != b.size()) shape_fail(node, "operand lengths differ");
      node.value.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        node.value[i] = node.op == Op::Add ? a[i] + b[i] : a[i] - b[i];
      }
      break;
    }
    case Op::Scale: {
      const auto& x = nodes_[node.a].value;
      node.value.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) node.value[i] = node.factor * x[i];
      break;
    }
    case Op::Relu: {
      const auto& x = nodes_[node.a].value;
      node.value.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) node.value[i] = std::max(0.0, x[i]);
      break;
    }
    case Op::Log: {
      const auto& x = nodes_[node.a].value;
      node.value.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) shape_fail(node, "log of nonpositive value");
        node.value[i] = std::log(x[i]);
      }
      break;
    }
    case Op::Softmax: {
      const auto& x = nodes_[node.a].value;
      if (x.empty()) shape_fail(node, "softmax of empty vector");
      const double m = *std::max_element(x.begin(), x.end());
      node.value.resize(x.size());
      double total = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        node.value[i] = std::exp(x[i] - m);
        total += node.value[i];
      }
      for (double& v : node.value) v /= total;
      break;
    }
    case Op::Concat: {
      const auto& a = nodes_[node.a].value;
      const auto& b = nodes_[node.b].value;
      node.value.clear();
      node.value.reserve(a.size() + b.size());
      node.value.insert(node.value.end(), a.begin(), a.end());
      node.value.insert(node.value.end(), b.begin(), b.end());
      break;
    }
    case Op::Slice: {
      const auto& x = nodes_[node.a].value;
      if (node.row < 0 || node.len < 1 ||
          static_cast<std::size_t>(node.row) + node.len > x.size()) {
        shape_fail(node, "slice out of range");
      }
      node.value.assign(x.begin() + node.row, x.begin() + node.row + node.len);
      break;
    }
    case Op::ScaleBy: {
      const auto& x = nodes_[node.a].value;
      const auto& s = nodes_[node.b].value;
      if (s.size() != 1) shape_fail(node, "scale_by needs a scalar");
      node.value.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) node.value[i] = s[0] * x[i];
      break;
    }
    case Op::Dot: {
      const auto& a = nodes_[node.a].value;
      const auto& b = nodes_[node.b].value;
      if (a.size() != b.size()) shape_fail(node, "operand lengths differ");
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
      node.value.assign(1, acc);
      break;
    }
    case Op::Sum: {
      const auto& x = nodes_[node.a].value;
      double acc = 0.0;
      for (double v : x) acc += v;
      node.value.assign(1, acc);
      break;
    }
    case Op::SquaredError: {
      const auto& a = nodes_[node.a].value;
      const auto& b = nodes_[node.b].value;
      if (a.size() != b.size()) shape_fail(node, "operand lengths differ");
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
      }
      node.value.assign(1, 0.5 * acc);
      break;
    }
  }
}

Tape::Ref Tape::constant(std::vector<double> value) {
  Node node;
  node.op = Op::Const;
  node.value = std::move(value);
  return push(std::move(node));
}

Tape::Ref Tape::scalar_constant(double value) { return constant({value}); }

Tape::Ref Tape::param(const std::string& name) {
  Node node;
  node.op = Op::Param;
  node.pname = name;
  return push(std::move(node));
}

Tape::Ref Tape::param_row(const std::string& name, int row) {
  Node node;
  node.op = Op::ParamRow;
  node.pname = name;
  node.row = row;
  return push(std::move(node));
}

Tape::Ref Tape::matvec(const std::string& matrix, Ref x) {
  Node node;
  node.op = Op::MatVec;
  node.pname = matrix;
  node.a = x;
  return push(std::move(node));
}

Tape::Ref Tape::affine(const std::string& matrix, Ref x, const std::string& bias) {
  Node node;
  node.op = Op::Affine;
  node.pname = matrix;
  node.bias = bias;
  node.a = x;
  return push(std::move(node));
}

Tape::Ref Tape::add(Ref a, Ref b) {
  Node node;
  node.op = Op::Add;
  node.a = a;
  node.b = b;
  return push(std::move(node));
}

Tape::Ref Tape::sub(Ref a, Ref b) {
  Node node;
  node.op = Op::Sub;
  node.a = a;
  node.b = b;
  return push(std::move(node));
}

Tape::Ref Tape::scale(Ref x, double factor) {
  Node node;
  node.op = Op::Scale;
  node.a = x;
  node.factor = factor;
  return push(std::move(node));
}

Tape::Ref Tape::relu(Ref x) {
  Node node;
  node.op = Op::Relu;
  node.a = x;
  return push(std::move(node));
}

Tape::Ref Tape::log(Ref x) {
  Node node;
  node.op = Op::Log;
  node.a = x;
  return push(std::move(node));
}

Tape::Ref Tape::softmax(Ref x) {
  Node node;
  node.op = Op::Softmax;
  node.a = x;
  return push(std::move(node));
}

Tape::Ref Tape::concat(Ref a, Ref b) {
  Node node;
  node.op = Op::Concat;
  node.a = a;
  node.b = b;
  return push(std::move(node));
}

Tape::Ref Tape::slice(Ref x, int offset, int len) {
  Node node;
  node.op = Op::Slice;
  node.a = x;
  node.row = offset;
  node.len = len;
  return push(std::move(node));
}

Tape::Ref Tape::scale_by(Ref x, Ref scalar) {
  Node node;
  node.op = Op::ScaleBy;
  node.a = x;
  node.b = scalar;
  return push(std::move(node));
}

Tape::Ref Tape::dot(Ref a, Ref b) {
  Node node;
  node.op = Op::Dot;
  node.a = a;
  node.b = b;
  return push(std::move(node));
}

Tape::Ref Tape::sum(Ref x) {
  Node node;
  node.op = Op::Sum;
  node.a = x;
  return push(std::move(node));
}

Tape::Ref Tape::squared_error(Ref a, Ref b) {
  Node node;
  node.op = Op::SquaredError;
  node.a = a;
  node.b = b;
  return push(std::move(node));
}

const std::vector<double>& Tape::value(Ref node) const {
  return nodes_[static_cast<std::size_t>(node)].value;
}

double Tape::scalar_value(Ref node) const {
  const auto& v = value(node);
  if (v.size() != 1) {
    throw ShapeError("tape: node is not scalar");
  }
  return v[0];
}

void Tape::replay() {
  for (Node& node : nodes_) eval(node);
}

GradMap Tape::backward(Ref output, double seed_grad) const {
  if (output < 0 || static_cast<std::size_t>(output) >= nodes_.size()) {
    throw std::invalid_argument("backward: bad output node");
  }
  if (nodes_[static_cast<std::size_t>(output)].value.size() != 1) {
    throw std::invalid_argument("backward: output must be scalar");
  }

  std::vector<std::vector<double>> adjoint(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    adjoint[i].assign(nodes_[i].value.size(), 0.0);
  }
  adjoint[static_cast<std::size_t>(output)][0] = seed_grad;

  GradMap grads;
  auto grad_of = [&](const std::string& name) -> std::vector<double>& {
    auto [it, inserted] = grads.try_emplace(name);
    if (inserted) it->second.assign(store_->values(name).size(), 0.0);
    return it->second;
  };

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    const Node& node = nodes_[idx];
    const std::vector<double>& gy = adjoint[idx];
    switch (node.op) {
      case Op::Const:
        break;
      case Op::Param: {
        auto& g = grad_of(node.pname);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
        break;
      }
      case Op::ParamRow: {
        auto& g = grad_of(node.pname);
        const auto cols = static_cast<std::size_t>(store_->shape(node.pname).second);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          g[static_cast<std::size_t>(node.row) * cols + i] += gy[i];
        }
        break;
      }
      case Op::MatVec:
      case Op::Affine: {
        const auto [rows, cols] = store_->shape(node.pname);
        const auto& x = nodes_[static_cast<std::size_t>(node.a)].value;
        const auto& m = store_->values(node.pname);
        auto& gm = grad_of(node.pname);
        auto& gx = adjoint[static_cast<std::size_t>(node.a)];
        for (int i = 0; i < rows; ++i) {
          const double gyi = gy[static_cast<std::size_t>(i)];
          if (gyi == 0.0) continue;
          const std::size_t base = static_cast<std::size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) {
            gm[base + j] += gyi * x[static_cast<std::size_t>(j)];
            gx[static_cast<std::size_t>(j)] += gyi * m[base + j];
          }
        }
        if (node.op == Op::Affine) {
          auto& gb = grad_of(node.bias);
          for (int i = 0; i < rows; ++i) gb[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)];
        }
        break;
      }
      case Op::Add: {
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        auto& gb = adjoint[static_cast<std::size_t>(node.b)];
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i];
          gb[i] += gy[i];
        }
        break;
      }
      case Op::Sub: {
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        auto& gb = adjoint[static_cast<std::size_t>(node.b)];
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i];
          gb[i] -= gy[i];
        }
        break;
      }
      case Op::Scale: {
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += node.factor * gy[i];
        break;
      }
      case Op::Relu: {
        const auto& x = nodes_[static_cast<std::size_t>(node.a)].value;
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        for (std::size_t i = 0; i < gy.size(); ++i) {
          if (x[i] > 0.0) ga[i] += gy[i];
        }
        break;
      }
      case Op::Log: {
        const auto& x = nodes_[static_cast<std::size_t>(node.a)].value;
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / x[i];
        break;
      }
      case Op::Softmax: {
        const auto& y = node.value;
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        double dp = 0.0;
        for (std::size_t i = 0; i < gy.size(); ++i) dp += gy[i] * y[i];
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += y[i] * (gy[i] - dp);
        break;
      }
      case Op::Concat: {
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        auto& gb = adjoint[static_cast<std::size_t>(node.b)];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[ga.size() + i];
        break;
      }
      case Op::Slice: {
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[static_cast<std::size_t>(node.row) + i] += gy[i];
        }
        break;
      }
      case Op::ScaleBy: {
        const auto& x = nodes_[static_cast<std::size_t>(node.a)].value;
        const auto& s = nodes_[static_cast<std::size_t>(node.b)].value;
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        auto& gs = adjoint[static_cast<std::size_t>(node.b)];
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += s[0] * gy[i];
          gs[0] += x[i] * gy[i];
        }
        break;
      }
      case Op::Dot: {
        const auto& a = nodes_[static_cast<std::size_t>(node.a)].value;
        const auto& b = nodes_[static_cast<std::size_t>(node.b)].value;
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        auto& gb = adjoint[static_cast<std::size_t>(node.b)];
        const double g = gy[0];
        for (std::size_t i = 0; i < a.size(); ++i) {
          ga[i] += g * b[i];
          gb[i] += g * a[i];
        }
        break;
      }
      case Op::Sum: {
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        for (double& v : ga) v += gy[0];
        break;
      }
      case Op::SquaredError: {
        const auto& a = nodes_[static_cast<std::size_t>(node.a)].value;
        const auto& b = nodes_[static_cast<std::size_t>(node.b)].value;
        auto& ga = adjoint[static_cast<std::size_t>(node.a)];
        auto& gb = adjoint[static_cast<std::size_t>(node.b)];
        const double g = gy[0];
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double d = a[i] - b[i];
          ga[i] += g * d;
          gb[i] -= g * d;
        }
        break;
      }
    }
  }
  return grads;
}

}  // namespace gels
