#include "fcncd/diff_graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "fcncd/error.hpp"

namespace fcncd {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

ConstMap as_matrix(const Array& a) {
  return ConstMap(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Parameter: return "parameter";
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::Affine: return "affine";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::ScaleRows: return "scale_rows";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Softplus: return "softplus";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::Negate: return "negate";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::GroupLogSumExp: return "group_logsumexp";
  }
  return "?";
}

bool same_matrix_shape(const Array& a, const Array& b) { return a.rows() == b.rows() && a.cols() == b.cols(); }

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(op_name(kind)) + ": " + detail);
}

/// Forward values plus the reverse sweep for one binding of a graph.
class Evaluator {
 public:
  Evaluator(const DiffGraph& graph, const Bindings& bindings)
      : graph_(graph), bindings_(bindings), owned_(graph.size()), value_(graph.size(), nullptr) {}

  void forward() {
    for (std::uint32_t i = 0; i < graph_.size(); ++i) forward_node(NodeId{i});
  }

  const Array& value(NodeId id) const { return *value_[id.index]; }

  void backward(GradientBuffer& accumulator) {
    const NodeId out = graph_.output();
    if (value(out).size() != 1) {
      throw ShapeError("backward requires a scalar output, got shape " +
                       shape_string(value(out).shape()));
    }
    accumulator_ = &accumulator;
    grad_.assign(graph_.size(), Array());
    has_grad_.assign(graph_.size(), 0);
    grad_buffer(out)[0] = 1.0;
    for (std::uint32_t i = graph_.size(); i-- > 0;) {
      if (has_grad_[i]) backward_node(NodeId{i});
    }
  }

 private:
  const Array& in(const DiffGraph::Node& node, std::size_t k) const { return value(node.inputs[k]); }

  void forward_node(NodeId id) {
    const auto& node = graph_.node(id);
    switch (node.kind) {
      case OpKind::Parameter:
      case OpKind::Input: {
        const Array* bound = bindings_.find(node.name);
        if (bound == nullptr) throw ValidationError("unbound graph leaf '" + node.name + "'");
        value_[id.index] = bound;
        return;
      }
      case OpKind::Constant:
        value_[id.index] = &node.constant;
        return;
      default:
        break;
    }
    Array out = compute(node);
    require_finite(out.values(), op_name(node.kind));
    owned_[id.index] = std::move(out);
    value_[id.index] = &owned_[id.index];
  }

  Array compute(const DiffGraph::Node& node) const {
    switch (node.kind) {
      case OpKind::GatherRows: {
        const Array& table = in(node, 0);
        const std::size_t cols = table.cols();
        Array out(Shape{node.rows.size(), cols});
        for (std::size_t r = 0; r < node.rows.size(); ++r) {
          if (node.rows[r] >= table.rows()) {
            shape_fail(node.kind, "row " + std::to_string(node.rows[r]) + " out of range for " +
                                      std::to_string(table.rows()) + " rows");
          }
          std::copy_n(table.data() + node.rows[r] * cols, cols, out.data() + r * cols);
        }
        return out;
      }
      case OpKind::Affine: {
        const Array& x = in(node, 0);
        const Array& w = in(node, 1);
        const Array& b = in(node, 2);
        if (x.cols() != w.cols()) {
          shape_fail(node.kind, "input width " + std::to_string(x.cols()) + " vs weight " +
                                    shape_string(w.shape()));
        }
        if (b.size() != w.rows()) {
          shape_fail(node.kind, "bias size " + std::to_string(b.size()) + " vs weight " +
                                    shape_string(w.shape()));
        }
        Array out(Shape{x.rows(), w.rows()});
        MutMap y(out.data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(w.rows()));
        y.noalias() = as_matrix(x) * as_matrix(w).transpose();
        y.rowwise() += ConstVec(b.data(), static_cast<Eigen::Index>(b.size())).transpose();
        return out;
      }
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul: {
        const Array& a = in(node, 0);
        const Array& b = in(node, 1);
        if (!same_matrix_shape(a, b)) {
          shape_fail(node.kind, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
        }
        Array out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
          out[i] = node.kind == OpKind::Add   ? a[i] + b[i]
                   : node.kind == OpKind::Sub ? a[i] - b[i]
                                              : a[i] * b[i];
        }
        return out;
      }
      case OpKind::ScaleRows: {
        const Array& x = in(node, 0);
        const Array& s = in(node, 1);
        if (s.size() != x.rows()) {
          shape_fail(node.kind, "factor count " + std::to_string(s.size()) + " vs " +
                                    std::to_string(x.rows()) + " rows");
        }
        Array out(x.shape());
        const std::size_t cols = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] * s[r];
        }
        return out;
      }
      case OpKind::Sigmoid:
        return map_unary(node, stable_sigmoid);
      case OpKind::Relu:
        return map_unary(node, [](double v) { return v > 0 ? v : 0.0; });
      case OpKind::Softplus:
        return map_unary(node, stable_softplus);
      case OpKind::Log: {
        const Array& x = in(node, 0);
        for (double v : x.values()) {
          if (!(v > 0)) shape_fail(node.kind, "non-positive argument");
        }
        return map_unary(node, [](double v) { return std::log(v); });
      }
      case OpKind::Exp:
        return map_unary(node, [](double v) { return std::exp(v); });
      case OpKind::Negate:
        return map_unary(node, [](double v) { return -v; });
      case OpKind::Scale: {
        const double f = node.factor;
        return map_unary(node, [f](double v) { return f * v; });
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        const Array& x = in(node, 0);
        if (x.size() == 0) shape_fail(node.kind, "empty input");
        double total = 0.0;
        for (double v : x.values()) total += v;
        if (node.kind == OpKind::Mean) total /= static_cast<double>(x.size());
        return Array::scalar(total);
      }
      case OpKind::ConcatCols: {
        const std::size_t rows = in(node, 0).rows();
        std::size_t cols = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          if (in(node, k).rows() != rows) shape_fail(node.kind, "row counts differ");
          cols += in(node, k).cols();
        }
        Array out(Shape{rows, cols});
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const Array& part = in(node, k);
          for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(part.data() + r * part.cols(), part.cols(), out.data() + r * cols + offset);
          }
          offset += part.cols();
        }
        return out;
      }
      case OpKind::GroupLogSumExp: {
        const Array& x = in(node, 0);
        Array out(Shape{node.groups.size(), 1});
        for (std::size_t g = 0; g < node.groups.size(); ++g) {
          const auto& group = node.groups[g];
          if (group.empty()) shape_fail(node.kind, "empty group");
          double peak = -std::numeric_limits<double>::infinity();
          for (std::size_t j : group) {
            if (j >= x.size()) shape_fail(node.kind, "group index out of range");
            peak = std::max(peak, x[j]);
          }
          double acc = 0.0;
          for (std::size_t j : group) acc += std::exp(x[j] - peak);
          out[g] = peak + std::log(acc);
        }
        return out;
      }
      case OpKind::Parameter:
      case OpKind::Input:
      case OpKind::Constant:
        break;
    }
    throw Error("unreachable graph op");
  }

  template <class F>
  Array map_unary(const DiffGraph::Node& node, F f) const {
    const Array& x = in(node, 0);
    Array out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
  }

  // Gradient storage of a node; parameter leaves write straight into the
  // accumulator. Returns nullptr for leaves that take no gradient.
  double* grad_buffer(NodeId id) {
    const auto& node = graph_.node(id);
    if (node.kind == OpKind::Input || node.kind == OpKind::Constant) return nullptr;
    if (node.kind == OpKind::Parameter) {
      auto* slot = leaf_slot(node);
      slot->dense = true;
      return slot->grad.data();
    }
    if (!has_grad_[id.index]) {
      grad_[id.index] = Array(value(id).shape());
      has_grad_[id.index] = 1;
    }
    return grad_[id.index].data();
  }

  GradientBuffer::Slot* leaf_slot(const DiffGraph::Node& node) {
    auto* slot = accumulator_->find(node.name);
    if (slot == nullptr) throw ValidationError("no gradient slot for parameter '" + node.name + "'");
    if (slot->grad.shape() != bindings_.find(node.name)->shape()) {
      throw ShapeError("gradient slot shape mismatch for '" + node.name + "'");
    }
    return slot;
  }

  void backward_node(NodeId id) {
    const auto& node = graph_.node(id);
    if (node.kind == OpKind::Parameter || node.kind == OpKind::Input || node.kind == OpKind::Constant) {
      return;
    }
    const Array& g = grad_[id.index];
    const Array& out = value(id);
    switch (node.kind) {
      case OpKind::GatherRows: {
        const NodeId src = node.inputs[0];
        const std::size_t cols = value(src).cols();
        const auto& src_node = graph_.node(src);
        if (src_node.kind == OpKind::Parameter) {
          auto* slot = leaf_slot(src_node);
          for (std::size_t r = 0; r < node.rows.size(); ++r) {
            const std::size_t row = node.rows[r];
            double* dst = slot->grad.data() + row * cols;
            for (std::size_t c = 0; c < cols; ++c) dst[c] += g[r * cols + c];
            slot->touch_row(row);
          }
        } else if (double* dst = grad_buffer(src)) {
          for (std::size_t r = 0; r < node.rows.size(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) dst[node.rows[r] * cols + c] += g[r * cols + c];
          }
        }
        return;
      }
      case OpKind::Affine: {
        const Array& x = in(node, 0);
        const Array& w = in(node, 1);
        const auto rows = static_cast<Eigen::Index>(x.rows());
        const auto in_w = static_cast<Eigen::Index>(x.cols());
        const auto out_w = static_cast<Eigen::Index>(w.rows());
        ConstMap dy(g.data(), rows, out_w);
        if (double* dx = grad_buffer(node.inputs[0])) {
          MutMap(dx, rows, in_w).noalias() += dy * as_matrix(w);
        }
        if (double* dw = grad_buffer(node.inputs[1])) {
          MutMap(dw, out_w, in_w).noalias() += dy.transpose() * as_matrix(x);
        }
        if (double* db = grad_buffer(node.inputs[2])) {
          MutVec(db, out_w) += dy.colwise().sum().transpose();
        }
        return;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        const double sign = node.kind == OpKind::Add ? 1.0 : -1.0;
        if (double* da = grad_buffer(node.inputs[0])) {
          for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        }
        if (double* db = grad_buffer(node.inputs[1])) {
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += sign * g[i];
        }
        return;
      }
      case OpKind::Mul: {
        const Array& a = in(node, 0);
        const Array& b = in(node, 1);
        if (double* da = grad_buffer(node.inputs[0])) {
          for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
        }
        if (double* db = grad_buffer(node.inputs[1])) {
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
        }
        return;
      }
      case OpKind::ScaleRows: {
        const Array& x = in(node, 0);
        const Array& s = in(node, 1);
        const std::size_t cols = x.cols();
        if (double* dx = grad_buffer(node.inputs[0])) {
          for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += g[r * cols + c] * s[r];
          }
        }
        if (double* ds = grad_buffer(node.inputs[1])) {
          for (std::size_t r = 0; r < x.rows(); ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += g[r * cols + c] * x[r * cols + c];
            ds[r] += acc;
          }
        }
        return;
      }
      case OpKind::Sigmoid:
        return unary_backward(node, g, [&](std::size_t i) { return out[i] * (1.0 - out[i]); });
      case OpKind::Relu:
        return unary_backward(node, g, [&](std::size_t i) { return in(node, 0)[i] > 0 ? 1.0 : 0.0; });
      case OpKind::Softplus:
        return unary_backward(node, g, [&](std::size_t i) { return stable_sigmoid(in(node, 0)[i]); });
      case OpKind::Log:
        return unary_backward(node, g, [&](std::size_t i) { return 1.0 / in(node, 0)[i]; });
      case OpKind::Exp:
        return unary_backward(node, g, [&](std::size_t i) { return out[i]; });
      case OpKind::Negate:
        return unary_backward(node, g, [](std::size_t) { return -1.0; });
      case OpKind::Scale: {
        const double f = node.factor;
        return unary_backward(node, g, [f](std::size_t) { return f; });
      }
      case OpKind::Sum:
      case OpKind::Mean: {
        const Array& x = in(node, 0);
        const double d = node.kind == OpKind::Mean ? g[0] / static_cast<double>(x.size()) : g[0];
        if (double* dx = grad_buffer(node.inputs[0])) {
          for (std::size_t i = 0; i < x.size(); ++i) dx[i] += d;
        }
        return;
      }
      case OpKind::ConcatCols: {
        const std::size_t rows = out.rows();
        const std::size_t cols = out.cols();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const std::size_t part_cols = in(node, k).cols();
          if (double* dp = grad_buffer(node.inputs[k])) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < part_cols; ++c) dp[r * part_cols + c] += g[r * cols + offset + c];
            }
          }
          offset += part_cols;
        }
        return;
      }
      case OpKind::GroupLogSumExp: {
        const Array& x = in(node, 0);
        if (double* dx = grad_buffer(node.inputs[0])) {
          for (std::size_t grp = 0; grp < node.groups.size(); ++grp) {
            for (std::size_t j : node.groups[grp]) dx[j] += g[grp] * std::exp(x[j] - out[grp]);
          }
        }
        return;
      }
      default:
        return;
    }
  }

  template <class D>
  void unary_backward(const DiffGraph::Node& node, const Array& g, D derivative) {
    if (double* dx = grad_buffer(node.inputs[0])) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * derivative(i);
    }
  }

  const DiffGraph& graph_;
  const Bindings& bindings_;
  std::vector<Array> owned_;
  std::vector<const Array*> value_;
  std::vector<Array> grad_;
  std::vector<std::uint8_t> has_grad_;
  GradientBuffer* accumulator_ = nullptr;
};

}  // namespace

NodeId DiffGraph::push(Node node) {
  for (NodeId in : node.inputs) check(in);
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void DiffGraph::check(NodeId id) const {
  if (id.index >= nodes_.size()) throw ValidationError("graph node id out of range");
}

NodeId DiffGraph::parameter(const std::string& name) {
  if (auto it = parameters_.find(name); it != parameters_.end()) return it->second;
  if (inputs_.count(name) != 0) throw ValidationError("'" + name + "' already declared as input");
  NodeId id = push(Node{OpKind::Parameter, {}, name, {}, {}, {}, 1.0});
  parameters_.emplace(name, id);
  return id;
}

NodeId DiffGraph::input(const std::string& name) {
  if (auto it = inputs_.find(name); it != inputs_.end()) return it->second;
  if (parameters_.count(name) != 0) throw ValidationError("'" + name + "' already declared as parameter");
  NodeId id = push(Node{OpKind::Input, {}, name, {}, {}, {}, 1.0});
  inputs_.emplace(name, id);
  return id;
}

NodeId DiffGraph::constant(Array value) {
  return push(Node{OpKind::Constant, {}, {}, std::move(value), {}, {}, 1.0});
}

NodeId DiffGraph::gather_rows(NodeId table, std::vector<std::size_t> rows) {
  return push(Node{OpKind::GatherRows, {table}, {}, {}, std::move(rows), {}, 1.0});
}

NodeId DiffGraph::affine(NodeId x, NodeId weight, NodeId bias) {
  return push(Node{OpKind::Affine, {x, weight, bias}, {}, {}, {}, {}, 1.0});
}

NodeId DiffGraph::add(NodeId a, NodeId b) { return push(Node{OpKind::Add, {a, b}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::sub(NodeId a, NodeId b) { return push(Node{OpKind::Sub, {a, b}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::mul(NodeId a, NodeId b) { return push(Node{OpKind::Mul, {a, b}, {}, {}, {}, {}, 1.0}); }

NodeId DiffGraph::scale_rows(NodeId x, NodeId factors) {
  return push(Node{OpKind::ScaleRows, {x, factors}, {}, {}, {}, {}, 1.0});
}

NodeId DiffGraph::sigmoid(NodeId x) { return push(Node{OpKind::Sigmoid, {x}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::relu(NodeId x) { return push(Node{OpKind::Relu, {x}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::softplus(NodeId x) { return push(Node{OpKind::Softplus, {x}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::log(NodeId x) { return push(Node{OpKind::Log, {x}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::exp(NodeId x) { return push(Node{OpKind::Exp, {x}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::negate(NodeId x) { return push(Node{OpKind::Negate, {x}, {}, {}, {}, {}, 1.0}); }

NodeId DiffGraph::scale(NodeId x, double factor) {
  return push(Node{OpKind::Scale, {x}, {}, {}, {}, {}, factor});
}

NodeId DiffGraph::sum(NodeId x) { return push(Node{OpKind::Sum, {x}, {}, {}, {}, {}, 1.0}); }
NodeId DiffGraph::mean(NodeId x) { return push(Node{OpKind::Mean, {x}, {}, {}, {}, {}, 1.0}); }

NodeId DiffGraph::concat_cols(std::vector<NodeId> parts) {
  if (parts.empty()) throw ValidationError("concat_cols needs at least one input");
  return push(Node{OpKind::ConcatCols, std::move(parts), {}, {}, {}, {}, 1.0});
}

NodeId DiffGraph::group_logsumexp(NodeId x, std::vector<std::vector<std::size_t>> groups) {
  return push(Node{OpKind::GroupLogSumExp, {x}, {}, {}, {}, std::move(groups), 1.0});
}

void DiffGraph::set_output(NodeId node) {
  check(node);
  output_ = node;
  has_output_ = true;
}

NodeId DiffGraph::output() const {
  if (!has_output_) throw ValidationError("graph has no output node");
  return output_;
}

Array evaluate(const DiffGraph& graph, const Bindings& bindings) {
  Evaluator eval(graph, bindings);
  eval.forward();
  return eval.value(graph.output());
}

GradientResult forward_backward(const DiffGraph& graph, const Bindings& bindings) {
  GradientBuffer buffer;
  for (std::uint32_t i = 0; i < graph.size(); ++i) {
    const auto& node = graph.node(NodeId{i});
    if (node.kind != OpKind::Parameter) continue;
    const Array* bound = bindings.find(node.name);
    if (bound == nullptr) throw ValidationError("unbound graph leaf '" + node.name + "'");
    buffer.add_slot(node.name, bound->shape());
  }
  GradientResult result;
  result.value = forward_backward(graph, bindings, buffer);
  result.gradients = buffer.to_map();
  return result;
}

double forward_backward(const DiffGraph& graph, const Bindings& bindings, GradientBuffer& accumulator) {
  Evaluator eval(graph, bindings);
  eval.forward();
  eval.backward(accumulator);
  return eval.value(graph.output()).item();
}

}  // namespace fcncd
