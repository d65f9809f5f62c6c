#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcncd/array.hpp"
#include "fcncd/parameters.hpp"

namespace fcncd {

struct NodeId {
  std::uint32_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class OpKind : std::uint8_t {
  Parameter,
  Input,
  Constant,
  GatherRows,
  Affine,
  Add,
  Sub,
  Mul,
  ScaleRows,
  Sigmoid,
  Relu,
  Softplus,
  Log,
  Exp,
  Negate,
  Scale,
  Sum,
  Mean,
  ConcatCols,
  GroupLogSumExp,
};

/// A recorded computation over Arrays.
///
/// Nodes are appended in construction order, so every node's inputs precede
/// it and the node list is already topologically sorted. Leaves are either
/// named parameters (which receive gradients), named inputs, or inline
/// constants; both named kinds are bound at evaluation time.
///
/// All arrays use the matrix view of Array: `affine` maps an R x in batch
/// through an out x in weight and a length-out bias, `gather_rows` selects
/// rows of a table (the one-hot-times-matrix product of an embedding lookup).
class DiffGraph {
 public:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    std::string name;                              // Parameter / Input
    Array constant;                                // Constant
    std::vector<std::size_t> rows;                 // GatherRows
    std::vector<std::vector<std::size_t>> groups;  // GroupLogSumExp
    double factor = 1.0;                           // Scale
  };

  NodeId parameter(const std::string& name);
  NodeId input(const std::string& name);
  NodeId constant(Array value);

  NodeId gather_rows(NodeId table, std::vector<std::size_t> rows);
  NodeId affine(NodeId x, NodeId weight, NodeId bias);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  /// Multiplies row r of `x` by entry r of the column `factors`.
  NodeId scale_rows(NodeId x, NodeId factors);
  NodeId sigmoid(NodeId x);
  NodeId relu(NodeId x);
  /// ln(1 + e^x), evaluated without overflow.
  NodeId softplus(NodeId x);
  NodeId log(NodeId x);
  NodeId exp(NodeId x);
  NodeId negate(NodeId x);
  NodeId scale(NodeId x, double factor);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId concat_cols(std::vector<NodeId> parts);
  /// For each group of flat indices into `x`, ln of the sum of exp over the group.
  NodeId group_logsumexp(NodeId x, std::vector<std::vector<std::size_t>> groups);

  void set_output(NodeId node);
  NodeId output() const;
  bool has_output() const { return has_output_; }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id.index); }

 private:
  NodeId push(Node node);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> parameters_;
  std::map<std::string, NodeId, std::less<>> inputs_;
  NodeId output_{};
  bool has_output_ = false;
};

/// Forward pass only; returns the value of the output node.
Array evaluate(const DiffGraph& graph, const Bindings& bindings);

struct GradientResult {
  double value = 0.0;
  std::map<std::string, Array> gradients;  // one entry per bound parameter leaf
};

/// Scalar output value and d(output)/d(parameter) for every parameter leaf.
/// Bound arrays are never modified.
GradientResult forward_backward(const DiffGraph& graph, const Bindings& bindings);

/// Same as above but adds the gradients into `accumulator` (which must have a
/// slot for every parameter leaf) and returns the output value.
double forward_backward(const DiffGraph& graph, const Bindings& bindings,
                        GradientBuffer& accumulator);

}  // namespace fcncd
