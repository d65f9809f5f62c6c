#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fcncd/dataset.hpp"
#include "fcncd/diff_graph.hpp"

namespace fcncd {

enum class LossKind {
  WeightedBpr,  // -ln sigma(lambda / (r_i - r_j) * (y_i - y_j))
  OriginalBpr,  // -ln sigma(sgn(r_i - r_j) * (y_i - y_j)); also RankNet cross-entropy
  List,         // ListMLE-style negative log-likelihood of the true order
};

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

struct PairLossSpec {
  LossKind kind = LossKind::WeightedBpr;
  double lambda = 1.0;  // only used by WeightedBpr; must be > 0 there
};

/// -ln sigma(z) evaluated as softplus(-z).
double neg_log_sigmoid(double z);

double weighted_bpr_pair(double y_i, double y_j, int r_i, int r_j, double lambda);
double original_bpr_pair(double y_i, double y_j, int r_i, int r_j);

/// Cross-entropy of P(i > j) = sigma(y_i - y_j) against the observed order.
double ranknet_pair_loss(double y_i, double y_j, bool i_ranked_higher);

/// Number of item pairs with different rank values: C(t,2) for RANK,
/// C(t,2) - C(t-2,2) for MOLE, t - 1 for PICK.
std::size_t distinct_rank_pairs(const RankVector& ranks);

/// Mean weighted BPR over all C(t,2) pairs; `ranks` must be a permutation.
double block_loss_rank(std::span<const double> scores, const RankVector& ranks, double lambda);

/// Sum of weighted BPR over pairs with distinct ranks divided by C(t,2) - C(t-2,2).
double block_loss_mole(std::span<const double> scores, const RankVector& ranks, double lambda);

/// -(1/T) sum_i (y_(i) - ln sum_{j>=i} e^{y_(j)}) with items sorted by
/// descending rank value (ties by ascending position).
double block_loss_list(std::span<const double> scores, const RankVector& ranks);

/// Dispatches on the loss kind and the rank vector's block type; pairwise
/// losses on PICK blocks follow the MOLE rule (distinct-rank pairs only).
double block_loss(std::span<const double> scores, const RankVector& ranks, const PairLossSpec& spec);

/// Positions of a block sorted by descending rank value, ties by position.
std::vector<std::size_t> list_order(const RankVector& ranks);

/// A block's items occupy rows [offset, offset + t) of the score column.
struct BlockSlice {
  std::size_t offset = 0;
  const RankVector* ranks = nullptr;
};

/// Appends the mean block loss over `blocks` to the graph and returns the
/// scalar node. `scores` must be an R x 1 column.
NodeId add_batch_loss(DiffGraph& graph, NodeId scores, std::span<const BlockSlice> blocks, const PairLossSpec& spec);

}  // namespace fcncd
