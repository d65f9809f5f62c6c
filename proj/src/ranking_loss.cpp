#include "fcncd/ranking_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fcncd/error.hpp"

namespace fcncd {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::WeightedBpr: return "weighted-bpr";
    case LossKind::OriginalBpr: return "original-bpr";
    case LossKind::List: return "list";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "weighted-bpr") return LossKind::WeightedBpr;
  if (text == "original-bpr") return LossKind::OriginalBpr;
  if (text == "list") return LossKind::List;
  throw ValidationError("unknown loss kind '" + std::string(text) + "'");
}

double neg_log_sigmoid(double z) { return std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double weighted_bpr_pair(double y_i, double y_j, int r_i, int r_j, double lambda) {
  if (r_i == r_j) throw ValidationError("weighted BPR pair needs distinct ranks");
  if (!(lambda > 0)) throw ValidationError("weighted BPR needs lambda > 0");
  return neg_log_sigmoid(lambda / static_cast<double>(r_i - r_j) * (y_i - y_j));
}

double original_bpr_pair(double y_i, double y_j, int r_i, int r_j) {
  if (r_i == r_j) throw ValidationError("BPR pair needs distinct ranks");
  const double sign = r_i > r_j ? 1.0 : -1.0;
  return neg_log_sigmoid(sign * (y_i - y_j));
}

double ranknet_pair_loss(double y_i, double y_j, bool i_ranked_higher) {
  return neg_log_sigmoid(i_ranked_higher ? y_i - y_j : y_j - y_i);
}

std::size_t distinct_rank_pairs(const RankVector& ranks) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    for (std::size_t j = i + 1; j < ranks.size(); ++j) n += ranks[i] != ranks[j] ? 1 : 0;
  }
  return n;
}

namespace {

void require_kind(const RankVector& ranks, BlockType type, std::size_t t) {
  if (ranks.type != type) throw ValidationError("expected a " + std::string(to_string(type)) + " rank vector");
  if (ranks.size() != t) throw ShapeError("score count differs from rank vector length");
  if (auto why = rank_vector_violation(ranks)) throw ValidationError(*why);
}

double pairwise_mean(std::span<const double> scores, const RankVector& ranks, const PairLossSpec& spec) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    for (std::size_t j = i + 1; j < ranks.size(); ++j) {
      if (ranks[i] == ranks[j]) continue;
      total += spec.kind == LossKind::WeightedBpr
                   ? weighted_bpr_pair(scores[i], scores[j], ranks[i], ranks[j], spec.lambda)
                   : original_bpr_pair(scores[i], scores[j], ranks[i], ranks[j]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace

double block_loss_rank(std::span<const double> scores, const RankVector& ranks, double lambda) {
  require_kind(ranks, BlockType::Rank, scores.size());
  return pairwise_mean(scores, ranks, {LossKind::WeightedBpr, lambda});
}

double block_loss_mole(std::span<const double> scores, const RankVector& ranks, double lambda) {
  require_kind(ranks, BlockType::Mole, scores.size());
  return pairwise_mean(scores, ranks, {LossKind::WeightedBpr, lambda});
}

std::vector<std::size_t> list_order(const RankVector& ranks) {
  std::vector<std::size_t> order(ranks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ranks[a] > ranks[b]; });
  return order;
}

double block_loss_list(std::span<const double> scores, const RankVector& ranks) {
  if (ranks.size() != scores.size()) throw ShapeError("score count differs from rank vector length");
  const auto order = list_order(ranks);
  const std::size_t t = order.size();
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = i; j < t; ++j) peak = std::max(peak, scores[order[j]]);
    double acc = 0.0;
    for (std::size_t j = i; j < t; ++j) acc += std::exp(scores[order[j]] - peak);
    total += scores[order[i]] - (peak + std::log(acc));
  }
  return -total / static_cast<double>(t);
}

double block_loss(std::span<const double> scores, const RankVector& ranks, const PairLossSpec& spec) {
  if (ranks.size() != scores.size()) throw ShapeError("score count differs from rank vector length");
  if (auto why = rank_vector_violation(ranks)) throw ValidationError(*why);
  if (spec.kind == LossKind::List) return block_loss_list(scores, ranks);
  if (spec.kind == LossKind::WeightedBpr && !(spec.lambda > 0)) throw ValidationError("weighted BPR needs lambda > 0");
  return pairwise_mean(scores, ranks, spec);
}

NodeId add_batch_loss(DiffGraph& graph, NodeId scores, std::span<const BlockSlice> blocks, const PairLossSpec& spec) {
  if (blocks.empty()) throw ValidationError("loss over an empty batch");
  const double per_block = 1.0 / static_cast<double>(blocks.size());

  if (spec.kind == LossKind::List) {
    std::vector<std::size_t> heads;
    std::vector<std::vector<std::size_t>> suffixes;
    std::vector<double> weights;
    for (const auto& b : blocks) {
      const auto order = list_order(*b.ranks);
      const std::size_t t = order.size();
      for (std::size_t i = 0; i < t; ++i) {
        heads.push_back(b.offset + order[i]);
        std::vector<std::size_t> suffix;
        for (std::size_t j = i; j < t; ++j) suffix.push_back(b.offset + order[j]);
        suffixes.push_back(std::move(suffix));
        weights.push_back(-per_block / static_cast<double>(t));
      }
    }
    const NodeId head = graph.gather_rows(scores, std::move(heads));
    const NodeId lse = graph.group_logsumexp(scores, std::move(suffixes));
    const NodeId terms = graph.sub(head, lse);
    return graph.sum(graph.mul(terms, graph.constant(Array::column(std::move(weights)))));
  }

  if (spec.kind == LossKind::WeightedBpr && !(spec.lambda > 0)) throw ValidationError("weighted BPR needs lambda > 0");
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  std::vector<double> coeff;
  std::vector<double> weights;
  for (const auto& b : blocks) {
    const RankVector& r = *b.ranks;
    const double w = per_block / static_cast<double>(distinct_rank_pairs(r));
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (std::size_t j = i + 1; j < r.size(); ++j) {
        if (r[i] == r[j]) continue;
        left.push_back(b.offset + i);
        right.push_back(b.offset + j);
        const int gap = r[i] - r[j];
        coeff.push_back(spec.kind == LossKind::WeightedBpr ? spec.lambda / static_cast<double>(gap)
                                                           : (gap > 0 ? 1.0 : -1.0));
        weights.push_back(w);
      }
    }
  }
  const NodeId diff = graph.sub(graph.gather_rows(scores, std::move(left)), graph.gather_rows(scores, std::move(right)));
  const NodeId z = graph.mul(diff, graph.constant(Array::column(std::move(coeff))));
  const NodeId pair_loss = graph.softplus(graph.negate(z));
  return graph.sum(graph.mul(pair_loss, graph.constant(Array::column(std::move(weights)))));
}

}  // namespace fcncd
