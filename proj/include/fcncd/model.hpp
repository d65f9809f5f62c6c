#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcncd/array.hpp"
#include "fcncd/dataset.hpp"
#include "fcncd/diff_graph.hpp"
#include "fcncd/parameters.hpp"
#include "fcncd/ranking_loss.hpp"

namespace fcncd {

/// Counts and item-to-dimension map a model is built against.
struct ModelShape {
  std::size_t participants = 0;
  std::size_t items = 0;
  std::size_t dimensions = 0;
  std::vector<std::size_t> item_dims;

  static ModelShape of(const ResponseDataset& dataset);
  bool operator==(const ModelShape&) const = default;
};

struct ScoreQuery {
  std::size_t participant = 0;
  std::size_t item = 0;
};

/// A differentiable per-(participant, item) scorer trained with block ranking losses.
class RankingModel {
 public:
  explicit RankingModel(ModelShape shape) : shape_(std::move(shape)) {}
  virtual ~RankingModel() = default;

  RankingModel(const RankingModel&) = delete;
  RankingModel& operator=(const RankingModel&) = delete;

  virtual std::string kind() const = 0;
  virtual nlohmann::json config() const = 0;

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const ModelShape& shape() const { return shape_; }

  /// Appends nodes computing one score per query; returns an R x 1 column.
  virtual NodeId build_scores(DiffGraph& graph, std::span<const ScoreQuery> queries) const = 0;

  /// Projection applied after every optimizer step.
  virtual void after_step() {}

  /// Loss the model trains with unless the training config overrides it.
  virtual LossKind default_loss() const = 0;

  /// Per-dimension ability estimates (N x K) if the model has interpretable traits.
  virtual std::optional<Array> abilities() const { return std::nullopt; }

 protected:
  ParameterSet params_;

 private:
  ModelShape shape_;
};

/// Forward-only scores for a batch of queries, evaluated in chunks.
std::vector<double> predict_scores(const RankingModel& model, std::span<const ScoreQuery> queries,
                                   std::size_t chunk = 4096);

/// Scores of a block's items for one participant, in block order.
std::vector<double> predict_block(const RankingModel& model, std::size_t participant, const ItemBlock& block);

/// Converts item scores into a rank vector.
///  RANK: ascending scores get 1..t.  MOLE: argmin 1, argmax 3, rest 2.
///  PICK: argmax t, rest 1. Ties: the lower position ranks lower.
RankVector rank_scores(std::span<const double> scores, BlockType type);

/// Queries and block slices for every item of every record, in record order.
struct RecordBatch {
  std::vector<ScoreQuery> queries;
  std::vector<BlockSlice> slices;
};
RecordBatch batch_for(const ResponseDataset& dataset, std::span<const std::size_t> record_indices);

}  // namespace fcncd
