#include "fcncd/model.hpp"

#include <algorithm>
#include <numeric>

#include "fcncd/error.hpp"

namespace fcncd {

ModelShape ModelShape::of(const ResponseDataset& dataset) {
  return ModelShape{dataset.num_participants, dataset.num_items, dataset.num_dimensions, dataset.q.item_dimensions()};
}

std::vector<double> predict_scores(const RankingModel& model, std::span<const ScoreQuery> queries, std::size_t chunk) {
  std::vector<double> out;
  out.reserve(queries.size());
  const Bindings bindings(model.parameters());
  for (std::size_t start = 0; start < queries.size(); start += chunk) {
    const std::size_t n = std::min(chunk, queries.size() - start);
    DiffGraph graph;
    graph.set_output(model.build_scores(graph, queries.subspan(start, n)));
    const Array scores = evaluate(graph, bindings);
    out.insert(out.end(), scores.values().begin(), scores.values().end());
  }
  return out;
}

std::vector<double> predict_block(const RankingModel& model, std::size_t participant, const ItemBlock& block) {
  std::vector<ScoreQuery> queries;
  for (std::size_t item : block.items) queries.push_back({participant, item});
  return predict_scores(model, queries);
}

RankVector rank_scores(std::span<const double> scores, BlockType type) {
  const std::size_t t = scores.size();
  if (t < 2) throw ValidationError("rank_scores needs at least 2 scores");
  if (type == BlockType::Mole && t < 3) throw ValidationError("MOLE ranking needs at least 3 scores");
  std::vector<std::size_t> order(t);
  std::iota(order.begin(), order.end(), 0);
  // ascending score; equal scores keep position order so the lower index ranks lower
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  RankVector out{type, std::vector<int>(t, 0)};
  switch (type) {
    case BlockType::Rank:
      for (std::size_t pos = 0; pos < t; ++pos) out.values[order[pos]] = static_cast<int>(pos + 1);
      break;
    case BlockType::Mole:
      std::fill(out.values.begin(), out.values.end(), 2);
      out.values[order.front()] = 1;
      out.values[order.back()] = 3;
      break;
    case BlockType::Pick:
      std::fill(out.values.begin(), out.values.end(), 1);
      out.values[order.back()] = static_cast<int>(t);
      break;
  }
  return out;
}

RecordBatch batch_for(const ResponseDataset& dataset, std::span<const std::size_t> record_indices) {
  RecordBatch batch;
  batch.slices.reserve(record_indices.size());
  for (std::size_t r : record_indices) {
    const auto& rec = dataset.records.at(r);
    const auto& block = dataset.blocks.at(rec.block);
    batch.slices.push_back(BlockSlice{batch.queries.size(), &rec.ranks});
    for (std::size_t item : block.items) batch.queries.push_back({rec.participant, item});
  }
  return batch;
}

}  // namespace fcncd
