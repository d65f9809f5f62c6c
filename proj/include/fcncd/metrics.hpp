#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "fcncd/array.hpp"
#include "fcncd/dataset.hpp"

namespace fcncd {

/// Fraction of distinct-rank pairs whose predicted score order strictly agrees
/// with the true rank order; nullopt if the block has no such pair.
std::optional<double> pair_accuracy(std::span<const double> scores, const RankVector& truth);

/// Pairwise rank accuracy: mean per-record pair accuracy.
double pra(std::span<const std::vector<double>> scores, std::span<const RankVector> truth);

/// Listwise rank accuracy: fraction of records whose predicted rank vector equals the truth.
double lra(std::span<const RankVector> predicted, std::span<const RankVector> truth);

/// Per participant, S_k sums the rank values the participant gave to items of
/// dimension k. Over dimension pairs strictly ordered in both the abilities
/// and S, DOA is the fraction whose orders agree; averaged over participants.
/// Participants with responses but no comparable pair are skipped.
double doa(const Array& abilities, const ResponseDataset& dataset);

/// Per-participant rank-value sums S (N x K).
Array rank_sums(const ResponseDataset& dataset);

struct BlockDiagnostic {
  std::size_t participant = 0;
  std::size_t block = 0;
  std::vector<double> scores;
  RankVector predicted;
  RankVector truth;
  double pair_accuracy = 0.0;
};

struct EvalReport {
  double pra = 0.0;
  double lra = 0.0;
  std::optional<double> doa;
  std::size_t records = 0;
  std::vector<BlockDiagnostic> blocks;

  nlohmann::json to_json() const;
};

}  // namespace fcncd
