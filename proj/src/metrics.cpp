#include "fcncd/metrics.hpp"

#include "fcncd/error.hpp"

namespace fcncd {

std::optional<double> pair_accuracy(std::span<const double> scores, const RankVector& truth) {
  if (scores.size() != truth.size()) throw ShapeError("scores and rank vector differ in length");
  std::size_t pairs = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = i + 1; j < truth.size(); ++j) {
      if (truth[i] == truth[j]) continue;
      ++pairs;
      const bool agree = truth[i] > truth[j] ? scores[i] > scores[j] : scores[j] > scores[i];
      correct += agree ? 1 : 0;
    }
  }
  if (pairs == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(pairs);
}

double pra(std::span<const std::vector<double>> scores, std::span<const RankVector> truth) {
  if (scores.size() != truth.size()) throw ShapeError("PRA: predictions and records are misaligned");
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    if (auto acc = pair_accuracy(scores[r], truth[r])) {
      total += *acc;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double lra(std::span<const RankVector> predicted, std::span<const RankVector> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("LRA: predictions and records are misaligned");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    if (predicted[r].values.size() != truth[r].values.size()) throw ShapeError("LRA: rank vector length mismatch");
    hits += predicted[r].values == truth[r].values ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Array rank_sums(const ResponseDataset& ds) {
  Array sums(Shape{ds.num_participants, ds.num_dimensions});
  for (const auto& rec : ds.records) {
    const auto& block = ds.blocks.at(rec.block);
    for (std::size_t i = 0; i < block.items.size(); ++i) {
      sums.at(rec.participant, ds.q.dimension_of(block.items[i])) += rec.ranks[i];
    }
  }
  return sums;
}

double doa(const Array& abilities, const ResponseDataset& ds) {
  if (abilities.rows() != ds.num_participants || abilities.cols() != ds.num_dimensions) {
    throw ShapeError("DOA: abilities must be N x K = " + std::to_string(ds.num_participants) + " x " +
                     std::to_string(ds.num_dimensions));
  }
  std::vector<std::size_t> responses(ds.num_participants, 0);
  for (const auto& rec : ds.records) ++responses.at(rec.participant);
  const Array sums = rank_sums(ds);
  const std::size_t k = ds.num_dimensions;

  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t n = 0; n < ds.num_participants; ++n) {
    if (responses[n] == 0) throw ValidationError("DOA: participant " + std::to_string(n) + " has no responses");
    std::size_t pairs = 0;
    std::size_t agree = 0;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        const double df = abilities.at(n, a) - abilities.at(n, b);
        const double ds_ab = sums.at(n, a) - sums.at(n, b);
        if (df == 0.0 || ds_ab == 0.0) continue;
        ++pairs;
        agree += (df > 0) == (ds_ab > 0) ? 1 : 0;
      }
    }
    if (pairs == 0) continue;
    total += static_cast<double>(agree) / static_cast<double>(pairs);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["pra"] = pra;
  j["lra"] = lra;
  j["doa"] = doa ? nlohmann::json(*doa) : nlohmann::json(nullptr);
  j["records"] = records;
  return j;
}

}  // namespace fcncd
