#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fcncd/array.hpp"
#include "fcncd/dataset.hpp"

namespace fcncd {

/// How an item's 2PL utility u = a (theta - b) turns into Luce weights.
///  Exponential: most ~ exp(u), least ~ exp(-u). Pairwise law is MUPP-2PL.
///  Logistic:    most ~ sigmoid(u), least ~ 1 - sigmoid(u).
enum class LuceLink { Exponential, Logistic };

std::string_view to_string(LuceLink link);
LuceLink parse_luce_link(std::string_view text);

struct SimConfig {
  std::size_t participants = 1000;
  std::size_t dimensions = 24;
  std::size_t items = 480;
  std::size_t blocks = 120;
  std::size_t block_size = 4;
  double discrimination_low = 0.75;
  double discrimination_high = 2.25;
  double difficulty_mean = 0.0;
  double difficulty_sd = 0.5;
  double trait_covariance = 0.5;  // off-diagonal; unit variances
  BlockType response_type = BlockType::Mole;
  LuceLink link = LuceLink::Exponential;
  std::uint64_t seed = 20240601;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ValidationError.
  static SimConfig from_json(const nlohmann::json& j);
};

/// Throws ValidationError describing the first inconsistency.
void validate(const SimConfig& config);

struct ItemParams {
  std::vector<double> discrimination;  // a
  std::vector<double> difficulty;      // b
};

struct SimTruth {
  Array theta;  // participants x dimensions
  ItemParams items;
};

struct SimResult {
  ResponseDataset dataset;
  SimTruth truth;
};

/// a ~ U(low, high), b ~ N(mean, sd), one pair per item.
ItemParams sample_item_params(const SimConfig& config, Rng& rng);

/// Rows i.i.d. MVN(0, S), S_kk = 1, S_kk' = trait_covariance, via Cholesky of S.
Array sample_traits(const SimConfig& config, Rng& rng);

/// Luce weights for "most" and "least" draws from item utilities.
struct LuceWeights {
  std::vector<double> most;
  std::vector<double> least;
};
LuceWeights luce_weights(std::span<const double> utilities, LuceLink link);

/// Utilities a_i (theta_{q_i} - b_i) of a block's items for one participant.
std::vector<double> block_utilities(std::span<const double> theta_row, const ItemBlock& block,
                                    std::span<const std::size_t> item_dims, const ItemParams& params);

/// Most drawn with probability w_i / sum w, least from the remaining items
/// with probability v_j / sum_{k != most} v_k.
RankVector sample_mole(const LuceWeights& weights, Rng& rng);

/// Sequential Luce draws without replacement on `most` weights, best first.
RankVector sample_rank(std::span<const double> weights, Rng& rng);

RankVector simulate_mole_response(std::span<const double> theta_row, const ItemBlock& block,
                                  std::span<const std::size_t> item_dims, const ItemParams& params,
                                  LuceLink link, Rng& rng);
RankVector simulate_rank_response(std::span<const double> theta_row, const ItemBlock& block,
                                  std::span<const std::size_t> item_dims, const ItemParams& params,
                                  LuceLink link, Rng& rng);

/// Closed-form P(most = i) and P(least = j) under the MOLE sampling scheme.
struct MoleMarginals {
  std::vector<double> most;
  std::vector<double> least;
};
MoleMarginals mole_marginals(const LuceWeights& weights);

/// Item m loads on dimension m mod K; block l holds items l*t .. l*t + t - 1.
/// Every participant answers every block, participant-major.
SimResult generate(const SimConfig& config);

/// Writes the dataset files plus truth_theta.csv and truth_items.csv into
/// `directory` and returns the manifest path.
std::filesystem::path save_simulation(const SimResult& result, const std::filesystem::path& directory,
                                      std::string name = "sim");

/// Reads truth_theta.csv (participant_id,theta_1..theta_K) into an N x K array.
Array load_truth_theta(const std::filesystem::path& path);

}  // namespace fcncd
