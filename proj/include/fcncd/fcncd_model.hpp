#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fcncd/model.hpp"

namespace fcncd {

/// How a participant's d-wide proficiency embedding for one dimension is
/// summarised into a scalar ability.
enum class AbilitySummary {
  Embedding,  // mean over d of sigmoid(s[k, :])
  Mapped,     // mean over the mapping width of h2_prof = sigmoid(W_1 s[k, :] + b_1)
};

std::string_view to_string(AbilitySummary summary);
AbilitySummary parse_ability_summary(std::string_view text);

struct FcncdConfig {
  std::size_t embedding_dim = 64;  // d
  std::size_t mapping_dim = 256;   // width of the non-linear mapping layer
  std::size_t head_dim = 128;      // width of the monotone fully connected layer
  bool skip_mapping = false;       // FCNCD_EB: interaction on raw embeddings
  bool no_monotone = false;        // FCNCD_MO: W_4, W_5 left unconstrained
  AbilitySummary ability = AbilitySummary::Mapped;

  nlohmann::json to_json() const;
  static FcncdConfig from_json(const nlohmann::json& j);
};

/// Named ablation variants. Loss variants only change the training loss.
enum class FcncdVariant { Full, Eb, Bpr, List, Mo };
std::string_view to_string(FcncdVariant variant);
FcncdVariant parse_fcncd_variant(std::string_view text);
FcncdConfig apply_variant(FcncdConfig config, FcncdVariant variant);
LossKind loss_for_variant(FcncdVariant variant);

/// The forced-choice neural cognitive diagnosis network.
///
///   h1_prof = s[n, q(item)]                (N x K x d table "W_s")
///   h1_diff = W_diff[item], h1_disc = W_disc[item]
///   h2_*    = sigmoid(W_{1,2,3} h1_* + b)  (identity with skip_mapping)
///   x       = h2_disc * (h2_prof - h2_diff)
///   y       = sigmoid(W_5 sigmoid(W_4 x + b_4) + b_5)
///
/// Unless no_monotone is set, W_4 and W_5 are clipped to be nonnegative
/// after every optimizer step, so y is nondecreasing in h2_prof.
class FcncdModel final : public RankingModel {
 public:
  FcncdModel(FcncdConfig config, ModelShape shape, Rng& rng);

  std::string kind() const override { return "fcncd"; }
  nlohmann::json config() const override { return config_.to_json(); }
  const FcncdConfig& fcncd_config() const { return config_; }

  NodeId build_scores(DiffGraph& graph, std::span<const ScoreQuery> queries) const override;
  void after_step() override;
  LossKind default_loss() const override { return LossKind::WeightedBpr; }
  std::optional<Array> abilities() const override;

  /// y for one (participant, item) using the item's stored dimension.
  double forward(std::size_t participant, std::size_t item) const;
  /// y with an explicit Q-row; throws ValidationError unless `q_row` is one-hot.
  double forward(std::size_t participant, std::size_t item, std::span<const std::uint8_t> q_row) const;

  /// K abilities in (0, 1) for one participant.
  std::vector<double> ability_profile(std::size_t participant) const;

  struct Features {
    std::vector<double> prof;
    std::vector<double> diff;
    std::vector<double> disc;
  };
  /// h2_prof, h2_diff, h2_disc for one query (h1_* when skip_mapping).
  Features features(std::size_t participant, std::size_t item) const;
  /// Interaction function plus output head applied to explicit features.
  double head_output(std::span<const double> prof, std::span<const double> diff, std::span<const double> disc) const;

  /// Width of the interaction vector x.
  std::size_t interaction_dim() const { return config_.skip_mapping ? config_.embedding_dim : config_.mapping_dim; }

 private:
  std::size_t proficiency_row(std::size_t participant, std::size_t dim) const;
  NodeId build_from_rows(DiffGraph& g, std::vector<std::size_t> prof_rows, std::vector<std::size_t> item_rows) const;
  double forward_with_dim(std::size_t participant, std::size_t item, std::size_t dim) const;

  FcncdConfig config_;
};

}  // namespace fcncd
