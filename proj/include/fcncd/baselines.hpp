#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fcncd/fcncd_model.hpp"
#include "fcncd/model.hpp"

namespace fcncd {

enum class BaselineKind { Random, Mf, RankNet, NcdmR, Mupp2pl };

std::string_view to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(std::string_view text);

/// i.i.d. Uniform(0, 1) scores, one per block item.
std::vector<double> random_predict(Rng& rng, const ItemBlock& block);

/// N x K abilities drawn from Uniform(0, 1).
Array random_abilities(std::size_t participants, std::size_t dimensions, Rng& rng);

struct MlpConfig {
  std::size_t latent_dim = 64;
  std::size_t hidden1 = 256;
  std::size_t hidden2 = 128;

  nlohmann::json to_json() const;
  static MlpConfig from_json(const nlohmann::json& j);
};

/// Matrix factorisation scorer: y = MLP(h_item * h_participant) with sigmoid
/// hidden layers and output. Trains with the weighted BPR block loss.
class MfModel : public RankingModel {
 public:
  MfModel(MlpConfig config, ModelShape shape, Rng& rng);

  std::string kind() const override { return "mf"; }
  nlohmann::json config() const override { return config_.to_json(); }
  NodeId build_scores(DiffGraph& graph, std::span<const ScoreQuery> queries) const override;
  LossKind default_loss() const override { return LossKind::WeightedBpr; }

 protected:
  MfModel(MlpConfig config, ModelShape shape, Rng& rng, bool relu_hidden);

 private:
  MlpConfig config_;
  bool relu_hidden_;
};

/// RankNet: the MF architecture with ReLU hidden layers, trained with the
/// pairwise cross-entropy of P(i > j) = sigmoid(y_i - y_j).
class RankNetModel final : public MfModel {
 public:
  RankNetModel(MlpConfig config, ModelShape shape, Rng& rng);

  std::string kind() const override { return "ranknet"; }
  LossKind default_loss() const override { return LossKind::OriginalBpr; }
};

/// NCDM with a RankNet pairwise objective:
/// y = MLP(q * (sigmoid(h_s) - sigmoid(h_diff)) * sigmoid(h_disc)), K-wide
/// proficiency and difficulty, scalar discrimination, nonnegative MLP weights.
class NcdmRModel final : public RankingModel {
 public:
  NcdmRModel(MlpConfig config, ModelShape shape, Rng& rng);

  std::string kind() const override { return "ncdm-r"; }
  nlohmann::json config() const override { return config_.to_json(); }
  NodeId build_scores(DiffGraph& graph, std::span<const ScoreQuery> queries) const override;
  void after_step() override;
  LossKind default_loss() const override { return LossKind::OriginalBpr; }
  std::optional<Array> abilities() const override;

 private:
  MlpConfig config_;
};

/// MUPP-2PL: per-item score a_i theta_{q_i} + a_i b_i with a_i = softplus(raw),
/// so P(i > j) = sigmoid(score_i - score_j). Fitted by pairwise maximum likelihood.
class Mupp2plModel final : public RankingModel {
 public:
  Mupp2plModel(ModelShape shape, Rng& rng);

  std::string kind() const override { return "mupp-2pl"; }
  nlohmann::json config() const override { return nlohmann::json::object(); }
  NodeId build_scores(DiffGraph& graph, std::span<const ScoreQuery> queries) const override;
  LossKind default_loss() const override { return LossKind::OriginalBpr; }
  std::optional<Array> abilities() const override;

  double discrimination(std::size_t item) const;
  double difficulty(std::size_t item) const;
  double trait(std::size_t participant, std::size_t dim) const;
  /// P(i > j) for participant n.
  double predict_pair(std::size_t participant, std::size_t item_i, std::size_t item_j) const;
};

/// Closed-form MUPP-2PL preference probability.
double mupp_2pl_probability(double theta_i, double theta_j, double a_i, double a_j, double b_i, double b_j);

/// Number of PICK-2 pairs a block converts into (pairs with distinct ranks).
std::size_t pick2_pair_count(const RankVector& ranks);

/// Builds a trainable model by kind: "fcncd", "mf", "ranknet", "ncdm-r", "mupp-2pl".
std::unique_ptr<RankingModel> make_model(std::string_view kind, const nlohmann::json& config, const ModelShape& shape,
                                         Rng& rng);

}  // namespace fcncd
