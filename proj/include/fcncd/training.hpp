#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fcncd/dataset.hpp"
#include "fcncd/metrics.hpp"
#include "fcncd/model.hpp"

namespace fcncd {

struct TrainConfig {
  double lambda = 1.0;
  std::size_t batch_size = 32;
  double learning_rate = 5e-4;
  double weight_decay = 1e-2;
  bool lazy_embeddings = true;  // sparse-row AdamW for embedding tables
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double train_fraction = 0.8;
  SplitMode split = SplitMode::PerParticipant;
  std::uint64_t seed = 0;
  std::optional<LossKind> loss;  // model default when unset

  /// Named hyperparameter presets: "map", "bfi", "sim-mole".
  static TrainConfig profile(std::string_view name);
  static std::vector<std::string> profile_names();

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Throws ValidationError unless patience >= 1, 0 < fraction < 1, batch > 0,
/// lr >= 0 and lambda > 0.
void validate(const TrainConfig& config);

/// Independent stream for one purpose (split, init, shuffle, ...) of a run seed.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);

enum : std::uint64_t { kStreamSplit = 1, kStreamInit = 2, kStreamShuffle = 3, kStreamEval = 4 };

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training batch loss
  double pra = 0.0;       // held-out
  double lra = 0.0;       // held-out
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_pra = 0.0;
  bool stopped_early = false;

  nlohmann::json to_json() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch AdamW training with early stopping on held-out PRA. The model's
/// parameters end at the best epoch's values. `rng` drives shuffling.
TrainResult train(RankingModel& model, const ResponseDataset& train_set, const ResponseDataset& heldout,
                  const TrainConfig& config, Rng& rng, const EpochCallback& on_epoch = {});

/// Mean training loss over `dataset` without updating parameters.
double dataset_loss(const RankingModel& model, const ResponseDataset& dataset, const PairLossSpec& spec,
                    std::size_t batch_size = 256);

/// Scores every record's block, in record order.
std::vector<std::vector<double>> predict_records(const RankingModel& model, const ResponseDataset& dataset);

/// PRA/LRA on `dataset` plus DOA over `doa_dataset` when the model has abilities.
EvalReport evaluate(const RankingModel& model, const ResponseDataset& dataset,
                    const ResponseDataset* doa_dataset = nullptr, bool per_block = false);

/// The same report for uniform random scores and abilities.
EvalReport evaluate_random(const ResponseDataset& dataset, Rng& rng, const ResponseDataset* doa_dataset = nullptr,
                           bool per_block = false);

/// A named model setup: "random", "fcncd", "fcncd-<variant>" (eb, bpr, list,
/// mo), "mf", "ranknet", "ncdm-r" or "mupp-2pl".
struct ModelSpec {
  std::string name;
  std::string kind;  // make_model kind, or "random"
  nlohmann::json config = nlohmann::json::object();
  std::optional<LossKind> loss;
};

/// `overrides` are merged into the model config (e.g. smaller widths).
ModelSpec resolve_model(std::string_view name, const nlohmann::json& overrides = nlohmann::json::object());
std::vector<std::string> model_names();

/// Split, build, and train in one go. All randomness derives from config.seed.
struct TrainingRun {
  std::unique_ptr<RankingModel> model;
  ResponseDataset train_set;
  ResponseDataset test_set;
  TrainResult result;
  EvalReport report;  // on test_set; DOA over the full dataset
};

TrainingRun run_training(std::string_view model_kind, const nlohmann::json& model_config, const ResponseDataset& dataset,
                         const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Same, with the model and any loss override taken from a ModelSpec.
TrainingRun run_training(const ModelSpec& spec, const ResponseDataset& dataset, TrainConfig config,
                         const EpochCallback& on_epoch = {});

struct BenchResult {
  std::string model;
  double pra = 0.0;
  double lra = 0.0;
  std::optional<double> doa;
  std::size_t seed_count = 0;
  std::vector<EvalReport> runs;
};

/// Trains and evaluates `spec` once per seed config.seed, config.seed + 1, ...
/// and averages the test reports. The random model draws its scores and
/// abilities from the same seed stream on the same split.
BenchResult bench_model(const ModelSpec& spec, const ResponseDataset& dataset, const TrainConfig& config,
                        std::size_t repeats, const EpochCallback& on_epoch = {});

/// Test-split report of the random baseline for one seed.
EvalReport random_run(const ResponseDataset& dataset, const TrainConfig& config);

/// `epoch,loss,pra,lra` with a header line.
std::string history_csv(const std::vector<EpochRecord>& history);

/// participant,block,truth,predicted,pair_accuracy with ranks joined by ';'.
std::string per_block_csv(const EvalReport& report);

}  // namespace fcncd
