#include "fcncd/training.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "fcncd/baselines.hpp"
#include "fcncd/dataset_io.hpp"
#include "fcncd/error.hpp"
#include "fcncd/optim.hpp"

namespace fcncd {

TrainConfig TrainConfig::profile(std::string_view name) {
  TrainConfig c;
  if (name == "map") {
    c.lambda = 8.0;
    c.batch_size = 256;
    c.learning_rate = 1e-2;
  } else if (name == "bfi") {
    c.lambda = 5.0;
    c.batch_size = 64;
    c.learning_rate = 5e-3;
  } else if (name == "sim-mole") {
    c.lambda = 10.0;
    c.batch_size = 32;
    c.learning_rate = 5e-4;
  } else {
    throw ValidationError("unknown profile '" + std::string(name) + "' (expected map, bfi or sim-mole)");
  }
  return c;
}

std::vector<std::string> TrainConfig::profile_names() { return {"map", "bfi", "sim-mole"}; }

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"lambda", lambda},
                      {"batch_size", batch_size},
                      {"learning_rate", learning_rate},
                      {"weight_decay", weight_decay},
                      {"lazy_embeddings", lazy_embeddings},
                      {"max_epochs", max_epochs},
                      {"patience", patience},
                      {"train_fraction", train_fraction},
                      {"split", std::string(to_string(split))},
                      {"seed", seed}};
  j["loss"] = loss ? nlohmann::json(std::string(to_string(*loss))) : nlohmann::json(nullptr);
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lazy_embeddings = j.value("lazy_embeddings", c.lazy_embeddings);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  if (j.contains("split")) c.split = parse_split_mode(j.at("split").get<std::string>());
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss") && !j.at("loss").is_null()) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  return c;
}

void validate(const TrainConfig& c) {
  if (c.patience < 1) throw ValidationError("patience must be >= 1");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
  if (c.batch_size == 0) throw ValidationError("batch size must be positive");
  if (!(c.learning_rate >= 0.0)) throw ValidationError("learning rate must be nonnegative");
  if (!(c.lambda > 0.0)) throw ValidationError("lambda must be positive");
  if (!(c.weight_decay >= 0.0)) throw ValidationError("weight decay must be nonnegative");
  if (c.max_epochs == 0) throw ValidationError("max epochs must be positive");
}

Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

nlohmann::json TrainResult::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : history) hist.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"pra", e.pra}, {"lra", e.lra}});
  return {{"history", hist}, {"best_epoch", best_epoch}, {"best_pra", best_pra}, {"stopped_early", stopped_early}};
}

namespace {

PairLossSpec loss_spec(const RankingModel& model, const TrainConfig& c) {
  return PairLossSpec{c.loss.value_or(model.default_loss()), c.lambda};
}

void require_compatible(const RankingModel& model, const ResponseDataset& ds) {
  const auto& s = model.shape();
  if (s.participants != ds.num_participants || s.items != ds.num_items || s.dimensions != ds.num_dimensions) {
    throw ShapeError("model built for N=" + std::to_string(s.participants) + ", M=" + std::to_string(s.items) +
                     ", K=" + std::to_string(s.dimensions) + " does not match dataset N=" +
                     std::to_string(ds.num_participants) + ", M=" + std::to_string(ds.num_items) +
                     ", K=" + std::to_string(ds.num_dimensions));
  }
}

std::vector<Array> snapshot(const ParameterSet& params) {
  std::vector<Array> out;
  out.reserve(params.size());
  for (const auto& p : params.entries()) out.push_back(p.value);
  return out;
}

void restore(ParameterSet& params, std::vector<Array>& saved) {
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].value = std::move(saved[i]);
}

std::vector<RankVector> truths(const ResponseDataset& ds) {
  std::vector<RankVector> out;
  out.reserve(ds.records.size());
  for (const auto& r : ds.records) out.push_back(r.ranks);
  return out;
}

EvalReport build_report(const ResponseDataset& ds, const std::vector<std::vector<double>>& scores, bool per_block) {
  EvalReport report;
  const auto truth = truths(ds);
  std::vector<RankVector> predicted;
  predicted.reserve(scores.size());
  for (std::size_t r = 0; r < scores.size(); ++r) predicted.push_back(rank_scores(scores[r], ds.block_type));
  report.pra = pra(scores, truth);
  report.lra = lra(predicted, truth);
  report.records = ds.records.size();
  if (per_block) {
    for (std::size_t r = 0; r < scores.size(); ++r) {
      BlockDiagnostic d;
      d.participant = ds.records[r].participant;
      d.block = ds.records[r].block;
      d.scores = scores[r];
      d.predicted = predicted[r];
      d.truth = truth[r];
      d.pair_accuracy = pair_accuracy(scores[r], truth[r]).value_or(0.0);
      report.blocks.push_back(std::move(d));
    }
  }
  return report;
}

}  // namespace

std::vector<std::vector<double>> predict_records(const RankingModel& model, const ResponseDataset& ds) {
  require_compatible(model, ds);
  std::vector<ScoreQuery> queries;
  for (const auto& rec : ds.records) {
    for (std::size_t item : ds.blocks.at(rec.block).items) queries.push_back({rec.participant, item});
  }
  const std::vector<double> flat = predict_scores(model, queries);
  std::vector<std::vector<double>> out;
  out.reserve(ds.records.size());
  std::size_t offset = 0;
  for (const auto& rec : ds.records) {
    const std::size_t t = ds.blocks.at(rec.block).items.size();
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                     flat.begin() + static_cast<std::ptrdiff_t>(offset + t));
    offset += t;
  }
  return out;
}

EvalReport evaluate(const RankingModel& model, const ResponseDataset& ds, const ResponseDataset* doa_dataset,
                    bool per_block) {
  EvalReport report = build_report(ds, predict_records(model, ds), per_block);
  if (doa_dataset != nullptr) {
    if (auto abilities = model.abilities()) report.doa = doa(*abilities, *doa_dataset);
  }
  return report;
}

EvalReport evaluate_random(const ResponseDataset& ds, Rng& rng, const ResponseDataset* doa_dataset, bool per_block) {
  std::vector<std::vector<double>> scores;
  scores.reserve(ds.records.size());
  for (const auto& rec : ds.records) scores.push_back(random_predict(rng, ds.blocks.at(rec.block)));
  EvalReport report = build_report(ds, scores, per_block);
  if (doa_dataset != nullptr) {
    report.doa = doa(random_abilities(doa_dataset->num_participants, doa_dataset->num_dimensions, rng), *doa_dataset);
  }
  return report;
}

double dataset_loss(const RankingModel& model, const ResponseDataset& ds, const PairLossSpec& spec,
                    std::size_t batch_size) {
  require_compatible(model, ds);
  if (ds.records.empty()) throw ValidationError("cannot compute a loss over an empty dataset");
  const Bindings bindings(model.parameters());
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.records.size(); start += batch_size) {
    idx.resize(std::min(batch_size, ds.records.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const RecordBatch batch = batch_for(ds, idx);
    DiffGraph g;
    const NodeId scores = model.build_scores(g, batch.queries);
    g.set_output(add_batch_loss(g, scores, batch.slices, spec));
    total += evaluate(g, bindings).item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(ds.records.size());
}

TrainResult train(RankingModel& model, const ResponseDataset& train_set, const ResponseDataset& heldout,
                  const TrainConfig& config, Rng& rng, const EpochCallback& on_epoch) {
  validate(config);
  if (train_set.records.empty()) throw ValidationError("training split is empty");
  if (heldout.records.empty()) throw ValidationError("held-out split is empty");
  require_compatible(model, train_set);
  require_compatible(model, heldout);

  const PairLossSpec spec = loss_spec(model, config);
  ParameterSet& params = model.parameters();
  AdamwState opt = make_adamw_state(params, AdamwOptions{.learning_rate = config.learning_rate,
                                                         .weight_decay = config.weight_decay,
                                                         .lazy_rows = config.lazy_embeddings});
  GradientBuffer grads(params);

  std::vector<std::size_t> order(train_set.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::vector<Array> best;
  double best_pra = -1.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const RecordBatch batch = batch_for(train_set, idx);
      DiffGraph g;
      const NodeId scores = model.build_scores(g, batch.queries);
      g.set_output(add_batch_loss(g, scores, batch.slices, spec));
      grads.zero();
      const double value = forward_backward(g, Bindings(params), grads);
      adamw_step(params, grads, opt);
      model.after_step();
      loss_sum += value * static_cast<double>(idx.size());
    }

    const EvalReport eval = evaluate(model, heldout);
    const EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), eval.pra, eval.lra};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.pra > best_pra) {
      best_pra = rec.pra;
      result.best_epoch = epoch;
      best = snapshot(params);
      stale = 0;
    } else if (++stale >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  result.best_pra = best_pra;
  return result;
}

TrainingRun run_training(std::string_view model_kind, const nlohmann::json& model_config, const ResponseDataset& dataset,
                         const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  require_valid(dataset);
  TrainingRun run;
  Rng split_rng = derive_rng(config.seed, kStreamSplit);
  std::tie(run.train_set, run.test_set) = split_by_block(dataset, config.train_fraction, split_rng, config.split);
  Rng init_rng = derive_rng(config.seed, kStreamInit);
  run.model = make_model(model_kind, model_config, ModelShape::of(dataset), init_rng);
  Rng shuffle_rng = derive_rng(config.seed, kStreamShuffle);
  run.result = train(*run.model, run.train_set, run.test_set, config, shuffle_rng, on_epoch);
  run.report = evaluate(*run.model, run.test_set, &dataset);
  return run;
}

std::vector<std::string> model_names() {
  return {"random", "fcncd", "fcncd-eb", "fcncd-bpr", "fcncd-list", "fcncd-mo", "mf", "ranknet", "ncdm-r", "mupp-2pl"};
}

ModelSpec resolve_model(std::string_view name, const nlohmann::json& overrides) {
  ModelSpec spec;
  spec.name = std::string(name);
  if (name == "fcncd" || name.starts_with("fcncd-")) {
    const FcncdVariant variant = name == "fcncd" ? FcncdVariant::Full : parse_fcncd_variant(name.substr(6));
    FcncdConfig base = FcncdConfig::from_json(overrides.is_object() ? overrides : nlohmann::json::object());
    spec.kind = "fcncd";
    spec.config = apply_variant(base, variant).to_json();
    if (variant == FcncdVariant::Bpr || variant == FcncdVariant::List) spec.loss = loss_for_variant(variant);
    return spec;
  }
  if (name == "random") {
    spec.kind = "random";
    return spec;
  }
  if (name == "mf" || name == "ranknet" || name == "ncdm-r") {
    spec.kind = std::string(name);
    spec.config = MlpConfig::from_json(overrides.is_object() ? overrides : nlohmann::json::object()).to_json();
    return spec;
  }
  if (name == "mupp-2pl") {
    spec.kind = "mupp-2pl";
    return spec;
  }
  throw ValidationError("unknown model '" + std::string(name) + "'");
}

TrainingRun run_training(const ModelSpec& spec, const ResponseDataset& dataset, TrainConfig config,
                         const EpochCallback& on_epoch) {
  if (spec.kind == "random") throw ValidationError("the random model has nothing to train");
  if (spec.loss) config.loss = spec.loss;
  return run_training(spec.kind, spec.config, dataset, config, on_epoch);
}

EvalReport random_run(const ResponseDataset& dataset, const TrainConfig& config) {
  validate(config);
  require_valid(dataset);
  Rng split_rng = derive_rng(config.seed, kStreamSplit);
  const auto split = split_by_block(dataset, config.train_fraction, split_rng, config.split);
  Rng rng = derive_rng(config.seed, kStreamEval);
  return evaluate_random(split.second, rng, &dataset);
}

BenchResult bench_model(const ModelSpec& spec, const ResponseDataset& dataset, const TrainConfig& config,
                        std::size_t repeats, const EpochCallback& on_epoch) {
  if (repeats == 0) throw ValidationError("repeats must be >= 1");
  BenchResult out;
  out.model = spec.name;
  double doa_sum = 0.0;
  std::size_t doa_count = 0;
  for (std::size_t r = 0; r < repeats; ++r) {
    TrainConfig c = config;
    c.seed = config.seed + r;
    EvalReport report = spec.kind == "random" ? random_run(dataset, c) : run_training(spec, dataset, c, on_epoch).report;
    out.pra += report.pra;
    out.lra += report.lra;
    if (report.doa) {
      doa_sum += *report.doa;
      ++doa_count;
    }
    out.runs.push_back(std::move(report));
  }
  out.seed_count = repeats;
  out.pra /= static_cast<double>(repeats);
  out.lra /= static_cast<double>(repeats);
  if (doa_count == repeats) out.doa = doa_sum / static_cast<double>(repeats);
  return out;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,loss,pra,lra\n";
  for (const auto& e : history) {
    out << e.epoch << ',' << format_real(e.loss) << ',' << format_real(e.pra) << ',' << format_real(e.lra) << '\n';
  }
  return out.str();
}

namespace {
std::string join_ranks(const RankVector& r) {
  std::string s;
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(r.values[i]);
  }
  return s;
}
}  // namespace

std::string per_block_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "participant,block,truth,predicted,pair_accuracy\n";
  for (const auto& b : report.blocks) {
    out << b.participant << ',' << b.block << ',' << join_ranks(b.truth) << ',' << join_ranks(b.predicted) << ','
        << format_real(b.pair_accuracy) << '\n';
  }
  return out.str();
}

}  // namespace fcncd
