#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "fcncd/baselines.hpp"
#include "fcncd/checkpoint.hpp"
#include "fcncd/dataset_io.hpp"
#include "fcncd/error.hpp"
#include "fcncd/simulator.hpp"
#include "fcncd/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fcncd;

namespace {

constexpr int kUserError = 2;
constexpr int kInternalError = 1;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> participants;
  std::string link;
  std::string name = "sim";
};

int cmd_simulate(const SimulateArgs& a) {
  SimConfig c = a.config.empty() ? SimConfig{} : SimConfig::from_json(read_json(a.config));
  if (a.seed) c.seed = *a.seed;
  if (a.participants) c.participants = *a.participants;
  if (!a.link.empty()) c.link = parse_luce_link(a.link);
  validate(c);
  const SimResult sim = generate(c);
  fs::create_directories(a.out);
  const fs::path manifest = save_simulation(sim, a.out, a.name);
  const auto& ds = sim.dataset;
  std::cout << "participants N=" << ds.num_participants << "\nitems M=" << ds.num_items << "\nblocks L=" << ds.num_blocks()
            << "\ndimensions K=" << ds.num_dimensions << "\nitems per block t=" << ds.block_size()
            << "\nblock type " << to_string(ds.block_type) << "\nrecords " << ds.records.size() << "\nmanifest "
            << manifest.string() << "\n";
  return 0;
}

// ------------------------------------------------------------ hyperparameters

struct HyperArgs {
  std::string profile;
  std::optional<double> lambda;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<double> weight_decay;
  std::optional<std::size_t> max_epochs;
  std::optional<std::size_t> patience;
  std::optional<double> train_fraction;
  std::string split;
  std::uint64_t seed = 0;
  std::string model_config;  // JSON object merged into the model config

  void add_to(CLI::App* app) {
    app->add_option("--profile", profile, "hyperparameter preset")->check(CLI::IsMember(TrainConfig::profile_names()));
    app->add_option("--lambda", lambda, "weighted BPR coefficient");
    app->add_option("--batch-size", batch_size, "records per mini-batch");
    app->add_option("--lr", learning_rate, "AdamW learning rate");
    app->add_option("--weight-decay", weight_decay, "AdamW decoupled weight decay");
    app->add_option("--max-epochs", max_epochs, "upper bound on training epochs");
    app->add_option("--patience", patience, "epochs without held-out PRA gain before stopping");
    app->add_option("--train-fraction", train_fraction, "share of blocks used for training");
    app->add_option("--split", split, "block split mode")->check(CLI::IsMember({"per-participant", "global"}));
    app->add_option("--seed", seed, "seed for split, initialisation and shuffling");
    app->add_option("--model-config", model_config, "JSON object overriding model widths");
  }

  TrainConfig config() const {
    TrainConfig c = profile.empty() ? TrainConfig{} : TrainConfig::profile(profile);
    if (lambda) c.lambda = *lambda;
    if (batch_size) c.batch_size = *batch_size;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (weight_decay) c.weight_decay = *weight_decay;
    if (max_epochs) c.max_epochs = *max_epochs;
    if (patience) c.patience = *patience;
    if (train_fraction) c.train_fraction = *train_fraction;
    if (!split.empty()) c.split = parse_split_mode(split);
    c.seed = seed;
    validate(c);
    return c;
  }

  json overrides() const {
    if (model_config.empty()) return json::object();
    try {
      return json::parse(model_config);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("--model-config is not valid JSON: ") + e.what());
    }
  }
};

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string model = "fcncd";
  std::string variant = "full";
  std::string out;
  bool quiet = false;
  HyperArgs hyper;
};

std::string model_name(const std::string& model, const std::string& variant) {
  if (model != "fcncd") {
    if (variant != "full") throw ValidationError("--variant only applies to --model fcncd");
    return model;
  }
  return variant == "full" ? "fcncd" : "fcncd-" + variant;
}

int cmd_train(const TrainArgs& a) {
  const ResponseDataset ds = load_dataset(fs::path(a.data));
  const TrainConfig config = a.hyper.config();
  const ModelSpec spec = resolve_model(model_name(a.model, a.variant), a.hyper.overrides());
  if (spec.kind == "random") throw ValidationError("the random model has nothing to train; use eval --model random");

  const TrainingRun run = run_training(spec, ds, config, [&](const EpochRecord& e) {
    if (!a.quiet) {
      std::cerr << "epoch " << e.epoch << " loss " << format_real(e.loss) << " pra " << format_real(e.pra) << " lra "
                << format_real(e.lra) << "\n";
    }
  });

  TrainConfig stored = config;
  if (spec.loss) stored.loss = spec.loss;
  const fs::path out(a.out);
  fs::create_directories(out);
  save_checkpoint(*run.model, out / "model.ckpt",
                  {{"model", spec.name}, {"train_config", stored.to_json()}, {"best_epoch", run.result.best_epoch}});
  write_text(out / "history.csv", history_csv(run.result.history));
  json report = run.report.to_json();
  report["model"] = spec.name;
  report["split"] = "test";
  report["training"] = run.result.to_json();
  report["train_config"] = stored.to_json();
  write_text(out / "report.json", dump(report));
  std::cout << "model " << spec.name << "\nepochs " << run.result.history.size() << " (best " << run.result.best_epoch
            << ")\ntest pra " << format_real(run.report.pra) << "\ntest lra " << format_real(run.report.lra) << "\n";
  if (run.report.doa) std::cout << "doa " << format_real(*run.report.doa) << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string model;  // "random" evaluates the random baseline
  std::string split = "test";
  std::string per_block;
  std::string out;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

// Rebuilds the training split stored with a checkpoint.
std::pair<ResponseDataset, ResponseDataset> stored_split(const ResponseDataset& ds, const TrainConfig& c) {
  Rng rng = derive_rng(c.seed, kStreamSplit);
  return split_by_block(ds, c.train_fraction, rng, c.split);
}

const ResponseDataset& pick_split(const std::string& which, const ResponseDataset& all,
                                  const std::pair<ResponseDataset, ResponseDataset>& split) {
  if (which == "train") return split.first;
  if (which == "test") return split.second;
  return all;
}

int cmd_eval(const EvalArgs& a) {
  const ResponseDataset ds = load_dataset(fs::path(a.data));
  require_valid(ds);
  EvalReport report;
  json meta;
  if (a.model == "random") {
    TrainConfig c;
    c.seed = a.seed;
    c.train_fraction = a.train_fraction;
    const auto split = stored_split(ds, c);
    Rng rng = derive_rng(a.seed, kStreamEval);
    report = evaluate_random(pick_split(a.split, ds, split), rng, &ds, !a.per_block.empty());
    meta["model"] = "random";
  } else {
    if (a.checkpoint.empty()) throw ValidationError("eval needs --checkpoint or --model random");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    if (!(ck.model->shape() == ModelShape::of(ds))) {
      throw ShapeError("checkpoint was trained on a dataset with a different shape or Q-matrix");
    }
    const TrainConfig c = TrainConfig::from_json(ck.extra.value("train_config", json::object()));
    const auto split = stored_split(ds, c);
    report = evaluate(*ck.model, pick_split(a.split, ds, split), &ds, !a.per_block.empty());
    meta["model"] = ck.extra.value("model", ck.model->kind());
  }
  json j = report.to_json();
  j["model"] = meta["model"];
  j["split"] = a.split;
  if (!a.per_block.empty()) write_text(a.per_block, per_block_csv(report));
  if (a.out.empty()) std::cout << dump(j);
  else write_text(a.out, dump(j));
  return 0;
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseArgs {
  std::string checkpoint;
  std::string data;
  std::vector<std::size_t> participants;
  std::string out;
};

json ranks_json(const RankVector& r) { return r.values; }

int cmd_diagnose(const DiagnoseArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const ResponseDataset ds = load_dataset(fs::path(a.data));
  if (!(ck.model->shape() == ModelShape::of(ds))) throw ShapeError("checkpoint and dataset shapes differ");
  const auto abilities = ck.model->abilities();
  json people = json::array();
  for (std::size_t n : a.participants) {
    if (n >= ds.num_participants) throw ValidationError("unknown participant " + std::to_string(n));
    json person;
    person["participant"] = n;
    if (abilities) {
      std::vector<double> row(ds.num_dimensions);
      for (std::size_t k = 0; k < ds.num_dimensions; ++k) row[k] = abilities->at(n, k);
      person["abilities"] = row;
    } else {
      person["abilities"] = nullptr;
    }
    json blocks = json::array();
    for (const auto& rec : ds.records) {
      if (rec.participant != n) continue;
      const auto& block = ds.blocks.at(rec.block);
      const auto scores = predict_block(*ck.model, n, block);
      const RankVector predicted = rank_scores(scores, ds.block_type);
      const auto accuracy = pair_accuracy(scores, rec.ranks);
      blocks.push_back({{"block", rec.block},
                        {"items", block.items},
                        {"scores", scores},
                        {"actual", ranks_json(rec.ranks)},
                        {"predicted", ranks_json(predicted)},
                        {"pair_accuracy", accuracy ? json(*accuracy) : json(nullptr)}});
    }
    person["blocks"] = blocks;
    people.push_back(person);
  }
  json report = {{"model", ck.extra.value("model", ck.model->kind())},
                 {"dimensions", ds.num_dimensions},
                 {"participants", people}};
  if (a.out.empty()) std::cout << dump(report);
  else write_text(a.out, dump(report));
  return 0;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
  std::string data;
  std::vector<std::string> models{"random", "fcncd"};
  std::size_t repeats = 10;
  std::string out;
  bool quiet = false;
  HyperArgs hyper;
};

std::string bench_row(const BenchResult& r) {
  std::ostringstream line;
  line << r.model << ',' << format_real(r.pra) << ',' << format_real(r.lra) << ',' << (r.doa ? format_real(*r.doa) : "")
       << ',' << r.seed_count << '\n';
  return line.str();
}

int cmd_bench(const BenchArgs& a) {
  const ResponseDataset ds = load_dataset(fs::path(a.data));
  const TrainConfig config = a.hyper.config();
  std::vector<ModelSpec> specs;
  for (const auto& name : a.models) specs.push_back(resolve_model(name, a.hyper.overrides()));

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out, std::ios::binary | std::ios::trunc);
  if (!csv) throw ValidationError("cannot write " + out.string());
  csv << "model,pra,lra,doa,seed_count\n" << std::flush;
  for (const auto& spec : specs) {
    if (!a.quiet) std::cerr << "bench " << spec.name << "\n";
    const BenchResult r = bench_model(spec, ds, config, a.repeats);
    const std::string row = bench_row(r);
    csv << row << std::flush;  // completed rows survive a later failure
    std::cout << row;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forced-choice neural cognitive diagnosis: simulate, train, evaluate and compare models."};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic MOLE/RANK dataset with ground truth");
  simulate->add_option("--config", sim.config, "simulation config JSON")->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "output directory")->required();
  simulate->add_option("--seed", sim.seed, "override the config seed");
  simulate->add_option("--participants", sim.participants, "override the participant count");
  simulate->add_option("--link", sim.link, "Luce link")->check(CLI::IsMember({"exponential", "logistic"}));
  simulate->add_option("--name", sim.name, "dataset name stored in the manifest");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model with early stopping");
  train_cmd->add_option("--data", tr.data, "dataset manifest")->required();
  train_cmd->add_option("--model", tr.model, "model kind")
      ->check(CLI::IsMember({"fcncd", "mf", "ranknet", "ncdm-r", "mupp-2pl"}));
  train_cmd->add_option("--variant", tr.variant, "FCNCD ablation")->check(CLI::IsMember({"full", "eb", "bpr", "list", "mo"}));
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_flag("--quiet", tr.quiet, "no per-epoch log");
  tr.hyper.add_to(train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint (or the random model) on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  eval_cmd->add_option("--model", ev.model, "use 'random' for the random baseline")->check(CLI::IsMember({"random"}));
  eval_cmd->add_option("--data", ev.data, "dataset manifest")->required();
  eval_cmd->add_option("--split", ev.split, "records to score")->check(CLI::IsMember({"test", "train", "all"}));
  eval_cmd->add_option("--per-block", ev.per_block, "write per-record diagnostics CSV here");
  eval_cmd->add_option("--out", ev.out, "report JSON path (stdout when omitted)");
  eval_cmd->add_option("--seed", ev.seed, "split and score seed for the random model");
  eval_cmd->add_option("--train-fraction", ev.train_fraction, "split fraction for the random model");

  DiagnoseArgs dg;
  auto* diagnose = app.add_subcommand("diagnose", "per-participant abilities and ranking comparisons");
  diagnose->add_option("--checkpoint", dg.checkpoint, "model checkpoint")->required();
  diagnose->add_option("--data", dg.data, "dataset manifest")->required();
  diagnose->add_option("--participants", dg.participants, "participant ids")->required()->delimiter(',');
  diagnose->add_option("--out", dg.out, "report JSON path (stdout when omitted)");

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "leaderboard of models averaged over seeds");
  bench->add_option("--data", bn.data, "dataset manifest")->required();
  bench->add_option("--models", bn.models, "comma-separated model names")->delimiter(',')->check(CLI::IsMember(model_names()));
  bench->add_option("--repeats", bn.repeats, "seeds per model")->check(CLI::PositiveNumber);
  bench->add_option("--out", bn.out, "leaderboard CSV")->required();
  bench->add_flag("--quiet", bn.quiet, "no progress log");
  bn.hyper.add_to(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUserError;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*diagnose) return cmd_diagnose(dg);
    if (*bench) return cmd_bench(bn);
  } catch (const fcncd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}
