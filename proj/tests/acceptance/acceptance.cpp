// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if a criterion not named in --allow-fail fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "../unit/support.hpp"
#include "fcncd/baselines.hpp"
#include "fcncd/fcncd_model.hpp"
#include "fcncd/gradcheck.hpp"
#include "fcncd/metrics.hpp"
#include "fcncd/ranking_loss.hpp"
#include "fcncd/simulator.hpp"
#include "fcncd/training.hpp"

namespace fs = std::filesystem;
using namespace fcncd;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void log(const std::string& line) { std::cerr << "[acceptance] " << line << std::endl; }

// ------------------------------------------------------------ sim-mole runs

// Trains each (model, seed) once and keeps the test report for reuse across
// criteria.
class SimMoleRuns {
 public:
  explicit SimMoleRuns(std::size_t seeds) : seeds_(seeds) {}

  const SimResult& sim() {
    if (!sim_) {
      sim_ = generate(SimConfig{});
      log("sim-mole dataset: " + std::to_string(sim_->dataset.records.size()) + " records");
    }
    return *sim_;
  }

  const EvalReport& report(const std::string& model, std::size_t seed) {
    const auto key = std::make_pair(model, seed);
    if (auto it = reports_.find(key); it != reports_.end()) return it->second;
    TrainConfig config = TrainConfig::profile("sim-mole");
    config.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    EvalReport report;
    if (model == "random") {
      report = random_run(sim().dataset, config);
    } else {
      log("training " + model + " seed " + std::to_string(seed));
      const TrainingRun run = run_training(resolve_model(model), sim().dataset, config, [&](const EpochRecord& e) {
        log("  " + model + " seed " + std::to_string(seed) + " epoch " + std::to_string(e.epoch) + " loss " +
            fmt(e.loss) + " pra " + fmt(e.pra) + " lra " + fmt(e.lra));
      });
      report = run.report;
      const double minutes =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
      log(model + " seed " + std::to_string(seed) + ": test pra " + fmt(report.pra) + " lra " + fmt(report.lra) +
          (report.doa ? " doa " + fmt(*report.doa) : "") + " (" + fmt(minutes, 1) + " min, best epoch " +
          std::to_string(run.result.best_epoch) + ")");
    }
    return reports_.emplace(key, std::move(report)).first->second;
  }

  struct Mean {
    double pra = 0.0, lra = 0.0, doa = 0.0;
  };
  Mean mean(const std::string& model, std::size_t seeds) {
    Mean m;
    for (std::size_t s = 0; s < seeds; ++s) {
      const EvalReport& r = report(model, s);
      m.pra += r.pra / static_cast<double>(seeds);
      m.lra += r.lra / static_cast<double>(seeds);
      m.doa += r.doa.value_or(0.0) / static_cast<double>(seeds);
    }
    return m;
  }
  std::size_t seeds() const { return seeds_; }

 private:
  std::size_t seeds_;
  std::optional<SimResult> sim_;
  std::map<std::pair<std::string, std::size_t>, EvalReport> reports_;
};

Verdict criterion_replication(SimMoleRuns& runs) {
  const auto start = std::chrono::steady_clock::now();
  const EvalReport& r = runs.report("fcncd", 0);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  return {r.pra >= 0.75 && r.lra >= 0.33, "FCNCD test PRA " + fmt(r.pra) + " (>= 0.75), LRA " + fmt(r.lra) +
                                              " (>= 0.33), " + fmt(minutes, 1) + " min"};
}

Verdict criterion_baselines(SimMoleRuns& runs) {
  const std::size_t n = runs.seeds();
  const auto f = runs.mean("fcncd", n);
  const auto ncdm = runs.mean("ncdm-r", n);
  const auto mf = runs.mean("mf", n);
  const auto rnd = runs.mean("random", n);
  const bool order = f.pra > ncdm.pra && ncdm.pra > mf.pra;
  const bool mf_band = std::abs(mf.pra - 0.689) <= 0.04;
  const bool random_ok = std::abs(rnd.pra - 0.5) <= 0.005 && std::abs(rnd.lra - 0.083) <= 0.01;
  return {order && mf_band && random_ok,
          "mean PRA over " + std::to_string(n) + " seeds: FCNCD " + fmt(f.pra) + ", NCDM-R " + fmt(ncdm.pra) +
              ", MF " + fmt(mf.pra) + " (band 0.689 +- 0.04); random PRA " + fmt(rnd.pra) + ", LRA " + fmt(rnd.lra)};
}

Verdict criterion_ablation(SimMoleRuns& runs) {
  const std::size_t n = runs.seeds();
  const double full = runs.mean("fcncd", n).pra;
  const double bpr = runs.mean("fcncd-bpr", n).pra;
  const double list = runs.mean("fcncd-list", n).pra;
  return {full >= bpr && bpr >= list && full - list >= 0.02,
          "mean PRA over " + std::to_string(n) + " seeds: FCNCD " + fmt(full) + ", BPR " + fmt(bpr) + ", List " +
              fmt(list) + ", gap " + fmt(full - list)};
}

Verdict criterion_interpretability(SimMoleRuns& runs) {
  const std::size_t n = runs.seeds();
  const double full = runs.mean("fcncd", n).doa;
  const double mo = runs.mean("fcncd-mo", n).doa;
  const double rnd = runs.mean("random", n).doa;
  const double truth = doa(runs.sim().truth.theta, runs.sim().dataset);
  return {full >= rnd + 0.05 && full > mo && truth > rnd + 0.10,
          "DOA FCNCD " + fmt(full) + ", FCNCD_MO " + fmt(mo) + ", random " + fmt(rnd) + ", true traits " +
              fmt(truth)};
}

// ------------------------------------------------------------ small checks

void perturb(ParameterSet& params, Rng& rng, double scale) {
  std::normal_distribution<double> noise(0.0, scale);
  for (auto& p : params.entries()) {
    for (double& v : p.value.values()) v += noise(rng);
  }
}

json small_overrides(const std::string& name) {
  if (name.starts_with("fcncd")) return {{"embedding_dim", 4}, {"mapping_dim", 6}, {"head_dim", 5}};
  if (name == "mupp-2pl") return json::object();
  return {{"latent_dim", 4}, {"hidden1", 6}, {"hidden2", 5}};
}

Verdict criterion_gradients() {
  const std::vector<std::string> models{"fcncd", "fcncd-eb", "fcncd-mo", "mf", "ranknet", "ncdm-r", "mupp-2pl"};
  const std::vector<LossKind> losses{LossKind::WeightedBpr, LossKind::OriginalBpr, LossKind::List};
  double worst = 0.0;
  std::string worst_where;
  std::size_t failed = 0;
  std::size_t entries = 0;
  constexpr std::size_t kTrials = 100;
  for (std::size_t trial = 0; trial < kTrials; ++trial) {
    Rng rng(1000 + trial);
    const std::size_t t = 3 + trial % 2;
    const BlockType type = trial % 3 == 0 ? BlockType::Rank : BlockType::Mole;
    const auto ds = testing::small_sim(2 + rng() % 3, 2 + rng() % 3, t, type, 500 + trial).dataset;
    const std::string name = models[trial % models.size()];
    const ModelSpec spec = resolve_model(name, small_overrides(name));
    auto model = make_model(spec.kind, spec.config, ModelShape::of(ds), rng);
    perturb(model->parameters(), rng, 0.3);
    const LossKind loss = losses[(trial / models.size()) % losses.size()];
    std::uniform_real_distribution<double> lambda(0.5, 10.0);
    const auto res = check_gradients(*model, ds, {loss, lambda(rng)}, rng);
    entries += res.checked;
    if (res.max_relative_error >= 1e-4 || res.failures_over_floor > 0) ++failed;
    if (res.max_relative_error > worst) {
      worst = res.max_relative_error;
      worst_where = name + "/" + std::string(to_string(loss)) + " " + res.worst_entry;
    }
  }
  return {failed == 0, std::to_string(kTrials) + " trials, " + std::to_string(entries) +
                           " entries, worst relative error " + fmt(worst, 8) + " (" + worst_where + "), " +
                           std::to_string(failed) + " failing"};
}

// Trains on a small simulated set so the heads have moved away from init.
std::unique_ptr<FcncdModel> toy_trained(const std::string& name, const ResponseDataset& ds) {
  TrainConfig config = TrainConfig::profile("bfi");
  config.max_epochs = 20;
  config.seed = 3;
  TrainingRun run = run_training(resolve_model(name, {{"embedding_dim", 8}, {"mapping_dim", 16}, {"head_dim", 8}}),
                                 ds, config);
  return std::unique_ptr<FcncdModel>(dynamic_cast<FcncdModel*>(run.model.release()));
}

Verdict criterion_monotonicity() {
  const auto ds = testing::small_sim(40, 12, 4, BlockType::Mole, 11).dataset;
  const auto constrained = toy_trained("fcncd", ds);
  const auto free_head = toy_trained("fcncd-mo", ds);
  Rng rng(17);
  std::uniform_real_distribution<double> bump(0.0, 1.0);

  std::size_t decreases = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t n = rng() % ds.num_participants;
    const std::size_t m = rng() % ds.num_items;
    const auto f = constrained->features(n, m);
    auto more = f.prof;
    // half the draws bump every coordinate, half a single one
    if (draw % 2 == 0) {
      for (double& v : more) v += bump(rng);
    } else {
      more[rng() % more.size()] += bump(rng);
    }
    if (constrained->head_output(more, f.diff, f.disc) < constrained->head_output(f.prof, f.diff, f.disc)) {
      ++decreases;
    }
  }

  std::size_t violations = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t n = rng() % ds.num_participants;
    const std::size_t m = rng() % ds.num_items;
    const auto f = free_head->features(n, m);
    auto more = f.prof;
    more[rng() % more.size()] += bump(rng);
    if (free_head->head_output(more, f.diff, f.disc) < free_head->head_output(f.prof, f.diff, f.disc)) ++violations;
  }
  return {decreases == 0 && violations > 0, "constrained head: " + std::to_string(decreases) +
                                                " decreases in 1000 draws; FCNCD_MO: " + std::to_string(violations) +
                                                " violating draws in 1000"};
}

Verdict criterion_loss_oracles() {
  const auto softplus_neg = [](double z) { return std::log1p(std::exp(-z)); };
  const auto rv = [](BlockType type, std::vector<int> v) { return RankVector{type, std::move(v)}; };
  double worst = 0.0;
  const auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  check(weighted_bpr_pair(0.4, 0.4, 3, 1, 2.0), std::log(2.0));
  check(weighted_bpr_pair(1.0, 0.0, 2, 1, 1.0), softplus_neg(1.0));
  check(weighted_bpr_pair(0.9, 0.2, 3, 1, 4.0), softplus_neg(4.0 / 2.0 * 0.7));
  check(weighted_bpr_pair(0.2, 0.9, 1, 3, 4.0), softplus_neg(4.0 / 2.0 * 0.7));
  check(original_bpr_pair(2.0, 0.0, 3, 1), softplus_neg(2.0));
  check(original_bpr_pair(0.3, 0.3, 1, 2), std::log(2.0));
  check(original_bpr_pair(0.8, 0.1, 2, 1), weighted_bpr_pair(0.8, 0.1, 2, 1, 1.0));
  check(block_loss_rank(std::vector<double>{0.7, 0.3}, rv(BlockType::Rank, {2, 1}), 1.0), softplus_neg(0.4));
  check(block_loss_rank(std::vector<double>{0.5, 0.5, 0.5}, rv(BlockType::Rank, {2, 3, 1}), 7.0), std::log(2.0));
  check(block_loss_mole(std::vector<double>{0.2, 0.2, 0.2, 0.2}, rv(BlockType::Mole, {3, 2, 2, 1}), 3.0),
        std::log(2.0));
  check(block_loss_list(std::vector<double>{0.1, 0.1, 0.1}, rv(BlockType::Rank, {1, 3, 2})),
        (std::log(3.0) + std::log(2.0)) / 3.0);
  check(block_loss_list(std::vector<double>{0.6}, rv(BlockType::Rank, {1})), 0.0);

  // MOLE-4: five distinct-rank pairs share the denominator
  const std::vector<double> y{0.9, 0.4, 0.6, 0.1};
  const RankVector mole = rv(BlockType::Mole, {3, 2, 2, 1});
  const double lam = 10.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      if (mole[i] != mole[j]) sum += softplus_neg(lam / (mole[i] - mole[j]) * (y[i] - y[j]));
    }
  }
  check(block_loss_mole(y, mole, lam), sum / 5.0);
  const bool denominator = distinct_rank_pairs(mole) == 5;
  return {worst < 1e-10 && denominator,
          "max abs deviation " + fmt(worst, 17) + "; MOLE-4 distinct pairs " +
              std::to_string(distinct_rank_pairs(mole))};
}

// Independent closed form of the sequential most/least Luce draw.
std::pair<std::vector<double>, std::vector<double>> luce_marginals(const LuceWeights& w) {
  const std::size_t t = w.most.size();
  double total = 0.0;
  for (double v : w.most) total += v;
  std::vector<double> most(t), least(t, 0.0);
  for (std::size_t i = 0; i < t; ++i) most[i] = w.most[i] / total;
  for (std::size_t i = 0; i < t; ++i) {
    double rest = 0.0;
    for (std::size_t k = 0; k < t; ++k) rest += k == i ? 0.0 : w.least[k];
    for (std::size_t j = 0; j < t; ++j) {
      if (j != i) least[j] += most[i] * w.least[j] / rest;
    }
  }
  return {most, least};
}

Verdict criterion_simulator_law() {
  SimConfig config;
  Rng rng(99);
  const ItemParams params = sample_item_params(config, rng);
  std::vector<std::size_t> dims(config.items);
  for (std::size_t m = 0; m < config.items; ++m) dims[m] = m % config.dimensions;
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  double library_gap = 0.0;
  constexpr int kDraws = 100000;
  for (LuceLink link : {LuceLink::Exponential, LuceLink::Logistic}) {
    for (int b = 0; b < 10; ++b) {
      ItemBlock block{0, {}};
      std::set<std::size_t> used;
      while (block.items.size() < 4) {
        const std::size_t m = rng() % config.items;
        if (used.insert(dims[m]).second) block.items.push_back(m);
      }
      std::vector<double> theta(config.dimensions);
      for (double& v : theta) v = z(rng);
      const auto w = luce_weights(block_utilities(theta, block, dims, params), link);
      const auto [most, least] = luce_marginals(w);
      const MoleMarginals lib = mole_marginals(w);
      std::vector<double> most_hits(4, 0.0), least_hits(4, 0.0);
      for (int d = 0; d < kDraws; ++d) {
        const RankVector r = simulate_mole_response(theta, block, dims, params, link, rng);
        for (std::size_t i = 0; i < 4; ++i) {
          if (r[i] == 3) most_hits[i] += 1.0;
          if (r[i] == 1) least_hits[i] += 1.0;
        }
      }
      for (std::size_t i = 0; i < 4; ++i) {
        worst = std::max({worst, std::abs(most_hits[i] / kDraws - most[i]), std::abs(least_hits[i] / kDraws - least[i])});
        library_gap = std::max({library_gap, std::abs(lib.most[i] - most[i]), std::abs(lib.least[i] - least[i])});
      }
    }
  }
  return {worst < 0.01 && library_gap < 1e-12, "10 blocks x 2 links x 1e5 draws: max |empirical - closed form| " +
                                                   fmt(worst, 5) + "; library marginals off by " +
                                                   fmt(library_gap, 15)};
}

// ------------------------------------------------------------ CLI determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

Verdict criterion_determinism(const fs::path& workdir, const std::string& cli) {
  const json small = {{"embedding_dim", 8}, {"mapping_dim", 16}, {"head_dim", 8}};
  const auto run_all = [&](const fs::path& dir) -> bool {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = shell_quote(dir.string());
    const std::string model_cfg = shell_quote(small.dump());
    const std::vector<std::string> commands{
        "simulate --participants 40 --seed 5 --out " + d + "/sim",
        "train --data " + d + "/sim/manifest.json --profile bfi --max-epochs 3 --seed 3 --model-config " + model_cfg +
            " --quiet --out " + d + "/train",
        "train --data " + d + "/sim/manifest.json --model mf --profile bfi --max-epochs 2 --seed 4 --model-config " +
            shell_quote(json{{"latent_dim", 6}, {"hidden1", 8}, {"hidden2", 4}}.dump()) + " --quiet --out " + d +
            "/train_mf",
        "eval --checkpoint " + d + "/train/model.ckpt --data " + d + "/sim/manifest.json --per-block " + d +
            "/eval_blocks.csv --out " + d + "/eval.json",
        "eval --model random --seed 2 --data " + d + "/sim/manifest.json --split all --out " + d + "/eval_random.json",
        "diagnose --checkpoint " + d + "/train/model.ckpt --data " + d + "/sim/manifest.json --participants 0,7 --out " +
            d + "/diagnose.json",
        "bench --data " + d + "/sim/manifest.json --models random,fcncd,fcncd-list --repeats 2 --profile bfi " +
            "--max-epochs 2 --model-config " + model_cfg + " --quiet --out " + d + "/bench.csv",
    };
    for (std::size_t i = 0; i < commands.size(); ++i) {
      const std::string cmd = shell_quote(cli) + " " + commands[i] + " > " + d + "/stdout_" + std::to_string(i) +
                              ".txt 2> " + d + "/stderr_" + std::to_string(i) + ".txt";
      if (std::system(cmd.c_str()) != 0) {
        log("command failed: " + cmd);
        return false;
      }
    }
    return true;
  };

  const fs::path a = workdir / "determinism_a";
  const fs::path b = workdir / "determinism_b";
  if (!run_all(a) || !run_all(b)) return {false, "a CLI command exited non-zero"};

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), a));
  }
  std::sort(files.begin(), files.end());
  std::size_t differing = 0;
  std::string first;
  for (const auto& rel : files) {
    const std::string text = slurp(a / rel);
    // the artifacts embed their own paths, so compare after neutralising them
    auto neutral = [&](std::string s, const fs::path& root) {
      for (std::size_t pos; (pos = s.find(root.string())) != std::string::npos;) s.replace(pos, root.string().size(), "<dir>");
      return s;
    };
    if (!fs::exists(b / rel) || neutral(text, a) != neutral(slurp(b / rel), b)) {
      ++differing;
      if (first.empty()) first = rel.string();
    }
  }
  return {differing == 0 && files.size() > 10,
          std::to_string(files.size()) + " artifacts across simulate/train/eval/diagnose/bench, " +
              std::to_string(differing) + " differ" + (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string workdir = (fs::temp_directory_path() / "fcncd_acceptance").string();
  std::string cli;
  std::vector<int> only;
  std::vector<int> tolerated;
  std::size_t seeds = 3;
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--cli", cli, "path to the fcncd executable")->required();
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--allow-fail", tolerated, "criteria whose FAIL does not change the exit status")->delimiter(',');
  app.add_option("--seeds", seeds, "seeds averaged in the model comparisons")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  SimMoleRuns runs(seeds);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"sim-mole replication (PRA >= 0.75, LRA >= 0.33)", [&] { return criterion_replication(runs); }},
      {"baseline ordering and chance levels", [&] { return criterion_baselines(runs); }},
      {"loss ablation ordering", [&] { return criterion_ablation(runs); }},
      {"ability interpretability (DOA)", [&] { return criterion_interpretability(runs); }},
      {"gradient correctness", criterion_gradients},
      {"monotonicity", criterion_monotonicity},
      {"loss oracles", criterion_loss_oracles},
      {"simulator law", criterion_simulator_law},
      {"determinism", [&] { return criterion_determinism(workdir, cli); }},
  };

  // cheap criteria first so their verdicts show up early
  const std::vector<int> order{5, 6, 7, 8, 9, 1, 2, 3, 4};
  std::map<int, Verdict> verdicts;
  std::ofstream report(fs::path(workdir) / "acceptance_report.txt", std::ios::trunc);
  for (int id : order) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[id - 1].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::ostringstream line;
    line << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << criteria[id - 1].first << "  ["
         << v.detail << "]";
    std::cout << line.str() << std::endl;
    report << line.str() << std::endl;
    verdicts[id] = v;
  }
  std::size_t failed = 0;
  std::vector<int> blocking;
  for (const auto& [id, v] : verdicts) {
    if (v.pass) continue;
    ++failed;
    if (std::find(tolerated.begin(), tolerated.end(), id) == tolerated.end()) blocking.push_back(id);
  }
  std::ostringstream summary;
  summary << verdicts.size() - failed << "/" << verdicts.size() << " criteria passed";
  if (failed > blocking.size()) summary << " (" << failed - blocking.size() << " known failure(s) tolerated)";
  std::cout << summary.str() << std::endl;
  report << summary.str() << std::endl;
  return blocking.empty() ? 0 : 1;
}
