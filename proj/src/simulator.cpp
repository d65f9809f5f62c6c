#include "fcncd/simulator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fcncd/dataset_io.hpp"
#include "fcncd/error.hpp"

namespace fcncd {
namespace fs = std::filesystem;

std::string_view to_string(LuceLink link) { return link == LuceLink::Exponential ? "exponential" : "logistic"; }

LuceLink parse_luce_link(std::string_view text) {
  if (text == "exponential") return LuceLink::Exponential;
  if (text == "logistic") return LuceLink::Logistic;
  throw ValidationError("unknown Luce link '" + std::string(text) + "'");
}

nlohmann::json SimConfig::to_json() const {
  return {{"participants", participants},
          {"dimensions", dimensions},
          {"items", items},
          {"blocks", blocks},
          {"block_size", block_size},
          {"discrimination_low", discrimination_low},
          {"discrimination_high", discrimination_high},
          {"difficulty_mean", difficulty_mean},
          {"difficulty_sd", difficulty_sd},
          {"trait_covariance", trait_covariance},
          {"response_type", std::string(fcncd::to_string(response_type))},
          {"link", std::string(fcncd::to_string(link))},
          {"seed", seed}};
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("simulation config must be a JSON object");
  SimConfig c;
  const nlohmann::json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError("simulation config: unknown key '" + key + "'");
  }
  try {
    c.participants = j.value("participants", c.participants);
    c.dimensions = j.value("dimensions", c.dimensions);
    c.items = j.value("items", c.items);
    c.blocks = j.value("blocks", c.blocks);
    c.block_size = j.value("block_size", c.block_size);
    c.discrimination_low = j.value("discrimination_low", c.discrimination_low);
    c.discrimination_high = j.value("discrimination_high", c.discrimination_high);
    c.difficulty_mean = j.value("difficulty_mean", c.difficulty_mean);
    c.difficulty_sd = j.value("difficulty_sd", c.difficulty_sd);
    c.trait_covariance = j.value("trait_covariance", c.trait_covariance);
    if (j.contains("response_type")) c.response_type = parse_block_type(j.at("response_type").get<std::string>());
    if (j.contains("link")) c.link = parse_luce_link(j.at("link").get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("simulation config: ") + e.what());
  }
  return c;
}

void validate(const SimConfig& c) {
  const auto bad = [](const std::string& why) { throw ValidationError("simulation config: " + why); };
  if (c.participants == 0) bad("participants must be >= 1");
  if (c.dimensions == 0) bad("dimensions must be >= 1");
  if (c.block_size < 2) bad("block size must be >= 2");
  if (c.response_type == BlockType::Mole && c.block_size < 3) bad("MOLE blocks need t >= 3");
  if (c.response_type == BlockType::Pick) bad("PICK simulation is not supported");
  if (c.items != c.blocks * c.block_size) {
    bad("M=" + std::to_string(c.items) + " must equal L*t=" + std::to_string(c.blocks * c.block_size));
  }
  if (c.block_size > c.dimensions) bad("t must not exceed K (block items need distinct dimensions)");
  if (!(c.discrimination_low > 0 && c.discrimination_low < c.discrimination_high)) bad("need 0 < low < high discrimination");
  if (!(c.difficulty_sd > 0)) bad("difficulty sd must be > 0");
  if (!(std::abs(c.trait_covariance) < 1)) bad("|trait covariance| must be < 1");
}

ItemParams sample_item_params(const SimConfig& c, Rng& rng) {
  std::uniform_real_distribution<double> disc(c.discrimination_low, c.discrimination_high);
  std::normal_distribution<double> diff(c.difficulty_mean, c.difficulty_sd);
  ItemParams p;
  p.discrimination.resize(c.items);
  p.difficulty.resize(c.items);
  for (std::size_t m = 0; m < c.items; ++m) p.discrimination[m] = disc(rng);
  for (std::size_t m = 0; m < c.items; ++m) p.difficulty[m] = diff(rng);
  return p;
}

Array sample_traits(const SimConfig& c, Rng& rng) {
  const auto k = static_cast<Eigen::Index>(c.dimensions);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(k, k, c.trait_covariance);
  sigma.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw ValidationError("trait covariance is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();

  std::normal_distribution<double> z(0.0, 1.0);
  Array theta(Shape{c.participants, c.dimensions});
  Eigen::VectorXd draw(k);
  for (std::size_t n = 0; n < c.participants; ++n) {
    for (Eigen::Index i = 0; i < k; ++i) draw[i] = z(rng);
    const Eigen::VectorXd row = lower * draw;
    for (Eigen::Index i = 0; i < k; ++i) theta.at(n, static_cast<std::size_t>(i)) = row[i];
  }
  return theta;
}

LuceWeights luce_weights(std::span<const double> u, LuceLink link) {
  LuceWeights w;
  w.most.resize(u.size());
  w.least.resize(u.size());
  if (link == LuceLink::Exponential) {
    // Normalise by the block's extreme utilities; Luce ratios are scale free.
    const double hi = *std::max_element(u.begin(), u.end());
    const double lo = *std::min_element(u.begin(), u.end());
    for (std::size_t i = 0; i < u.size(); ++i) {
      w.most[i] = std::exp(u[i] - hi);
      w.least[i] = std::exp(lo - u[i]);
    }
  } else {
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-u[i]));
      w.most[i] = p;
      w.least[i] = 1.0 - p;
    }
  }
  return w;
}

std::vector<double> block_utilities(std::span<const double> theta_row, const ItemBlock& block,
                                    std::span<const std::size_t> item_dims, const ItemParams& params) {
  std::vector<double> u(block.items.size());
  for (std::size_t i = 0; i < block.items.size(); ++i) {
    const std::size_t item = block.items[i];
    u[i] = params.discrimination[item] * (theta_row[item_dims[item]] - params.difficulty[item]);
  }
  return u;
}

namespace {

std::size_t draw_index(std::span<const double> weights, const std::vector<std::uint8_t>& excluded, Rng& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!excluded[i]) total += weights[i];
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double target = unit(rng) * total;
  double acc = 0.0;
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (excluded[i]) continue;
    last = i;
    acc += weights[i];
    if (target < acc) return i;
  }
  return last;
}

}  // namespace

RankVector sample_mole(const LuceWeights& w, Rng& rng) {
  const std::size_t t = w.most.size();
  if (t < 3) throw ValidationError("MOLE response needs t >= 3");
  std::vector<std::uint8_t> excluded(t, 0);
  const std::size_t most = draw_index(w.most, excluded, rng);
  excluded[most] = 1;
  const std::size_t least = draw_index(w.least, excluded, rng);
  return encode_response(BlockType::Mole, t, MoleChoice{most, least});
}

RankVector sample_rank(std::span<const double> weights, Rng& rng) {
  const std::size_t t = weights.size();
  if (t < 2) throw ValidationError("RANK response needs t >= 2");
  std::vector<std::uint8_t> excluded(t, 0);
  RankOrder order;
  for (std::size_t pos = 0; pos < t; ++pos) {
    const std::size_t pick = draw_index(weights, excluded, rng);
    excluded[pick] = 1;
    order.best_to_worst.push_back(pick);
  }
  return encode_response(BlockType::Rank, t, order);
}

RankVector simulate_mole_response(std::span<const double> theta_row, const ItemBlock& block,
                                  std::span<const std::size_t> item_dims, const ItemParams& params, LuceLink link,
                                  Rng& rng) {
  if (block.items.size() < 3) throw ValidationError("degenerate MOLE block (t < 3)");
  return sample_mole(luce_weights(block_utilities(theta_row, block, item_dims, params), link), rng);
}

RankVector simulate_rank_response(std::span<const double> theta_row, const ItemBlock& block,
                                  std::span<const std::size_t> item_dims, const ItemParams& params, LuceLink link,
                                  Rng& rng) {
  const auto w = luce_weights(block_utilities(theta_row, block, item_dims, params), link);
  return sample_rank(w.most, rng);
}

MoleMarginals mole_marginals(const LuceWeights& w) {
  const std::size_t t = w.most.size();
  MoleMarginals out{std::vector<double>(t, 0.0), std::vector<double>(t, 0.0)};
  const double total_most = std::accumulate(w.most.begin(), w.most.end(), 0.0);
  const double total_least = std::accumulate(w.least.begin(), w.least.end(), 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    const double p_most = w.most[i] / total_most;
    out.most[i] = p_most;
    const double rest = total_least - w.least[i];
    for (std::size_t j = 0; j < t; ++j) {
      if (j != i) out.least[j] += p_most * w.least[j] / rest;
    }
  }
  return out;
}

SimResult generate(const SimConfig& c) {
  validate(c);
  Rng rng(c.seed);
  SimResult result;
  result.truth.items = sample_item_params(c, rng);
  result.truth.theta = sample_traits(c, rng);

  auto& ds = result.dataset;
  ds.num_participants = c.participants;
  ds.num_items = c.items;
  ds.num_dimensions = c.dimensions;
  ds.block_type = c.response_type;
  std::vector<std::size_t> dims(c.items);
  for (std::size_t m = 0; m < c.items; ++m) dims[m] = m % c.dimensions;
  ds.q = QMatrix::from_dimensions(dims, c.dimensions);
  for (std::size_t l = 0; l < c.blocks; ++l) {
    ItemBlock block{l, {}};
    for (std::size_t j = 0; j < c.block_size; ++j) block.items.push_back(l * c.block_size + j);
    ds.blocks.push_back(std::move(block));
  }

  ds.records.reserve(c.participants * c.blocks);
  for (std::size_t n = 0; n < c.participants; ++n) {
    const std::span<const double> row(result.truth.theta.data() + n * c.dimensions, c.dimensions);
    for (const auto& block : ds.blocks) {
      RankVector r = c.response_type == BlockType::Mole
                         ? simulate_mole_response(row, block, dims, result.truth.items, c.link, rng)
                         : simulate_rank_response(row, block, dims, result.truth.items, c.link, rng);
      ds.records.push_back(ResponseRecord{n, block.id, std::move(r)});
    }
  }
  return result;
}

fs::path save_simulation(const SimResult& result, const fs::path& directory, std::string name) {
  DatasetManifest manifest = manifest_for(result.dataset, std::move(name));
  manifest.truth_theta_file = "truth_theta.csv";
  manifest.truth_items_file = "truth_items.csv";
  const fs::path manifest_path = save_dataset(result.dataset, directory, manifest);

  const Array& theta = result.truth.theta;
  {
    std::ofstream out(directory / *manifest.truth_theta_file, std::ios::binary);
    if (!out) throw ParseError("cannot write truth_theta.csv");
    out << "participant_id";
    for (std::size_t k = 1; k <= theta.cols(); ++k) out << ",theta_" << k;
    out << '\n';
    for (std::size_t n = 0; n < theta.rows(); ++n) {
      out << n;
      for (std::size_t k = 0; k < theta.cols(); ++k) out << ',' << format_real(theta.at(n, k));
      out << '\n';
    }
  }
  {
    std::ofstream out(directory / *manifest.truth_items_file, std::ios::binary);
    if (!out) throw ParseError("cannot write truth_items.csv");
    out << "item_id,dimension_id,a,b\n";
    const auto& items = result.truth.items;
    for (std::size_t m = 0; m < items.discrimination.size(); ++m) {
      out << m << ',' << result.dataset.q.dimension_of(m) << ',' << format_real(items.discrimination[m]) << ','
          << format_real(items.difficulty[m]) << '\n';
    }
  }
  return manifest_path;
}

Array load_truth_theta(const fs::path& path) {
  const CsvFile file = read_csv(path);
  if (file.header.size() < 2) throw ParseError(file.path + ": header must be participant_id,theta_1,...");
  const std::size_t k = file.header.size() - 1;
  std::vector<double> values;
  values.reserve(file.rows.size() * k);
  for (std::size_t r = 0; r < file.rows.size(); ++r) {
    const auto& row = file.rows[r];
    if (row.fields.size() != k + 1) throw ParseError(file.path + ":" + std::to_string(row.line) + ": wrong field count");
    if (parse_index(file, row, 0) != r) throw ParseError(file.path + ":" + std::to_string(row.line) + ": participant ids must be consecutive");
    for (std::size_t j = 0; j < k; ++j) values.push_back(parse_real(file, row, j + 1));
  }
  return Array(Shape{file.rows.size(), k}, std::move(values));
}

}  // namespace fcncd
