#include "fcncd/baselines.hpp"

#include <cmath>

#include "fcncd/error.hpp"
#include "fcncd/optim.hpp"

namespace fcncd {

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Random: return "random";
    case BaselineKind::Mf: return "mf";
    case BaselineKind::RankNet: return "ranknet";
    case BaselineKind::NcdmR: return "ncdm-r";
    case BaselineKind::Mupp2pl: return "mupp-2pl";
  }
  return "?";
}

BaselineKind parse_baseline_kind(std::string_view text) {
  for (auto k : {BaselineKind::Random, BaselineKind::Mf, BaselineKind::RankNet, BaselineKind::NcdmR, BaselineKind::Mupp2pl}) {
    if (text == to_string(k)) return k;
  }
  throw ValidationError("unknown baseline '" + std::string(text) + "'");
}

std::vector<double> random_predict(Rng& rng, const ItemBlock& block) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> out(block.items.size());
  for (double& v : out) v = unit(rng);
  return out;
}

Array random_abilities(std::size_t participants, std::size_t dimensions, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Array out(Shape{participants, dimensions});
  for (double& v : out.values()) v = unit(rng);
  return out;
}

nlohmann::json MlpConfig::to_json() const {
  return {{"latent_dim", latent_dim}, {"hidden1", hidden1}, {"hidden2", hidden2}};
}

MlpConfig MlpConfig::from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.hidden1 = j.value("hidden1", c.hidden1);
  c.hidden2 = j.value("hidden2", c.hidden2);
  return c;
}

namespace {

void add_head(ParameterSet& params, std::size_t input, const MlpConfig& c, Rng& rng) {
  params.add("W_1", xavier_uniform(input, c.hidden1, rng));
  params.add("b_1", Array(Shape{c.hidden1}));
  params.add("W_2", xavier_uniform(c.hidden1, c.hidden2, rng));
  params.add("b_2", Array(Shape{c.hidden2}));
  params.add("W_3", xavier_uniform(c.hidden2, 1, rng));
  params.add("b_3", Array(Shape{1}));
}

NodeId head(DiffGraph& g, NodeId x, bool relu_hidden) {
  const auto act = [&](NodeId v) { return relu_hidden ? g.relu(v) : g.sigmoid(v); };
  const NodeId h1 = act(g.affine(x, g.parameter("W_1"), g.parameter("b_1")));
  const NodeId h2 = act(g.affine(h1, g.parameter("W_2"), g.parameter("b_2")));
  return g.sigmoid(g.affine(h2, g.parameter("W_3"), g.parameter("b_3")));
}

void check_query(const ModelShape& s, const ScoreQuery& q) {
  if (q.participant >= s.participants) throw ValidationError("participant id " + std::to_string(q.participant) + " out of range");
  if (q.item >= s.items) throw ValidationError("item id " + std::to_string(q.item) + " out of range");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

MfModel::MfModel(MlpConfig config, ModelShape shape, Rng& rng) : MfModel(config, std::move(shape), rng, false) {}

MfModel::MfModel(MlpConfig config, ModelShape shape, Rng& rng, bool relu_hidden)
    : RankingModel(std::move(shape)), config_(config), relu_hidden_(relu_hidden) {
  const auto& s = this->shape();
  const std::size_t w = config_.latent_dim;
  params_.add("h_s", xavier_uniform(Shape{s.participants, w}, w, s.participants, rng), UpdateMode::SparseRows);
  params_.add("h_e", xavier_uniform(Shape{s.items, w}, w, s.items, rng), UpdateMode::SparseRows);
  add_head(params_, w, config_, rng);
}

NodeId MfModel::build_scores(DiffGraph& g, std::span<const ScoreQuery> queries) const {
  std::vector<std::size_t> people;
  std::vector<std::size_t> items;
  for (const auto& q : queries) {
    check_query(shape(), q);
    people.push_back(q.participant);
    items.push_back(q.item);
  }
  const NodeId hs = g.gather_rows(g.parameter("h_s"), std::move(people));
  const NodeId he = g.gather_rows(g.parameter("h_e"), std::move(items));
  return head(g, g.mul(he, hs), relu_hidden_);
}

RankNetModel::RankNetModel(MlpConfig config, ModelShape shape, Rng& rng) : MfModel(config, std::move(shape), rng, true) {}

NcdmRModel::NcdmRModel(MlpConfig config, ModelShape shape, Rng& rng)
    : RankingModel(std::move(shape)), config_(config) {
  const auto& s = this->shape();
  const std::size_t k = s.dimensions;
  params_.add("h_s", xavier_uniform(Shape{s.participants, k}, k, s.participants, rng), UpdateMode::SparseRows);
  params_.add("h_diff", xavier_uniform(Shape{s.items, k}, k, s.items, rng), UpdateMode::SparseRows);
  params_.add("h_disc", xavier_uniform(Shape{s.items, 1}, 1, s.items, rng), UpdateMode::SparseRows);
  add_head(params_, k, config_, rng);
  after_step();
}

NodeId NcdmRModel::build_scores(DiffGraph& g, std::span<const ScoreQuery> queries) const {
  const std::size_t k = shape().dimensions;
  std::vector<std::size_t> people;
  std::vector<std::size_t> items;
  Array mask(Shape{queries.size(), k});
  for (std::size_t r = 0; r < queries.size(); ++r) {
    check_query(shape(), queries[r]);
    people.push_back(queries[r].participant);
    items.push_back(queries[r].item);
    mask.at(r, shape().item_dims[queries[r].item]) = 1.0;
  }
  const NodeId prof = g.sigmoid(g.gather_rows(g.parameter("h_s"), std::move(people)));
  const NodeId diff = g.sigmoid(g.gather_rows(g.parameter("h_diff"), items));
  const NodeId disc = g.sigmoid(g.gather_rows(g.parameter("h_disc"), std::move(items)));
  const NodeId masked = g.mul(g.constant(std::move(mask)), g.sub(prof, diff));
  return head(g, g.scale_rows(masked, disc), false);
}

void NcdmRModel::after_step() {
  for (const char* name : {"W_1", "W_2", "W_3"}) clip_nonnegative_inplace(params_[name]);
}

std::optional<Array> NcdmRModel::abilities() const {
  Array out = params_["h_s"];
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Mupp2plModel::Mupp2plModel(ModelShape shape, Rng& rng) : RankingModel(std::move(shape)) {
  const auto& s = this->shape();
  // theta is stored one trait per row so a single gather selects theta_{n, q_i}.
  std::normal_distribution<double> jitter(0.0, 0.01);
  Array theta(Shape{s.participants * s.dimensions, 1});
  for (double& v : theta.values()) v = jitter(rng);
  params_.add("theta", std::move(theta), UpdateMode::SparseRows);
  // softplus(0.5413) = 1
  params_.add("a_raw", Array::filled(Shape{s.items, 1}, 0.5413248546129181), UpdateMode::SparseRows);
  params_.add("b", Array(Shape{s.items, 1}), UpdateMode::SparseRows);
}

NodeId Mupp2plModel::build_scores(DiffGraph& g, std::span<const ScoreQuery> queries) const {
  std::vector<std::size_t> trait_rows;
  std::vector<std::size_t> items;
  for (const auto& q : queries) {
    check_query(shape(), q);
    trait_rows.push_back(q.participant * shape().dimensions + shape().item_dims[q.item]);
    items.push_back(q.item);
  }
  const NodeId theta = g.gather_rows(g.parameter("theta"), std::move(trait_rows));
  const NodeId a = g.softplus(g.gather_rows(g.parameter("a_raw"), items));
  const NodeId b = g.gather_rows(g.parameter("b"), std::move(items));
  return g.mul(a, g.add(theta, b));
}

std::optional<Array> Mupp2plModel::abilities() const {
  return params_["theta"].reshaped(Shape{shape().participants, shape().dimensions});
}

double Mupp2plModel::discrimination(std::size_t item) const { return softplus(params_["a_raw"][item]); }
double Mupp2plModel::difficulty(std::size_t item) const { return params_["b"][item]; }
double Mupp2plModel::trait(std::size_t participant, std::size_t dim) const {
  return params_["theta"][participant * shape().dimensions + dim];
}

double Mupp2plModel::predict_pair(std::size_t participant, std::size_t item_i, std::size_t item_j) const {
  return mupp_2pl_probability(trait(participant, shape().item_dims.at(item_i)), trait(participant, shape().item_dims.at(item_j)),
                              discrimination(item_i), discrimination(item_j), difficulty(item_i), difficulty(item_j));
}

double mupp_2pl_probability(double theta_i, double theta_j, double a_i, double a_j, double b_i, double b_j) {
  const double z = a_i * theta_i - a_j * theta_j + a_i * b_i - a_j * b_j;
  return 1.0 / (1.0 + std::exp(-z));
}

std::size_t pick2_pair_count(const RankVector& ranks) { return distinct_rank_pairs(ranks); }

std::unique_ptr<RankingModel> make_model(std::string_view kind, const nlohmann::json& config, const ModelShape& shape,
                                         Rng& rng) {
  if (kind == "fcncd") return std::make_unique<FcncdModel>(FcncdConfig::from_json(config), shape, rng);
  if (kind == "mf") return std::make_unique<MfModel>(MlpConfig::from_json(config), shape, rng);
  if (kind == "ranknet") return std::make_unique<RankNetModel>(MlpConfig::from_json(config), shape, rng);
  if (kind == "ncdm-r") return std::make_unique<NcdmRModel>(MlpConfig::from_json(config), shape, rng);
  if (kind == "mupp-2pl") return std::make_unique<Mupp2plModel>(shape, rng);
  throw ValidationError("unknown model kind '" + std::string(kind) + "'");
}

}  // namespace fcncd
