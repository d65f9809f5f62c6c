#include "fcncd/fcncd_model.hpp"

#include <cmath>

#include "fcncd/error.hpp"
#include "fcncd/optim.hpp"

namespace fcncd {
namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// out = sigmoid(W v + b) for W of shape (rows, v.size()).
std::vector<double> dense_sigmoid(const Array& w, const Array& b, std::span<const double> v) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  if (cols != v.size()) throw ShapeError("dense layer width mismatch");
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * v[c];
    out[r] = sigmoid(acc);
  }
  return out;
}

}  // namespace

std::string_view to_string(AbilitySummary summary) {
  return summary == AbilitySummary::Embedding ? "embedding" : "mapped";
}

AbilitySummary parse_ability_summary(std::string_view text) {
  if (text == "embedding") return AbilitySummary::Embedding;
  if (text == "mapped") return AbilitySummary::Mapped;
  throw ValidationError("unknown ability summary '" + std::string(text) + "'");
}

nlohmann::json FcncdConfig::to_json() const {
  return {{"embedding_dim", embedding_dim}, {"mapping_dim", mapping_dim},      {"head_dim", head_dim},
          {"skip_mapping", skip_mapping},   {"no_monotone", no_monotone}, {"ability", std::string(to_string(ability))}};
}

FcncdConfig FcncdConfig::from_json(const nlohmann::json& j) {
  FcncdConfig c;
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.mapping_dim = j.value("mapping_dim", c.mapping_dim);
  c.head_dim = j.value("head_dim", c.head_dim);
  c.skip_mapping = j.value("skip_mapping", c.skip_mapping);
  c.no_monotone = j.value("no_monotone", c.no_monotone);
  c.ability = parse_ability_summary(j.value("ability", std::string(to_string(c.ability))));
  return c;
}

std::string_view to_string(FcncdVariant variant) {
  switch (variant) {
    case FcncdVariant::Full: return "full";
    case FcncdVariant::Eb: return "eb";
    case FcncdVariant::Bpr: return "bpr";
    case FcncdVariant::List: return "list";
    case FcncdVariant::Mo: return "mo";
  }
  return "?";
}

FcncdVariant parse_fcncd_variant(std::string_view text) {
  for (auto v : {FcncdVariant::Full, FcncdVariant::Eb, FcncdVariant::Bpr, FcncdVariant::List, FcncdVariant::Mo}) {
    if (text == to_string(v)) return v;
  }
  throw ValidationError("unknown FCNCD variant '" + std::string(text) + "' (full, eb, bpr, list, mo)");
}

FcncdConfig apply_variant(FcncdConfig config, FcncdVariant variant) {
  if (variant == FcncdVariant::Eb) config.skip_mapping = true;
  if (variant == FcncdVariant::Mo) config.no_monotone = true;
  return config;
}

LossKind loss_for_variant(FcncdVariant variant) {
  switch (variant) {
    case FcncdVariant::Bpr: return LossKind::OriginalBpr;
    case FcncdVariant::List: return LossKind::List;
    default: return LossKind::WeightedBpr;
  }
}

FcncdModel::FcncdModel(FcncdConfig config, ModelShape shape, Rng& rng)
    : RankingModel(std::move(shape)), config_(config) {
  const auto& s = this->shape();
  if (config_.embedding_dim == 0 || config_.mapping_dim == 0 || config_.head_dim == 0) {
    throw ValidationError("FCNCD widths must be >= 1");
  }
  if (s.item_dims.size() != s.items) throw ValidationError("item dimension map does not cover every item");
  const std::size_t d = config_.embedding_dim;
  const std::size_t h1 = config_.mapping_dim;
  const std::size_t h2 = config_.head_dim;

  // Embedding tables: Glorot over (rows, d) with the table's row count as fan_out.
  params_.add("W_s", xavier_uniform(Shape{s.participants, s.dimensions, d}, d, s.participants * s.dimensions, rng),
              UpdateMode::SparseRows);
  params_.add("W_diff", xavier_uniform(Shape{s.items, d}, d, s.items, rng), UpdateMode::SparseRows);
  params_.add("W_disc", xavier_uniform(Shape{s.items, d}, d, s.items, rng), UpdateMode::SparseRows);
  if (!config_.skip_mapping) {
    for (const char* k : {"1", "2", "3"}) {
      params_.add(std::string("W_") + k, xavier_uniform(d, h1, rng));
      params_.add(std::string("b_") + k, Array(Shape{h1}));
    }
  }
  params_.add("W_4", xavier_uniform(interaction_dim(), h2, rng));
  params_.add("b_4", Array(Shape{h2}));
  params_.add("W_5", xavier_uniform(h2, 1, rng));
  params_.add("b_5", Array(Shape{1}));
  after_step();
}

void FcncdModel::after_step() {
  if (config_.no_monotone) return;
  clip_nonnegative_inplace(params_["W_4"]);
  clip_nonnegative_inplace(params_["W_5"]);
}

std::size_t FcncdModel::proficiency_row(std::size_t participant, std::size_t dim) const {
  if (participant >= shape().participants) throw ValidationError("participant id " + std::to_string(participant) + " out of range");
  return participant * shape().dimensions + dim;
}

NodeId FcncdModel::build_scores(DiffGraph& g, std::span<const ScoreQuery> queries) const {
  std::vector<std::size_t> prof_rows;
  std::vector<std::size_t> item_rows;
  prof_rows.reserve(queries.size());
  item_rows.reserve(queries.size());
  for (const auto& q : queries) {
    if (q.item >= shape().items) throw ValidationError("item id " + std::to_string(q.item) + " out of range");
    prof_rows.push_back(proficiency_row(q.participant, shape().item_dims[q.item]));
    item_rows.push_back(q.item);
  }
  return build_from_rows(g, std::move(prof_rows), std::move(item_rows));
}

NodeId FcncdModel::build_from_rows(DiffGraph& g, std::vector<std::size_t> prof_rows,
                                   std::vector<std::size_t> item_rows) const {
  NodeId prof = g.gather_rows(g.parameter("W_s"), std::move(prof_rows));
  NodeId diff = g.gather_rows(g.parameter("W_diff"), item_rows);
  NodeId disc = g.gather_rows(g.parameter("W_disc"), std::move(item_rows));
  if (!config_.skip_mapping) {
    prof = g.sigmoid(g.affine(prof, g.parameter("W_1"), g.parameter("b_1")));
    diff = g.sigmoid(g.affine(diff, g.parameter("W_2"), g.parameter("b_2")));
    disc = g.sigmoid(g.affine(disc, g.parameter("W_3"), g.parameter("b_3")));
  }
  const NodeId x = g.mul(disc, g.sub(prof, diff));
  const NodeId f1 = g.sigmoid(g.affine(x, g.parameter("W_4"), g.parameter("b_4")));
  return g.sigmoid(g.affine(f1, g.parameter("W_5"), g.parameter("b_5")));
}

FcncdModel::Features FcncdModel::features(std::size_t participant, std::size_t item) const {
  if (item >= shape().items) throw ValidationError("item id " + std::to_string(item) + " out of range");
  const std::size_t d = config_.embedding_dim;
  const std::size_t row = proficiency_row(participant, shape().item_dims[item]);
  const Array& ws = params_["W_s"];
  const Array& wdiff = params_["W_diff"];
  const Array& wdisc = params_["W_disc"];
  std::span<const double> s(ws.data() + row * d, d);
  std::span<const double> e_diff(wdiff.data() + item * d, d);
  std::span<const double> e_disc(wdisc.data() + item * d, d);
  if (config_.skip_mapping) {
    return {{s.begin(), s.end()}, {e_diff.begin(), e_diff.end()}, {e_disc.begin(), e_disc.end()}};
  }
  return {dense_sigmoid(params_["W_1"], params_["b_1"], s), dense_sigmoid(params_["W_2"], params_["b_2"], e_diff),
          dense_sigmoid(params_["W_3"], params_["b_3"], e_disc)};
}

double FcncdModel::head_output(std::span<const double> prof, std::span<const double> diff,
                               std::span<const double> disc) const {
  const std::size_t w = interaction_dim();
  if (prof.size() != w || diff.size() != w || disc.size() != w) throw ShapeError("interaction inputs must have width " + std::to_string(w));
  std::vector<double> x(w);
  for (std::size_t i = 0; i < w; ++i) x[i] = disc[i] * (prof[i] - diff[i]);
  const auto f1 = dense_sigmoid(params_["W_4"], params_["b_4"], x);
  return dense_sigmoid(params_["W_5"], params_["b_5"], f1)[0];
}

double FcncdModel::forward_with_dim(std::size_t participant, std::size_t item, std::size_t dim) const {
  if (item >= shape().items) throw ValidationError("item id " + std::to_string(item) + " out of range");
  if (dim >= shape().dimensions) throw ValidationError("dimension out of range");
  DiffGraph g;
  g.set_output(build_from_rows(g, {proficiency_row(participant, dim)}, {item}));
  return evaluate(g, Bindings(params_)).item();
}

double FcncdModel::forward(std::size_t participant, std::size_t item) const {
  if (item >= shape().items) throw ValidationError("item id " + std::to_string(item) + " out of range");
  return forward_with_dim(participant, item, shape().item_dims[item]);
}

double FcncdModel::forward(std::size_t participant, std::size_t item, std::span<const std::uint8_t> q_row) const {
  if (q_row.size() != shape().dimensions) throw ShapeError("Q-row must have K entries");
  return forward_with_dim(participant, item, one_hot_index(q_row));
}

std::vector<double> FcncdModel::ability_profile(std::size_t participant) const {
  const std::size_t k_count = shape().dimensions;
  const std::size_t d = config_.embedding_dim;
  const Array& ws = params_["W_s"];
  std::vector<double> out(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    std::span<const double> s(ws.data() + proficiency_row(participant, k) * d, d);
    double acc = 0.0;
    if (config_.ability == AbilitySummary::Mapped && !config_.skip_mapping) {
      const auto h2 = dense_sigmoid(params_["W_1"], params_["b_1"], s);
      for (double v : h2) acc += v;
      out[k] = acc / static_cast<double>(h2.size());
    } else {
      for (double v : s) acc += sigmoid(v);
      out[k] = acc / static_cast<double>(d);
    }
  }
  return out;
}

std::optional<Array> FcncdModel::abilities() const {
  const std::size_t n = shape().participants;
  const std::size_t k = shape().dimensions;
  Array out(Shape{n, k});
  for (std::size_t p = 0; p < n; ++p) {
    const auto row = ability_profile(p);
    std::copy(row.begin(), row.end(), out.data() + p * k);
  }
  return out;
}

}  // namespace fcncd
