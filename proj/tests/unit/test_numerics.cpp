#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "fcncd/array.hpp"
#include "fcncd/diff_graph.hpp"
#include "fcncd/error.hpp"
#include "fcncd/gradcheck.hpp"
#include "fcncd/optim.hpp"

using namespace fcncd;

namespace {

Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(std::move(shape));
  for (double& v : a.values()) v = u(rng);
  return a;
}

// Central-difference check of every entry of every parameter.
double max_fd_error(const DiffGraph& g, ParameterSet& params, double h = 1e-5) {
  const GradientResult res = forward_backward(g, Bindings(params));
  double worst = 0.0;
  for (auto& p : params.entries()) {
    const Array& grad = res.gradients.at(p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = evaluate(g, Bindings(params)).item();
      p.value[i] = saved - h;
      const double down = evaluate(g, Bindings(params)).item();
      p.value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(grad[i]));
      worst = std::max(worst, scale < 1e-6 ? std::abs(numeric - grad[i]) : relative_error(numeric, grad[i]));
    }
  }
  return worst;
}

// Reduces an R x C node to a scalar with random weights so every entry matters.
NodeId weighted_sum(DiffGraph& g, NodeId x, Shape shape, Rng& rng) {
  return g.sum(g.mul(x, g.constant(random_array(std::move(shape), rng))));
}

}  // namespace

TEST_CASE("array construction validates size and finiteness") {
  CHECK(Array(Shape{2, 3}).size() == 6);
  CHECK_THROWS_AS(Array(Shape{2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Array(Shape{1}, {std::numeric_limits<double>::quiet_NaN()}), ValidationError);
  CHECK_THROWS_AS(Array(Shape{1}, {std::numeric_limits<double>::infinity()}), ValidationError);
  const Array t(Shape{2, 3, 4});
  CHECK(t.rows() == 6);
  CHECK(t.cols() == 4);
  CHECK(Array::scalar(2.5).item() == 2.5);
}

TEST_CASE("xavier_uniform respects the Glorot bound") {
  Rng rng(1);
  const Array a = xavier_uniform(Shape{10000}, 1, 1, rng);
  const double g = std::sqrt(3.0);
  for (double v : a.values()) CHECK((v >= -g && v <= g));
  CHECK(xavier_uniform(3, 5, rng).shape() == Shape{5, 3});
  CHECK_THROWS_AS(xavier_uniform(0, 4, rng), ValidationError);
  CHECK_THROWS_AS(xavier_uniform(4, 0, rng), ValidationError);
}

TEST_CASE("xavier_uniform is seed deterministic and centred") {
  Rng a(42), b(42);
  CHECK(xavier_uniform(7, 9, a) == xavier_uniform(7, 9, b));
  Rng rng(3);
  const Array big = xavier_uniform(Shape{100000}, 600, 600, rng);
  double mean = 0.0;
  for (double v : big.values()) mean += v;
  mean /= static_cast<double>(big.size());
  CHECK(std::abs(mean) < 0.01);
  // Uniform(-g, g) has variance g^2 / 3 = 2 / (fan_in + fan_out).
  double var = 0.0;
  for (double v : big.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(big.size());
  CHECK(var == doctest::Approx(2.0 / 1200.0).epsilon(0.02));
}

TEST_CASE("sigmoid at zero") {
  DiffGraph g;
  g.set_output(g.sum(g.sigmoid(g.parameter("x"))));
  ParameterSet p;
  p.add("x", Array(Shape{1}, {0.0}));
  const auto res = forward_backward(g, Bindings(p));
  CHECK(res.value == 0.5);
  CHECK(res.gradients.at("x")[0] == 0.25);
}

TEST_CASE("mean of an elementwise product") {
  DiffGraph g;
  g.set_output(g.mean(g.mul(g.parameter("a"), g.parameter("b"))));
  ParameterSet p;
  p.add("a", Array(Shape{2}, {1.0, 2.0}));
  p.add("b", Array(Shape{2}, {3.0, 4.0}));
  const auto res = forward_backward(g, Bindings(p));
  CHECK(res.value == doctest::Approx(5.5).epsilon(1e-15));
  CHECK(res.gradients.at("a")[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(res.gradients.at("a")[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(res.gradients.at("b")[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("evaluation leaves bound parameters untouched") {
  DiffGraph g;
  g.set_output(g.sum(g.exp(g.parameter("w"))));
  ParameterSet p;
  p.add("w", Array(Shape{3}, {0.1, -0.2, 0.3}));
  const Array before = p["w"];
  forward_backward(g, Bindings(p));
  CHECK(p["w"] == before);
}

TEST_CASE("graph errors") {
  SUBCASE("affine shape mismatch") {
    DiffGraph g;
    g.set_output(g.sum(g.affine(g.parameter("x"), g.parameter("W"), g.parameter("b"))));
    ParameterSet p;
    p.add("x", Array(Shape{2, 3}));
    p.add("W", Array(Shape{4, 2}));
    p.add("b", Array(Shape{4}));
    CHECK_THROWS_AS(evaluate(g, Bindings(p)), ShapeError);
  }
  SUBCASE("non-scalar output cannot be differentiated") {
    DiffGraph g;
    g.set_output(g.sigmoid(g.parameter("x")));
    ParameterSet p;
    p.add("x", Array(Shape{3}));
    CHECK_THROWS_AS(forward_backward(g, Bindings(p)), ShapeError);
  }
  SUBCASE("overflow is rejected after the op") {
    DiffGraph g;
    g.set_output(g.sum(g.exp(g.parameter("x"))));
    ParameterSet p;
    p.add("x", Array(Shape{1}, {1000.0}));
    CHECK_THROWS_AS(evaluate(g, Bindings(p)), ValidationError);
  }
  SUBCASE("unbound parameter") {
    DiffGraph g;
    g.set_output(g.sum(g.parameter("missing")));
    CHECK_THROWS(evaluate(g, Bindings{}));
  }
}

TEST_CASE("every primitive matches central differences") {
  Rng rng(11);
  using Build = std::function<NodeId(DiffGraph&, Rng&)>;
  struct Case {
    const char* name;
    std::vector<std::pair<std::string, Shape>> params;
    Build build;
  };
  const std::vector<Case> cases = {
      {"affine", {{"x", {5, 3}}, {"W", {4, 3}}, {"b", {4}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.affine(g.parameter("x"), g.parameter("W"), g.parameter("b")), {5, 4}, r); }},
      {"gather", {{"T", {6, 3}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.gather_rows(g.parameter("T"), {0, 4, 4, 2}), {4, 3}, r); }},
      {"add", {{"a", {3, 4}}, {"b", {3, 4}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.add(g.parameter("a"), g.parameter("b")), {3, 4}, r); }},
      {"sub", {{"a", {3, 4}}, {"b", {3, 4}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.sub(g.parameter("a"), g.parameter("b")), {3, 4}, r); }},
      {"mul", {{"a", {3, 4}}, {"b", {3, 4}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.mul(g.parameter("a"), g.parameter("b")), {3, 4}, r); }},
      {"scale_rows", {{"x", {4, 3}}, {"f", {4, 1}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.scale_rows(g.parameter("x"), g.parameter("f")), {4, 3}, r); }},
      {"sigmoid", {{"x", {4, 4}}}, [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.sigmoid(g.parameter("x")), {4, 4}, r); }},
      {"relu", {{"x", {4, 4}}}, [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.relu(g.parameter("x")), {4, 4}, r); }},
      {"softplus", {{"x", {4, 4}}}, [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.softplus(g.parameter("x")), {4, 4}, r); }},
      {"log", {{"x", {4, 4}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.log(g.softplus(g.parameter("x"))), {4, 4}, r); }},
      {"exp", {{"x", {4, 4}}}, [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.exp(g.parameter("x")), {4, 4}, r); }},
      {"negate", {{"x", {2, 5}}}, [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.negate(g.parameter("x")), {2, 5}, r); }},
      {"scale", {{"x", {2, 5}}}, [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.scale(g.parameter("x"), -2.5), {2, 5}, r); }},
      {"mean", {{"x", {3, 5}}}, [](DiffGraph& g, Rng&) { return g.mean(g.exp(g.parameter("x"))); }},
      {"concat", {{"a", {3, 2}}, {"b", {3, 4}}},
       [](DiffGraph& g, Rng& r) { return weighted_sum(g, g.concat_cols({g.parameter("a"), g.parameter("b")}), {3, 6}, r); }},
      {"group_logsumexp", {{"x", {7, 1}}},
       [](DiffGraph& g, Rng& r) {
         return weighted_sum(g, g.group_logsumexp(g.parameter("x"), {{0, 1, 2}, {3, 4}, {5}, {6, 0}}), {4, 1}, r);
       }},
  };
  for (const auto& c : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      DiffGraph g;
      ParameterSet params;
      for (const auto& [name, shape] : c.params) params.add(name, random_array(shape, rng, -2.0, 2.0));
      g.set_output(c.build(g, rng));
      INFO(c.name);
      CHECK(max_fd_error(g, params) < 1e-4);
    }
  }
}

TEST_CASE("random three-layer network matches central differences") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterSet p;
    p.add("x", random_array({4, 3}, rng));
    p.add("W1", random_array({5, 3}, rng));
    p.add("b1", random_array({5}, rng));
    p.add("W2", random_array({4, 5}, rng));
    p.add("b2", random_array({4}, rng));
    p.add("W3", random_array({1, 4}, rng));
    p.add("b3", random_array({1}, rng));
    DiffGraph g;
    NodeId h = g.sigmoid(g.affine(g.parameter("x"), g.parameter("W1"), g.parameter("b1")));
    h = g.softplus(g.affine(h, g.parameter("W2"), g.parameter("b2")));
    h = g.sigmoid(g.affine(h, g.parameter("W3"), g.parameter("b3")));
    g.set_output(g.mean(g.log(h)));
    CHECK(max_fd_error(g, p) < 1e-4);
  }
}

TEST_CASE("sparse gradient buffer matches the dense result") {
  Rng rng(9);
  ParameterSet p;
  p.add("T", random_array({8, 3}, rng), UpdateMode::SparseRows);
  p.add("w", random_array({1, 3}, rng));
  DiffGraph g;
  const NodeId rows = g.gather_rows(g.parameter("T"), {1, 5, 1});
  g.set_output(g.sum(g.sigmoid(g.affine(rows, g.parameter("w"), g.constant(Array(Shape{1}))))));
  const GradientResult dense = forward_backward(g, Bindings(p));
  GradientBuffer buf(p);
  buf.zero();
  const double v = forward_backward(g, Bindings(p), buf);
  CHECK(v == dense.value);
  CHECK(buf.slot("T").grad == dense.gradients.at("T"));
  CHECK(buf.slot("T").touched_rows.size() == 2);
  CHECK(buf.slot("w").grad == dense.gradients.at("w"));
}

TEST_CASE("adamw with zero gradient applies decoupled decay only") {
  std::map<std::string, Array> params{{"w", Array(Shape{3}, {1.0, -2.0, 0.5})}};
  std::map<std::string, Array> grads{{"w", Array(Shape{3})}};
  ParameterSet ps;
  ps.add("w", params.at("w"));
  AdamwState state = make_adamw_state(ps, {.learning_rate = 0.1, .weight_decay = 0.01});
  const auto out = adamw_step(params, grads, state);
  for (std::size_t i = 0; i < 3; ++i) CHECK(out.at("w")[i] == doctest::Approx(params.at("w")[i] * (1 - 0.1 * 0.01)).epsilon(1e-14));
  CHECK(state.step == 1);
}

TEST_CASE("adamw first step moves by about the learning rate") {
  for (double g : {0.3, -4.0, 1e-3}) {
    std::map<std::string, Array> params{{"w", Array::scalar(1.0)}};
    std::map<std::string, Array> grads{{"w", Array::scalar(g)}};
    ParameterSet ps;
    ps.add("w", params.at("w"));
    AdamwState state = make_adamw_state(ps, {.learning_rate = 0.01, .weight_decay = 0.0});
    const auto out = adamw_step(params, grads, state);
    const double expected = 1.0 - 0.01 * g / (std::abs(g) + 1e-8);
    CHECK(out.at("w").item() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("adamw is pure given its state") {
  std::map<std::string, Array> params{{"w", Array(Shape{2}, {0.3, 0.7})}};
  std::map<std::string, Array> grads{{"w", Array(Shape{2}, {0.1, -0.2})}};
  ParameterSet ps;
  ps.add("w", params.at("w"));
  AdamwState s1 = make_adamw_state(ps);
  AdamwState s2 = make_adamw_state(ps);
  CHECK(adamw_step(params, grads, s1) == adamw_step(params, grads, s2));
  CHECK(s1.first_moment == s2.first_moment);
  CHECK(s1.second_moment == s2.second_moment);
}

TEST_CASE("adamw identity and errors") {
  std::map<std::string, Array> params{{"w", Array(Shape{2}, {0.3, 0.7})}};
  ParameterSet ps;
  ps.add("w", params.at("w"));
  AdamwState state = make_adamw_state(ps, {.weight_decay = 0.0});
  auto out = adamw_step(params, {{"w", Array(Shape{2})}}, state);
  CHECK(out == params);
  out = adamw_step(out, {{"w", Array(Shape{2})}}, state);
  CHECK(state.step == 2);
  CHECK_THROWS_AS(adamw_step(params, {}, state), ValidationError);
}

TEST_CASE("sparse adamw only moves touched rows") {
  Rng rng(2);
  ParameterSet p;
  p.add("T", random_array({5, 2}, rng), UpdateMode::SparseRows);
  const Array before = p["T"];
  DiffGraph g;
  g.set_output(g.sum(g.gather_rows(g.parameter("T"), {3})));
  GradientBuffer buf(p);
  AdamwState state = make_adamw_state(p);
  buf.zero();
  forward_backward(g, Bindings(p), buf);
  adamw_step(p, buf, state);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      if (r == 3) CHECK(p["T"].at(r, c) != before.at(r, c));
      else CHECK(p["T"].at(r, c) == before.at(r, c));
    }
  }
}

TEST_CASE("clip_nonnegative") {
  const Array x(Shape{3}, {-1.0, 2.0, 0.0});
  CHECK(clip_nonnegative(x) == Array(Shape{3}, {0.0, 2.0, 0.0}));
  const Array pos(Shape{2}, {0.5, 3.0});
  CHECK(clip_nonnegative(pos) == pos);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Array r = random_array({4, 4}, rng);
    const Array once = clip_nonnegative(r);
    CHECK(clip_nonnegative(once) == once);
    CHECK(once.shape() == r.shape());
  }
}
