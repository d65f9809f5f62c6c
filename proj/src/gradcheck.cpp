#include "fcncd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcncd/dataset_io.hpp"

namespace fcncd {

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

GradCheckResult check_gradients(RankingModel& model, const ResponseDataset& ds, const PairLossSpec& spec, Rng& rng,
                                const GradCheckOptions& opt) {
  std::vector<std::size_t> all(ds.records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const RecordBatch batch = batch_for(ds, all);
  DiffGraph graph;
  graph.set_output(add_batch_loss(graph, model.build_scores(graph, batch.queries), batch.slices, spec));

  ParameterSet& params = model.parameters();
  const GradientResult analytic = forward_backward(graph, Bindings(params));
  const auto loss_at = [&] { return evaluate(graph, Bindings(params)).item(); };

  GradCheckResult result;
  for (auto& p : params.entries()) {
    const Array& grad = analytic.gradients.at(p.name);
    const std::size_t cols = p.value.cols();

    // Candidate entries: for tables, the rows the batch reads plus a few others.
    std::vector<std::size_t> candidates;
    if (p.mode == UpdateMode::SparseRows) {
      for (std::size_t r = 0; r < p.value.rows(); ++r) {
        bool hit = false;
        for (std::size_t c = 0; c < cols && !hit; ++c) hit = grad.at(r, c) != 0.0;
        if (hit) for (std::size_t c = 0; c < cols; ++c) candidates.push_back(r * cols + c);
      }
    }
    std::uniform_int_distribution<std::size_t> any(0, p.value.size() - 1);
    std::vector<std::size_t> picks;
    for (std::size_t i = 0; i < opt.entries_per_parameter; ++i) {
      if (!candidates.empty() && i + 1 < opt.entries_per_parameter) {
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        picks.push_back(candidates[pick(rng)]);
      } else {
        picks.push_back(any(rng));
      }
    }

    for (std::size_t idx : picks) {
      double& x = p.value[idx];
      const double saved = x;
      x = saved + opt.step;
      const double up = loss_at();
      x = saved - opt.step;
      const double down = loss_at();
      x = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = grad[idx];
      ++result.checked;
      if (std::max(std::abs(a), std::abs(numeric)) < opt.magnitude_floor) {
        if (std::abs(a - numeric) > opt.absolute_tolerance) ++result.failures_over_floor;
        continue;
      }
      const double err = relative_error(a, numeric);
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_entry = p.name + "[" + std::to_string(idx) + "] analytic " + format_real(a) + " numeric " +
                             format_real(numeric);
      }
    }
  }
  return result;
}

}  // namespace fcncd
