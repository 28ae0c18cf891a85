#include "quantgrid/gradcheck.hpp"

#include <cmath>

namespace quantgrid {

GradCheckReport finite_diff_check(const LossBuilder& loss, std::span<Parameter* const> params, double step,
                                  double floor) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  auto evaluate = [&loss] {
    Graph g;
    return loss(g).value().item();
  };

  GradCheckReport report;
  for (Parameter* p : params) {
    for (Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = evaluate();
      p->value[i] = saved - step;
      const double down = evaluate();
      p->value[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double err = std::abs(analytic - numeric) / (std::abs(analytic) + floor);
      ++report.coordinates;
      if (!(err <= report.max_relative_error)) {
        report.max_relative_error = err;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace quantgrid
