#include "arac/grad_check.hpp"

#include <cmath>

#include "arac/error.hpp"

namespace arac::numerics {

namespace {

double eval_scalar(const std::function<Var(Tape&)>& f) {
  Tape t;
  Var out = f(t);
  return t.value(out).value();
}

}  // namespace

double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Tensor*>& params,
                  double h) {
  if (!(h > 0.0)) throw ContractViolation("grad_check: step must be positive");

  Tape t;
  Var out = f(t);
  t.backward(out);

  double worst = 0.0;
  for (Tensor* p : params) {
    const Tensor ad = t.grad_of(*p);
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double saved = (*p)[i];
      (*p)[i] = saved + h;
      const double fp = eval_scalar(f);
      (*p)[i] = saved - h;
      const double fm = eval_scalar(f);
      (*p)[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::fabs(ad[i] - fd) / std::max(1.0, std::fabs(fd));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace arac::numerics
