#include "slegff/quad.hpp"

namespace slegff {

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol) {
  return integrate_de(f, a, b, rel_tol);
}

}  // namespace slegff
