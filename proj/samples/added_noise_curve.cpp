// Added noise of the electromechanical amplifier versus the pump ratio.
#include "tea/protocol.hpp"

#include <cstdio>

int main() {
  using namespace tea;
  const DeviceParams dev = default_device();
  const double gm = hz(181e3);
  std::printf("%8s %12s %12s\n", "ratio", "X- (dB)", "X+ (dB)");
  for (double r : log_grid(1.1, 4.0, 12))
    std::printf("%8.3f %12.3f %12.3f\n", r, to_db(ideal_added_noise(r, gm, dev, Quadrature::minus)),
                to_db(ideal_added_noise(r, gm, dev, Quadrature::plus)));
  const CurveMinimum m = minimize_curve([&](double r) { return ideal_added_noise(r, gm, dev, Quadrature::minus); }, 1.1, 4.0);
  std::printf("minimum %.2f dB at ratio %.3f, eta_q = %.3f\n", to_db(m.value), m.x, quantum_efficiency(m.value));
}
