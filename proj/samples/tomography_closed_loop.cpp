// Sample homodyne-like marginals of a squeezed thermal state and reconstruct it.
#include "tea/tomography.hpp"

#include <cstdio>
#include <utility>

int main() {
  using namespace tea;
  const SqueezeParams truth{0.661, 0.44, 1.481};
  const GaussianState state(Vec2::Zero(), squeeze_to_covariance(truth));
  const MarginalDataset data = sample_marginals(state, angle_grid(16), 8750, 0.88, 42);

  TomographyOptions opt;
  opt.seed = 43;
  const ReconstructionResult r = reconstruct(data, opt);
  const std::pair<const char*, double> rows[] = {
      {"r", r.squeeze.r}, {"n_sq", r.squeeze.n_sq}, {"phi", r.squeeze.phi}, {"purity", r.purity}};
  for (const auto& [k, v] : rows) std::printf("%-7s %.4f  [%.4f, %.4f]\n", k, v, r.ci.at(k).low, r.ci.at(k).high);
  for (std::size_t n = 0; n < 5; ++n)
    std::printf("P_%zu    %.4f  [%.4f, %.4f]\n", n, r.fock_diag[n], r.fock_ci[n].low, r.fock_ci[n].high);
}
