#pragma once

#include "metasac/metagrad.hpp"

#include <cstdint>
#include <vector>

namespace metasac::meta {

/// One randomized metagradient instance on small networks.
struct GradcheckCase {
  std::uint64_t seed = 0;
  int width = 8;
  int batch = 16;
  double alpha = 0.2;
  int state_dim = 3;
  int action_dim = 2;
  int d0_size = 16;
  double lr = 3e-4;
  int warm_steps = 50;  // real RMSProp steps taken first so the accumulator is non-trivial
};

struct GradcheckOutcome {
  GradcheckCase input;
  double analytic = 0.0;
  double oracle = 0.0;
  double rel_error = 0.0;  // |analytic - oracle| / max(|oracle|, 1e-8)
};

/// Widths cycle through {4, 8, 16}, batches through {4, 16}; alpha = exp(U[-4, 0]).
std::vector<GradcheckCase> gradcheck_cases(int count, std::uint64_t seed);

GradcheckOutcome check_metagradient(const GradcheckCase& c, double h = 1e-4);

}  // namespace metasac::meta
