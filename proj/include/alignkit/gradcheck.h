#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "alignkit/tape.h"
#include "alignkit/tensor.h"

namespace alignkit {

struct GradCheckResult {
    bool passed = false;
    double max_rel_error = 0.0;
    int64_t checked_coords = 0;
    // Location of the worst coordinate, for diagnostics.
    size_t worst_param = 0;
    int64_t worst_coord = 0;
    double worst_ad = 0.0;
    double worst_fd = 0.0;
};

// Compares reverse-mode gradients against central finite differences.
//
// `f` must rebuild the scalar loss from the current values of `params` on
// every call. It receives a tape for the analytic pass and nullptr for the
// finite-difference evaluations. All parameters must be f64: central
// differences in f32 lose too many digits to support a meaningful tolerance.
//
// The per-coordinate error is |ad - fd| / max(|ad_i|, |fd_i|, g_scale) where
// g_scale is the largest gradient magnitude seen across all sampled
// coordinates. A plain relative error would divide the finite-difference
// noise floor (about |f| * eps_machine / epsilon) by a near-zero gradient and
// report spurious failures on coordinates the loss barely depends on.
//
// `max_coords_per_param` == 0 checks every coordinate; a positive value
// samples that many distinct coordinates per parameter with `seed`.
GradCheckResult finite_diff_check(const std::function<Tensor(Tape*)>& f,
                                  const std::vector<Tensor>& params, double epsilon = 1e-5,
                                  double tolerance = 1e-6, int64_t max_coords_per_param = 0,
                                  uint64_t seed = 0x5eed);

}  // namespace alignkit
