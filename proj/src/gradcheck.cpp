#include "alignkit/gradcheck.h"

#include <cmath>

#include "alignkit/errors.h"
#include "alignkit/rng.h"

namespace alignkit {

namespace {

double scalar_value(const Tensor& t) {
    if (t.numel() != 1) throw ContractError("finite_diff_check: loss must be a scalar");
    return t.item();
}

// Distinct sorted coordinate sample, selection sampling over [0, n).
std::vector<int64_t> pick_coords(int64_t n, int64_t want, Rng& rng) {
    std::vector<int64_t> out;
    if (want <= 0 || want >= n) {
        out.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = i;
        return out;
    }
    out.reserve(static_cast<size_t>(want));
    int64_t remaining = want;
    for (int64_t i = 0; i < n && remaining > 0; ++i) {
        if (rng.below(static_cast<uint64_t>(n - i)) < static_cast<uint64_t>(remaining)) {
            out.push_back(i);
            --remaining;
        }
    }
    return out;
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor(Tape*)>& f,
                                  const std::vector<Tensor>& params, double epsilon,
                                  double tolerance, int64_t max_coords_per_param, uint64_t seed) {
    if (params.empty()) throw ContractError("finite_diff_check: no parameters given");
    for (const Tensor& p : params) {
        if (p.dtype() != DType::F64)
            throw ContractError("finite_diff_check: parameters must be f64");
        if (!p.requires_grad())
            throw ContractError("finite_diff_check: parameter does not require grad");
    }

    for (const Tensor& p : params) p.zero_grad();
    Tape tape;
    Tensor loss = f(&tape);
    scalar_value(loss);
    tape.backward(loss);

    std::vector<std::vector<double>> ad(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        ad[i] = params[i].has_grad() ? params[i].grad_to_vector()
                                     : std::vector<double>(static_cast<size_t>(params[i].numel()), 0.0);
    }

    Rng rng(seed);
    std::vector<std::vector<int64_t>> coords(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        coords[i] = pick_coords(params[i].numel(), max_coords_per_param, rng);
    }

    std::vector<std::vector<double>> fd(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        fd[i].resize(coords[i].size());
        auto values = params[i].mutable_data<double>();
        for (size_t c = 0; c < coords[i].size(); ++c) {
            const size_t idx = static_cast<size_t>(coords[i][c]);
            const double saved = values[idx];
            values[idx] = saved + epsilon;
            const double up = scalar_value(f(nullptr));
            values[idx] = saved - epsilon;
            const double down = scalar_value(f(nullptr));
            values[idx] = saved;
            fd[i][c] = (up - down) / (2.0 * epsilon);
        }
    }

    double g_scale = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        for (size_t c = 0; c < coords[i].size(); ++c) {
            const size_t idx = static_cast<size_t>(coords[i][c]);
            g_scale = std::max(g_scale, std::abs(ad[i][idx]));
            g_scale = std::max(g_scale, std::abs(fd[i][c]));
        }
    }

    GradCheckResult result;
    for (size_t i = 0; i < params.size(); ++i) {
        for (size_t c = 0; c < coords[i].size(); ++c) {
            const size_t idx = static_cast<size_t>(coords[i][c]);
            const double a = ad[i][idx];
            const double d = fd[i][c];
            const double denom = std::max({std::abs(a), std::abs(d), g_scale});
            const double diff = std::abs(a - d);
            const double err = denom > 0.0 ? diff / denom : diff;
            ++result.checked_coords;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_param = i;
                result.worst_coord = coords[i][c];
                result.worst_ad = a;
                result.worst_fd = d;
            }
        }
    }
    result.passed = result.max_rel_error < tolerance;
    return result;
}

}  // namespace alignkit
