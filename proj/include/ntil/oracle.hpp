#pragma once

// Reference implementations used only for verification. Nothing here shares
// code with the loss path it checks.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ntil::oracle {

/// Ground cost between source bin i and target bin j.
using GroundDistance = std::function<double(std::size_t, std::size_t)>;

/// |i - j|.
double index_distance(std::size_t i, std::size_t j);

struct TransportPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> gamma;  // rows x cols, row-major
  double cost = 0.0;

  double at(std::size_t i, std::size_t j) const { return gamma[i * cols + j]; }
};

/// Exact 1-D Wasserstein-1 under |i - j| via sum_i |CDF_p(i) - CDF_q(i)|.
/// Shorter inputs are zero-padded. Throws ContractViolation unless both sum
/// to 1 within 1e-9.
double transport_emd(std::span<const double> p, std::span<const double> q);

/// Cheapest transport plan between integer masses p_units and q_units (equal
/// totals), found by exhaustive enumeration of integer plans with
/// branch-and-bound pruning. Costs are reported per unit of total mass, so
/// masses a_i / D are handled by passing the numerators.
TransportPlan enumerate_plans(std::span<const int> p_units, std::span<const int> q_units,
                              const GroundDistance& distance = index_distance);

struct SinkhornResult {
  double cost = 0.0;  // sum gamma_ij * d(i, j), entropy term excluded
  TransportPlan plan;
  std::size_t iterations = 0;
  bool converged = false;
  double marginal_error = 0.0;  // L1 error of the row and column sums
};

/// Entropic-regularized transport, iterated in the log domain so small `reg`
/// does not underflow.
SinkhornResult sinkhorn_emd(std::span<const double> p, std::span<const double> q,
                            const GroundDistance& distance, double reg, std::size_t iters,
                            double tol = 1e-9);

/// Central differences, one coordinate at a time.
std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& fn,
                                std::span<const double> point, double h = 1e-5);

/// Relative error with an absolute floor: |a - b| <= abs_tol passes outright,
/// otherwise |a - b| / max(|a|, |b|) is returned.
double gradient_error(double analytic, double numeric, double abs_tol = 1e-7);

/// (start, length) of each match of [0-9]+(\.[0-9]+)? in `text`, via std::regex.
std::vector<std::pair<std::size_t, std::size_t>> regex_number_spans(const std::string& text);

}  // namespace ntil::oracle
