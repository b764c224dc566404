#include "ntil/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <regex>

#include "ntil/errors.hpp"

namespace ntil::oracle {

namespace {

void require_normalized(std::span<const double> p, const char* name) {
  double total = 0.0;
  for (double x : p) {
    require(x >= 0.0, std::string(name) + " has a negative mass");
    total += x;
  }
  require(std::abs(total - 1.0) <= 1e-9,
          std::string(name) + " sums to " + std::to_string(total) + ", not 1");
}

double log_sum_exp(const std::vector<double>& v) {
  const double peak = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(peak)) {
    return peak;
  }
  double total = 0.0;
  for (double x : v) {
    total += std::exp(x - peak);
  }
  return peak + std::log(total);
}

struct PlanSearch {
  std::size_t rows;
  std::size_t cols;
  std::vector<double> unit_cost;
  std::vector<int> row_left;
  std::vector<int> col_left;
  std::vector<int> current;
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();

  void visit(std::size_t cell, double cost) {
    if (cost >= best_cost) {
      return;
    }
    if (cell == rows * cols) {
      best_cost = cost;
      best = current;
      return;
    }
    const std::size_t i = cell / cols;
    const std::size_t j = cell % cols;
    if (j == cols - 1) {
      // The last cell of a row takes whatever the row still owes.
      const int amount = row_left[i];
      if (amount > col_left[j]) {
        return;
      }
      place(cell, i, j, amount, cost);
      return;
    }
    const int limit = std::min(row_left[i], col_left[j]);
    for (int amount = 0; amount <= limit; ++amount) {
      place(cell, i, j, amount, cost);
    }
  }

  void place(std::size_t cell, std::size_t i, std::size_t j, int amount, double cost) {
    row_left[i] -= amount;
    col_left[j] -= amount;
    current[cell] = amount;
    visit(cell + 1, cost + amount * unit_cost[cell]);
    current[cell] = 0;
    row_left[i] += amount;
    col_left[j] += amount;
  }
};

}  // namespace

double index_distance(std::size_t i, std::size_t j) {
  return i > j ? static_cast<double>(i - j) : static_cast<double>(j - i);
}

double transport_emd(std::span<const double> p, std::span<const double> q) {
  require_normalized(p, "p");
  require_normalized(q, "q");
  const std::size_t n = std::max(p.size(), q.size());
  double cdf_p = 0.0;
  double cdf_q = 0.0;
  double cost = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    cdf_p += i < p.size() ? p[i] : 0.0;
    cdf_q += i < q.size() ? q[i] : 0.0;
    cost += std::abs(cdf_p - cdf_q);
  }
  return cost;
}

TransportPlan enumerate_plans(std::span<const int> p_units, std::span<const int> q_units,
                              const GroundDistance& distance) {
  require(!p_units.empty() && !q_units.empty(), "enumerate_plans: empty distribution");
  const int total_p = std::accumulate(p_units.begin(), p_units.end(), 0);
  const int total_q = std::accumulate(q_units.begin(), q_units.end(), 0);
  require(total_p == total_q && total_p > 0, "enumerate_plans: unequal or zero total mass");
  PlanSearch search{p_units.size(),
                    q_units.size(),
                    {},
                    {p_units.begin(), p_units.end()},
                    {q_units.begin(), q_units.end()},
                    {},
                    {}};
  for (std::size_t i = 0; i < search.rows; ++i) {
    for (std::size_t j = 0; j < search.cols; ++j) {
      search.unit_cost.push_back(distance(i, j));
    }
  }
  search.current.assign(search.rows * search.cols, 0);
  search.visit(0, 0.0);
  require(!search.best.empty(), "enumerate_plans: no feasible plan");

  TransportPlan plan{search.rows, search.cols, {}, search.best_cost / total_p};
  for (int units : search.best) {
    plan.gamma.push_back(static_cast<double>(units) / total_p);
  }
  return plan;
}

SinkhornResult sinkhorn_emd(std::span<const double> p, std::span<const double> q,
                            const GroundDistance& distance, double reg, std::size_t iters,
                            double tol) {
  require(reg > 0.0, "sinkhorn_emd: reg must be > 0");
  require_normalized(p, "p");
  require_normalized(q, "q");
  // Zero-mass bins carry no plan entries; iterate on the supports only.
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      rows.push_back(i);
    }
  }
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j] > 0.0) {
      cols.push_back(j);
    }
  }
  const std::size_t n = rows.size();
  const std::size_t m = cols.size();
  std::vector<double> cost(n * m);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      cost[a * m + b] = distance(rows[a], cols[b]);
    }
  }
  std::vector<double> f(n, 0.0);
  std::vector<double> g(m, 0.0);
  std::vector<double> scratch;
  auto marginal_error = [&](double eps) {
    double err = 0.0;
    std::vector<double> col_sum(m, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      double row_sum = 0.0;
      for (std::size_t b = 0; b < m; ++b) {
        const double gamma = std::exp((f[a] + g[b] - cost[a * m + b]) / eps);
        row_sum += gamma;
        col_sum[b] += gamma;
      }
      err += std::abs(row_sum - p[rows[a]]);
    }
    for (std::size_t b = 0; b < m; ++b) {
      err += std::abs(col_sum[b] - q[cols[b]]);
    }
    return err;
  };
  auto sweep = [&](double eps) {
    for (std::size_t a = 0; a < n; ++a) {
      scratch.assign(m, 0.0);
      for (std::size_t b = 0; b < m; ++b) {
        scratch[b] = (g[b] - cost[a * m + b]) / eps;
      }
      f[a] = eps * (std::log(p[rows[a]]) - log_sum_exp(scratch));
    }
    for (std::size_t b = 0; b < m; ++b) {
      scratch.assign(n, 0.0);
      for (std::size_t a = 0; a < n; ++a) {
        scratch[a] = (f[a] - cost[a * m + b]) / eps;
      }
      g[b] = eps * (std::log(q[cols[b]]) - log_sum_exp(scratch));
    }
  };

  // Small reg alone needs on the order of max_cost / reg sweeps. Most of the
  // budget is spent annealing reg geometrically from the largest cost down,
  // warm-starting the potentials, and the rest at reg itself.
  double peak_cost = 0.0;
  for (double c : cost) {
    peak_cost = std::max(peak_cost, c);
  }
  SinkhornResult result;
  const std::size_t warmup = peak_cost > reg ? iters * 4 / 5 : 0;
  for (std::size_t k = 0; k < warmup; ++k) {
    sweep(peak_cost * std::pow(reg / peak_cost, static_cast<double>(k) / warmup));
    ++result.iterations;
  }
  while (result.iterations < iters) {
    sweep(reg);
    ++result.iterations;
    result.marginal_error = marginal_error(reg);
    if (result.marginal_error <= tol) {
      result.converged = true;
      break;
    }
  }

  result.plan =
      TransportPlan{p.size(), q.size(), std::vector<double>(p.size() * q.size(), 0.0), 0.0};
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      const double gamma = std::exp((f[a] + g[b] - cost[a * m + b]) / reg);
      result.plan.gamma[rows[a] * q.size() + cols[b]] = gamma;
      result.cost += gamma * cost[a * m + b];
    }
  }
  result.plan.cost = result.cost;
  return result;
}

std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& fn,
                                std::span<const double> point, double h) {
  require(h > 0.0, "finite_diff: h must be > 0");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = fn(x);
    x[i] = saved - h;
    const double down = fn(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double gradient_error(double analytic, double numeric, double abs_tol) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_tol) {
    return 0.0;
  }
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

std::vector<std::pair<std::size_t, std::size_t>> regex_number_spans(const std::string& text) {
  static const std::regex pattern(R"([0-9]+(\.[0-9]+)?)");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern);
       it != std::sregex_iterator(); ++it) {
    out.emplace_back(static_cast<std::size_t>(it->position()),
                     static_cast<std::size_t>(it->length()));
  }
  return out;
}

}  // namespace ntil::oracle
