#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace aephora::lp {

enum class Sense { less_equal, equal, greater_equal };

struct Constraint {
  std::vector<std::pair<int, double>> terms;  // (variable, coefficient)
  Sense sense{Sense::less_equal};
  double rhs{0.0};
};

/// minimize cost . x  subject to rows, x >= 0
struct Problem {
  int n_vars{0};
  std::vector<double> cost;
  std::vector<Constraint> rows;
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::iteration_limit: return "iteration_limit";
  }
  return "?";
}

// Bland's rule never cycles. Dantzig's rule takes far fewer pivots in
// practice; the solver falls back to Bland after a run of degenerate pivots.
enum class PivotRule { bland, dantzig };

struct Options {
  PivotRule rule{PivotRule::dantzig};
  double pivot_tol{1e-11};
  double optimality_tol{1e-10};
  double feasibility_tol{1e-9};
  int max_iterations{200000};
  int degenerate_streak_for_bland{50};
  bool phase1_only{false};
};

struct Solution {
  Status status{Status::infeasible};
  std::vector<double> x;
  std::vector<double> duals;  // one per row, sign convention of the original row
  double objective{0.0};
  double dual_objective{0.0};
  double phase1_residual{0.0};
  int iterations{0};
};

namespace detail {

class Tableau {
 public:
  Tableau(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * (cols + 1), 0.0) {}

  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * (cols_ + 1) + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * (cols_ + 1) + c]; }
  double& rhs(int r) { return at(r, cols_); }
  double rhs(int r) const { return at(r, cols_); }
  double* row(int r) { return &data_[static_cast<std::size_t>(r) * (cols_ + 1)]; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
};

}  // namespace detail

/// Two-phase primal simplex on a dense tableau. Returns an optimal basic
/// solution together with the row duals read off the final reduced costs.
inline Solution solve(const Problem& prob, const Options& opt = {}) {
  const int n = prob.n_vars;
  const int m = static_cast<int>(prob.rows.size());
  if (static_cast<int>(prob.cost.size()) != n) throw std::invalid_argument("cost size must equal n_vars");

  // Normalize to rhs >= 0.
  std::vector<double> sign(m, 1.0);
  std::vector<Sense> sense(m);
  for (int i = 0; i < m; ++i) {
    sense[i] = prob.rows[i].sense;
    if (prob.rows[i].rhs < 0.0) {
      sign[i] = -1.0;
      if (sense[i] == Sense::less_equal)
        sense[i] = Sense::greater_equal;
      else if (sense[i] == Sense::greater_equal)
        sense[i] = Sense::less_equal;
    }
  }
  // Column layout: structural | surplus (>= rows) | identity column per row
  // (slack for <=, artificial otherwise).
  std::vector<int> surplus_col(m, -1);
  int cols = n;
  for (int i = 0; i < m; ++i)
    if (sense[i] == Sense::greater_equal) surplus_col[i] = cols++;
  const int identity_base = cols;
  cols += m;
  std::vector<bool> artificial(cols, false);
  for (int i = 0; i < m; ++i)
    if (sense[i] != Sense::less_equal) artificial[identity_base + i] = true;

  // Rows 0..m-1 constraints, row m phase-2 objective, row m+1 phase-1 objective.
  detail::Tableau t(m + 2, cols);
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) {
    for (const auto& [var, coef] : prob.rows[i].terms) {
      if (var < 0 || var >= n) throw std::invalid_argument("constraint references unknown variable");
      t.at(i, var) += sign[i] * coef;
    }
    if (surplus_col[i] >= 0) t.at(i, surplus_col[i]) = -1.0;
    t.at(i, identity_base + i) = 1.0;
    t.rhs(i) = sign[i] * prob.rows[i].rhs;
    basis[i] = identity_base + i;
  }
  const int obj2 = m;
  const int obj1 = m + 1;
  for (int j = 0; j < n; ++j) t.at(obj2, j) = prob.cost[j];
  // Phase-1 reduced costs: d_j = -sum of rows whose basic variable is artificial.
  for (int i = 0; i < m; ++i) {
    if (!artificial[basis[i]]) continue;
    for (int j = 0; j <= cols; ++j)
      if (!artificial[j] || j == cols) t.at(obj1, j) -= t.at(i, j);
  }

  Solution sol;
  std::vector<int> nz;
  nz.reserve(cols + 1);
  auto pivot = [&](int r, int e) {
    double* pr = t.row(r);
    const double inv = 1.0 / pr[e];
    nz.clear();
    for (int j = 0; j <= cols; ++j) {
      if (pr[j] != 0.0) {
        pr[j] *= inv;
        nz.push_back(j);
      }
    }
    pr[e] = 1.0;
    for (int i = 0; i < t.rows(); ++i) {
      if (i == r) continue;
      double* pi = t.row(i);
      const double f = pi[e];
      if (f == 0.0) continue;
      for (int j : nz) pi[j] -= f * pr[j];
      pi[e] = 0.0;
    }
    basis[r] = e;
  };

  auto run_phase = [&](int obj_row, bool allow_artificial) -> Status {
    int degenerate_streak = 0;
    while (true) {
      if (sol.iterations >= opt.max_iterations) return Status::iteration_limit;
      const bool bland = opt.rule == PivotRule::bland || degenerate_streak >= opt.degenerate_streak_for_bland;
      int enter = -1;
      double best = -opt.optimality_tol;
      for (int j = 0; j < cols; ++j) {
        if (!allow_artificial && artificial[j]) continue;
        const double d = t.at(obj_row, j);
        if (d < best) {
          enter = j;
          if (bland) break;
          best = d;
        }
      }
      if (enter < 0) return Status::optimal;
      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        const double a = t.at(i, enter);
        if (a <= opt.pivot_tol) continue;
        const double ratio = std::max(t.rhs(i), 0.0) / a;
        if (ratio < best_ratio - 1e-12 ||
            (ratio <= best_ratio + 1e-12 && leave >= 0 && basis[i] < basis[leave])) {
          if (ratio < best_ratio) best_ratio = ratio;
          leave = i;
        }
      }
      if (leave < 0) return Status::unbounded;
      degenerate_streak = best_ratio <= 1e-12 ? degenerate_streak + 1 : 0;
      pivot(leave, enter);
      ++sol.iterations;
    }
  };

  // Phase 1.
  bool any_artificial = false;
  for (int i = 0; i < m; ++i) any_artificial = any_artificial || artificial[basis[i]];
  if (any_artificial) {
    const Status s1 = run_phase(obj1, false);
    if (s1 == Status::iteration_limit) {
      sol.status = s1;
      return sol;
    }
    sol.phase1_residual = std::max(-t.rhs(obj1), 0.0);
    double scale = 1.0;
    for (int i = 0; i < m; ++i) scale = std::max(scale, std::abs(prob.rows[i].rhs));
    if (sol.phase1_residual > opt.feasibility_tol * scale) {
      sol.status = Status::infeasible;
      return sol;
    }
    // Drive zero-level artificials out of the basis where possible.
    for (int i = 0; i < m; ++i) {
      if (!artificial[basis[i]]) continue;
      int best_j = -1;
      double best_abs = 1e-9;
      for (int j = 0; j < cols; ++j) {
        if (artificial[j]) continue;
        if (std::abs(t.at(i, j)) > best_abs) {
          best_abs = std::abs(t.at(i, j));
          best_j = j;
        }
      }
      if (best_j >= 0) pivot(i, best_j);
    }
  }
  if (opt.phase1_only) {
    sol.status = Status::optimal;
    return sol;
  }

  const Status s2 = run_phase(obj2, false);
  sol.status = s2;
  if (s2 != Status::optimal) return sol;

  sol.x.assign(n, 0.0);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) sol.x[basis[i]] = std::max(t.rhs(i), 0.0);
  sol.objective = 0.0;
  for (int j = 0; j < n; ++j) sol.objective += prob.cost[j] * sol.x[j];
  sol.duals.assign(m, 0.0);
  sol.dual_objective = 0.0;
  for (int i = 0; i < m; ++i) {
    // Identity column has cost 0, so its reduced cost is -y_i.
    sol.duals[i] = -t.at(obj2, identity_base + i) * sign[i];
    sol.dual_objective += sol.duals[i] * prob.rows[i].rhs;
  }
  return sol;
}

}  // namespace aephora::lp
