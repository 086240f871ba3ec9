#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "matching.hpp"
#include "simplex.hpp"

namespace aephora {

/// Generalized assignment instance: assign every job to one machine,
/// minimizing total cost subject to per-machine size capacity.
/// Matrices are machine-major: entry (m, v) at m * n_jobs + v.
struct GapInstance {
  int n_machines{0};
  int n_jobs{0};
  std::vector<double> cost;
  std::vector<double> size;
  std::vector<double> capacity;

  GapInstance() = default;
  GapInstance(int machines, int jobs)
      : n_machines(machines),
        n_jobs(jobs),
        cost(static_cast<std::size_t>(machines) * jobs, 0.0),
        size(static_cast<std::size_t>(machines) * jobs, 1.0),
        capacity(machines, 1.0) {}

  std::size_t index(int m, int v) const { return static_cast<std::size_t>(m) * n_jobs + v; }
  double& c(int m, int v) { return cost[index(m, v)]; }
  double c(int m, int v) const { return cost[index(m, v)]; }
  double& s(int m, int v) { return size[index(m, v)]; }
  double s(int m, int v) const { return size[index(m, v)]; }
  // Edges larger than the machine capacity are pruned.
  bool allowed(int m, int v) const { return s(m, v) <= capacity[m]; }

  void validate() const {
    const std::size_t cells = static_cast<std::size_t>(n_machines) * n_jobs;
    if (n_machines < 1 || n_jobs < 0 || cost.size() != cells || size.size() != cells ||
        capacity.size() != static_cast<std::size_t>(n_machines))
      throw std::invalid_argument("GapInstance: inconsistent dimensions");
    for (double x : cost)
      if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("GapInstance: cost must be >= 0");
    for (double x : size)
      if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("GapInstance: size must be > 0");
    for (double x : capacity)
      if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("GapInstance: capacity must be > 0");
  }
};

struct FractionalAssignment {
  int n_machines{0};
  int n_jobs{0};
  std::vector<double> u;  // machine-major

  double operator()(int m, int v) const { return u[static_cast<std::size_t>(m) * n_jobs + v]; }
  double& operator()(int m, int v) { return u[static_cast<std::size_t>(m) * n_jobs + v]; }
};

struct LpRelaxation {
  FractionalAssignment u;
  double lp_cost{0.0};
  // Lagrangian lower bound from the capacity duals; lp_cost - dual_bound is
  // the duality gap certificate.
  double dual_bound{0.0};
  int iterations{0};

  double duality_gap() const { return lp_cost - dual_bound; }
};

struct GapSolution {
  std::vector<int> assignment;  // job -> machine
  double total_cost{0.0};
  std::vector<double> loads;
  double lp_cost{0.0};
  int relax_rounds{0};
  std::vector<double> effective_capacity;  // capacity after relaxation
  std::vector<double> max_fractional_size;  // max size over positive LP edges per machine
  double duality_gap{0.0};
  int lp_iterations{0};
};

class GapInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

constexpr double kWeightEps = 1e-9;

struct GapLp {
  lp::Problem problem;
  std::vector<std::pair<int, int>> edge;  // variable -> (machine, job)
  bool every_job_covered{true};
};

inline GapLp build_gap_lp(const GapInstance& inst) {
  GapLp g;
  auto& p = g.problem;
  p.rows.resize(inst.n_jobs + inst.n_machines);
  for (int v = 0; v < inst.n_jobs; ++v) {
    p.rows[v].sense = lp::Sense::equal;
    p.rows[v].rhs = 1.0;
  }
  for (int m = 0; m < inst.n_machines; ++m) {
    p.rows[inst.n_jobs + m].sense = lp::Sense::less_equal;
    p.rows[inst.n_jobs + m].rhs = inst.capacity[m];
  }
  for (int v = 0; v < inst.n_jobs; ++v) {
    bool any = false;
    for (int m = 0; m < inst.n_machines; ++m) {
      if (!inst.allowed(m, v)) continue;
      any = true;
      const int var = static_cast<int>(g.edge.size());
      g.edge.emplace_back(m, v);
      p.cost.push_back(inst.c(m, v));
      p.rows[v].terms.emplace_back(var, 1.0);
      p.rows[inst.n_jobs + m].terms.emplace_back(var, inst.s(m, v));
    }
    if (!any) g.every_job_covered = false;
  }
  p.n_vars = static_cast<int>(g.edge.size());
  return g;
}

// Necessary condition: every job fits somewhere and the smallest-size total
// does not exceed total capacity.
inline bool trivially_infeasible(const GapInstance& inst) {
  double min_total = 0.0;
  for (int v = 0; v < inst.n_jobs; ++v) {
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < inst.n_machines; ++m)
      if (inst.allowed(m, v)) best = std::min(best, inst.s(m, v));
    if (!std::isfinite(best)) return true;
    min_total += best;
  }
  const double cap = std::accumulate(inst.capacity.begin(), inst.capacity.end(), 0.0);
  return min_total > cap * (1.0 + 1e-12);
}

}  // namespace detail

/// True iff the LP relaxation over the pruned edge set has a feasible point.
inline bool lp_feasible(const GapInstance& inst) {
  inst.validate();
  if (detail::trivially_infeasible(inst)) return false;
  const auto g = detail::build_gap_lp(inst);
  lp::Options opt;
  opt.phase1_only = true;
  return lp::solve(g.problem, opt).status == lp::Status::optimal;
}

/// Optimal basic solution of the pruned LP relaxation. Throws GapInfeasible
/// when the relaxation is infeasible.
inline LpRelaxation solve_lp(const GapInstance& inst) {
  inst.validate();
  LpRelaxation out;
  out.u = {inst.n_machines, inst.n_jobs,
           std::vector<double>(static_cast<std::size_t>(inst.n_machines) * inst.n_jobs, 0.0)};
  if (inst.n_jobs == 0) return out;
  if (detail::trivially_infeasible(inst)) throw GapInfeasible("GAP LP relaxation infeasible");
  const auto g = detail::build_gap_lp(inst);
  const auto sol = lp::solve(g.problem);
  out.iterations = sol.iterations;
  if (sol.status == lp::Status::infeasible) throw GapInfeasible("GAP LP relaxation infeasible");
  if (sol.status != lp::Status::optimal)
    throw std::runtime_error(std::string("GAP LP solve failed: ") + lp::to_string(sol.status));

  for (std::size_t k = 0; k < g.edge.size(); ++k) {
    const auto [m, v] = g.edge[k];
    out.u(m, v) = sol.x[k] > detail::kWeightEps ? sol.x[k] : 0.0;
  }
  // Renormalize each job's weights to sum to exactly one.
  for (int v = 0; v < inst.n_jobs; ++v) {
    double total = 0.0;
    for (int m = 0; m < inst.n_machines; ++m) total += out.u(m, v);
    for (int m = 0; m < inst.n_machines; ++m) out.u(m, v) /= total;
  }
  out.lp_cost = 0.0;
  for (int m = 0; m < inst.n_machines; ++m)
    for (int v = 0; v < inst.n_jobs; ++v) out.lp_cost += inst.c(m, v) * out.u(m, v);

  // Lagrangian bound with mu_m = -y_m >= 0 from the capacity rows.
  std::vector<double> mu(inst.n_machines);
  for (int m = 0; m < inst.n_machines; ++m) mu[m] = std::max(0.0, -sol.duals[inst.n_jobs + m]);
  double bound = 0.0;
  for (int v = 0; v < inst.n_jobs; ++v) {
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < inst.n_machines; ++m)
      if (inst.allowed(m, v)) best = std::min(best, inst.c(m, v) + mu[m] * inst.s(m, v));
    bound += best;
  }
  for (int m = 0; m < inst.n_machines; ++m) bound -= mu[m] * inst.capacity[m];
  out.dual_bound = bound;
  return out;
}

/// Shmoys-Tardos rounding of a feasible fractional assignment.
///
/// Machine m gets ceil(sum_v u(m,v)) unit slots. Its fractionally assigned
/// jobs, ordered by size (largest first, ties by job index), pour their
/// weights into the slots in order, spilling into the next slot when one
/// fills. A minimum-cost matching of jobs to slots over the resulting edges
/// gives the integral assignment: its cost is at most the fractional cost and
/// each machine's load exceeds its capacity by at most one of its sizes.
inline GapSolution round_st(const GapInstance& inst, const FractionalAssignment& u) {
  GapSolution sol;
  sol.effective_capacity = inst.capacity;
  sol.max_fractional_size.assign(inst.n_machines, 0.0);
  sol.loads.assign(inst.n_machines, 0.0);
  sol.assignment.assign(inst.n_jobs, -1);
  for (int m = 0; m < inst.n_machines; ++m)
    for (int v = 0; v < inst.n_jobs; ++v) sol.lp_cost += inst.c(m, v) * u(m, v);
  if (inst.n_jobs == 0) return sol;

  std::vector<MatchingEdge> edges;
  std::vector<int> slot_machine;
  for (int m = 0; m < inst.n_machines; ++m) {
    std::vector<int> jobs;
    double total = 0.0;
    for (int v = 0; v < inst.n_jobs; ++v) {
      if (u(m, v) > detail::kWeightEps) {
        jobs.push_back(v);
        total += u(m, v);
        sol.max_fractional_size[m] = std::max(sol.max_fractional_size[m], inst.s(m, v));
      }
    }
    if (jobs.empty()) continue;
    std::stable_sort(jobs.begin(), jobs.end(), [&](int a, int b) { return inst.s(m, a) > inst.s(m, b); });
    const int n_slots = std::max(1, static_cast<int>(std::ceil(total - 1e-9)));
    const int base = static_cast<int>(slot_machine.size());
    slot_machine.insert(slot_machine.end(), n_slots, m);
    int slot = 0;
    double fill = 0.0;
    for (int v : jobs) {
      double w = u(m, v);
      while (w > detail::kWeightEps) {
        const double take = std::min(w, 1.0 - fill);
        if (take > 0.0) edges.push_back({v, base + slot, inst.c(m, v)});
        w -= take;
        fill += take;
        if (fill >= 1.0 - 1e-12) {
          if (slot + 1 < n_slots) {
            ++slot;
            fill = 0.0;
          } else {
            // Rounding residue: keep the rest in the last slot.
            if (w > detail::kWeightEps) edges.push_back({v, base + slot, inst.c(m, v)});
            w = 0.0;
          }
        }
      }
    }
  }
  const auto matching =
      min_cost_left_perfect_matching(inst.n_jobs, static_cast<int>(slot_machine.size()), edges);
  if (!matching) throw std::logic_error("Shmoys-Tardos rounding: no job-perfect matching");
  for (int v = 0; v < inst.n_jobs; ++v) {
    const int m = slot_machine[matching->right_of_left[v]];
    sol.assignment[v] = m;
    sol.total_cost += inst.c(m, v);
    sol.loads[m] += inst.s(m, v);
  }
  return sol;
}

/// Scales capacities by zeta until the LP relaxation is feasible, then solves
/// and rounds. `relax_rounds` counts the applications of zeta.
inline GapSolution solve_with_relaxation(GapInstance inst, double zeta) {
  if (!(zeta > 1.0)) throw std::invalid_argument("zeta must exceed 1");
  inst.validate();
  int rounds = 0;
  constexpr int kMaxRounds = 100000;
  std::optional<LpRelaxation> lp;
  while (!lp) {
    if (rounds > kMaxRounds) throw std::runtime_error("GAP relaxation did not terminate");
    if (!detail::trivially_infeasible(inst)) {
      try {
        lp = solve_lp(inst);
        break;
      } catch (const GapInfeasible&) {
      }
    }
    for (double& c : inst.capacity) c *= zeta;
    ++rounds;
  }
  GapSolution sol = round_st(inst, lp->u);
  sol.lp_cost = lp->lp_cost;
  sol.relax_rounds = rounds;
  sol.duality_gap = lp->duality_gap();
  sol.lp_iterations = lp->iterations;
  return sol;
}

struct GapCertificate {
  bool cost_within_lp{false};     // total_cost <= lp_cost (float tolerance)
  bool load_within_bound{false};  // load <= C_eff + max positive-edge size
  bool load_within_2c{false};     // load <= 2 C_eff
  bool duality_gap_ok{false};     // LP optimality certified to 1e-7 relative

  bool all() const { return cost_within_lp && load_within_bound && load_within_2c && duality_gap_ok; }
};

inline GapCertificate certify(const GapSolution& sol) {
  GapCertificate c;
  c.cost_within_lp = sol.total_cost <= sol.lp_cost + 1e-6 * (1.0 + std::abs(sol.lp_cost));
  c.load_within_bound = true;
  c.load_within_2c = true;
  for (std::size_t m = 0; m < sol.loads.size(); ++m) {
    const double cap = sol.effective_capacity[m];
    const double tol = 1e-9 * (1.0 + cap);
    c.load_within_bound = c.load_within_bound && sol.loads[m] <= cap + sol.max_fractional_size[m] + tol;
    c.load_within_2c = c.load_within_2c && sol.loads[m] <= 2.0 * cap + tol;
  }
  c.duality_gap_ok = std::abs(sol.duality_gap) <= 1e-7 * (1.0 + std::abs(sol.lp_cost));
  return c;
}

// Debug dumps for regression fixtures.

inline nlohmann::json to_json(const GapInstance& inst) {
  return {{"n_machines", inst.n_machines}, {"n_jobs", inst.n_jobs}, {"cost", inst.cost},
          {"size", inst.size},             {"capacity", inst.capacity}};
}

inline GapInstance gap_instance_from_json(const nlohmann::json& j) {
  GapInstance inst;
  inst.n_machines = j.at("n_machines").get<int>();
  inst.n_jobs = j.at("n_jobs").get<int>();
  inst.cost = j.at("cost").get<std::vector<double>>();
  inst.size = j.at("size").get<std::vector<double>>();
  inst.capacity = j.at("capacity").get<std::vector<double>>();
  inst.validate();
  return inst;
}

inline nlohmann::json to_json(const GapSolution& sol) {
  return {{"assignment", sol.assignment},
          {"total_cost", sol.total_cost},
          {"loads", sol.loads},
          {"lp_cost", sol.lp_cost},
          {"relax_rounds", sol.relax_rounds},
          {"effective_capacity", sol.effective_capacity},
          {"max_fractional_size", sol.max_fractional_size},
          {"duality_gap", sol.duality_gap}};
}

}  // namespace aephora
