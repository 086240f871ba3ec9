#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "channel.hpp"
#include "config.hpp"
#include "gap.hpp"
#include "predictor.hpp"

namespace aephora {

enum class Scheme { aephora, hee, hrbe, infrb_lb };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::aephora: return "aephora";
    case Scheme::hee: return "hee";
    case Scheme::hrbe: return "hrbe";
    case Scheme::infrb_lb: return "infrb_lb";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "aephora") return Scheme::aephora;
  if (name == "hee") return Scheme::hee;
  if (name == "hrbe") return Scheme::hrbe;
  if (name == "infrb_lb") return Scheme::infrb_lb;
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

inline constexpr Scheme kAllSchemes[] = {Scheme::aephora, Scheme::hee, Scheme::hrbe, Scheme::infrb_lb};

// Saturated RB estimate for links whose margin-adjusted SNR is ~0. Larger
// than the capacity, so the GAP pruning drops the edge.
inline double saturated_rbs(const BsConfig& bs) { return 10.0 * bs.rb_count; }

/// Average RBs per slot needed to carry lambda at the expected gain, with a
/// one-sigma shadow-fade margin.
inline double estimate_required_rbs(const BsConfig& bs, double est_gain, double lambda_bps, double sigma_x_db,
                                    double n0) {
  const double arg = 1.0 + bs.rb_power_w * est_gain / (n0 * bs.rb_bandwidth_hz) * db_to_linear(-sigma_x_db);
  if (arg <= 1.0 + 1e-12) return saturated_rbs(bs);
  return std::min(lambda_bps / (bs.rb_bandwidth_hz * std::log2(arg)), saturated_rbs(bs));
}

struct AssociationQuery {
  int vehicle_id{0};
  Vec2 predicted_position{};
};

struct EphoResult {
  std::vector<int> bs;  // aligned with the queries
  GapInstance instance;
  GapSolution gap;
};

/// Builds the power-minimizing GAP (size = estimated RBs, cost = RB power x
/// size, capacity = RB count) and solves it with capacity relaxation and
/// LP rounding.
inline GapInstance build_epho_instance(std::span<const AssociationQuery> vehicles, const ScenarioConfig& cfg) {
  GapInstance inst(cfg.bs_count(), static_cast<int>(vehicles.size()));
  for (int m = 0; m < cfg.bs_count(); ++m) {
    const auto& bs = cfg.bss[m];
    inst.capacity[m] = bs.rb_count;
    for (std::size_t v = 0; v < vehicles.size(); ++v) {
      const double g = estimate_gain_at(bs, vehicles[v].predicted_position, cfg.n_tx, cfg.gamma_bf);
      const double k = estimate_required_rbs(bs, g, cfg.lambda_bps, cfg.sigma_x_db, cfg.noise_psd_w_per_hz);
      inst.s(m, static_cast<int>(v)) = k;
      inst.c(m, static_cast<int>(v)) = bs.rb_power_w * k;
    }
  }
  return inst;
}

inline EphoResult epho_associate(std::span<const AssociationQuery> vehicles, const ScenarioConfig& cfg) {
  EphoResult r;
  r.instance = build_epho_instance(vehicles, cfg);
  r.gap = solve_with_relaxation(r.instance, cfg.zeta);
  r.bs = r.gap.assignment;
  return r;
}

/// Highest predicted rate per Watt of RB power.
inline double hee_indicator(const BsConfig& bs, double est_gain, double n0) {
  return bs.rb_bandwidth_hz / bs.rb_power_w * std::log2(1.0 + bs.rb_power_w * est_gain / (n0 * bs.rb_bandwidth_hz));
}

/// Highest predicted rate per RB.
inline double hrbe_indicator(const BsConfig& bs, double est_gain, double n0) {
  return bs.rb_bandwidth_hz * std::log2(1.0 + bs.rb_power_w * est_gain / (n0 * bs.rb_bandwidth_hz));
}

namespace detail {

template <class Indicator>
std::vector<int> argmax_associate(std::span<const AssociationQuery> vehicles, const ScenarioConfig& cfg,
                                  Indicator indicator) {
  std::vector<int> out;
  out.reserve(vehicles.size());
  for (const auto& v : vehicles) {
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < cfg.bs_count(); ++m) {
      const auto& bs = cfg.bss[m];
      const double g = estimate_gain_at(bs, v.predicted_position, cfg.n_tx, cfg.gamma_bf);
      const double val = indicator(bs, g, cfg.noise_psd_w_per_hz);
      if (val > best_val) {  // strict: ties keep the lowest id
        best_val = val;
        best = m;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace detail

inline std::vector<int> hee_associate(std::span<const AssociationQuery> vehicles, const ScenarioConfig& cfg) {
  return detail::argmax_associate(vehicles, cfg, hee_indicator);
}

inline std::vector<int> hrbe_associate(std::span<const AssociationQuery> vehicles, const ScenarioConfig& cfg) {
  return detail::argmax_associate(vehicles, cfg, hrbe_indicator);
}

struct ConnectedVehicle {
  int vehicle_id{0};
  double backlog_bits{0.0};
  double measured_gain{0.0};
};

/// RBs needed to clear `backlog_bits` in one slot at `bits_per_rb_slot`.
inline double rbs_to_clear(double backlog_bits, double bits_per_rb_slot) {
  if (backlog_bits <= 0.0) return 0.0;
  if (bits_per_rb_slot <= 0.0) return std::numeric_limits<double>::infinity();
  return backlog_bits / bits_per_rb_slot;
}

struct HraItem {
  int vehicle_id{0};
  double backlog_bits{0.0};
  double bits_per_rb_slot{0.0};
};

/// Integer allocation in decreasing-backlog order (ties by vehicle id).
/// Backlogs above half the QoS threshold round up, the rest round down, and
/// every grant is capped by the RBs still free. Inputs are (vehicle id,
/// backlog, per-RB bits); the result is aligned with the inputs.
inline void hra_allocate_into(int rb_capacity, double half_threshold_bits, std::span<const HraItem> items,
                              std::span<int> out, std::vector<int>& order_scratch) {
  order_scratch.resize(items.size());
  std::iota(order_scratch.begin(), order_scratch.end(), 0);
  std::sort(order_scratch.begin(), order_scratch.end(), [&](int a, int b) {
    if (items[a].backlog_bits != items[b].backlog_bits) return items[a].backlog_bits > items[b].backlog_bits;
    return items[a].vehicle_id < items[b].vehicle_id;
  });
  int remaining = rb_capacity;
  for (int idx : order_scratch) {
    const auto& it = items[idx];
    const double k_bar = rbs_to_clear(it.backlog_bits, it.bits_per_rb_slot);
    const double rounded = it.backlog_bits > half_threshold_bits ? std::ceil(k_bar) : std::floor(k_bar);
    const int k = static_cast<int>(std::min<double>(rounded, remaining));
    out[idx] = k;
    remaining -= k;
  }
}

inline std::vector<int> hra_allocate(const BsConfig& bs, std::span<const ConnectedVehicle> connected,
                                     const ScenarioConfig& cfg) {
  std::vector<HraItem> items;
  items.reserve(connected.size());
  for (const auto& c : connected)
    items.push_back({c.vehicle_id, c.backlog_bits,
                     link_budget(bs, c.measured_gain, cfg.noise_psd_w_per_hz, cfg.slot_s).bits_per_rb_slot});
  std::vector<int> out(connected.size(), 0);
  std::vector<int> scratch;
  hra_allocate_into(bs.rb_count, cfg.qos_threshold_bits() / 2.0, items, out, scratch);
  return out;
}

/// Unbounded fractional allocation: exactly the RBs that clear each backlog.
inline std::vector<double> infrb_allocate(const BsConfig& bs, std::span<const ConnectedVehicle> connected,
                                          const ScenarioConfig& cfg) {
  std::vector<double> out;
  out.reserve(connected.size());
  for (const auto& c : connected)
    out.push_back(rbs_to_clear(c.backlog_bits,
                               link_budget(bs, c.measured_gain, cfg.noise_psd_w_per_hz, cfg.slot_s).bits_per_rb_slot));
  return out;
}

}  // namespace aephora
