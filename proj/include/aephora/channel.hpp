#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "config.hpp"
#include "rng.hpp"
#include "traces.hpp"

namespace aephora {

// Distances below this are clamped to keep d^-beta finite.
constexpr double kMinLinkDistanceM = 1.0;

/// Frame-average power gain: alpha * (gamma_bf * n_tx) * d^-beta * 10^(X/10).
inline double average_gain(const BsConfig& bs, Vec2 vehicle_pos, double shadow_db, int n_tx, double gamma_bf) {
  const double d = std::max(distance(vehicle_pos, bs.position), kMinLinkDistanceM);
  return bs.alpha_linear() * gamma_bf * n_tx * std::pow(d, -bs.beta) * db_to_linear(shadow_db);
}

/// Rician instantaneous gain for a given scattered component h.
inline double rician_gain(double avg_gain, double rician_k, std::complex<double> h) {
  const double los = std::sqrt(rician_k / (rician_k + 1.0));
  const double nlos = std::sqrt(1.0 / (rician_k + 1.0));
  return avg_gain * std::norm(los + nlos * h);
}

/// Standard circularly-symmetric complex Gaussian, E|h|^2 = 1.
inline std::complex<double> draw_cn01(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

inline double rician_sample(double avg_gain, double rician_k, Rng& rng) {
  return rician_gain(avg_gain, rician_k, draw_cn01(rng));
}

struct LinkBudget {
  double snr{0.0};
  double bits_per_rb_slot{0.0};
};

/// Per-RB SNR and bits per slot. The SNR does not depend on the RB count
/// because power and bandwidth both scale with it.
inline LinkBudget link_budget(const BsConfig& bs, double inst_gain, double n0, double slot_s) {
  const double snr = bs.rb_power_w * inst_gain / (n0 * bs.rb_bandwidth_hz);
  return {snr, bs.rb_bandwidth_hz * slot_s * std::log2(1.0 + snr)};
}

/// Bits delivered in one slot over k RBs (k may be fractional for the
/// unbounded lower-bound allocation).
inline double deliverable_bits(const LinkBudget& budget, double k_rbs) { return k_rbs * budget.bits_per_rb_slot; }

/// Test hooks that remove randomness from the channel.
struct ChannelHooks {
  bool freeze_shadowing{false};  // X = 0 dB
  bool freeze_fading{false};     // h = 0, so g = G * K / (K + 1)
};

/// Per-frame channel state for the present vehicles, BS-major matrices.
struct ChannelFrame {
  std::int64_t frame_index{0};
  int n_bs{0};
  std::vector<int> vehicle_ids;
  std::vector<double> avg_gain;       // G_{m,v}
  std::vector<double> shadow_db;      // X_{m,v}
  std::vector<double> measured_gain;  // g_{m,v} at slot 0

  std::size_t n_vehicles() const { return vehicle_ids.size(); }
  std::size_t index(int m, std::size_t v) const { return static_cast<std::size_t>(m) * n_vehicles() + v; }
  double G(int m, std::size_t v) const { return avg_gain[index(m, v)]; }
  double X(int m, std::size_t v) const { return shadow_db[index(m, v)]; }
  double g(int m, std::size_t v) const { return measured_gain[index(m, v)]; }
};

/// Draws shadowing and the slot-0 Rician measurement for every (BS, vehicle)
/// pair. `streams[v]` belongs to `vehicles[v]`; per vehicle, BSs are drawn in
/// id order so the consumption pattern is fixed.
inline ChannelFrame draw_channel_frame(const ScenarioConfig& cfg, std::int64_t frame,
                                       std::span<const PresentVehicle> vehicles,
                                       std::span<VehicleStreams* const> streams, const ChannelHooks& hooks = {}) {
  ChannelFrame cf;
  cf.frame_index = frame;
  cf.n_bs = cfg.bs_count();
  const std::size_t nv = vehicles.size();
  cf.vehicle_ids.reserve(nv);
  for (const auto& v : vehicles) cf.vehicle_ids.push_back(v.vehicle_id);
  cf.avg_gain.assign(cf.n_bs * nv, 0.0);
  cf.shadow_db.assign(cf.n_bs * nv, 0.0);
  cf.measured_gain.assign(cf.n_bs * nv, 0.0);
  for (std::size_t v = 0; v < nv; ++v) {
    for (int m = 0; m < cf.n_bs; ++m) {
      // A fresh distribution per draw: the cached second normal of a shared
      // one would leak between vehicles.
      std::normal_distribution<double> shadow(0.0, cfg.sigma_x_db);
      const double x = cfg.sigma_x_db > 0.0 ? shadow(streams[v]->shadowing) : 0.0;
      const double x_used = hooks.freeze_shadowing ? 0.0 : x;
      const double G = average_gain(cfg.bss[m], vehicles[v].position, x_used, cfg.n_tx, cfg.gamma_bf);
      const auto h = draw_cn01(streams[v]->fading);
      const std::size_t i = cf.index(m, v);
      cf.shadow_db[i] = x_used;
      cf.avg_gain[i] = G;
      cf.measured_gain[i] = rician_gain(G, cfg.rician_k, hooks.freeze_fading ? std::complex<double>{} : h);
    }
  }
  return cf;
}

}  // namespace aephora
