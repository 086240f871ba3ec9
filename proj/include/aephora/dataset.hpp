#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "channel.hpp"
#include "config.hpp"
#include "engine.hpp"
#include "json.hpp"
#include "predictor.hpp"
#include "rng.hpp"
#include "traces.hpp"

namespace aephora {

/// Writes one JSON line per (vehicle, frame) where the vehicle has a full
/// gain history and a position in the next frame:
///   {"id":v,"frame":x,"history_db":[[...],...],"target_xy_m":[x,y]}
/// Histories are drawn exactly as a run with the same seed and lambda draws
/// them (the per-slot fading draws are consumed too), so a model trained on
/// this file sees the inputs the engine would send. Returns the record count.
inline std::int64_t gen_dataset(const ScenarioConfig& cfg, const std::vector<VehicleTrace>& traces,
                                std::ostream& out) {
  validate(cfg);
  if (traces.empty()) throw std::invalid_argument("gen_dataset needs at least one trace");
  const std::uint64_t key = detail::run_key(cfg, Scheme::aephora, ProviderSpec{}, false);
  const int n_bs = cfg.bs_count();
  const auto cap = static_cast<std::size_t>(cfg.history_frames);
  const std::int64_t n_frames = cfg.frame_count();

  struct State {
    int id;
    VehicleStreams streams;
    GainHistory history;
  };
  std::unordered_map<int, const VehicleTrace*> trace_of;
  for (const auto& t : traces) trace_of[t.vehicle_id] = &t;
  std::vector<State> alive;
  std::int64_t records = 0;
  std::int64_t slot = 0;
  for (std::int64_t x = 0; x < n_frames; ++x) {
    const auto present = vehicles_in_frame(traces, x);
    std::vector<State> next;
    next.reserve(present.size());
    auto it = alive.begin();
    for (const auto& pv : present) {
      while (it != alive.end() && it->id < pv.vehicle_id) ++it;
      if (it != alive.end() && it->id == pv.vehicle_id)
        next.push_back(std::move(*it));
      else
        next.push_back({pv.vehicle_id, VehicleStreams(key, pv.vehicle_id), GainHistory{pv.vehicle_id, {}}});
    }
    alive = std::move(next);

    std::vector<VehicleStreams*> streams;
    for (auto& s : alive) streams.push_back(&s.streams);
    const ChannelFrame cf = draw_channel_frame(cfg, x, present, streams);
    for (std::size_t v = 0; v < alive.size(); ++v) {
      std::vector<double> row(n_bs);
      for (int m = 0; m < n_bs; ++m) row[m] = linear_to_db(cf.g(m, v));
      alive[v].history.push(std::move(row), cap);
    }
    for (std::size_t v = 0; v < alive.size(); ++v) {
      const auto& s = alive[v];
      if (s.history.size() < cap) continue;
      const VehicleTrace* t = trace_of.at(s.id);
      if (!t->present(x + 1)) continue;
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : s.history.frames_db) rows.push_back(r);
      const Vec2 target = t->at(x + 1);
      out << nlohmann::json{{"id", s.id}, {"frame", x}, {"history_db", std::move(rows)},
                            {"target_xy_m", {target.x, target.y}}}
                 .dump()
          << '\n';
      ++records;
    }
    // Burn the per-slot fading draws a run makes after slot 0.
    for (int i = 0; i < cfg.frame_slots && slot < cfg.duration_slots; ++i, ++slot)
      if (i > 0)
        for (auto& s : alive) draw_cn01(s.streams.fading);
  }
  return records;
}

inline std::int64_t gen_dataset(const ScenarioConfig& cfg, const std::vector<VehicleTrace>& traces,
                                const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  return gen_dataset(cfg, traces, out);
}

}  // namespace aephora
