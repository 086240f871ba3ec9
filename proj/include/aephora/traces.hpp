#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"
#include "rng.hpp"

namespace aephora {

/// One vehicle's frame-start positions over its presence window
/// [entry_frame, exit_frame). positions[i] belongs to frame entry_frame + i.
struct VehicleTrace {
  int vehicle_id{0};
  std::int64_t entry_frame{0};
  std::int64_t exit_frame{0};
  std::vector<Vec2> positions;

  bool present(std::int64_t frame) const { return frame >= entry_frame && frame < exit_frame; }
  Vec2 at(std::int64_t frame) const { return positions.at(static_cast<std::size_t>(frame - entry_frame)); }
  std::int64_t frames_present() const { return exit_frame - entry_frame; }
};

struct PresentVehicle {
  int vehicle_id{0};
  Vec2 position{};
};

/// Vehicles with entry <= frame < exit, ordered by id.
inline std::vector<PresentVehicle> vehicles_in_frame(const std::vector<VehicleTrace>& traces,
                                                     std::int64_t frame) {
  std::vector<PresentVehicle> out;
  if (frame < 0) return out;
  for (const auto& t : traces)
    if (t.present(frame)) out.push_back({t.vehicle_id, t.at(frame)});
  std::sort(out.begin(), out.end(),
            [](const PresentVehicle& a, const PresentVehicle& b) { return a.vehicle_id < b.vehicle_id; });
  return out;
}

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool inside_region(Vec2 p, double half_width) {
  return std::abs(p.x) <= half_width && std::abs(p.y) <= half_width;
}

// ---------------------------------------------------------------------------
// Synthetic Manhattan-grid generator.
//
// Two roads per axis (x = +-200 and y = +-200), three lanes per direction,
// right-hand traffic. Each vehicle keeps a constant speed drawn from
// [0.6, 1.0] * v_max. At an intersection it goes straight (1/2), left (1/4) or
// right (1/4); turns happen where the current lane crosses the target lane, so
// the path stays continuous. A non-leaving vehicle that reaches the region edge
// makes a U-turn by crossing laterally to the opposite lanes. Each vehicle
// carries an exponential "leave" timer; once it fires the vehicle drives
// straight to the edge and exits. Arrivals are Poisson at the eight road ends.
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::array<double, 2> kRoadCoords{-200.0, 200.0};
constexpr double kLaneWidth = 3.5;
constexpr int kLanesPerDirection = 3;
constexpr double kMinSpeedFraction = 0.6;

enum class Axis { horizontal, vertical };

inline double lane_offset(int lane) { return kLaneWidth * (0.5 + lane); }

struct Car {
  int id{0};
  Axis axis{Axis::horizontal};
  double road{0.0};  // lateral coordinate of the road center line
  int dir{1};        // +1 / -1 along the axis
  int lane{0};
  double s{0.0};  // coordinate along the axis
  double speed{0.0};
  bool leaving{false};
  double leave_timer{0.0};
  double uturn_done{-1.0};  // < 0 when not in a U-turn
  // Planned maneuver for the current leg.
  bool has_turn{false};
  double turn_at{0.0};
  double turn_road{0.0};
  int turn_dir{0};
  bool leg_planned{false};
  double leg_end{0.0};  // s where the leg ends (intersection pass, turn point or edge)
  std::int64_t entry_frame{0};
  std::vector<Vec2> positions;
};

inline double lateral(const Car& c) {
  const double off = lane_offset(c.lane);
  const double base = c.axis == Axis::horizontal ? c.road - c.dir * off : c.road + c.dir * off;
  if (c.uturn_done < 0.0) return base;
  // Crossing from this direction's lanes toward the opposite ones.
  const double sign = c.axis == Axis::horizontal ? c.dir : -c.dir;
  return base + sign * c.uturn_done;
}

inline Vec2 position(const Car& c) {
  const double lat = lateral(c);
  return c.axis == Axis::horizontal ? Vec2{c.s, lat} : Vec2{lat, c.s};
}

inline void plan_leg(Car& c, double half_width, Rng& rng) {
  constexpr double kLookahead = kLaneWidth * kLanesPerDirection + 0.25;
  std::optional<double> next;
  for (double r : kRoadCoords) {
    const double ahead = (r - c.s) * c.dir;
    if (ahead > kLookahead && (!next || ahead < (*next - c.s) * c.dir)) next = r;
  }
  c.has_turn = false;
  c.leg_planned = true;
  if (!next) {
    c.leg_end = c.dir * half_width;
    return;
  }
  int maneuver = 0;  // 0 straight, 1 left, 2 right
  if (!c.leaving) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    maneuver = u < 0.5 ? 0 : (u < 0.75 ? 1 : 2);
  }
  if (maneuver == 0) {
    c.leg_end = *next;
    return;
  }
  // Heading (hx, hy); left = (-hy, hx), right = (hy, -hx).
  int new_dir = 0;
  if (c.axis == Axis::horizontal)
    new_dir = maneuver == 1 ? c.dir : -c.dir;
  else
    new_dir = maneuver == 1 ? -c.dir : c.dir;
  const double off = lane_offset(c.lane);
  c.has_turn = true;
  c.turn_road = *next;
  c.turn_dir = new_dir;
  c.turn_at = c.axis == Axis::horizontal ? *next + new_dir * off : *next - new_dir * off;
  c.leg_end = c.turn_at;
}

/// Advances one car by `dist` meters. Returns true if the car left the region.
inline bool advance(Car& c, double dist, double half_width, Rng& rng) {
  const double uturn_len = 2.0 * lane_offset(c.lane);
  while (dist > 0.0) {
    if (c.uturn_done >= 0.0) {
      const double step = std::min(dist, uturn_len - c.uturn_done);
      c.uturn_done += step;
      dist -= step;
      if (c.uturn_done >= uturn_len) {
        c.uturn_done = -1.0;
        c.dir = -c.dir;
        c.leg_planned = false;
      }
      continue;
    }
    if (!c.leg_planned) plan_leg(c, half_width, rng);
    const double remaining = (c.leg_end - c.s) * c.dir;
    if (dist < remaining) {
      c.s += c.dir * dist;
      return false;
    }
    dist -= std::max(remaining, 0.0);
    c.s = c.leg_end;
    c.leg_planned = false;
    if (c.has_turn) {
      const double new_s = lateral(c);
      c.axis = c.axis == Axis::horizontal ? Axis::vertical : Axis::horizontal;
      c.road = c.turn_road;
      c.dir = c.turn_dir;
      c.s = new_s;
      c.has_turn = false;
    } else if (std::abs(c.s) >= half_width) {
      if (c.leaving) return true;
      c.uturn_done = 0.0;
    } else {
      // Straight through the intersection: step past it so the next plan
      // looks at the following one.
      const double nudge = std::min(dist, 1e-9);
      c.s += c.dir * nudge;
      dist -= nudge;
    }
  }
  return false;
}

}  // namespace detail

/// Expected straight-line travel time from a uniformly placed vehicle to the
/// edge it is heading to, with speeds uniform in [0.6, 1.0] * v_max.
inline double expected_exit_travel_s(double half_width, double v_max) {
  const double a = detail::kMinSpeedFraction * v_max;
  const double b = v_max;
  return half_width * std::log(b / a) / (b - a);
}

/// Generates synthetic traces covering frames [0, cfg.frame_count()).
/// Deterministic in `rng_seed`.
inline std::vector<VehicleTrace> generate_traces(const ScenarioConfig& cfg, double mean_population,
                                                 double io_rate_per_s, std::uint64_t rng_seed,
                                                 std::ostream& warn = std::clog) {
  using namespace detail;
  if (!(mean_population > 0.0)) {
    warn << "warning: mean_population must be positive; clamped to 1\n";
    mean_population = 1.0;
  }
  if (io_rate_per_s < 0.0) {
    warn << "warning: io_rate_per_s negative; clamped to 0\n";
    io_rate_per_s = 0.0;
  }
  const double half = cfg.region_half_width_m;
  const double dt = cfg.frame_s();
  const double v_max = cfg.v_max_mps;
  const std::int64_t n_frames = cfg.frame_count();

  Rng rng = make_rng({rng_seed, static_cast<std::uint64_t>(Stream::traces)});
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double leave_mean_s = std::numeric_limits<double>::infinity();
  double initially_leaving = 0.0;
  if (io_rate_per_s > 0.0) {
    const double sojourn = mean_population / io_rate_per_s;
    const double travel = expected_exit_travel_s(half, v_max);
    leave_mean_s = sojourn - travel;
    if (leave_mean_s < dt) {
      warn << "warning: mean sojourn shorter than exit travel time; leave timer clamped\n";
      leave_mean_s = dt;
    }
    initially_leaving = std::min(1.0, travel / sojourn);
  }
  auto draw_timer = [&]() {
    if (!std::isfinite(leave_mean_s)) return std::numeric_limits<double>::infinity();
    return std::exponential_distribution<double>(1.0 / leave_mean_s)(rng);
  };
  auto draw_speed = [&]() { return v_max * (kMinSpeedFraction + (1.0 - kMinSpeedFraction) * unit(rng)); };

  int next_id = 0;
  std::vector<Car> alive;
  std::vector<VehicleTrace> done;

  const auto initial = static_cast<int>(std::max<long long>(1, std::llround(mean_population)));
  for (int i = 0; i < initial; ++i) {
    Car c;
    c.id = next_id++;
    c.axis = unit(rng) < 0.5 ? Axis::horizontal : Axis::vertical;
    c.road = kRoadCoords[unit(rng) < 0.5 ? 0 : 1];
    c.dir = unit(rng) < 0.5 ? 1 : -1;
    c.lane = std::uniform_int_distribution<int>(0, kLanesPerDirection - 1)(rng);
    c.leaving = unit(rng) < initially_leaving;
    if (c.leaving) {
      // Mid-exit in steady state: the remaining distance to the edge has
      // density proportional to (2 half - r) and speed density to 1 / v.
      const double r = 2.0 * half * (1.0 - std::sqrt(1.0 - unit(rng)));
      c.s = c.dir * (half - r);
      c.speed = v_max * std::pow(kMinSpeedFraction, 1.0 - unit(rng));
    } else {
      c.s = -half + 2.0 * half * unit(rng);
      c.speed = draw_speed();
    }
    c.leave_timer = draw_timer();
    c.entry_frame = 0;
    alive.push_back(std::move(c));
  }

  std::poisson_distribution<int> arrivals(std::max(io_rate_per_s * dt, 1e-300));
  for (std::int64_t f = 0; f < n_frames; ++f) {
    for (auto& c : alive) c.positions.push_back(position(c));
    if (f + 1 == n_frames) break;

    std::vector<Car> next;
    next.reserve(alive.size() + 4);
    for (auto& c : alive) {
      if (!c.leaving) {
        c.leave_timer -= dt;
        if (c.leave_timer <= 0.0) {
          c.leaving = true;
          c.leg_planned = false;  // drop a planned turn
        }
      }
      if (advance(c, c.speed * dt, half, rng)) {
        done.push_back({c.id, c.entry_frame, f + 1, std::move(c.positions)});
      } else {
        next.push_back(std::move(c));
      }
    }
    const int n_new = io_rate_per_s > 0.0 ? arrivals(rng) : 0;
    for (int k = 0; k < n_new; ++k) {
      Car c;
      c.id = next_id++;
      c.axis = unit(rng) < 0.5 ? Axis::horizontal : Axis::vertical;
      c.road = kRoadCoords[unit(rng) < 0.5 ? 0 : 1];
      const double end = unit(rng) < 0.5 ? -half : half;
      c.dir = end < 0.0 ? 1 : -1;
      c.s = end;
      c.lane = std::uniform_int_distribution<int>(0, kLanesPerDirection - 1)(rng);
      c.speed = draw_speed();
      c.leave_timer = draw_timer();
      c.entry_frame = f + 1;
      next.push_back(std::move(c));
    }
    alive = std::move(next);
  }
  for (auto& c : alive) done.push_back({c.id, c.entry_frame, n_frames, std::move(c.positions)});
  std::sort(done.begin(), done.end(),
            [](const VehicleTrace& a, const VehicleTrace& b) { return a.vehicle_id < b.vehicle_id; });
  return done;
}

// ---------------------------------------------------------------------------
// CSV adapter: header `vehicle_id,frame,x_m,y_m`, rows sorted by
// (vehicle_id, frame).
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_traces_csv(std::ostream& out, const std::vector<VehicleTrace>& traces) {
  out << "vehicle_id,frame,x_m,y_m\n";
  for (const auto& t : traces)
    for (std::int64_t f = t.entry_frame; f < t.exit_frame; ++f) {
      const Vec2 p = t.at(f);
      out << t.vehicle_id << ',' << f << ',' << format_double(p.x) << ',' << format_double(p.y) << '\n';
    }
}

inline void export_traces(const std::filesystem::path& path, const std::vector<VehicleTrace>& traces) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write trace file " + path.string());
  write_traces_csv(out, traces);
}

namespace detail {

template <class T>
bool parse_number(std::string_view field, T& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  if (field.empty()) return false;
  auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

}  // namespace detail

inline std::vector<VehicleTrace> read_traces_csv(std::istream& in, const ScenarioConfig& cfg) {
  std::string line;
  if (!std::getline(in, line)) throw TraceError("trace CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "vehicle_id,frame,x_m,y_m")
    throw TraceError("trace CSV header must be 'vehicle_id,frame,x_m,y_m'");

  std::vector<VehicleTrace> traces;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::array<std::string_view, 4> fields;
    std::string_view rest(line);
    for (int i = 0; i < 4; ++i) {
      const auto comma = rest.find(',');
      if (i < 3 && comma == std::string_view::npos)
        throw TraceError("row " + std::to_string(row) + ": expected 4 fields");
      fields[i] = rest.substr(0, i < 3 ? comma : rest.size());
      if (i < 3) rest.remove_prefix(comma + 1);
    }
    if (fields[3].find(',') != std::string_view::npos)
      throw TraceError("row " + std::to_string(row) + ": expected 4 fields");
    int id = 0;
    std::int64_t frame = 0;
    Vec2 p;
    if (!detail::parse_number(fields[0], id) || !detail::parse_number(fields[1], frame) ||
        !detail::parse_number(fields[2], p.x) || !detail::parse_number(fields[3], p.y))
      throw TraceError("row " + std::to_string(row) + ": malformed value");
    if (frame < 0) throw TraceError("row " + std::to_string(row) + ": negative frame");
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !inside_region(p, cfg.region_half_width_m))
      throw TraceError("row " + std::to_string(row) + ": position outside the region");

    if (traces.empty() || traces.back().vehicle_id != id) {
      if (!traces.empty() && id < traces.back().vehicle_id)
        throw TraceError("row " + std::to_string(row) + ": rows not sorted by vehicle_id");
      traces.push_back({id, frame, frame, {}});
    } else if (frame != traces.back().exit_frame) {
      throw TraceError("row " + std::to_string(row) + ": frame gap or disorder for vehicle " +
                       std::to_string(id));
    }
    traces.back().positions.push_back(p);
    traces.back().exit_frame = frame + 1;
  }
  return traces;
}

inline std::vector<VehicleTrace> import_traces(const std::filesystem::path& path, const ScenarioConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace file " + path.string());
  return read_traces_csv(in, cfg);
}

}  // namespace aephora
