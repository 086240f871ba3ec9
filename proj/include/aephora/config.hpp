#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace aephora {

struct Vec2 {
  double x{0.0};
  double y{0.0};

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

enum class BsClass { macro, micro };

inline const char* to_string(BsClass c) { return c == BsClass::macro ? "macro" : "micro"; }

struct BsConfig {
  int id{0};
  BsClass cls{BsClass::micro};
  Vec2 position{};
  double alpha_db{0.0};
  double beta{0.0};
  int rb_count{0};
  double rb_power_w{0.0};
  double rb_bandwidth_hz{0.0};
  double carrier_hz{0.0};

  double alpha_linear() const { return db_to_linear(alpha_db); }
};

/// Thrown for malformed or invalid scenario configuration. `field()` names
/// the offending key (dotted path for nested entries).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ScenarioConfig {
  std::vector<BsConfig> bss;
  double region_half_width_m{400.0};
  double noise_psd_w_per_hz{dbm_to_watts(-173.0)};
  double slot_s{1e-3};
  int frame_slots{100};
  double tau_th_s{0.02};
  double lambda_bps{2e6};
  double sigma_x_db{4.0};
  double rician_k{10.0};
  int n_tx{32};
  double gamma_bf{0.5};
  double zeta{1.1};
  std::uint64_t seed{1};
  std::int64_t duration_slots{30000};
  // Gain-history length fed to history-driven predictors.
  int history_frames{10};
  double v_max_mps{18.34};

  int bs_count() const { return static_cast<int>(bss.size()); }
  double arrival_bits_per_slot() const { return lambda_bps * slot_s; }
  double qos_threshold_bits() const { return lambda_bps * tau_th_s; }
  double frame_s() const { return frame_slots * slot_s; }
  double beamforming_gain() const { return gamma_bf * n_tx; }
  std::int64_t frame_count() const {
    return (duration_slots + frame_slots - 1) / frame_slots;
  }
};

inline BsConfig default_macro() {
  return BsConfig{0, BsClass::macro, {0.0, 0.0}, -55.4, 2.2, 100, dbm_to_watts(30.0), 0.18e6, 5.9e9};
}

inline BsConfig default_micro(int id, Vec2 pos) {
  return BsConfig{id, BsClass::micro, pos, -72.0, 3.0, 100, dbm_to_watts(20.0), 1.8e6, 24e9};
}

/// Default scenario: one macro at the origin, four micros at (+-250, +-250).
inline ScenarioConfig default_config() {
  ScenarioConfig cfg;
  cfg.bss = {default_macro(),
             default_micro(1, {250.0, 250.0}),
             default_micro(2, {-250.0, 250.0}),
             default_micro(3, {-250.0, -250.0}),
             default_micro(4, {250.0, -250.0})};
  return cfg;
}

/// Throws ConfigError on a hard violation; returns soft warnings.
inline std::vector<std::string> validate(const ScenarioConfig& cfg) {
  std::vector<std::string> warnings;
  auto require = [](bool ok, const std::string& field, const std::string& msg) {
    if (!ok) throw ConfigError(field, field + ": " + msg);
  };
  require(!cfg.bss.empty(), "bss", "at least one BS is required");
  int macros = 0;
  for (std::size_t i = 0; i < cfg.bss.size(); ++i) {
    const auto& bs = cfg.bss[i];
    const std::string f = "bss[" + std::to_string(i) + "]";
    require(bs.id == static_cast<int>(i), f + ".id", "BS ids must be 0..M in order");
    if (bs.cls == BsClass::macro) ++macros;
    require(bs.rb_power_w > 0.0, f + ".rb_power_w", "must be positive");
    require(bs.rb_bandwidth_hz > 0.0, f + ".rb_bandwidth_hz", "must be positive");
    require(bs.rb_count >= 1, f + ".rb_count", "must be at least 1");
    require(bs.beta > 0.0, f + ".beta", "must be positive");
    require(std::isfinite(bs.alpha_db), f + ".alpha_db", "must be finite");
  }
  require(macros == 1 && cfg.bss[0].cls == BsClass::macro, "bss",
          "exactly one macro BS with id 0 is required");
  const auto& macro = cfg.bss[0];
  for (std::size_t i = 1; i < cfg.bss.size(); ++i) {
    const auto& micro = cfg.bss[i];
    if (!(macro.rb_bandwidth_hz < micro.rb_bandwidth_hz))
      warnings.push_back("bss[" + std::to_string(i) +
                         "]: macro RB bandwidth is not below micro RB bandwidth");
    if (!(macro.rb_power_w > micro.rb_power_w))
      warnings.push_back("bss[" + std::to_string(i) +
                         "]: macro RB power is not above micro RB power");
  }
  require(cfg.zeta > 1.0, "zeta", "zeta must exceed 1");
  require(cfg.frame_slots >= 1, "frame_slots", "must be at least 1");
  require(cfg.region_half_width_m > 0.0, "region_half_width_m", "must be positive");
  require(cfg.noise_psd_w_per_hz > 0.0, "noise_psd_w_per_hz", "must be positive");
  require(cfg.slot_s > 0.0, "slot_s", "must be positive");
  require(cfg.tau_th_s > 0.0, "tau_th_s", "must be positive");
  require(cfg.lambda_bps > 0.0, "lambda_bps", "must be positive");
  require(cfg.sigma_x_db >= 0.0, "sigma_x_db", "must be non-negative");
  require(cfg.rician_k >= 0.0, "rician_k", "must be non-negative");
  require(cfg.n_tx >= 1, "n_tx", "must be at least 1");
  require(cfg.gamma_bf > 0.0, "gamma_bf", "must be positive");
  require(cfg.duration_slots >= 1, "duration_slots", "must be at least 1");
  require(cfg.history_frames >= 1, "history_frames", "must be at least 1");
  require(cfg.v_max_mps > 0.0, "v_max_mps", "must be positive");
  return warnings;
}

namespace detail {

template <class T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, path + ": " + e.what());
  }
}

inline Vec2 get_vec2(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(path, path + ": expected [x, y] in meters");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline BsConfig bs_from_json(const nlohmann::json& j, int index) {
  const std::string path = "bss[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ConfigError(path, path + ": expected an object");
  static const std::set<std::string> known = {"id", "class", "position", "alpha_db",
                                              "beta", "rb_count", "rb_power_w",
                                              "rb_bandwidth_hz", "carrier_hz"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError(path + "." + key, path + "." + key + ": unknown field");

  BsClass cls = index == 0 ? BsClass::macro : BsClass::micro;
  if (j.contains("class")) {
    const auto name = get_field<std::string>(j, "class", path + ".class");
    if (name == "macro")
      cls = BsClass::macro;
    else if (name == "micro")
      cls = BsClass::micro;
    else
      throw ConfigError(path + ".class", path + ".class: expected \"macro\" or \"micro\"");
  }
  BsConfig bs = cls == BsClass::macro ? default_macro() : default_micro(index, {});
  bs.id = index;
  if (j.contains("id")) bs.id = get_field<int>(j, "id", path + ".id");
  if (!j.contains("position") && cls == BsClass::micro)
    throw ConfigError(path + ".position", path + ".position: required for micro BSs");
  if (j.contains("position")) bs.position = get_vec2(j.at("position"), path + ".position");
  if (j.contains("alpha_db")) bs.alpha_db = get_field<double>(j, "alpha_db", path + ".alpha_db");
  if (j.contains("beta")) bs.beta = get_field<double>(j, "beta", path + ".beta");
  if (j.contains("rb_count")) bs.rb_count = get_field<int>(j, "rb_count", path + ".rb_count");
  if (j.contains("rb_power_w")) bs.rb_power_w = get_field<double>(j, "rb_power_w", path + ".rb_power_w");
  if (j.contains("rb_bandwidth_hz"))
    bs.rb_bandwidth_hz = get_field<double>(j, "rb_bandwidth_hz", path + ".rb_bandwidth_hz");
  if (j.contains("carrier_hz")) bs.carrier_hz = get_field<double>(j, "carrier_hz", path + ".carrier_hz");
  return bs;
}

}  // namespace detail

/// Parses a scenario from JSON. Omitted fields take their default values;
/// a present `bss` array replaces the default layout entirely.
inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "config root must be a JSON object");
  static const std::set<std::string> known = {
      "bss", "region_half_width_m", "noise_psd_w_per_hz", "slot_s", "frame_slots",
      "tau_th_s", "lambda_bps", "sigma_x_db", "rician_k", "n_tx", "gamma_bf", "zeta",
      "seed", "duration_slots", "history_frames", "v_max_mps"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError(key, key + ": unknown field");

  ScenarioConfig cfg = default_config();
  if (j.contains("bss")) {
    const auto& arr = j.at("bss");
    if (!arr.is_array()) throw ConfigError("bss", "bss: expected an array");
    cfg.bss.clear();
    for (std::size_t i = 0; i < arr.size(); ++i)
      cfg.bss.push_back(detail::bs_from_json(arr[i], static_cast<int>(i)));
  }
  auto set = [&j]<class T>(const char* key, T& out) {
    if (j.contains(key)) out = detail::get_field<T>(j, key, key);
  };
  set("region_half_width_m", cfg.region_half_width_m);
  set("noise_psd_w_per_hz", cfg.noise_psd_w_per_hz);
  set("slot_s", cfg.slot_s);
  set("frame_slots", cfg.frame_slots);
  set("tau_th_s", cfg.tau_th_s);
  set("lambda_bps", cfg.lambda_bps);
  set("sigma_x_db", cfg.sigma_x_db);
  set("rician_k", cfg.rician_k);
  set("n_tx", cfg.n_tx);
  set("gamma_bf", cfg.gamma_bf);
  set("zeta", cfg.zeta);
  set("seed", cfg.seed);
  set("duration_slots", cfg.duration_slots);
  set("history_frames", cfg.history_frames);
  set("v_max_mps", cfg.v_max_mps);
  return cfg;
}

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
  nlohmann::json bss = nlohmann::json::array();
  for (const auto& bs : cfg.bss) {
    bss.push_back({{"id", bs.id},
                   {"class", to_string(bs.cls)},
                   {"position", {bs.position.x, bs.position.y}},
                   {"alpha_db", bs.alpha_db},
                   {"beta", bs.beta},
                   {"rb_count", bs.rb_count},
                   {"rb_power_w", bs.rb_power_w},
                   {"rb_bandwidth_hz", bs.rb_bandwidth_hz},
                   {"carrier_hz", bs.carrier_hz}});
  }
  return {{"bss", bss},
          {"region_half_width_m", cfg.region_half_width_m},
          {"noise_psd_w_per_hz", cfg.noise_psd_w_per_hz},
          {"slot_s", cfg.slot_s},
          {"frame_slots", cfg.frame_slots},
          {"tau_th_s", cfg.tau_th_s},
          {"lambda_bps", cfg.lambda_bps},
          {"sigma_x_db", cfg.sigma_x_db},
          {"rician_k", cfg.rician_k},
          {"n_tx", cfg.n_tx},
          {"gamma_bf", cfg.gamma_bf},
          {"zeta", cfg.zeta},
          {"seed", cfg.seed},
          {"duration_slots", cfg.duration_slots},
          {"history_frames", cfg.history_frames},
          {"v_max_mps", cfg.v_max_mps}};
}

/// Parses and validates; soft warnings go to `warn` (std::clog by default).
inline ScenarioConfig parse_config(const std::string& text, std::ostream& warn = std::clog) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("config parse error: ") + e.what());
  }
  ScenarioConfig cfg = config_from_json(j);
  for (const auto& w : validate(cfg)) warn << "warning: " << w << '\n';
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path, std::ostream& warn = std::clog) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), warn);
}

}  // namespace aephora
