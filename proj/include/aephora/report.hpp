#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "engine.hpp"
#include "json.hpp"
#include "traces.hpp"

namespace aephora {

// CSV columns. Per-BS powers follow as p_bs0_w, p_bs1_w, ...
inline constexpr const char* kResultColumns =
    "lambda_bps,scheme,predictor,avg_power_w,violation_prob,violation_defined,empty_slots,seed,slots_simulated,"
    "mean_vehicles,handovers,gap_instances,gap_certificate_violations,rb_capacity_violations,predictor_failures,"
    "fallback_estimates,status";

inline void write_csv_header(std::ostream& out, int n_bs) {
  out << kResultColumns;
  for (int m = 0; m < n_bs; ++m) out << ",p_bs" << m << "_w";
  out << '\n';
}

inline void write_csv_row(std::ostream& out, const RunResult& r, const std::string& status = "ok") {
  out << format_double(r.lambda_bps) << ',' << to_string(r.scheme) << ',' << r.predictor << ','
      << format_double(r.avg_power_w) << ',' << format_double(r.violation_prob) << ','
      << (r.violation_defined ? 1 : 0) << ',' << r.empty_slots << ',' << r.seed << ',' << r.slots_simulated << ','
      << format_double(r.mean_vehicles) << ',' << r.handovers << ',' << r.gap_instances << ','
      << r.gap_certificate_violations << ',' << r.rb_capacity_violations << ',' << r.predictor_failures << ','
      << r.fallback_estimates << ',' << status;
  for (double p : r.per_bs_power_w) out << ',' << format_double(p);
  out << '\n';
}

inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [rounds, count] : r.relax_rounds_histogram) hist[std::to_string(rounds)] = count;
  return {{"lambda_bps", r.lambda_bps},
          {"scheme", to_string(r.scheme)},
          {"predictor", r.predictor},
          {"seed", r.seed},
          {"avg_power_w", r.avg_power_w},
          {"per_bs_power_w", r.per_bs_power_w},
          {"violation_prob", r.violation_prob},
          {"violation_defined", r.violation_defined},
          {"empty_slots", r.empty_slots},
          {"slots_simulated", r.slots_simulated},
          {"relax_rounds_histogram", hist},
          {"gap_instances", r.gap_instances},
          {"gap_certificate_violations", r.gap_certificate_violations},
          {"rb_capacity_violations", r.rb_capacity_violations},
          {"predictor_failures", r.predictor_failures},
          {"fallback_estimates", r.fallback_estimates},
          {"handovers", r.handovers},
          {"mean_vehicles", r.mean_vehicles}};
}

/// Writes every entry that has a result; aborted runs carry status "aborted".
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepEntry>& entries, int n_bs) {
  write_csv_header(out, n_bs);
  for (const auto& e : entries)
    if (e.result) write_csv_row(out, *e.result, e.error.empty() ? "ok" : "aborted");
}

inline nlohmann::json sweep_to_json(const std::vector<SweepEntry>& entries) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j = e.result ? to_json(*e.result) : nlohmann::json::object();
    j["lambda_bps"] = e.job.lambda_bps;
    j["scheme"] = to_string(e.job.scheme);
    j["predictor"] = e.job.provider.label();
    if (!e.error.empty()) j["error"] = e.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace aephora
