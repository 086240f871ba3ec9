#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "aephora/engine.hpp"
#include "aephora/report.hpp"

using namespace aephora;

namespace {

ScenarioConfig small_config(std::int64_t slots, double lambda = 2e6) {
  auto cfg = default_config();
  cfg.duration_slots = slots;
  cfg.lambda_bps = lambda;
  return cfg;
}

std::vector<VehicleTrace> static_vehicle(Vec2 p, std::int64_t frames, int id = 0) {
  return {{id, 0, frames, std::vector<Vec2>(static_cast<std::size_t>(frames), p)}};
}

ProviderSpec oracle() { return {}; }

// Vehicle arrival rate that keeps the default mean sojourn for a smaller population.
double io_for(double population) { return population * 1.6 / 220.0; }

}  // namespace

TEST(Engine, ZeroVehicles) {
  const auto cfg = small_config(1000);
  const auto r = run(cfg, {}, Scheme::aephora, oracle());
  EXPECT_EQ(r.slots_simulated, 1000);
  EXPECT_EQ(r.empty_slots, 1000);
  EXPECT_FALSE(r.violation_defined);
  EXPECT_EQ(r.violation_prob, 0.0);
  EXPECT_EQ(r.avg_power_w, 0.0);
  EXPECT_EQ(r.gap_instances, 0);
}

TEST(Engine, HandSimulatedStaticVehicle) {
  auto cfg = small_config(15);
  cfg.frame_slots = 5;
  const Vec2 p{250.0, 230.0};
  const auto traces = static_vehicle(p, 3, 4);
  const double arrival = 3000.0;
  RunOptions opt;
  opt.hooks = {true, true};
  opt.arrival_override = [&](std::int64_t, int) { return arrival; };
  std::vector<SlotRecord> slots;
  opt.on_slot = [&](const SlotRecord& s) { slots.push_back(s); };
  const auto r = run(cfg, traces, Scheme::aephora, oracle(), opt);

  // Expected association: macro in frame 0, then the cheaper EPHO edge.
  int epho_bs = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int m = 0; m < cfg.bs_count(); ++m) {
    const double g = estimate_gain_at(cfg.bss[m], p, cfg.n_tx, cfg.gamma_bf);
    const double k = estimate_required_rbs(cfg.bss[m], g, cfg.lambda_bps, cfg.sigma_x_db, cfg.noise_psd_w_per_hz);
    if (k <= cfg.bss[m].rb_count && cfg.bss[m].rb_power_w * k < best_cost) {
      best_cost = cfg.bss[m].rb_power_w * k;
      epho_bs = m;
    }
  }
  ASSERT_NE(epho_bs, 0);
  const int bs_of_frame[3] = {0, epho_bs, epho_bs};

  double q = 0.0, energy = 0.0;
  std::vector<double> per_bs(cfg.bs_count(), 0.0);
  ASSERT_EQ(slots.size(), 15u);
  for (int n = 0; n < 15; ++n) {
    const int m = bs_of_frame[n / 5];
    const auto& bs = cfg.bss[m];
    const double G = average_gain(bs, p, 0.0, cfg.n_tx, cfg.gamma_bf);
    const double g = G * cfg.rician_k / (cfg.rician_k + 1.0);
    const double bits = bs.rb_bandwidth_hz * cfg.slot_s *
                        std::log2(1.0 + bs.rb_power_w * g / (cfg.noise_psd_w_per_hz * bs.rb_bandwidth_hz));
    const double need = q / bits;
    int k = static_cast<int>(q > cfg.qos_threshold_bits() / 2 ? std::ceil(need) : std::floor(need));
    k = std::min(k, bs.rb_count);
    EXPECT_EQ(slots[n].bs[0], m) << "slot " << n;
    EXPECT_EQ(slots[n].rbs[0], k) << "slot " << n;
    EXPECT_NEAR(slots[n].backlog_before[0], q, 1e-6) << "slot " << n;
    EXPECT_NEAR(slots[n].served_bits[0], k * bits, 1e-9 * (1.0 + k * bits)) << "slot " << n;
    energy += bs.rb_power_w * k;
    per_bs[m] += bs.rb_power_w * k;
    q = std::max(q - k * bits, 0.0) + arrival;
  }
  EXPECT_NEAR(r.avg_power_w, energy / 15.0, 1e-12);
  for (int m = 0; m < cfg.bs_count(); ++m) EXPECT_NEAR(r.per_bs_power_w[m], per_bs[m] / 15.0, 1e-12);
  EXPECT_EQ(r.violation_prob, 0.0);
  EXPECT_TRUE(r.violation_defined);
  EXPECT_EQ(r.handovers, 1);
  EXPECT_EQ(r.gap_instances, 2);
  EXPECT_EQ(r.relax_rounds_histogram.at(0), 2);
  EXPECT_DOUBLE_EQ(r.mean_vehicles, 1.0);
}

TEST(Engine, ViolationsUsePreServiceBacklog) {
  // Arrivals far above what one RB can carry: once the backlog passes the
  // threshold every later slot counts as violating.
  auto cfg = small_config(200);
  cfg.bss[0].rb_count = 1;
  cfg.bss.resize(1);
  const auto traces = static_vehicle({399, 399}, 2);
  RunOptions opt;
  opt.hooks = {true, true};
  opt.arrival_override = [](std::int64_t, int) { return 30000.0; };
  std::int64_t expect = 0;
  opt.on_slot = [&](const SlotRecord& s) {
    if (s.backlog_before[0] > cfg.qos_threshold_bits()) ++expect;
  };
  const auto r = run(cfg, traces, Scheme::hee, oracle(), opt);
  EXPECT_GT(expect, 150);
  EXPECT_NEAR(r.violation_prob, static_cast<double>(expect) / 200.0, 1e-12);
}

TEST(Engine, Deterministic) {
  const auto cfg = small_config(3000, 4e6);
  const auto traces = generate_traces(cfg, 60, io_for(60), 3);
  for (Scheme s : kAllSchemes) {
    const auto a = run(cfg, traces, s, parse_provider_spec("noisy:18.7"));
    const auto b = run(cfg, traces, s, parse_provider_spec("noisy:18.7"));
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump()) << to_string(s);
  }
}

TEST(Engine, PowerSumsOverBss) {
  const auto cfg = small_config(2000, 3e6);
  const auto traces = generate_traces(cfg, 80, io_for(80), 4);
  for (Scheme s : kAllSchemes) {
    const auto r = run(cfg, traces, s, oracle());
    double sum = 0.0;
    for (double p : r.per_bs_power_w) sum += p;
    EXPECT_NEAR(r.avg_power_w, sum, 1e-9 * (1.0 + sum));
    EXPECT_GE(r.violation_prob, 0.0);
    EXPECT_LE(r.violation_prob, 1.0);
    EXPECT_EQ(r.slots_simulated, 2000);
  }
}

TEST(Engine, CapacityAndFrameConstantAssociation) {
  const auto cfg = small_config(3000, 8e6);
  const auto traces = generate_traces(cfg, 150, io_for(150), 5);
  for (Scheme s : {Scheme::aephora, Scheme::hee, Scheme::hrbe}) {
    std::map<std::pair<std::int64_t, int>, int> bs_in_frame;
    bool capacity_ok = true, constant_ok = true;
    RunOptions opt;
    opt.on_slot = [&](const SlotRecord& rec) {
      std::vector<double> load(cfg.bs_count(), 0.0);
      for (std::size_t v = 0; v < rec.vehicle_ids.size(); ++v) {
        load[rec.bs[v]] += rec.rbs[v];
        EXPECT_EQ(rec.rbs[v], std::floor(rec.rbs[v]));
        auto [it, fresh] = bs_in_frame.emplace(std::make_pair(rec.frame, rec.vehicle_ids[v]), rec.bs[v]);
        if (!fresh && it->second != rec.bs[v]) constant_ok = false;
      }
      for (int m = 0; m < cfg.bs_count(); ++m) capacity_ok = capacity_ok && load[m] <= cfg.bss[m].rb_count;
    };
    const auto r = run(cfg, traces, s, oracle(), opt);
    EXPECT_TRUE(capacity_ok) << to_string(s);
    EXPECT_TRUE(constant_ok) << to_string(s);
    EXPECT_EQ(r.rb_capacity_violations, 0);
    EXPECT_EQ(r.gap_certificate_violations, 0);
  }
}

TEST(Engine, NewVehiclesStartOnMacro) {
  const auto cfg = small_config(3000);
  const auto traces = generate_traces(cfg, 60, 1.0, 6);
  std::map<int, std::int64_t> entry;
  for (const auto& t : traces) entry[t.vehicle_id] = t.entry_frame;
  RunOptions opt;
  opt.on_frame = [&](const FrameRecord& f) {
    for (std::size_t v = 0; v < f.vehicle_ids.size(); ++v)
      if (entry.at(f.vehicle_ids[v]) == f.frame) EXPECT_EQ(f.bs[v], 0);
  };
  run(cfg, traces, Scheme::hrbe, oracle(), opt);
}

TEST(Engine, CommonRandomNumbersAcrossSchemes) {
  const auto cfg = small_config(1500, 3e6);
  const auto traces = generate_traces(cfg, 40, io_for(40), 7);
  auto arrivals = [&](Scheme s, bool independent) {
    std::map<std::pair<std::int64_t, int>, double> out;
    RunOptions opt;
    opt.independent_streams = independent;
    opt.on_slot = [&](const SlotRecord& rec) {
      for (std::size_t v = 0; v < rec.vehicle_ids.size(); ++v) out[{rec.slot, rec.vehicle_ids[v]}] = rec.arrived_bits[v];
    };
    run(cfg, traces, s, oracle(), opt);
    return out;
  };
  const auto a = arrivals(Scheme::aephora, false);
  EXPECT_EQ(a, arrivals(Scheme::hrbe, false));
  EXPECT_EQ(a, arrivals(Scheme::infrb_lb, false));
  EXPECT_NE(arrivals(Scheme::aephora, true), arrivals(Scheme::hrbe, true));
}

TEST(Engine, FractionalPowerBelowIntegralWhenFullyServed) {
  // In an HEE run, wherever HRA's grant covers the fractional demand at the
  // slot's rate, the InfRB power for that demand cannot exceed it.
  const auto cfg = small_config(3000, 4e6);
  const auto traces = generate_traces(cfg, 100, io_for(100), 8);
  int checked = 0;
  RunOptions opt;
  opt.on_slot = [&](const SlotRecord& rec) {
    for (std::size_t v = 0; v < rec.vehicle_ids.size(); ++v) {
      if (rec.rbs[v] <= 0) continue;
      const double per_rb = rec.served_bits[v] / rec.rbs[v];
      const double fractional = rbs_to_clear(rec.backlog_before[v], per_rb);
      if (rec.rbs[v] >= fractional) {
        const double p = cfg.bss[rec.bs[v]].rb_power_w;
        EXPECT_LE(p * fractional, p * rec.rbs[v] + 1e-9);
        ++checked;
      }
    }
  };
  run(cfg, traces, Scheme::hee, oracle(), opt);
  EXPECT_GT(checked, 100);
}

TEST(Engine, InfRbSharesHeeAssociation) {
  const auto cfg = small_config(2000, 3e6);
  const auto traces = generate_traces(cfg, 60, io_for(60), 9);
  auto assoc = [&](Scheme s) {
    std::vector<std::vector<int>> out;
    RunOptions opt;
    opt.on_frame = [&](const FrameRecord& f) { out.push_back(f.bs); };
    run(cfg, traces, s, oracle(), opt);
    return out;
  };
  EXPECT_EQ(assoc(Scheme::hee), assoc(Scheme::infrb_lb));
}

TEST(Engine, FrameTraceJsonLines) {
  const auto cfg = small_config(500);
  const auto traces = generate_traces(cfg, 20, io_for(20), 10);
  std::ostringstream out;
  RunOptions opt;
  opt.frame_trace = &out;
  run(cfg, traces, Scheme::aephora, oracle(), opt);
  std::istringstream in(out.str());
  std::string line;
  int frames = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("frame").get<int>(), frames);
    EXPECT_EQ(j.at("vehicles").size(), j.at("bs").size());
    EXPECT_GE(j.at("energy_j").get<double>(), 0.0);
    EXPECT_EQ(j.contains("relax_rounds"), frames + 1 < 5);
    ++frames;
  }
  EXPECT_EQ(frames, 5);
}

TEST(Sweep, Bookkeeping) {
  const auto cfg = small_config(500);
  const auto traces = generate_traces(cfg, 30, io_for(30), 11);
  const std::vector<Scheme> schemes{Scheme::aephora, Scheme::infrb_lb};
  const std::vector<ProviderSpec> providers{oracle(), parse_provider_spec("noisy:18.7")};
  const std::vector<double> lambdas{1e6, 2e6, 3e6};
  const auto seq = sweep(cfg, traces, schemes, providers, lambdas, 1);
  const auto par = sweep(cfg, traces, schemes, providers, lambdas, 3);
  ASSERT_EQ(seq.size(), 12u);
  std::size_t i = 0;
  for (double l : lambdas)
    for (Scheme s : schemes)
      for (const auto& p : providers) {
        EXPECT_EQ(seq[i].job.lambda_bps, l);
        EXPECT_EQ(seq[i].job.scheme, s);
        EXPECT_EQ(seq[i].job.provider.label(), p.label());
        ASSERT_TRUE(seq[i].result);
        EXPECT_TRUE(seq[i].error.empty());
        EXPECT_EQ(seq[i].result->slots_simulated, 500);
        EXPECT_EQ(seq[i].result->lambda_bps, l);
        EXPECT_EQ(to_json(*seq[i].result).dump(), to_json(*par[i].result).dump());
        ++i;
      }
  EXPECT_THROW(sweep(cfg, traces, {}, providers, lambdas), std::invalid_argument);
}

TEST(Engine, ExternalPredictorRun) {
  const auto cfg = small_config(3000);
  const auto traces = generate_traces(cfg, 20, io_for(20), 12);
  const auto r = run(cfg, traces, Scheme::aephora,
                     parse_provider_spec(std::string("external:") + FAKE_PREDICTOR_PATH + " fixed"));
  EXPECT_EQ(r.predictor, "external");
  EXPECT_EQ(r.slots_simulated, 3000);
  EXPECT_EQ(r.predictor_failures, 0);
  EXPECT_GT(r.fallback_estimates, 0);  // cold-start frames
}

TEST(Engine, DeadPredictorAbortsWithPartialResult) {
  const auto cfg = small_config(3000);
  const auto traces = generate_traces(cfg, 20, io_for(20), 13);
  try {
    run(cfg, traces, Scheme::aephora, parse_provider_spec(std::string("external:") + FAKE_PREDICTOR_PATH + " die"));
    FAIL() << "expected RunAborted";
  } catch (const RunAborted& e) {
    // Four failed frames (the first spawn plus three restarts), then the fifth
    // frame cannot start a predictor.
    EXPECT_EQ(e.partial().slots_simulated, 4 * cfg.frame_slots);
    EXPECT_EQ(e.partial().predictor_failures, 0);  // no vehicle had a full history yet
  }
}
