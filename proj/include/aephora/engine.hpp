#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "channel.hpp"
#include "config.hpp"
#include "gap.hpp"
#include "json.hpp"
#include "policies.hpp"
#include "predictor.hpp"
#include "queues.hpp"
#include "rng.hpp"
#include "traces.hpp"

namespace aephora {

/// Per-slot snapshot handed to RunOptions::on_slot (tests and debugging).
struct SlotRecord {
  std::int64_t slot{0};
  std::int64_t frame{0};
  std::vector<int> vehicle_ids;
  std::vector<int> bs;
  std::vector<double> rbs;
  std::vector<double> backlog_before;
  std::vector<double> served_bits;
  std::vector<double> arrived_bits;
  double power_w{0.0};
};

/// Per-frame snapshot handed to RunOptions::on_frame and the JSON-lines trace.
struct FrameRecord {
  std::int64_t frame{0};
  std::vector<int> vehicle_ids;
  std::vector<int> bs;                  // association in force during this frame
  std::map<int, int> next_association;  // decided in this frame for the next
  int relax_rounds{-1};                 // -1 when no GAP was solved
  double energy_j{0.0};                 // sum over slots of p * k * slot_s
  std::int64_t violating_pairs{0};
};

struct RunOptions {
  // Key the random streams on scheme and provider as well as (seed, lambda).
  bool independent_streams{false};
  ChannelHooks hooks{};
  // Replaces the Poisson arrival draw (the draw is still consumed).
  std::function<double(std::int64_t slot, int vehicle_id)> arrival_override;
  std::ostream* frame_trace{nullptr};
  std::function<void(const FrameRecord&)> on_frame;
  std::function<void(const SlotRecord&)> on_slot;
};

struct RunResult {
  Scheme scheme{Scheme::aephora};
  std::string predictor{"oracle"};
  double lambda_bps{0.0};
  std::uint64_t seed{0};
  double avg_power_w{0.0};
  std::vector<double> per_bs_power_w;
  double violation_prob{0.0};
  // False when every slot was empty; violation_prob is then reported as 0.
  bool violation_defined{false};
  std::int64_t empty_slots{0};
  std::int64_t slots_simulated{0};
  std::map<int, std::int64_t> relax_rounds_histogram;
  std::int64_t gap_instances{0};
  std::int64_t gap_certificate_violations{0};
  std::int64_t rb_capacity_violations{0};
  std::int64_t predictor_failures{0};
  std::int64_t fallback_estimates{0};
  std::int64_t handovers{0};
  double mean_vehicles{0.0};
};

/// A run stopped early (external predictor exhausted its restarts).
/// `partial` holds the metrics accumulated up to the failure.
class RunAborted : public std::runtime_error {
 public:
  RunAborted(const std::string& what, RunResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const RunResult& partial() const { return partial_; }

 private:
  RunResult partial_;
};

namespace detail {

inline std::uint64_t lambda_key(double lambda_bps) { return static_cast<std::uint64_t>(std::llround(lambda_bps)); }

inline std::uint64_t run_key(const ScenarioConfig& cfg, Scheme scheme, const ProviderSpec& provider,
                             bool independent) {
  Rng r = independent ? make_rng({cfg.seed, lambda_key(cfg.lambda_bps), static_cast<std::uint64_t>(scheme) + 1,
                                  static_cast<std::uint64_t>(provider.kind) + 1})
                      : make_rng({cfg.seed, lambda_key(cfg.lambda_bps)});
  return r();
}

struct VehicleState {
  int id{0};
  int bs{0};
  double backlog{0.0};
  VehicleStreams streams;
  ArrivalSampler arrivals;
  GainHistory history;

  VehicleState(int vid, std::uint64_t key, const ScenarioConfig& cfg)
      : id(vid), streams(key, vid), arrivals(cfg.lambda_bps, cfg.slot_s) {
    history.vehicle_id = vid;
  }
};

}  // namespace detail

/// Builds the provider for one run. Noisy providers draw from a stream keyed
/// on the run, so they too are common across schemes.
inline std::unique_ptr<MobilityPredictor> make_provider(const ProviderSpec& spec, const ScenarioConfig& cfg,
                                                        std::uint64_t key) {
  switch (spec.kind) {
    case PredictorKind::oracle: return std::make_unique<OraclePredictor>();
    case PredictorKind::noisy:
      return std::make_unique<NoisyOraclePredictor>(
          spec.noisy_mae_m, static_cast<std::size_t>(cfg.history_frames), cfg.region_half_width_m,
          make_rng({key, static_cast<std::uint64_t>(Stream::prediction)}));
    case PredictorKind::external: {
      ExternalPredictor::Options opt;
      opt.command = spec.command;
      opt.n_bs = cfg.bs_count();
      opt.history_frames = static_cast<std::size_t>(cfg.history_frames);
      opt.half_width = cfg.region_half_width_m;
      return std::make_unique<ExternalPredictor>(opt);
    }
  }
  throw std::invalid_argument("unknown predictor kind");
}

/// Runs one scheme over the traces. Frame x: admit new vehicles on the macro
/// BS and apply the association decided in frame x-1; draw the channel and
/// measure g; predict positions for x+1 and decide the next association;
/// then serve N_HO slots with per-slot allocation, fresh fading, arrivals and
/// power/violation metering.
inline RunResult run(const ScenarioConfig& cfg, const std::vector<VehicleTrace>& traces, Scheme scheme,
                     const ProviderSpec& provider_spec, const RunOptions& opt = {}) {
  validate(cfg);
  const std::uint64_t key = detail::run_key(cfg, scheme, provider_spec, opt.independent_streams);
  const int n_bs = cfg.bs_count();
  const std::int64_t n_frames = cfg.frame_count();
  const double threshold = cfg.qos_threshold_bits();
  const double half_threshold = threshold / 2.0;
  const bool integer_rbs = scheme != Scheme::infrb_lb;

  RunResult res;
  res.scheme = scheme;
  res.predictor = provider_spec.label();
  res.lambda_bps = cfg.lambda_bps;
  res.seed = cfg.seed;
  res.per_bs_power_w.assign(n_bs, 0.0);

  std::unordered_map<int, const VehicleTrace*> trace_of;
  for (const auto& t : traces) trace_of[t.vehicle_id] = &t;

  std::unique_ptr<MobilityPredictor> provider;
  std::vector<double> energy(n_bs, 0.0);  // sum of p * k over slots, per BS
  ViolationMeter meter;
  std::int64_t slot = 0;
  double vehicle_frames = 0.0;
  std::int64_t fallbacks = 0;

  auto finalize = [&]() {
    res.slots_simulated = slot;
    res.avg_power_w = 0.0;
    for (int m = 0; m < n_bs; ++m) {
      res.per_bs_power_w[m] = slot > 0 ? energy[m] / static_cast<double>(slot) : 0.0;
      res.avg_power_w += res.per_bs_power_w[m];
    }
    res.violation_defined = meter.counted_slots() > 0;
    res.violation_prob = meter.probability();
    res.empty_slots = meter.empty_slots();
    res.predictor_failures = provider ? provider->failures() : 0;
    res.fallback_estimates = fallbacks;
    const std::int64_t frames_run = (slot + cfg.frame_slots - 1) / cfg.frame_slots;
    res.mean_vehicles = frames_run > 0 ? vehicle_frames / static_cast<double>(frames_run) : 0.0;
  };

  try {
    provider = make_provider(provider_spec, cfg, key);
  } catch (const PredictorFatal& e) {
    finalize();
    throw RunAborted(e.what(), res);
  }

  std::vector<detail::VehicleState> vehicles;  // present, sorted by id
  std::map<int, int> pending;                  // association decided for the next frame

  // Per-slot scratch.
  std::vector<std::vector<int>> members(n_bs);
  std::vector<HraItem> items;
  std::vector<int> grant;
  std::vector<int> order;
  std::vector<double> frame_bits;   // per-RB bits at the frame-start gain, serving link
  std::vector<double> serving_avg;  // G of the serving link
  std::vector<double> rbs;
  std::vector<double> slot_bits;

  for (std::int64_t x = 0; x < n_frames; ++x) {
    // Membership: keep continuing vehicles, admit arrivals on the macro BS.
    const auto present = vehicles_in_frame(traces, x);
    {
      std::vector<detail::VehicleState> next;
      next.reserve(present.size());
      auto it = vehicles.begin();
      for (const auto& pv : present) {
        while (it != vehicles.end() && it->id < pv.vehicle_id) ++it;
        if (it != vehicles.end() && it->id == pv.vehicle_id) {
          next.push_back(std::move(*it));
        } else {
          next.emplace_back(pv.vehicle_id, key, cfg);
        }
        auto& v = next.back();
        const auto d = pending.find(v.id);
        const int target = d != pending.end() ? d->second : v.bs;
        if (target != v.bs && it != vehicles.end() && it->id == pv.vehicle_id) ++res.handovers;
        v.bs = target;
      }
      vehicles = std::move(next);
      pending.clear();
    }
    const std::size_t nv = vehicles.size();
    vehicle_frames += static_cast<double>(nv);

    // Channel and measurement.
    std::vector<VehicleStreams*> streams(nv);
    for (std::size_t v = 0; v < nv; ++v) streams[v] = &vehicles[v].streams;
    const ChannelFrame cf = draw_channel_frame(cfg, x, present, streams, opt.hooks);
    for (std::size_t v = 0; v < nv; ++v) {
      std::vector<double> row(n_bs);
      for (int m = 0; m < n_bs; ++m) row[m] = linear_to_db(cf.g(m, v));
      vehicles[v].history.push(std::move(row), static_cast<std::size_t>(cfg.history_frames));
    }

    FrameRecord frec;
    frec.frame = x;

    // Prediction and next-frame association.
    if (x + 1 < n_frames && nv > 0) {
      std::vector<PredictionQuery> queries;
      queries.reserve(nv);
      for (std::size_t v = 0; v < nv; ++v) {
        const VehicleTrace* t = trace_of.at(vehicles[v].id);
        const bool stays = t->present(x + 1);
        if (provider->knows_truth() && !stays) continue;
        PredictionQuery q;
        q.vehicle_id = vehicles[v].id;
        q.history = &vehicles[v].history;
        q.current_position = present[v].position;
        if (stays && provider->knows_truth()) q.true_next_position = t->at(x + 1);
        queries.push_back(q);
      }
      std::vector<PositionEstimate> est;
      try {
        est = provider->predict(x, queries);
      } catch (const PredictorFatal& e) {
        finalize();
        throw RunAborted(e.what(), res);
      }
      std::vector<AssociationQuery> aq;
      aq.reserve(est.size());
      for (const auto& e : est) {
        if (e.source == EstimateSource::fallback) ++fallbacks;
        aq.push_back({e.vehicle_id, e.position});
      }
      std::vector<int> assoc;
      switch (scheme) {
        case Scheme::aephora: {
          if (!aq.empty()) {
            EphoResult r = epho_associate(aq, cfg);
            assoc = std::move(r.bs);
            ++res.gap_instances;
            ++res.relax_rounds_histogram[r.gap.relax_rounds];
            frec.relax_rounds = r.gap.relax_rounds;
            if (!certify(r.gap).all()) ++res.gap_certificate_violations;
          }
          break;
        }
        case Scheme::hee:
        case Scheme::infrb_lb: assoc = hee_associate(aq, cfg); break;
        case Scheme::hrbe: assoc = hrbe_associate(aq, cfg); break;
      }
      for (std::size_t k = 0; k < aq.size(); ++k) pending[aq[k].vehicle_id] = assoc[k];
      frec.next_association = pending;
    }

    // Slots.
    frame_bits.assign(nv, 0.0);
    serving_avg.assign(nv, 0.0);
    slot_bits.assign(nv, 0.0);
    rbs.assign(nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
      const int m = vehicles[v].bs;
      frame_bits[v] = link_budget(cfg.bss[m], cf.g(m, v), cfg.noise_psd_w_per_hz, cfg.slot_s).bits_per_rb_slot;
      serving_avg[v] = cf.G(m, v);
    }
    for (auto& mem : members) mem.clear();
    for (std::size_t v = 0; v < nv; ++v) members[vehicles[v].bs].push_back(static_cast<int>(v));

    for (int i = 0; i < cfg.frame_slots && slot < cfg.duration_slots; ++i, ++slot) {
      std::int64_t violating = 0;
      for (const auto& v : vehicles)
        if (violates(v.backlog, threshold)) ++violating;
      meter.record_slot(violating, static_cast<std::int64_t>(nv));
      frec.violating_pairs += violating;

      // Instantaneous gain on the serving link: the frame-start measurement
      // at slot 0, a fresh Rician draw afterwards.
      for (std::size_t v = 0; v < nv; ++v) {
        const int m = vehicles[v].bs;
        if (i == 0) {
          slot_bits[v] = frame_bits[v];
        } else {
          const auto h = draw_cn01(vehicles[v].streams.fading);
          const double g =
              rician_gain(serving_avg[v], cfg.rician_k, opt.hooks.freeze_fading ? std::complex<double>{} : h);
          slot_bits[v] = link_budget(cfg.bss[m], g, cfg.noise_psd_w_per_hz, cfg.slot_s).bits_per_rb_slot;
        }
      }

      double slot_power = 0.0;
      for (int m = 0; m < n_bs; ++m) {
        const auto& mem = members[m];
        if (mem.empty()) continue;
        const double p = cfg.bss[m].rb_power_w;
        if (integer_rbs) {
          items.clear();
          for (int v : mem) items.push_back({vehicles[v].id, vehicles[v].backlog, frame_bits[v]});
          grant.assign(mem.size(), 0);
          hra_allocate_into(cfg.bss[m].rb_count, half_threshold, items, grant, order);
          int total = 0;
          for (std::size_t k = 0; k < mem.size(); ++k) {
            rbs[mem[k]] = grant[k];
            total += grant[k];
          }
          if (total > cfg.bss[m].rb_count) ++res.rb_capacity_violations;
          energy[m] += p * total;
          slot_power += p * total;
        } else {
          double total = 0.0;
          for (int v : mem) {
            rbs[v] = rbs_to_clear(vehicles[v].backlog, frame_bits[v]);
            total += rbs[v];
          }
          energy[m] += p * total;
          slot_power += p * total;
        }
      }
      frec.energy_j += slot_power * cfg.slot_s;

      SlotRecord srec;
      const bool want_slot = static_cast<bool>(opt.on_slot);
      if (want_slot) {
        srec.slot = slot;
        srec.frame = x;
        srec.power_w = slot_power;
      }
      for (std::size_t v = 0; v < nv; ++v) {
        auto& st = vehicles[v];
        const double served = rbs[v] * slot_bits[v];
        double a = st.arrivals(st.streams.arrivals);
        if (opt.arrival_override) a = opt.arrival_override(slot, st.id);
        if (want_slot) {
          srec.vehicle_ids.push_back(st.id);
          srec.bs.push_back(st.bs);
          srec.rbs.push_back(rbs[v]);
          srec.backlog_before.push_back(st.backlog);
          srec.served_bits.push_back(served);
          srec.arrived_bits.push_back(a);
        }
        st.backlog = step_queue(st.backlog, served, a);
      }
      if (want_slot) opt.on_slot(srec);
    }

    for (const auto& v : vehicles) {
      frec.vehicle_ids.push_back(v.id);
      frec.bs.push_back(v.bs);
    }
    if (opt.on_frame) opt.on_frame(frec);
    if (opt.frame_trace) {
      nlohmann::json j = {{"frame", frec.frame},
                          {"vehicles", frec.vehicle_ids},
                          {"bs", frec.bs},
                          {"energy_j", frec.energy_j},
                          {"violating_pairs", frec.violating_pairs}};
      if (frec.relax_rounds >= 0) j["relax_rounds"] = frec.relax_rounds;
      *opt.frame_trace << j.dump() << '\n';
    }
  }
  finalize();
  return res;
}

struct SweepJob {
  double lambda_bps{0.0};
  Scheme scheme{Scheme::aephora};
  ProviderSpec provider;
};

struct SweepEntry {
  SweepJob job;
  std::optional<RunResult> result;
  std::string error;  // empty on success
};

/// Cartesian product lambda x scheme x provider, in that nesting order.
/// Runs execute on `threads` workers; results keep the product order and a
/// failing run is reported in its entry without stopping the others.
inline std::vector<SweepEntry> sweep(const ScenarioConfig& cfg, const std::vector<VehicleTrace>& traces,
                                     const std::vector<Scheme>& schemes, const std::vector<ProviderSpec>& providers,
                                     const std::vector<double>& lambdas, unsigned threads = 1,
                                     const RunOptions& opt = {}) {
  if (schemes.empty() || providers.empty() || lambdas.empty())
    throw std::invalid_argument("sweep needs at least one scheme, provider and lambda");
  std::vector<SweepEntry> out;
  for (double l : lambdas)
    for (Scheme s : schemes)
      for (const auto& p : providers) out.push_back({{l, s, p}, std::nullopt, {}});

  RunOptions run_opt = opt;
  run_opt.frame_trace = nullptr;  // not meaningful across concurrent runs
  run_opt.on_frame = nullptr;
  run_opt.on_slot = nullptr;

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < out.size(); i = next++) {
      auto& e = out[i];
      ScenarioConfig c = cfg;
      c.lambda_bps = e.job.lambda_bps;
      try {
        e.result = run(c, traces, e.job.scheme, e.job.provider, run_opt);
      } catch (const RunAborted& ex) {
        e.result = ex.partial();
        e.error = ex.what();
      } catch (const std::exception& ex) {
        e.error = ex.what();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(out.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace aephora
