// Command-line front end: simulate, sweep, gen-traces, gen-dataset.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad flags, 3 config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aephora/aephora.hpp"

namespace fs = std::filesystem;
using namespace aephora;

namespace {

struct BadFlag : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string traces;
  double population{220.0};
  double io_rate{1.6};
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> duration;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Scenario JSON (default scenario when omitted)");
  app->add_option("--traces", c.traces, "Trace CSV vehicle_id,frame,x_m,y_m (generated when omitted)");
  app->add_option("--population", c.population, "Mean vehicle population for generated traces");
  app->add_option("--io-rate", c.io_rate, "Vehicles entering (and leaving) per second for generated traces");
  app->add_option("--seed", c.seed, "Run seed (falls back to AEPHORA_SEED, then the config)");
  app->add_option("--duration", c.duration, "Simulated duration in slots");
}

ScenarioConfig load(const Common& c) {
  ScenarioConfig cfg = c.config.empty() ? default_config() : load_config(c.config, std::cerr);
  if (c.seed) {
    cfg.seed = *c.seed;
  } else if (const char* env = std::getenv("AEPHORA_SEED")) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw BadFlag(std::string("AEPHORA_SEED is not an unsigned integer: ") + env);
    }
  }
  if (c.duration) cfg.duration_slots = *c.duration;
  validate(cfg);
  return cfg;
}

std::vector<VehicleTrace> traces_for(const Common& c, const ScenarioConfig& cfg) {
  if (!c.traces.empty()) return import_traces(c.traces, cfg);
  return generate_traces(cfg, c.population, c.io_rate, cfg.seed, std::cerr);
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw BadFlag("bad " + what + " '" + s + "'");
  }
}

// "start:stop:step" (inclusive) or "a,b,c".
std::vector<double> parse_lambdas(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw BadFlag("--lambdas expects start:stop:step");
    const double start = parse_number(parts[0], "lambda start");
    const double stop = parse_number(parts[1], "lambda stop");
    const double step = parse_number(parts[2], "lambda step");
    if (!(step > 0.0) || stop < start) throw BadFlag("--lambdas needs step > 0 and stop >= start");
    const auto n = static_cast<long long>(std::floor((stop - start) / step + 1e-9));
    for (long long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(parse_number(p, "lambda"));
  }
  if (out.empty()) throw BadFlag("--lambdas is empty");
  for (double l : out)
    if (!(l > 0.0)) throw BadFlag("lambdas must be positive");
  return out;
}

std::vector<Scheme> parse_schemes(const std::string& text) {
  if (text == "all") return {std::begin(kAllSchemes), std::end(kAllSchemes)};
  std::vector<Scheme> out;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) {
    try {
      out.push_back(parse_scheme(p));
    } catch (const std::invalid_argument& e) {
      throw BadFlag(e.what());
    }
  }
  if (out.empty()) throw BadFlag("--schemes is empty");
  return out;
}

ProviderSpec parse_provider(const std::string& text) {
  try {
    return parse_provider_spec(text);
  } catch (const std::invalid_argument& e) {
    throw BadFlag(e.what());
  }
}

// Opens `path` for writing, or returns stdout for "" / "-".
std::ostream& open_out(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
  if (path.empty() || path == "-") return std::cout;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  holder = std::make_unique<std::ofstream>(p);
  if (!*holder) throw std::runtime_error("cannot write " + path);
  return *holder;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty()) return;
  std::unique_ptr<std::ofstream> holder;
  open_out(path, holder) << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AEPHORA vehicular HetNet simulator"};
  app.require_subcommand(1);

  Common sim_c;
  std::optional<double> sim_lambda;
  std::string sim_scheme = "aephora", sim_predictor = "oracle", sim_out, sim_json, sim_trace;
  bool sim_independent = false;
  auto* sim = app.add_subcommand("simulate", "Run one scheme at one arrival rate");
  add_common(sim, sim_c);
  sim->add_option("--lambda", sim_lambda, "Arrival rate in bit/s (config value when omitted)");
  sim->add_option("--scheme", sim_scheme, "aephora | hee | hrbe | infrb_lb");
  sim->add_option("--predictor", sim_predictor, "oracle | noisy[:<mae_m>] | external:<command>");
  sim->add_option("--out", sim_out, "Result CSV (stdout when omitted)");
  sim->add_option("--json", sim_json, "Result JSON");
  sim->add_option("--trace-jsonl", sim_trace, "Per-frame JSON-lines trace");
  sim->add_flag("--independent-streams", sim_independent, "Key random streams on scheme and predictor too");

  Common sw_c;
  std::string sw_lambdas = "1e6:13e6:0.5e6", sw_schemes = "all", sw_out, sw_json;
  std::vector<std::string> sw_predictors{"oracle"};
  unsigned sw_threads = 1;
  bool sw_independent = false;
  auto* sw = app.add_subcommand("sweep", "Cartesian sweep over arrival rates, schemes and predictors");
  add_common(sw, sw_c);
  sw->add_option("--lambdas", sw_lambdas, "start:stop:step (inclusive) or a comma list, bit/s");
  sw->add_option("--schemes", sw_schemes, "all or a comma list");
  sw->add_option("--predictor", sw_predictors, "Predictor spec; repeat for several")->take_all();
  sw->add_option("--threads", sw_threads, "Concurrent runs");
  sw->add_option("--out", sw_out, "Result CSV (stdout when omitted)");
  sw->add_option("--json", sw_json, "Result JSON");
  sw->add_flag("--independent-streams", sw_independent, "Key random streams on scheme and predictor too");

  Common gt_c;
  std::string gt_out;
  auto* gt = app.add_subcommand("gen-traces", "Write synthetic traces as CSV");
  add_common(gt, gt_c);
  gt->add_option("--out", gt_out, "Trace CSV (stdout when omitted)");

  Common gd_c;
  std::string gd_out = "dataset.jsonl";
  std::optional<double> gd_lambda;
  auto* gd = app.add_subcommand("gen-dataset", "Write gain-history / next-position records for predictor training");
  add_common(gd, gd_c);
  gd->add_option("--out", gd_out, "Output file, or a directory to hold dataset.jsonl");
  gd->add_option("--lambda", gd_lambda, "Arrival rate keying the random streams (config value when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      ScenarioConfig cfg = load(sim_c);
      if (sim_lambda) {
        if (!(*sim_lambda > 0.0)) throw BadFlag("--lambda must be positive");
        cfg.lambda_bps = *sim_lambda;
      }
      Scheme scheme;
      try {
        scheme = parse_scheme(sim_scheme);
      } catch (const std::invalid_argument& e) {
        throw BadFlag(e.what());
      }
      const ProviderSpec provider = parse_provider(sim_predictor);
      const auto traces = traces_for(sim_c, cfg);
      RunOptions opt;
      opt.independent_streams = sim_independent;
      std::unique_ptr<std::ofstream> trace_holder;
      if (!sim_trace.empty()) opt.frame_trace = &open_out(sim_trace, trace_holder);
      RunResult r;
      std::string status = "ok";
      int rc = 0;
      try {
        r = run(cfg, traces, scheme, provider, opt);
      } catch (const RunAborted& e) {
        std::cerr << "error: run aborted: " << e.what() << '\n';
        r = e.partial();
        status = "aborted";
        rc = 1;
      }
      std::unique_ptr<std::ofstream> holder;
      auto& out = open_out(sim_out, holder);
      write_csv_header(out, cfg.bs_count());
      write_csv_row(out, r, status);
      write_json(sim_json, to_json(r));
      return rc;
    }
    if (*sw) {
      ScenarioConfig cfg = load(sw_c);
      const auto lambdas = parse_lambdas(sw_lambdas);
      const auto schemes = parse_schemes(sw_schemes);
      std::vector<ProviderSpec> providers;
      for (const auto& p : sw_predictors) providers.push_back(parse_provider(p));
      const auto traces = traces_for(sw_c, cfg);
      RunOptions opt;
      opt.independent_streams = sw_independent;
      const auto entries = sweep(cfg, traces, schemes, providers, lambdas, sw_threads, opt);
      std::unique_ptr<std::ofstream> holder;
      write_sweep_csv(open_out(sw_out, holder), entries, cfg.bs_count());
      write_json(sw_json, sweep_to_json(entries));
      int failed = 0;
      for (const auto& e : entries) {
        if (e.error.empty()) continue;
        ++failed;
        std::cerr << "error: lambda=" << e.job.lambda_bps << " scheme=" << to_string(e.job.scheme)
                  << " predictor=" << e.job.provider.label() << ": " << e.error << '\n';
      }
      return failed == 0 ? 0 : 1;
    }
    if (*gt) {
      const ScenarioConfig cfg = load(gt_c);
      const auto traces = traces_for(gt_c, cfg);
      std::unique_ptr<std::ofstream> holder;
      write_traces_csv(open_out(gt_out, holder), traces);
      return 0;
    }
    if (*gd) {
      ScenarioConfig cfg = load(gd_c);
      if (gd_lambda) {
        if (!(*gd_lambda > 0.0)) throw BadFlag("--lambda must be positive");
        cfg.lambda_bps = *gd_lambda;
      }
      const auto traces = traces_for(gd_c, cfg);
      fs::path out(gd_out);
      if (gd_out.back() == '/' || fs::is_directory(out)) out /= "dataset.jsonl";
      const auto n = gen_dataset(cfg, traces, out);
      std::cerr << "wrote " << n << " records to " << out.string() << '\n';
      return 0;
    }
  } catch (const BadFlag& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
