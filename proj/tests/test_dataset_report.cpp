#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "aephora/dataset.hpp"
#include "aephora/report.hpp"

using namespace aephora;

namespace {

std::vector<nlohmann::json> parse_lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  return out;
}

ScenarioConfig config_with_frames(std::int64_t frames) {
  auto cfg = default_config();
  cfg.duration_slots = frames * cfg.frame_slots;
  return cfg;
}

}  // namespace

TEST(Dataset, ShortestUsefulTraceGivesOneRecord) {
  const auto cfg = config_with_frames(11);
  std::vector<VehicleTrace> traces{{7, 0, 11, std::vector<Vec2>(11, Vec2{10, 200})}};
  traces[0].positions[10] = {12, 200};
  std::ostringstream out;
  EXPECT_EQ(gen_dataset(cfg, traces, out), 1);
  const auto rec = parse_lines(out.str());
  ASSERT_EQ(rec.size(), 1u);
  EXPECT_EQ(rec[0].at("id").get<int>(), 7);
  EXPECT_EQ(rec[0].at("frame").get<int>(), 9);
  EXPECT_EQ(rec[0].at("history_db").size(), 10u);
  EXPECT_EQ(rec[0].at("history_db")[0].size(), 5u);
  EXPECT_EQ(rec[0].at("target_xy_m").get<std::vector<double>>(), (std::vector<double>{12, 200}));
}

TEST(Dataset, TooShortTraceGivesNothing) {
  const auto cfg = config_with_frames(10);
  const std::vector<VehicleTrace> traces{{1, 0, 10, std::vector<Vec2>(10, Vec2{0, 200})}};
  std::ostringstream out;
  EXPECT_EQ(gen_dataset(cfg, traces, out), 0);
  EXPECT_TRUE(out.str().empty());
}

TEST(Dataset, RecordCountMatchesPresence) {
  const auto cfg = config_with_frames(150);
  const auto traces = generate_traces(cfg, 40, 40 * 1.6 / 220.0, 21);
  std::int64_t want = 0;
  for (const auto& t : traces) {
    const std::int64_t last = std::min(t.exit_frame, cfg.frame_count()) - 1;  // last frame with a successor
    want += std::max<std::int64_t>(0, last - (t.entry_frame + cfg.history_frames - 1));
  }
  std::ostringstream out;
  EXPECT_EQ(gen_dataset(cfg, traces, out), want);
  std::map<int, const VehicleTrace*> by_id;
  for (const auto& t : traces) by_id[t.vehicle_id] = &t;
  for (const auto& r : parse_lines(out.str())) {
    const auto& t = *by_id.at(r.at("id").get<int>());
    const auto x = r.at("frame").get<std::int64_t>();
    ASSERT_TRUE(t.present(x + 1));
    EXPECT_GE(x, t.entry_frame + cfg.history_frames - 1);
    const Vec2 p = t.at(x + 1);
    EXPECT_EQ(r.at("target_xy_m").get<std::vector<double>>(), (std::vector<double>{p.x, p.y}));
  }
}

TEST(Dataset, ShadowingChangesValuesNotCount) {
  auto cfg = config_with_frames(60);
  const auto traces = generate_traces(cfg, 20, 20 * 1.6 / 220.0, 22);
  std::ostringstream a, b;
  const auto na = gen_dataset(cfg, traces, a);
  cfg.sigma_x_db = 0.0;
  const auto nb = gen_dataset(cfg, traces, b);
  EXPECT_EQ(na, nb);
  EXPECT_GT(na, 0);
  EXPECT_NE(a.str(), b.str());
}

TEST(Dataset, HistoriesMatchWhatARunSends) {
  const auto cfg = config_with_frames(40);
  const auto traces = generate_traces(cfg, 15, 15 * 1.6 / 220.0, 23);
  std::ostringstream ds;
  gen_dataset(cfg, traces, ds);
  const auto dir = std::filesystem::temp_directory_path() / "aephora_test_dataset";
  std::filesystem::create_directories(dir);
  const auto log = dir / "requests.log";
  std::filesystem::remove(log);
  run(cfg, traces, Scheme::aephora,
      parse_provider_spec(std::string("external:") + FAKE_PREDICTOR_PATH + " fixed " + log.string()));

  std::map<std::pair<int, int>, nlohmann::json> sent;
  std::ifstream in(log);
  std::stringstream buf;
  buf << in.rdbuf();
  for (const auto& req : parse_lines(buf.str()))
    for (const auto& v : req.at("vehicles")) sent[{v.at("id").get<int>(), req.at("frame").get<int>()}] = v.at("history_db");
  const auto records = parse_lines(ds.str());
  ASSERT_GT(records.size(), 0u);
  for (const auto& r : records) {
    const auto it = sent.find({r.at("id").get<int>(), r.at("frame").get<int>()});
    ASSERT_NE(it, sent.end()) << r.at("id") << " @ " << r.at("frame");
    EXPECT_EQ(it->second, r.at("history_db"));
  }
}

TEST(Dataset, RejectsEmptyTraces) {
  std::ostringstream out;
  EXPECT_THROW(gen_dataset(default_config(), {}, out), std::invalid_argument);
}

TEST(Report, CsvHeaderAndRow) {
  const auto cfg = config_with_frames(5);
  const auto traces = generate_traces(cfg, 10, 10 * 1.6 / 220.0, 24);
  const auto r = run(cfg, traces, Scheme::hrbe, parse_provider_spec("oracle"));
  std::ostringstream out;
  write_csv_header(out, cfg.bs_count());
  write_csv_row(out, r);
  const auto lines = split(out.str(), '\n');
  ASSERT_EQ(lines.size(), 2u);
  const auto head = split(lines[0], ',');
  const auto row = split(lines[1], ',');
  ASSERT_EQ(head.size(), row.size());
  EXPECT_EQ(head.size(), 17u + 5u);
  std::map<std::string, std::string> cell;
  for (std::size_t i = 0; i < head.size(); ++i) cell[head[i]] = row[i];
  EXPECT_EQ(cell["scheme"], "hrbe");
  EXPECT_EQ(cell["predictor"], "oracle");
  EXPECT_EQ(cell["status"], "ok");
  EXPECT_EQ(cell["slots_simulated"], "500");
  EXPECT_EQ(std::stod(cell["avg_power_w"]), r.avg_power_w);  // round-trip formatting
  EXPECT_EQ(std::stod(cell["p_bs4_w"]), r.per_bs_power_w[4]);
}

TEST(Report, JsonFields) {
  const auto cfg = config_with_frames(5);
  const auto traces = generate_traces(cfg, 10, 10 * 1.6 / 220.0, 25);
  const auto j = to_json(run(cfg, traces, Scheme::aephora, parse_provider_spec("noisy:18.7")));
  for (const char* k : {"lambda_bps", "scheme", "predictor", "seed", "avg_power_w", "per_bs_power_w",
                        "violation_prob", "violation_defined", "relax_rounds_histogram", "gap_instances"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j.at("predictor"), "noisy:18.7");
  EXPECT_EQ(j.at("per_bs_power_w").size(), 5u);
}

TEST(Report, SweepMarksAbortedRuns) {
  RunResult partial;
  partial.scheme = Scheme::hee;
  partial.predictor = "external";
  partial.per_bs_power_w.assign(2, 0.0);
  std::vector<SweepEntry> entries{{{1e6, Scheme::hee, parse_provider_spec("external:x")}, partial, "predictor died"},
                                  {{1e6, Scheme::hrbe, parse_provider_spec("oracle")}, std::nullopt, "bad"}};
  std::ostringstream out;
  write_sweep_csv(out, entries, 2);
  const auto lines = split(out.str(), '\n');
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(split(lines[1], ',')[16], "aborted");
  const auto j = sweep_to_json(entries);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0].at("error"), "predictor died");
  EXPECT_EQ(j[1].at("scheme"), "hrbe");
}

// Regression guard for a tiny seeded sweep. Set AEPHORA_UPDATE_GOLDEN=1 to
// rewrite the file after an intended behaviour change.
TEST(Report, GoldenSweepCsv) {
  auto cfg = config_with_frames(20);
  cfg.seed = 5;
  const auto traces = generate_traces(cfg, 25, 25 * 1.6 / 220.0, cfg.seed);
  const auto entries = sweep(cfg, traces, {Scheme::aephora, Scheme::hee, Scheme::hrbe, Scheme::infrb_lb},
                             {parse_provider_spec("oracle")}, {2e6, 6e6});
  std::ostringstream out;
  write_sweep_csv(out, entries, cfg.bs_count());
  const std::filesystem::path golden = std::filesystem::path(GOLDEN_DIR) / "tiny_sweep.csv";
  if (std::getenv("AEPHORA_UPDATE_GOLDEN")) {
    std::ofstream(golden) << out.str();
    GTEST_SKIP() << "golden file rewritten";
  }
  std::ifstream in(golden);
  ASSERT_TRUE(in) << golden;
  std::stringstream want;
  want << in.rdbuf();
  EXPECT_EQ(out.str(), want.str());
}
