#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "aephora/predictor.hpp"

using namespace aephora;

namespace {

constexpr double kMacroGainAt400m = 8.701377325008674e-11;
constexpr double kMicroGainAt50m = 8.076254009346474e-12;

GainHistory full_history(int id, std::size_t frames = 10, int n_bs = 5) {
  GainHistory h{id, {}};
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> row;
    for (int m = 0; m < n_bs; ++m) row.push_back(-100.0 - static_cast<double>(f) - 0.5 * m);
    h.push(row, 10);
  }
  return h;
}

ExternalPredictor::Options external(const std::string& mode, const std::string& log = "") {
  ExternalPredictor::Options opt;
  opt.command = std::string(FAKE_PREDICTOR_PATH) + " " + mode + (log.empty() ? "" : " " + log);
  opt.timeout = std::chrono::milliseconds(1000);
  return opt;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "aephora_test_predictor";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST(GainHistory, KeepsMostRecent) {
  GainHistory h{1, {}};
  for (int i = 0; i < 15; ++i) h.push({static_cast<double>(i)}, 10);
  ASSERT_EQ(h.size(), 10u);
  EXPECT_EQ(h.frames_db.front()[0], 5.0);
  EXPECT_EQ(h.frames_db.back()[0], 14.0);
}

TEST(EstimateGain, ReferenceValues) {
  const auto cfg = default_config();
  EXPECT_NEAR(estimate_gain_at(cfg.bss[0], {400, 0}, 32, 0.5), kMacroGainAt400m, 1e-9 * kMacroGainAt400m);
  EXPECT_NEAR(estimate_gain_at(cfg.bss[1], {250, 200}, 32, 0.5), kMicroGainAt50m, 1e-9 * kMicroGainAt50m);
}

TEST(EstimateGain, MatchesAverageGainWithoutShadowing) {
  const auto cfg = default_config();
  for (const auto& bs : cfg.bss)
    for (Vec2 p : {Vec2{0, 0}, Vec2{123, -45}, Vec2{-390, 390}})
      EXPECT_DOUBLE_EQ(estimate_gain_at(bs, p, 32, 0.5), average_gain(bs, p, 0.0, 32, 0.5));
}

TEST(EstimateGain, StrictlyDecreasingInDistance) {
  const auto cfg = default_config();
  for (const auto& bs : cfg.bss) {
    double prev = std::numeric_limits<double>::infinity();
    for (double d = 1.0; d < 1200.0; d *= 1.1) {
      const double g = estimate_gain_at(bs, bs.position + Vec2{d, 0}, 32, 0.5);
      EXPECT_LT(g, prev);
      prev = g;
    }
  }
}

TEST(Oracle, ReturnsTruth) {
  OraclePredictor p;
  const auto h = full_history(3);
  const std::vector<PredictionQuery> q{{3, &h, {1, 2}, Vec2{5, 6}}, {4, &h, {7, 8}, std::nullopt}};
  const auto est = p.predict(0, q);
  ASSERT_EQ(est.size(), 2u);
  EXPECT_EQ(est[0].position, (Vec2{5, 6}));
  EXPECT_EQ(est[0].source, EstimateSource::oracle);
  EXPECT_EQ(est[1].position, (Vec2{7, 8}));
  EXPECT_EQ(est[1].source, EstimateSource::fallback);
  EXPECT_TRUE(p.knows_truth());
}

TEST(Noisy, MeanAbsoluteErrorAndIsotropy) {
  NoisyOraclePredictor p(18.7, 10, 400.0, make_rng({1, 2}));
  const auto h = full_history(1);
  std::vector<PredictionQuery> q;
  const int n = 100000;
  for (int i = 0; i < n; ++i) q.push_back({i, &h, {0, 0}, Vec2{0, 0}});
  const auto est = p.predict(0, q);
  double mae = 0.0, ex = 0.0, ey = 0.0;
  for (const auto& e : est) {
    ASSERT_EQ(e.source, EstimateSource::noisy);
    mae += norm(e.position);
    ex += e.position.x;
    ey += e.position.y;
  }
  mae /= n;
  EXPECT_NEAR(mae, 18.7, 0.02 * 18.7);
  // Per-axis sigma is 18.7 / sqrt(pi / 2); three standard errors of the mean.
  const double se = 18.7 / std::sqrt(std::acos(-1.0) / 2.0) / std::sqrt(n);
  EXPECT_LT(std::abs(ex / n), 3 * se);
  EXPECT_LT(std::abs(ey / n), 3 * se);
}

TEST(Noisy, ColdStartFallsBack) {
  NoisyOraclePredictor p(18.7, 10, 400.0, make_rng({3}));
  const auto h = full_history(2, 3);
  const std::vector<PredictionQuery> q{{2, &h, {10, 20}, Vec2{11, 21}}};
  const auto est = p.predict(0, q);
  EXPECT_EQ(est[0].source, EstimateSource::fallback);
  EXPECT_EQ(est[0].position, (Vec2{10, 20}));
}

TEST(Noisy, ClampedToGuardBand) {
  NoisyOraclePredictor p(500.0, 10, 400.0, make_rng({4}));
  const auto h = full_history(1);
  std::vector<PredictionQuery> q;
  for (int i = 0; i < 1000; ++i) q.push_back({i, &h, {390, 390}, Vec2{399, 399}});
  for (const auto& e : p.predict(0, q)) {
    EXPECT_LE(std::abs(e.position.x), 450.0);
    EXPECT_LE(std::abs(e.position.y), 450.0);
  }
}

TEST(Protocol, RequestShape) {
  const auto h = full_history(7, 10, 3);
  const std::vector<PredictionQuery> q{{7, &h, {}, std::nullopt}};
  const auto j = make_prediction_request(12, 3, q);
  EXPECT_EQ(j.at("frame").get<long long>(), 12);
  EXPECT_EQ(j.at("n_bs").get<int>(), 3);
  ASSERT_EQ(j.at("vehicles").size(), 1u);
  EXPECT_EQ(j.at("vehicles")[0].at("id").get<int>(), 7);
  const auto rows = j.at("vehicles")[0].at("history_db");
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0].size(), 3u);
  EXPECT_DOUBLE_EQ(rows[9][2].get<double>(), -110.0);  // most recent last
}

TEST(External, FixedRepliesAndRequestLog) {
  const auto log = temp_file("fixed.log");
  ExternalPredictor p(external("fixed", log.string()));
  EXPECT_FALSE(p.knows_truth());
  const auto h = full_history(4);
  const auto cold = full_history(5, 2);
  const std::vector<PredictionQuery> q{{4, &h, {1, 1}, std::nullopt}, {5, &cold, {2, 2}, std::nullopt}};
  for (int frame = 0; frame < 3; ++frame) {
    const auto est = p.predict(frame, q);
    ASSERT_EQ(est.size(), 2u);
    EXPECT_EQ(est[0].source, EstimateSource::external);
    EXPECT_EQ(est[0].position, (Vec2{4, -4}));
    EXPECT_EQ(est[1].source, EstimateSource::fallback);
    EXPECT_EQ(est[1].position, (Vec2{2, 2}));
  }
  EXPECT_EQ(p.failures(), 0);
  std::ifstream in(log);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("frame").get<int>(), lines);
    EXPECT_EQ(j.at("n_bs").get<int>(), 5);
    ASSERT_EQ(j.at("vehicles").size(), 1u);  // cold-start vehicles are not sent
    EXPECT_EQ(j.at("vehicles")[0].at("history_db").size(), 10u);
    ++lines;
  }
  EXPECT_EQ(lines, 3);
}

TEST(External, MissingIdFallsBackForThatVehicle) {
  ExternalPredictor p(external("drop"));
  const auto a = full_history(1), b = full_history(2);
  const std::vector<PredictionQuery> q{{1, &a, {9, 9}, std::nullopt}, {2, &b, {8, 8}, std::nullopt}};
  const auto est = p.predict(0, q);
  EXPECT_EQ(est[0].source, EstimateSource::fallback);
  EXPECT_EQ(est[0].position, (Vec2{9, 9}));
  EXPECT_EQ(est[1].source, EstimateSource::external);
  EXPECT_EQ(p.failures(), 1);
}

TEST(External, WholeFrameFailuresFallBack) {
  for (const char* mode : {"error", "garbage", "badframe"}) {
    ExternalPredictor p(external(mode));
    const auto a = full_history(1), b = full_history(2);
    const std::vector<PredictionQuery> q{{1, &a, {9, 9}, std::nullopt}, {2, &b, {8, 8}, std::nullopt}};
    for (int frame = 0; frame < 2; ++frame)
      for (const auto& e : p.predict(frame, q)) EXPECT_EQ(e.source, EstimateSource::fallback) << mode;
    EXPECT_EQ(p.failures(), 4) << mode;
    EXPECT_EQ(p.restarts(), 0) << mode;
  }
}

TEST(External, TimeoutFallsBackAndRestarts) {
  auto opt = external("hang");
  opt.timeout = std::chrono::milliseconds(100);
  ExternalPredictor p(opt);
  const auto a = full_history(1);
  const std::vector<PredictionQuery> q{{1, &a, {3, 3}, std::nullopt}};
  EXPECT_EQ(p.predict(0, q)[0].source, EstimateSource::fallback);
  EXPECT_EQ(p.failures(), 1);
  EXPECT_EQ(p.predict(1, q)[0].source, EstimateSource::fallback);
  EXPECT_EQ(p.restarts(), 1);
}

TEST(External, DeadProcessExhaustsRestartBudget) {
  ExternalPredictor p(external("die"));
  const auto a = full_history(1);
  const std::vector<PredictionQuery> q{{1, &a, {3, 3}, std::nullopt}};
  for (int frame = 0; frame < 4; ++frame) EXPECT_EQ(p.predict(frame, q)[0].source, EstimateSource::fallback);
  EXPECT_EQ(p.restarts(), 3);
  EXPECT_THROW(p.predict(4, q), PredictorFatal);
}

TEST(ProviderSpec, Parsing) {
  EXPECT_EQ(parse_provider_spec("oracle").kind, PredictorKind::oracle);
  const auto n = parse_provider_spec("noisy:18.7");
  EXPECT_EQ(n.kind, PredictorKind::noisy);
  EXPECT_DOUBLE_EQ(n.noisy_mae_m, 18.7);
  EXPECT_EQ(n.label(), "noisy:18.7");
  EXPECT_EQ(parse_provider_spec("noisy").noisy_mae_m, 18.7);
  const auto e = parse_provider_spec("external:python3 -m predictor --serve");
  EXPECT_EQ(e.kind, PredictorKind::external);
  EXPECT_EQ(e.command, "python3 -m predictor --serve");
  for (const char* bad : {"", "lstm", "noisy:", "noisy:-1", "noisy:3x", "external:"})
    EXPECT_THROW(parse_provider_spec(bad), std::invalid_argument) << bad;
}
