#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "channel.hpp"
#include "config.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace aephora {

/// Most recent `capacity` per-frame gain vectors (dB), oldest first.
struct GainHistory {
  int vehicle_id{0};
  std::deque<std::vector<double>> frames_db;

  void push(std::vector<double> row_db, std::size_t capacity) {
    frames_db.push_back(std::move(row_db));
    while (frames_db.size() > capacity) frames_db.pop_front();
  }
  std::size_t size() const { return frames_db.size(); }
};

enum class EstimateSource { oracle, noisy, external, fallback };

inline const char* to_string(EstimateSource s) {
  switch (s) {
    case EstimateSource::oracle: return "oracle";
    case EstimateSource::noisy: return "noisy";
    case EstimateSource::external: return "external";
    case EstimateSource::fallback: return "fallback";
  }
  return "?";
}

struct PositionEstimate {
  int vehicle_id{0};
  Vec2 position{};
  EstimateSource source{EstimateSource::fallback};
};

struct PredictionQuery {
  int vehicle_id{0};
  const GainHistory* history{nullptr};
  Vec2 current_position{};
  std::optional<Vec2> true_next_position;
};

/// Expected frame-average gain at a predicted position (no shadowing term).
inline double estimate_gain_at(const BsConfig& bs, Vec2 predicted_pos, int n_tx, double gamma_bf) {
  const double d = std::max(distance(predicted_pos, bs.position), kMinLinkDistanceM);
  return bs.alpha_linear() * gamma_bf * n_tx * std::pow(d, -bs.beta);
}

constexpr double kPredictionGuardBandM = 50.0;

inline Vec2 clamp_to_guard_band(Vec2 p, double half_width) {
  const double lim = half_width + kPredictionGuardBandM;
  return {std::clamp(p.x, -lim, lim), std::clamp(p.y, -lim, lim)};
}

enum class PredictorKind { oracle, noisy, external };

inline const char* to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::oracle: return "oracle";
    case PredictorKind::noisy: return "noisy";
    case PredictorKind::external: return "external";
  }
  return "?";
}

/// Thrown when an external predictor cannot be kept alive.
class PredictorFatal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MobilityPredictor {
 public:
  virtual ~MobilityPredictor() = default;
  virtual PredictorKind kind() const = 0;
  // Whether the provider knows the ground truth (and so which vehicles leave).
  virtual bool knows_truth() const { return kind() != PredictorKind::external; }
  virtual std::vector<PositionEstimate> predict(std::int64_t frame, std::span<const PredictionQuery> queries) = 0;
  std::int64_t failures() const { return failures_; }

 protected:
  std::int64_t failures_{0};
};

/// Returns the true next-frame position (the "actual positions" variant).
class OraclePredictor final : public MobilityPredictor {
 public:
  PredictorKind kind() const override { return PredictorKind::oracle; }
  std::vector<PositionEstimate> predict(std::int64_t, std::span<const PredictionQuery> queries) override {
    std::vector<PositionEstimate> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
      if (q.true_next_position)
        out.push_back({q.vehicle_id, *q.true_next_position, EstimateSource::oracle});
      else
        out.push_back({q.vehicle_id, q.current_position, EstimateSource::fallback});
    }
    return out;
  }
};

/// Truth plus isotropic Gaussian error, scaled so that the mean error
/// magnitude (Rayleigh distributed) equals `target_mae_m`. Vehicles with a
/// history shorter than `history_frames` fall back like a learned model would.
class NoisyOraclePredictor final : public MobilityPredictor {
 public:
  NoisyOraclePredictor(double target_mae_m, std::size_t history_frames, double half_width, Rng rng)
      : sigma_(target_mae_m / std::sqrt(std::acos(-1.0) / 2.0)),
        history_frames_(history_frames),
        half_width_(half_width),
        rng_(std::move(rng)) {}

  PredictorKind kind() const override { return PredictorKind::noisy; }

  std::vector<PositionEstimate> predict(std::int64_t, std::span<const PredictionQuery> queries) override {
    std::vector<PositionEstimate> out;
    out.reserve(queries.size());
    std::normal_distribution<double> err(0.0, 1.0);
    for (const auto& q : queries) {
      const bool cold = q.history == nullptr || q.history->size() < history_frames_;
      if (cold || !q.true_next_position) {
        out.push_back({q.vehicle_id, q.current_position, EstimateSource::fallback});
        continue;
      }
      const Vec2 e{sigma_ * err(rng_), sigma_ * err(rng_)};
      out.push_back({q.vehicle_id, clamp_to_guard_band(*q.true_next_position + e, half_width_),
                     EstimateSource::noisy});
    }
    return out;
  }

 private:
  double sigma_;
  std::size_t history_frames_;
  double half_width_;
  Rng rng_;
};

namespace detail {

/// Child process connected through a socketpair on its stdin/stdout.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw PredictorFatal("socketpair failed");
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw PredictorFatal("fork failed");
    }
    if (pid_ == 0) {
      // Own process group, so the whole command tree can be signalled.
      ::setpgid(0, 0);
      ::close(fds[0]);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid_, pid_);
    ::close(fds[1]);
    fd_ = fds[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    if (fd_ >= 0) ::close(fd_);
    if (pid_ > 0) {
      ::kill(-pid_, SIGTERM);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  bool write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  enum class ReadStatus { ok, timeout, closed };

  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return ReadStatus::ok;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return ReadStatus::timeout;
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r == 0) return ReadStatus::timeout;
      if (r < 0) return ReadStatus::closed;
      char buf[65536];
      const ssize_t n = ::read(fd_, buf, sizeof buf);
      if (n <= 0) return ReadStatus::closed;
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_{-1};
  int fd_{-1};
  std::string buffer_;
};

}  // namespace detail

/// Builds the wire request for one frame.
inline nlohmann::json make_prediction_request(std::int64_t frame, int n_bs,
                                              std::span<const PredictionQuery> queries) {
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& q : queries) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : q.history->frames_db) rows.push_back(row);
    vehicles.push_back({{"id", q.vehicle_id}, {"history_db", std::move(rows)}});
  }
  return {{"frame", frame}, {"n_bs", n_bs}, {"vehicles", std::move(vehicles)}};
}

/// Talks to a predictor process over line-delimited JSON on its stdio.
/// One request per frame covering every vehicle with a full history.
/// Per-vehicle problems (missing id, non-finite values) and whole-frame
/// problems (timeout, malformed reply, error reply) degrade the affected
/// vehicles to the fallback and count as failures. A process that dies is
/// restarted up to `max_restarts` times; after that PredictorFatal is thrown.
class ExternalPredictor final : public MobilityPredictor {
 public:
  struct Options {
    std::string command;
    int n_bs{5};
    std::size_t history_frames{10};
    double half_width{400.0};
    std::chrono::milliseconds timeout{2000};
    int max_restarts{3};
  };

  explicit ExternalPredictor(Options opt) : opt_(std::move(opt)) { spawn(); }

  PredictorKind kind() const override { return PredictorKind::external; }
  int restarts() const { return restarts_; }

  std::vector<PositionEstimate> predict(std::int64_t frame, std::span<const PredictionQuery> queries) override {
    std::vector<PositionEstimate> out;
    out.reserve(queries.size());
    std::vector<PredictionQuery> ready;
    for (const auto& q : queries) {
      if (q.history != nullptr && q.history->size() >= opt_.history_frames) ready.push_back(q);
      out.push_back({q.vehicle_id, q.current_position, EstimateSource::fallback});
    }
    if (!child_) spawn();

    const std::string request = make_prediction_request(frame, opt_.n_bs, ready).dump();
    std::string reply;
    bool alive = child_->write_line(request);
    auto status = alive ? child_->read_line(reply, opt_.timeout) : detail::ChildProcess::ReadStatus::closed;
    if (status != detail::ChildProcess::ReadStatus::ok) {
      failures_ += static_cast<std::int64_t>(ready.size());
      child_.reset();  // a late reply would desynchronize the stream
      return out;
    }

    std::unordered_map<int, Vec2> predicted;
    try {
      const auto j = nlohmann::json::parse(reply);
      if (j.at("frame").get<std::int64_t>() != frame || j.contains("error") || !j.contains("predictions")) {
        failures_ += static_cast<std::int64_t>(ready.size());
        return out;
      }
      for (const auto& p : j.at("predictions")) {
        const Vec2 pos{p.at("x_m").get<double>(), p.at("y_m").get<double>()};
        if (std::isfinite(pos.x) && std::isfinite(pos.y)) predicted[p.at("id").get<int>()] = pos;
      }
    } catch (const nlohmann::json::exception&) {
      failures_ += static_cast<std::int64_t>(ready.size());
      return out;
    }
    for (auto& est : out) {
      const auto it = std::find_if(ready.begin(), ready.end(),
                                   [&](const PredictionQuery& q) { return q.vehicle_id == est.vehicle_id; });
      if (it == ready.end()) continue;
      const auto p = predicted.find(est.vehicle_id);
      if (p == predicted.end()) {
        ++failures_;
        continue;
      }
      est.position = clamp_to_guard_band(p->second, opt_.half_width);
      est.source = EstimateSource::external;
    }
    return out;
  }

 private:
  void spawn() {
    if (child_) return;
    if (spawned_ > 0) {
      if (restarts_ >= opt_.max_restarts)
        throw PredictorFatal("external predictor failed and the restart budget is exhausted");
      ++restarts_;
    }
    child_ = std::make_unique<detail::ChildProcess>(opt_.command);
    ++spawned_;
  }

  Options opt_;
  std::unique_ptr<detail::ChildProcess> child_;
  int spawned_{0};
  int restarts_{0};
};

/// Parsed `oracle`, `noisy:<mae_m>` or `external:<command line>`.
struct ProviderSpec {
  PredictorKind kind{PredictorKind::oracle};
  double noisy_mae_m{18.7};
  std::string command;

  std::string label() const {
    switch (kind) {
      case PredictorKind::oracle: return "oracle";
      case PredictorKind::noisy: {
        std::string s = std::to_string(noisy_mae_m);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return "noisy:" + s;
      }
      case PredictorKind::external: return "external";
    }
    return "?";
  }
};

inline ProviderSpec parse_provider_spec(const std::string& text) {
  ProviderSpec spec;
  if (text == "oracle") return spec;
  if (text == "noisy") {
    spec.kind = PredictorKind::noisy;
    return spec;
  }
  if (text.rfind("noisy:", 0) == 0) {
    spec.kind = PredictorKind::noisy;
    try {
      std::size_t used = 0;
      spec.noisy_mae_m = std::stod(text.substr(6), &used);
      if (used != text.size() - 6 || !(spec.noisy_mae_m >= 0.0)) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("bad noisy predictor MAE in '" + text + "'");
    }
    return spec;
  }
  if (text.rfind("external:", 0) == 0 && text.size() > 9) {
    spec.kind = PredictorKind::external;
    spec.command = text.substr(9);
    return spec;
  }
  throw std::invalid_argument("predictor must be oracle, noisy:<mae_m> or external:<command>, got '" + text + "'");
}

}  // namespace aephora
