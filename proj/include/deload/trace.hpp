#pragma once

// Network bandwidth traces: CSV parsing and piecewise-constant integration.

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "deload/error.hpp"
#include "deload/media.hpp"
#include "deload/wte.hpp"

namespace deload {

/// Piecewise-constant bandwidth over time, repeating with period `period_s()` so that
/// sessions longer than the recording keep running. Each sample holds until the next;
/// the last one holds for the preceding sample interval (1 s for single-sample traces).
class NetworkTrace {
 public:
  NetworkTrace() = default;
  NetworkTrace(std::string name, std::vector<NetworkSample> samples) : name_(std::move(name)), samples_(std::move(samples)) {
    if (samples_.empty()) throw DataError("trace '" + name_ + "' has no samples");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (!std::isfinite(samples_[i].bandwidth_mbps) || samples_[i].bandwidth_mbps < 0.0)
        throw DataError("trace '" + name_ + "': negative or non-finite bandwidth at sample " + std::to_string(i + 1));
      if (i > 0 && !(samples_[i].timestamp_ms > samples_[i - 1].timestamp_ms))
        throw DataError("trace '" + name_ + "': timestamps not strictly increasing at sample " + std::to_string(i + 1));
    }
    const double t0 = samples_.front().timestamp_ms;
    starts_.reserve(samples_.size() + 1);
    for (const auto& s : samples_) starts_.push_back((s.timestamp_ms - t0) / 1000.0);
    const double tail = samples_.size() > 1 ? starts_.back() - starts_[starts_.size() - 2] : 1.0;
    period_ = starts_.back() + tail;
    starts_.push_back(period_);
    mbits_per_period_ = 0.0;
    for (std::size_t i = 0; i < samples_.size(); ++i)
      mbits_per_period_ += samples_[i].bandwidth_mbps * (starts_[i + 1] - starts_[i]);
  }

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] const std::vector<NetworkSample>& samples() const { return samples_; }
  [[nodiscard]] double period_s() const { return period_; }

  [[nodiscard]] double bandwidth_at(double t_s) const { return samples_[segment_of(wrap(t_s))].bandwidth_mbps; }

  /// Mean bandwidth over one period.
  [[nodiscard]] double mean_mbps() const { return mbits_per_period_ / period_; }

  [[nodiscard]] double median_mbps() const {
    std::vector<double> bw;
    for (const auto& s : samples_) bw.push_back(s.bandwidth_mbps);
    std::sort(bw.begin(), bw.end());
    const auto n = bw.size();
    return n % 2 ? bw[n / 2] : 0.5 * (bw[n / 2 - 1] + bw[n / 2]);
  }

  /// Megabits deliverable over [t0, t1).
  [[nodiscard]] double mbits_between(double t0, double t1) const {
    double total = 0.0;
    walk(t0, t1, [&](double a, double b, double bw) {
      total += bw * (b - a);
      return false;
    });
    return total;
  }

  /// Earliest time >= t0 at which `mbits` have been delivered, if that happens by `limit`.
  [[nodiscard]] std::optional<double> time_to_transfer(double t0, double mbits, double limit) const {
    if (mbits <= 0.0) return t0;
    double left = mbits;
    std::optional<double> done;
    walk(t0, limit, [&](double a, double b, double bw) {
      const double got = bw * (b - a);
      if (got >= left && bw > 0.0) {
        done = std::min(b, a + left / bw);
        return true;
      }
      left -= got;
      return false;
    });
    return done;
  }

 private:
  [[nodiscard]] double wrap(double t) const {
    double w = std::fmod(t, period_);
    if (w < 0.0) w += period_;
    return w;
  }

  [[nodiscard]] std::size_t segment_of(double w) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end() - 1, w);
    return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - starts_.begin()) - 1));
  }

  // Visits constant-bandwidth pieces of [t0, t1); `fn(a, b, bw)` returns true to stop.
  template <class Fn>
  void walk(double t0, double t1, Fn&& fn) const {
    double t = t0;
    while (t < t1) {
      const double base = t - wrap(t);
      std::size_t seg = segment_of(t - base);
      const double seg_end = std::min(t1, base + starts_[seg + 1]);
      if (seg_end <= t) {  // rounding at a period boundary
        t = std::nextafter(t, t1);
        continue;
      }
      if (fn(t, seg_end, samples_[seg].bandwidth_mbps)) return;
      t = seg_end;
    }
  }

  std::string name_;
  std::vector<NetworkSample> samples_;
  std::vector<double> starts_;  // seconds from trace start, plus the period as sentinel
  double period_ = 0.0;
  double mbits_per_period_ = 0.0;
};

/// Parses `timestamp_ms,bandwidth_mbps` lines. Blank lines, `#` comments and a leading
/// header row are skipped. Errors name the offending line.
inline NetworkTrace parse_trace(std::istream& is, const std::string& name) {
  std::vector<NetworkSample> samples;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) { throw DataError(name + ":" + std::to_string(lineno) + ": " + why); };
  while (std::getline(is, line)) {
    ++lineno;
    const auto sv = detail::trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    const auto f = detail::split(sv, ',');
    if (f.size() != 2) fail("expected 'timestamp_ms,bandwidth_mbps'");
    const auto ts = detail::parse_double(f[0]);
    const auto bw = detail::parse_double(f[1]);
    if (!ts || !bw) {
      if (samples.empty() && detail::trim(f[0]) == "timestamp_ms") continue;  // header
      fail("non-numeric field");
    }
    if (!std::isfinite(*ts) || !std::isfinite(*bw) || *bw < 0.0) fail("bandwidth must be finite and non-negative");
    if (!samples.empty() && !(*ts > samples.back().timestamp_ms)) fail("timestamps must be strictly increasing");
    samples.push_back({*ts, *bw});
  }
  if (samples.empty()) throw DataError(name + ": no samples");
  return NetworkTrace(name, std::move(samples));
}

}  // namespace deload
