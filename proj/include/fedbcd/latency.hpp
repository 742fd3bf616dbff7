#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedbcd/rng.hpp"

namespace fedbcd {

/// Inter-arrival / processing time distribution; times in seconds.
struct LatencyDistribution {
  enum class Kind { exponential, weibull, uniform, deterministic };
  Kind kind = Kind::deterministic;
  double a = 0.0;  // mean | shape | lo | value
  double b = 0.0;  // -    | scale | hi | -

  static LatencyDistribution exponential_mean(double mean) {
    if (!(mean > 0)) throw std::invalid_argument("exponential: mean must be > 0");
    return {Kind::exponential, mean, 0.0};
  }
  static LatencyDistribution weibull(double shape, double scale) {
    if (!(shape > 0) || !(scale > 0))
      throw std::invalid_argument("weibull: parameters must be > 0");
    return {Kind::weibull, shape, scale};
  }
  static LatencyDistribution uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("uniform: need lo < hi");
    if (lo < 0) throw std::invalid_argument("uniform: times must be >= 0");
    return {Kind::uniform, lo, hi};
  }
  static LatencyDistribution deterministic(double value) {
    if (value < 0) throw std::invalid_argument("deterministic: time must be >= 0");
    return {Kind::deterministic, value, 0.0};
  }
};

namespace latency_detail {

// Inverse CDF on the closed-from-below interval; u in [0, 1).
inline double quantile_unchecked(const LatencyDistribution& d, double u) {
  switch (d.kind) {
    case LatencyDistribution::Kind::exponential:
      return -d.a * std::log1p(-u);
    case LatencyDistribution::Kind::weibull:
      return d.b * std::pow(-std::log1p(-u), 1.0 / d.a);
    case LatencyDistribution::Kind::uniform:
      return d.a + (d.b - d.a) * u;
    case LatencyDistribution::Kind::deterministic:
      return d.a;
  }
  return 0.0;
}

}  // namespace latency_detail

/// Quantile function F^{-1}(u), u in (0, 1).
inline double quantile(const LatencyDistribution& d, double u) {
  if (!(u > 0.0) || !(u < 1.0))
    throw std::invalid_argument("quantile: u must be in (0, 1)");
  return latency_detail::quantile_unchecked(d, u);
}

inline double analytic_mean(const LatencyDistribution& d) {
  switch (d.kind) {
    case LatencyDistribution::Kind::exponential: return d.a;
    case LatencyDistribution::Kind::weibull:
      return d.b * std::tgamma(1.0 + 1.0 / d.a);
    case LatencyDistribution::Kind::uniform: return 0.5 * (d.a + d.b);
    case LatencyDistribution::Kind::deterministic: return d.a;
  }
  return 0.0;
}

/// Inverse-CDF sampling; one uniform draw per sample.
inline double sample(const LatencyDistribution& d, RngStream& rng) {
  return latency_detail::quantile_unchecked(d, rng.uniform01());
}

/// Monte Carlo estimates of E[tau_(k)] for every k = 1..n, from one set of
/// sorted trials.
inline std::vector<double> order_statistic_means(const LatencyDistribution& d,
                                                 int n, int trials,
                                                 RngStream& rng) {
  if (n < 1 || trials < 1)
    throw std::invalid_argument("order_statistic_means: bad arguments");
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  std::vector<double> draw(static_cast<std::size_t>(n));
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < n; ++i) draw[static_cast<std::size_t>(i)] = sample(d, rng);
    std::sort(draw.begin(), draw.end());
    for (int i = 0; i < n; ++i) acc[static_cast<std::size_t>(i)] += draw[static_cast<std::size_t>(i)];
  }
  for (double& v : acc) v /= static_cast<double>(trials);
  return acc;
}

/// Monte Carlo estimate of E[tau_(k)] over `trials` i.i.d. n-samples.
inline double order_statistic_mean_empirical(const LatencyDistribution& d,
                                             int n, int k, int trials,
                                             RngStream& rng) {
  if (k < 1 || k > n)
    throw std::invalid_argument("order_statistic_mean_empirical: need 1 <= k <= n");
  if (trials < 1)
    throw std::invalid_argument("order_statistic_mean_empirical: trials >= 1");
  double acc = 0.0;
  std::vector<double> draw(static_cast<std::size_t>(n));
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < n; ++i) draw[static_cast<std::size_t>(i)] = sample(d, rng);
    std::nth_element(draw.begin(), draw.begin() + (k - 1), draw.end());
    acc += draw[static_cast<std::size_t>(k - 1)];
  }
  return acc / static_cast<double>(trials);
}

/// Empirical round-duration ratio E[tau_(b)] / E[tau_(n)], estimated with
/// common draws per trial. In (0, 1] for b <= n.
inline double latency_ratio(const LatencyDistribution& d, int n, int b,
                            int trials, RngStream& rng) {
  if (b < 1 || b > n) throw std::invalid_argument("latency_ratio: need 1 <= b <= n");
  if (trials < 1) throw std::invalid_argument("latency_ratio: trials >= 1");
  double acc_b = 0.0, acc_n = 0.0;
  std::vector<double> draw(static_cast<std::size_t>(n));
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < n; ++i) draw[static_cast<std::size_t>(i)] = sample(d, rng);
    std::nth_element(draw.begin(), draw.begin() + (b - 1), draw.end());
    acc_b += draw[static_cast<std::size_t>(b - 1)];
    acc_n += *std::max_element(draw.begin() + (b - 1), draw.end());
  }
  return acc_b / acc_n;
}

/// Large-n quantile-ratio approximation of the latency ratio:
/// F^{-1}(beta) / F^{-1}(1 - 1/n).
inline double latency_ratio_asymptotic(const LatencyDistribution& d, int n,
                                       double beta) {
  if (n < 2) throw std::invalid_argument("latency_ratio_asymptotic: n >= 2");
  if (!(beta > 0) || !(beta < 1))
    throw std::invalid_argument("latency_ratio_asymptotic: beta in (0, 1)");
  return quantile(d, beta) / quantile(d, 1.0 - 1.0 / n);
}

/// Total latency of one activated device: an arrival draw plus `epochs`
/// times one processing draw. With independent_epoch_draws the processing
/// time is instead the sum of `epochs` independent draws.
inline double device_round_latency(const LatencyDistribution& arrival,
                                   const LatencyDistribution& process,
                                   int epochs, RngStream& rng,
                                   bool independent_epoch_draws = false) {
  if (epochs < 1)
    throw std::invalid_argument("device_round_latency: epochs >= 1");
  double t = sample(arrival, rng);
  if (independent_epoch_draws) {
    for (int k = 0; k < epochs; ++k) t += sample(process, rng);
  } else {
    t += static_cast<double>(epochs) * sample(process, rng);
  }
  return t;
}

/// Parses a distribution spec: exp:MEAN, weibull:SHAPE:SCALE, uniform:LO:HI,
/// det:VALUE.
inline LatencyDistribution parse_distribution(const std::string& spec) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = spec.find(':', start);
    parts.push_back(spec.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  auto num = [&](std::size_t i) {
    try {
      return std::stod(parts.at(i));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad distribution spec: " + spec);
    }
  };
  const std::string& kind = parts[0];
  if (kind == "exp" && parts.size() == 2)
    return LatencyDistribution::exponential_mean(num(1));
  if (kind == "weibull" && parts.size() == 3)
    return LatencyDistribution::weibull(num(1), num(2));
  if (kind == "uniform" && parts.size() == 3)
    return LatencyDistribution::uniform(num(1), num(2));
  if (kind == "det" && parts.size() == 2)
    return LatencyDistribution::deterministic(num(1));
  throw std::invalid_argument("bad distribution spec: " + spec);
}

inline std::string serialize_distribution(const LatencyDistribution& d) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  switch (d.kind) {
    case LatencyDistribution::Kind::exponential: return "exp:" + fmt(d.a);
    case LatencyDistribution::Kind::weibull:
      return "weibull:" + fmt(d.a) + ":" + fmt(d.b);
    case LatencyDistribution::Kind::uniform:
      return "uniform:" + fmt(d.a) + ":" + fmt(d.b);
    case LatencyDistribution::Kind::deterministic: return "det:" + fmt(d.a);
  }
  return "";
}

}  // namespace fedbcd
