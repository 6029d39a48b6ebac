#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace condet {

/// Stable softmax of logits / temperature.
inline std::vector<double> softmax_scaled(const std::vector<double>& logits,
                                          double temperature) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - peak) / temperature);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  return softmax_scaled(logits, 1.0);
}

/// Half-up rounding to two decimals, applied only when formatting reports.
inline double round_half_up_2dp(double v) {
  return std::floor(v * 100.0 + 0.5) / 100.0;
}

inline std::string format_fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", round_half_up_2dp(v));
  return buf;
}

/// Formats a fraction in [0, 1] as a percentage with two decimals.
inline std::string format_percent(double fraction) {
  return format_fixed2(fraction * 100.0);
}

}  // namespace condet
