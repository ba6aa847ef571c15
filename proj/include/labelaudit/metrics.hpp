#pragma once

// Positive-class precision/recall/F1, Welch's t-test and Cohen's kappa.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "labelaudit/error.hpp"

namespace labelaudit {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct PrfScore {
  double precision = 0, recall = 0, f1 = 0;
};

inline ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size())
    throw std::invalid_argument("prediction/gold length mismatch: " +
                                std::to_string(predicted.size()) + " vs " +
                                std::to_string(gold.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] != 0 && gold[i] != 1) throw std::invalid_argument("gold labels must be 0 or 1");
    const bool p = predicted[i] == 1, g = gold[i] == 1;
    if (p && g)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

/// Any 0/0 ratio is taken as 0.
inline PrfScore f1_positive(const ConfusionCounts& c) {
  PrfScore s;
  const double tp = static_cast<double>(c.tp);
  s.precision = c.tp + c.fp ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
  s.recall = c.tp + c.fn ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

inline PrfScore f1_positive(std::span<const int> predicted, std::span<const int> gold) {
  return f1_positive(confusion(predicted, gold));
}

// ---------------------------------------------------------------------------
// Student t distribution

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double front = std::exp(lbeta + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) for Student t with `df` degrees.
inline double student_t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  const double x = df / (df + t * t);
  return incomplete_beta(df / 2.0, 0.5, x);
}

inline double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0 ? 1.0 - tail : tail;
}

struct TTestResult {
  double t_statistic = 0;
  double degrees_of_freedom = 0;
  double p_value = 1;
};

/// Welch's unequal-variance t-test, t = (mean_b - mean_a) / se.
inline TTestResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("welch_t needs at least two values per sample");
  auto moments = [](std::span<const double> s) {
    double mean = 0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double ss = 0;
    for (double v : s) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / static_cast<double>(s.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double qa = va / na, qb = vb / nb;
  if (!(qa + qb > 0)) throw std::invalid_argument("welch_t: both samples have zero variance");
  TTestResult r;
  r.t_statistic = (mb - ma) / std::sqrt(qa + qb);
  r.degrees_of_freedom = (qa + qb) * (qa + qb) / (qa * qa / (na - 1) + qb * qb / (nb - 1));
  r.p_value = student_t_two_sided_p(r.t_statistic, r.degrees_of_freedom);
  return r;
}

// ---------------------------------------------------------------------------

/// Cohen's kappa for two binary labelings. When chance agreement is 1 the
/// statistic is 1 for perfect agreement and undefined otherwise.
inline double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cohen_kappa: length mismatch " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  if (a.empty()) throw std::invalid_argument("cohen_kappa: empty label lists");
  double agree = 0, a1 = 0, b1 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1))
      throw std::invalid_argument("cohen_kappa: labels must be binary");
    agree += a[i] == b[i];
    a1 += a[i];
    b1 += b[i];
  }
  const double n = static_cast<double>(a.size());
  const double po = agree / n;
  const double pa = a1 / n, pb = b1 / n;
  const double pe = pa * pb + (1 - pa) * (1 - pb);
  if (pe == 1.0) {
    if (po == 1.0) return 1.0;
    throw std::invalid_argument("cohen_kappa: undefined (chance agreement is 1)");
  }
  return (po - pe) / (1 - pe);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace labelaudit
