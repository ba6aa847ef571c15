#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "labelaudit/metrics.hpp"
#include "labelaudit/random.hpp"

using namespace labelaudit;

namespace {

// Reference Welch statistic written from the textbook formula.
std::pair<double, double> welch_reference(const std::vector<double>& a, const std::vector<double>& b) {
  auto stats = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / (v.size() - 1)};
  };
  auto [ma, va] = stats(a);
  auto [mb, vb] = stats(b);
  const double sa = va / a.size(), sb = vb / b.size();
  const double t = (mb - ma) / std::sqrt(sa + sb);
  const double df = (sa + sb) * (sa + sb) / (sa * sa / (a.size() - 1) + sb * sb / (b.size() - 1));
  return {t, df};
}

}  // namespace

TEST(F1, PerfectPredictor) {
  std::vector<int> g{1, 0, 1, 1, 0};
  EXPECT_EQ(f1_positive(g, g).f1, 1.0);
}

TEST(F1, HandConfusionMatrix) {
  ConfusionCounts c;
  c.tp = 2;
  c.fp = 1;
  c.fn = 1;
  auto s = f1_positive(c);
  EXPECT_DOUBLE_EQ(s.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.f1, 2.0 / 3.0);
}

TEST(F1, NoPositivePredictionsIsZero) {
  std::vector<int> p{0, 0, 0}, g{1, 0, 1};
  auto s = f1_positive(p, g);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.f1, 0.0);
}

TEST(F1, LengthMismatchThrows) {
  std::vector<int> p{0, 1}, g{1};
  EXPECT_THROW(f1_positive(p, g), std::invalid_argument);
}

TEST(F1, PropertyPermutationInvariantAndMicroPooling) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> p, g;
    const std::size_t n = 5 + uniform_index(rng, 50);
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back(static_cast<int>(uniform_index(rng, 2)));
      g.push_back(static_cast<int>(uniform_index(rng, 2)));
    }
    auto pp = p, gg = g;
    Rng shuf(trial);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx, shuf);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = p[idx[i]];
      gg[i] = g[idx[i]];
    }
    EXPECT_EQ(f1_positive(p, g).f1, f1_positive(pp, gg).f1);
    const std::size_t cut = n / 3;
    auto c1 = confusion(std::span(p).first(cut), std::span(g).first(cut));
    auto c2 = confusion(std::span(p).subspan(cut), std::span(g).subspan(cut));
    EXPECT_EQ(f1_positive(c1 + c2).f1, f1_positive(p, g).f1);
  }
}

TEST(Welch, IdenticalSamples) {
  std::vector<double> a{0.1, 0.2, 0.3};
  auto r = welch_t(a, a);
  EXPECT_EQ(r.t_statistic, 0.0);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(Welch, OhioFamilyRowsAgainstReference) {
  const std::vector<double> original{0.656, 0.636, 0.633, 0.667, 0.634};
  const std::vector<double> removed{0.659, 0.661, 0.669, 0.677, 0.655};
  auto r = welch_t(original, removed);
  auto [t, df] = welch_reference(original, removed);
  EXPECT_NEAR(r.t_statistic, t, 1e-12);
  EXPECT_NEAR(r.degrees_of_freedom, df, 1e-12);
  EXPECT_NEAR(r.t_statistic, 2.39, 0.02);
  EXPECT_NEAR(r.degrees_of_freedom, 6.4, 0.1);
  // frozen from an external statistics package
  EXPECT_NEAR(r.t_statistic, 2.3941550505017823, 1e-9);
  EXPECT_NEAR(r.p_value, 0.051450612382785935, 1e-9);
}

TEST(Welch, ScaleInvariance) {
  std::vector<double> a{1, 2, 4, 3}, b{2, 5, 3, 6, 7};
  auto base = welch_t(a, b);
  for (double k : {0.01, 3.0, 1000.0}) {
    std::vector<double> as, bs;
    for (double x : a) as.push_back(k * x);
    for (double x : b) bs.push_back(k * x);
    EXPECT_NEAR(welch_t(as, bs).t_statistic, base.t_statistic, 1e-9);
  }
}

TEST(Welch, DegenerateInputsThrow) {
  std::vector<double> one{1.0}, two{1.0, 2.0}, flat{3.0, 3.0};
  EXPECT_THROW(welch_t(one, two), std::invalid_argument);
  EXPECT_THROW(welch_t(flat, flat), std::invalid_argument);
}

TEST(StudentT, FrozenValues) {
  EXPECT_NEAR(student_t_two_sided_p(2.0, 10), 0.07338803477074039, 1e-10);
  EXPECT_NEAR(incomplete_beta(2.5, 3.5, 0.4), 0.4869041915261176, 1e-10);
  EXPECT_NEAR(student_t_cdf(0.0, 4), 0.5, 1e-12);
}

TEST(StudentT, PropertyPMonotoneInAbsT) {
  for (double df : {1.0, 2.5, 6.4, 30.0}) {
    double prev = 1.0;
    for (double t = 0.0; t < 8; t += 0.25) {
      const double p = student_t_two_sided_p(t, df);
      EXPECT_LE(p, prev + 1e-15);
      EXPECT_NEAR(p, student_t_two_sided_p(-t, df), 1e-14);
      prev = p;
    }
  }
}

TEST(Kappa, PerfectAgreement) {
  std::vector<int> a{1, 0, 1, 1};
  EXPECT_EQ(cohen_kappa(a, a), 1.0);
}

TEST(Kappa, HandTable) {
  std::vector<int> a, b;
  auto add = [&](int x, int y, int n) {
    a.insert(a.end(), n, x);
    b.insert(b.end(), n, y);
  };
  add(1, 1, 20);
  add(1, 0, 5);
  add(0, 1, 10);
  add(0, 0, 65);
  EXPECT_NEAR(cohen_kappa(a, b), 0.625, 1e-12);
}

TEST(Kappa, IndependentRandomNearZero) {
  Rng rng(17);
  std::vector<int> a, b;
  for (int i = 0; i < 10000; ++i) {
    a.push_back(static_cast<int>(uniform_index(rng, 2)));
    b.push_back(static_cast<int>(uniform_index(rng, 2)));
  }
  EXPECT_NEAR(cohen_kappa(a, b), 0.0, 0.05);
}

TEST(Kappa, ChanceAgreementOne) {
  std::vector<int> ones{1, 1, 1};
  EXPECT_EQ(cohen_kappa(ones, ones), 1.0);
  std::vector<int> a{1, 1}, b{1, 0};
  EXPECT_NO_THROW(cohen_kappa(a, b));
  std::vector<int> x{1};
  EXPECT_THROW(cohen_kappa(x, a), std::invalid_argument);
}

TEST(Kappa, PropertyBoundedByObservedAgreement) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> a, b;
    const std::size_t n = 2 + uniform_index(rng, 40);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(static_cast<int>(uniform_index(rng, 2)));
      b.push_back(uniform_index(rng, 4) == 0 ? 1 - a.back() : a.back());
    }
    double po = 0;
    for (std::size_t i = 0; i < n; ++i) po += a[i] == b[i];
    po /= n;
    try {
      EXPECT_LE(cohen_kappa(a, b), po + 1e-12);
    } catch (const std::invalid_argument&) {
    }
  }
}
