// SPDX-License-Identifier: Apache-2.0

#include "linmark/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <map>
#include <ostream>

#include "linmark/errors.hpp"

namespace linmark {

std::string_view to_string(TestMethod m) {
  switch (m) {
    case TestMethod::mann_whitney_exact:
      return "mann-whitney-exact";
    case TestMethod::mann_whitney_normal_approx:
      return "mann-whitney-normal-approx";
    case TestMethod::pearson:
      return "pearson";
  }
  return "pearson";
}

std::string_view to_string(BehaviourMeasure b) {
  return b == BehaviourMeasure::mmse ? "mmse" : "cdr";
}

BehaviourMeasure behaviour_from_string(std::string_view s) {
  if (s == "mmse") return BehaviourMeasure::mmse;
  if (s == "cdr") return BehaviourMeasure::cdr;
  throw ValidationError("unknown behaviour measure: " + std::string(s));
}

namespace {

double u_statistic(std::span<const double> a, std::span<const double> b) {
  double u = 0.0;
  for (double x : a) {
    for (double y : b) {
      if (x > y) {
        u += 1.0;
      } else if (x == y) {
        u += 0.5;
      }
    }
  }
  return u;
}

bool has_ties(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  return std::adjacent_find(pooled.begin(), pooled.end()) != pooled.end();
}

// Null distribution counts of U over arrangements of m A-ranks among m+n:
// removing the largest pooled observation gives
//   f(u; m, n) = f(u - n; m - 1, n) + f(u; m, n - 1).
std::vector<double> exact_u_counts(std::size_t m, std::size_t n) {
  // dp[mm][u] holds f(u; mm, nn) for the current nn
  std::vector<std::vector<double>> dp(m + 1, std::vector<double>{1.0});
  for (std::size_t nn = 1; nn <= n; ++nn) {
    std::vector<std::vector<double>> next(m + 1);
    next[0] = {1.0};
    for (std::size_t mm = 1; mm <= m; ++mm) {
      next[mm].assign(mm * nn + 1, 0.0);
      for (std::size_t u = 0; u <= mm * nn; ++u) {
        double ways = 0.0;
        if (u >= nn && u - nn < next[mm - 1].size()) ways += next[mm - 1][u - nn];
        if (u < dp[mm].size()) ways += dp[mm][u];
        next[mm][u] = ways;
      }
    }
    dp = std::move(next);
  }
  return dp[m];
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

}  // namespace

TestResult mann_whitney(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw ValidationError("mann_whitney: both samples must be nonempty");
  }
  const std::size_t m = a.size();
  const std::size_t n = b.size();
  const double u = u_statistic(a, b);

  TestResult result;
  result.statistic = u;
  result.n_a = m;
  result.n_b = n;

  const bool tie_free = !has_ties(a, b);
  if (tie_free && std::min(m, n) <= 8) {
    const std::vector<double> counts = exact_u_counts(m, n);
    double total = 0.0;
    for (double c : counts) total += c;
    const auto iu = static_cast<std::size_t>(std::llround(u));
    double cdf = 0.0, sf = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k <= iu) cdf += counts[k];
      if (k >= iu) sf += counts[k];
    }
    result.p_value = std::min(1.0, 2.0 * std::min(cdf, sf) / total);
    result.method = TestMethod::mann_whitney_exact;
    return result;
  }

  // normal approximation with tie and continuity corrections
  const double N = static_cast<double>(m + n);
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double mn = static_cast<double>(m) * static_cast<double>(n);
  const double mu = mn / 2.0;
  const double var = mn / 12.0 * ((N + 1.0) - tie_term / (N * (N - 1.0)));
  if (var <= 0.0) {
    result.p_value = 1.0;
    result.method = TestMethod::mann_whitney_normal_approx;
    return result;
  }
  const double diff = u - mu;
  const double cc = diff > 0.0 ? 0.5 : (diff < 0.0 ? -0.5 : 0.0);
  const double z = (diff - cc) / std::sqrt(var);
  result.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
  result.method = TestMethod::mann_whitney_normal_approx;
  return result;
}

namespace {

// modified Lentz evaluation of the incomplete-beta continued fraction
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                          (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - std::exp(ln_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

TestResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError("pearson: samples must have equal length");
  }
  const std::size_t n = x.size();
  if (n < 3) throw ValidationError("pearson: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw ValidationError("pearson: undefined for zero-variance input");
  }
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);

  TestResult result;
  result.statistic = r;
  result.method = TestMethod::pearson;
  result.n_a = n;
  result.n_b = n;
  const double nu = static_cast<double>(n - 2);
  if (1.0 - r * r <= 0.0) {
    result.p_value = 0.0;
    return result;
  }
  const double t2 = r * r * nu / (1.0 - r * r);
  result.p_value = regularized_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t2));
  return result;
}

AssociationResult behaviour_association(const std::vector<SubjectTrajectory>& subjects,
                                        BehaviourMeasure behaviour) {
  AssociationResult result;
  for (const SubjectTrajectory& subject : subjects) {
    const std::string& id = subject.marker.subject_id;
    if (subject.marker.values.size() < 2) {
      result.excluded.push_back(id + ": fewer than 2 sessions");
      continue;
    }
    if (subject.behaviour.size() != subject.marker.values.size()) {
      throw ValidationError("behaviour scores misaligned with sessions for " + id);
    }
    double sum = 0.0;
    std::size_t present = 0;
    for (const auto& score : subject.behaviour) {
      if (score) {
        sum += *score;
        ++present;
      }
    }
    if (present == 0) {
      result.excluded.push_back(id + ": no behaviour score");
      continue;
    }
    AssociationPoint point;
    point.subject_id = id;
    point.cohort = subject.marker.cohort;
    point.x = sum / static_cast<double>(present);
    point.y = delta_long(subject.marker);
    result.points.push_back(point);
  }
  std::vector<double> xs, ys;
  for (const auto& p : result.points) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  result.test = pearson(xs, ys);
  if (behaviour == BehaviourMeasure::cdr) {
    // orientation check: correlate against inverted severity as well
    std::vector<double> flipped;
    for (double v : xs) flipped.push_back(3.0 - v);
    result.sign_adjusted_r = pearson(flipped, ys).statistic;
  }
  return result;
}

void write_points_tsv(std::ostream& out, const std::vector<AssociationPoint>& points) {
  out << "subject\tcohort\tx\ty\n";
  for (const auto& p : points) {
    out << p.subject_id << '\t' << to_string(p.cohort) << '\t' << p.x << '\t' << p.y
        << '\n';
  }
}

void write_scatter_svg(std::ostream& out, const std::vector<AssociationPoint>& points,
                       const std::string& x_label, const std::string& y_label) {
  constexpr int kW = 640, kH = 480, kPad = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  if (points.empty()) {
    xmin = ymin = 0.0;
    xmax = ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const auto sx = [&](double x) {
    return kPad + (x - xmin) / (xmax - xmin) * (kW - 2 * kPad);
  };
  const auto sy = [&](double y) {
    return kH - kPad - (y - ymin) / (ymax - ymin) * (kH - 2 * kPad);
  };
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
      << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad
      << "' y2='" << kH - kPad << "' stroke='black'/>\n";
  out << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad << "' y2='"
      << kH - kPad << "' stroke='black'/>\n";
  out << "<text x='" << kW / 2 << "' y='" << kH - 15 << "' text-anchor='middle'>"
      << x_label << "</text>\n";
  out << "<text x='18' y='" << kH / 2
      << "' text-anchor='middle' transform='rotate(-90 18 " << kH / 2 << ")'>"
      << y_label << "</text>\n";
  for (const auto& p : points) {
    const char* color = p.cohort == Cohort::healthy
                            ? "#2a9d8f"
                            : (p.cohort == Cohort::mci ? "#e9c46a" : "#e76f51");
    out << "<circle cx='" << sx(p.x) << "' cy='" << sy(p.y) << "' r='4' fill='"
        << color << "' fill-opacity='0.8'/>\n";
  }
  out << "</svg>\n";
}

}  // namespace linmark
