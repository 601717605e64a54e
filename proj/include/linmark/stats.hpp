// SPDX-License-Identifier: Apache-2.0
//
// Cohort discrimination and reliability statistics: two-sided Mann-Whitney U
// (exact enumeration for small tie-free samples, tie-corrected normal
// approximation otherwise) and Pearson correlation with Student-t p-values.

#ifndef LINMARK_STATS_HPP
#define LINMARK_STATS_HPP

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "linmark/labels.hpp"
#include "linmark/markers.hpp"

namespace linmark {

enum class TestMethod { mann_whitney_exact, mann_whitney_normal_approx, pearson };

std::string_view to_string(TestMethod m);

struct TestResult {
  double statistic = 0.0;  // U for Mann-Whitney, r for Pearson
  double p_value = 1.0;
  TestMethod method = TestMethod::pearson;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

/// Two-sided Mann-Whitney U test. The exact path enumerates the null
/// distribution of U and is taken when min(n_a, n_b) <= 8 and the pooled
/// sample is tie-free; otherwise the normal approximation with tie and
/// continuity corrections is used. The method taken is recorded.
TestResult mann_whitney(std::span<const double> a, std::span<const double> b);

/// Pearson correlation; the two-sided p-value comes from the t-distribution
/// with n-2 degrees of freedom. Requires n >= 3 and nonzero variance.
TestResult pearson(std::span<const double> x, std::span<const double> y);

/// Regularized incomplete beta I_x(a, b); exposed because it is the numeric
/// core of the t-distribution tail.
double regularized_incomplete_beta(double a, double b, double x);

struct AssociationPoint {
  std::string subject_id;
  Cohort cohort = Cohort::healthy;
  double x = 0.0;  // mean behaviour score
  double y = 0.0;  // mean adjacent-session marker change
};

enum class BehaviourMeasure { mmse, cdr };

std::string_view to_string(BehaviourMeasure b);
BehaviourMeasure behaviour_from_string(std::string_view s);

/// One subject's marker trajectory with the behaviour score of each session
/// (missing where the corpus has none), aligned with marker.values.
struct SubjectTrajectory {
  MarkerSeries marker;
  std::vector<std::optional<double>> behaviour;
};

struct AssociationResult {
  std::vector<AssociationPoint> points;
  TestResult test;
  /// r recomputed on (max_scale - x, y); reported alongside for the CDR
  /// orientation question.
  std::optional<double> sign_adjusted_r;
  std::vector<std::string> excluded;  // subject ids left out, with reasons
};

/// x = per-subject mean behaviour over sessions where present, y = mean
/// adjacent-session marker change. Subjects without any behaviour score or
/// with fewer than two sessions are excluded with a warning entry.
AssociationResult behaviour_association(const std::vector<SubjectTrajectory>& subjects,
                                        BehaviourMeasure behaviour);

void write_points_tsv(std::ostream& out, const std::vector<AssociationPoint>& points);

/// Minimal SVG scatter of the association points, colored by cohort.
void write_scatter_svg(std::ostream& out, const std::vector<AssociationPoint>& points,
                       const std::string& x_label, const std::string& y_label);

}  // namespace linmark

#endif  // LINMARK_STATS_HPP
