#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace andhra {

inline constexpr double kSignificanceLevel = 0.05;

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation
};

MeanStd mean_std(std::span<const double> xs);

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double x, double a, double b);
// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-tailed
  double df = 0.0;
  bool degenerate = false;  // zero spread in the paired differences
};

// Paired t-test on d = a - b. Zero spread gives p = 0 when mean(d) != 0 and
// p = 1 when mean(d) == 0, both flagged degenerate.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

bool is_significant(double p);  // p <= 0.05

// (1/n) * sum (a_i - b_i)^2
double mse_paired(std::span<const double> a, std::span<const double> b);

struct RunResult {
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  std::vector<double> head_accuracy;                 // percent, head order
  std::map<std::string, double> combined_accuracy;   // combiner name -> percent
  double wall_seconds = 0.0;
};

struct ComparisonReport {
  std::vector<double> baseline;
  std::vector<double> top_head;
  std::vector<double> combined;  // empty when the AB runs logged no combined value
  std::size_t top_head_index = 0;
  std::string combiner = "majority";
  MeanStd baseline_stats;
  MeanStd top_head_stats;
  MeanStd combined_stats;
  TTestResult test;
  bool significant = false;
  double mse = 0.0;

  std::string to_json() const;
  // Aligned one-row table: baseline | top head | combined | significance | MSE.
  std::string to_text(const std::string& row_label = "") const;
};

// Top head = highest mean eval accuracy over the runs (first on ties); its
// per-run values are paired by run index with the baseline's single head.
ComparisonReport aggregate_experiment(std::span<const RunResult> runs,
                                      std::span<const RunResult> baseline_runs,
                                      const std::string& combiner = "majority");

}  // namespace andhra
