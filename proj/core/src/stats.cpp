#include "andhra/stats.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <json.hpp>
#include <sstream>

#include "andhra/error.hpp"

namespace andhra {

MeanStd mean_std(std::span<const double> xs) {
  if (xs.size() < 2) throw ContractViolation("mean_std: need at least two values");
  const double n = static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  const double mean = s / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

namespace {

// Continued fraction for I_x(a,b), valid (fast converging) for
// x < (a+1)/(a+b+2).
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
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
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw ContractViolation("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw ContractViolation("incomplete_beta: x must lie in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ContractViolation("student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(x, 0.5 * df, 0.5);  // P(T > |t|)
  return t >= 0.0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_test: unequal lengths");
  if (a.size() < 2) throw ContractViolation("paired_t_test: need n >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const auto ms = mean_std(d);
  TTestResult r;
  r.df = static_cast<double>(d.size() - 1);
  if (ms.stddev == 0.0) {
    r.degenerate = true;
    if (ms.mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), ms.mean);
      r.p = 0.0;
    }
    return r;
  }
  r.t = ms.mean / (ms.stddev / std::sqrt(static_cast<double>(d.size())));
  const double x = r.df / (r.df + r.t * r.t);
  r.p = incomplete_beta(x, 0.5 * r.df, 0.5);  // = 2 * P(T > |t|)
  return r;
}

bool is_significant(double p) { return p <= kSignificanceLevel; }

double mse_paired(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("mse_paired: unequal lengths");
  if (a.empty()) throw ContractViolation("mse_paired: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

ComparisonReport aggregate_experiment(std::span<const RunResult> runs,
                                      std::span<const RunResult> baseline_runs,
                                      const std::string& combiner) {
  if (runs.size() != baseline_runs.size())
    throw DimensionError("aggregate_experiment: " + std::to_string(runs.size()) + " runs vs " +
                         std::to_string(baseline_runs.size()) + " baseline runs");
  if (runs.size() < 2) throw ContractViolation("aggregate_experiment: need at least two runs");
  const std::size_t heads = runs.front().head_accuracy.size();
  for (const auto& r : runs)
    if (r.head_accuracy.size() != heads || heads == 0)
      throw DimensionError("aggregate_experiment: runs disagree on head count");
  for (const auto& r : baseline_runs)
    if (r.head_accuracy.size() != 1)
      throw DimensionError("aggregate_experiment: baseline runs must have exactly one head");

  ComparisonReport rep;
  rep.combiner = combiner;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < heads; ++h) {
    double s = 0.0;
    for (const auto& r : runs) s += r.head_accuracy[h];
    if (s > best) {
      best = s;
      rep.top_head_index = h;
    }
  }
  for (const auto& r : runs) {
    rep.top_head.push_back(r.head_accuracy[rep.top_head_index]);
    const auto it = r.combined_accuracy.find(combiner);
    if (it != r.combined_accuracy.end()) rep.combined.push_back(it->second);
  }
  if (rep.combined.size() != runs.size()) rep.combined.clear();
  for (const auto& r : baseline_runs) rep.baseline.push_back(r.head_accuracy.front());

  rep.baseline_stats = mean_std(rep.baseline);
  rep.top_head_stats = mean_std(rep.top_head);
  if (!rep.combined.empty()) rep.combined_stats = mean_std(rep.combined);
  rep.test = paired_t_test(rep.top_head, rep.baseline);
  rep.significant = is_significant(rep.test.p);
  rep.mse = mse_paired(rep.top_head, rep.baseline);
  return rep;
}

std::string ComparisonReport::to_json() const {
  nlohmann::ordered_json j;
  j["baseline"] = baseline;
  j["top_head"] = top_head;
  j["top_head_index"] = top_head_index;
  j["combined"] = combined;
  j["combiner"] = combiner;
  j["baseline_mean"] = baseline_stats.mean;
  j["baseline_std"] = baseline_stats.stddev;
  j["top_head_mean"] = top_head_stats.mean;
  j["top_head_std"] = top_head_stats.stddev;
  if (!combined.empty()) {
    j["combined_mean"] = combined_stats.mean;
    j["combined_std"] = combined_stats.stddev;
  }
  // JSON has no infinity; degenerate t values are written as null.
  if (std::isfinite(test.t))
    j["t"] = test.t;
  else
    j["t"] = nullptr;
  j["p"] = test.p;
  j["df"] = test.df;
  j["degenerate"] = test.degenerate;
  j["significant"] = significant;
  j["mse"] = mse;
  return j.dump(2);
}

std::string ComparisonReport::to_text(const std::string& row_label) const {
  auto cell = [](const MeanStd& m) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << m.mean << " +- " << m.stddev;
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(10) << "Network" << std::setw(22) << "Baseline" << std::setw(22)
     << "Top-Head" << std::setw(22) << "Combined" << std::setw(14) << "Significance"
     << "Mean Sq. Error\n";
  std::ostringstream mse_cell;
  mse_cell << std::fixed << std::setprecision(3) << mse;
  os << std::left << std::setw(10) << (row_label.empty() ? "-" : row_label) << std::setw(22)
     << cell(baseline_stats) << std::setw(22) << cell(top_head_stats) << std::setw(22)
     << (combined.empty() ? std::string("-") : cell(combined_stats)) << std::setw(14)
     << (significant ? "Yes" : "No") << mse_cell.str() << '\n';
  return os.str();
}

}  // namespace andhra
