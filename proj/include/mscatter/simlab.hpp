#ifndef MSCATTER_SIMLAB_HPP
#define MSCATTER_SIMLAB_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mscatter/data.hpp"
#include "mscatter/estimators.hpp"
#include "mscatter/rda.hpp"
#include "mscatter/rng.hpp"

namespace mscatter {

// Elliptical samplers.  The batch forms own their stream; the point forms
// draw from a caller-managed stream so experiment drivers stay reproducible.
std::vector<Vector> sample_gaussian(const Vector& mu, const PDSMatrix& sigma, int n,
                                    std::uint64_t seed);
std::vector<Vector> sample_t(const Vector& mu, const PDSMatrix& sigma, double nu, int n,
                             std::uint64_t seed);
// chol is any factor A with A A' = Sigma
Vector sample_gaussian_point(SubstreamRng& rng, const Vector& mu, const Matrix& chol);
// x = mu + A z sqrt(nu / g), z standard normal, g ~ chi2_nu; Sigma is the
// scatter parameter (the covariance need not exist for small nu)
Vector sample_t_point(SubstreamRng& rng, const Vector& mu, const Matrix& chol, double nu);

// (n_1..n_K) ~ Multinomial(total, probs), redrawn until every n_k >= min_size.
// attempts, when given, receives the number of draws consumed.
std::vector<int> multinomial_sizes(SubstreamRng& rng, int total, const std::vector<double>& probs,
                                   int min_size = 0, int* attempts = nullptr);

// Class scatter geometries: Sigma_k = k I versus Sigma_k = I, with class
// means at the origin and in orthogonal coordinate directions.
enum class Scenario { UnequalSpherical, EqualSpherical };
enum class Family { Gaussian, T2 };

const char* scenario_name(Scenario s);
const char* family_name(Family f);

// A table row: either one of the fixed baselines or a solver-backed rule
// identified by (proposal, loss, penalty), e.g. "Prop2(H,KL)".  Loss letters
// are G (Gaussian), H (Huber at the 0.9 quantile), T (Tyler); penalties are
// KL and E.
struct MethodTag {
  enum class Kind { Oracle1, Oracle2, Lda, Qda, Rda };
  Kind kind = Kind::Rda;
  Proposal proposal = Proposal::Prop1;
  LossKind loss = LossKind::Gaussian;
  DistanceKind penalty = DistanceKind::KL;
};

MethodTag parse_method(const std::string& name);
std::string method_name(const MethodTag& tag);

// 0.01, 0.03, ..., 0.49, 0.55, 0.60, ..., 0.90
std::vector<double> default_beta_grid();
std::vector<std::string> default_simulation_methods();
std::vector<std::string> default_iris_methods();

// One synthetic cell: fixed (scenario, family, K, p), multinomial class
// sizes, equal-size fresh test set, and per-trial best-over-grid risk for
// the solver-backed rules.
struct ExperimentSpec {
  Scenario scenario = Scenario::UnequalSpherical;
  Family family = Family::Gaussian;
  int dim = 10;
  int group_count = 3;
  int sample_size = 100;
  int trials = 100;
  double nu = 2.0;        // degrees of freedom of the heavy-tailed family
  int min_group_size = 3; // multinomial floor; smaller draws are redrawn
  std::uint64_t seed = 1;
  std::vector<std::string> methods = default_simulation_methods();
  std::vector<double> beta_grid = default_beta_grid();
  double tol = 1e-7;
  int max_iter = 4000;

  // (1/4, 1/4, 1/2) for K=3 and (1/6, 1/6, 1/6, 1/4, 1/4) for K=5; equal
  // probabilities for other K
  std::vector<double> class_probabilities() const;
  // mu_1 = 0; mu_k = delta_k e_{k-1} for k >= 2, where delta_k = 3+k
  // (Gaussian) or 4+k (t2) under UnequalSpherical and the constant 3 or 4
  // under EqualSpherical
  std::vector<Vector> class_means() const;
  // Sigma_k = scale_k I
  std::vector<double> class_scales() const;
  void validate() const;
};

struct MethodSummary {
  std::string method;
  // false for QDA when some trial had a class with n_k <= p; mean/std are
  // NaN then and the cell renders as "-"
  bool present = true;
  double mean_risk = 0.0;  // percent
  double std_risk = 0.0;   // percent, sample standard deviation over trials
  // beta grid entries skipped because the Tyler existence bound ruled them
  // out, summed over trials
  long long skipped_beta_cells = 0;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<MethodSummary> methods;
  long long size_redraws = 0;   // multinomial draws beyond the first
  int trial_redraws = 0;        // trials redrawn after unexpected solver failures
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

// A full synthetic table: the cross product of families, group counts and
// dimensions under one scenario.  Every cell derives its own seed from the
// table seed and its coordinates, so a subset run reproduces the same cells.
struct SyntheticTableSpec {
  Scenario scenario = Scenario::UnequalSpherical;
  std::vector<Family> families = {Family::Gaussian, Family::T2};
  std::vector<int> group_counts = {3, 5};
  std::vector<int> dims = {10, 20, 30};
  int sample_size = 100;
  int trials = 100;
  double nu = 2.0;
  int min_group_size = 3;
  std::uint64_t seed = 1;
  std::vector<std::string> methods = default_simulation_methods();
  std::vector<double> beta_grid = default_beta_grid();
  double tol = 1e-7;
  int max_iter = 4000;

  ExperimentSpec cell_spec(Family family, int groups, int dim) const;
};

struct SyntheticTable {
  SyntheticTableSpec spec;
  std::vector<ExperimentResult> cells;  // families outer, then groups, then dims
};

SyntheticTable run_synthetic_table(const SyntheticTableSpec& spec);

std::string synthetic_csv(const SyntheticTable& table);
std::string synthetic_text(const SyntheticTable& table);
std::string synthetic_provenance_json(const SyntheticTable& table);

// The classic 150 x 4 three-class iris measurements, grouped by class.
const std::vector<std::vector<Vector>>& iris_groups();
const std::vector<std::string>& iris_labels();

// Train/validation resampling study on the iris data: per repetition each
// class is split T/(50-T), two training rows per class are replaced by
// zeta * (1,1,1,1)' with zeta ~ Unif(0, outlier_max), beta is picked by
// per-repetition cross-validation, and the validation error is averaged.
struct IrisSpec {
  std::vector<int> train_sizes = {30, 25, 15, 10};
  int repetitions = 100;
  int folds = 5;
  int outliers_per_group = 2;
  double outlier_max = 1024.0;
  std::uint64_t seed = 1;
  std::vector<std::string> methods = default_iris_methods();
  std::vector<double> beta_grid = default_beta_grid();
  double tol = 1e-7;
  int max_iter = 4000;

  void validate() const;
};

struct IrisResult {
  IrisSpec spec;
  // [method][split] over repetitions, percent
  std::vector<std::vector<double>> mean_error;
  std::vector<std::vector<double>> std_error;
  long long cv_failure_cells = 0;  // fold x beta cells the CV marked invalid
  int repetition_redraws = 0;
};

IrisResult run_iris(const IrisSpec& spec);

std::string iris_csv(const IrisResult& result);
std::string iris_text(const IrisResult& result);
std::string iris_provenance_json(const IrisResult& result);

}  // namespace mscatter

#endif
