#ifndef MSCATTER_ESTIMATORS_HPP
#define MSCATTER_ESTIMATORS_HPP

#include <optional>
#include <string>
#include <vector>

#include "mscatter/data.hpp"
#include "mscatter/distance.hpp"
#include "mscatter/linalg.hpp"
#include "mscatter/loss.hpp"

namespace mscatter {

// PooledOnly ignores the groups and fits one scatter matrix to everything.
// Prop1 shrinks each group estimate towards the fixed pooled estimate.
// Prop2 solves the joint problem where the center is a free variable tied to
// the groups through the penalty.
enum class Proposal { PooledOnly, Prop1, Prop2 };

const char* proposal_name(Proposal p);

struct EstimatorConfig {
  Proposal proposal = Proposal::Prop2;
  // one entry shared by all groups, or exactly one per group
  std::vector<LossSpec> losses;
  DistanceKind penalty = DistanceKind::KL;
  // beta = 1/(1+lambda) in (0,1]; beta = 1 is the unpenalized fit
  double beta = 0.5;
  double tol = 1e-9;
  int max_iter = 2000;
  // existence checks for Tyler's loss; sweep drivers that validate the data
  // once can switch this off
  bool check_preconditions = true;
  // optional warm starts (size K / one matrix); identity when absent.  Prop2
  // treats init_center as a starting point for the free center; Prop1 treats
  // it as the already-computed pooled target and skips refitting it.
  std::vector<Matrix> init_sigma;
  std::optional<Matrix> init_center;

  const LossSpec& loss_for(int k) const;
  void validate(const GroupedSample& data) const;
};

struct FitResult {
  std::vector<PDSMatrix> sigma;
  PDSMatrix center;
  int iterations;
  double final_residual;
  // penalized objective after every cycle; nonincreasing by construction
  std::vector<double> objective_trace;
};

// (1/n) sum (x - center)(x - center)'
SymMatrix scm(const std::vector<Vector>& group, const Vector& center);
SymMatrix scm(const std::vector<Vector>& group);

// One fixed-point map evaluation: (1/n) sum u(x' Sigma^{-1} x) x x'
SymMatrix weighted_scatter(const std::vector<Vector>& group, const PDSMatrix& sigma,
                           const LossSpec& loss);

// Fixed point of the pooled map over all groups, with each group weighted by
// its own loss.  All-Tyler fits are trace-normalized to p.
PDSMatrix pooled_m_estimator(const GroupedSample& data, const std::vector<LossSpec>& losses,
                             double tol = 1e-9, int max_iter = 2000,
                             bool check_preconditions = true);
PDSMatrix pooled_m_estimator(const GroupedSample& data, const LossSpec& loss, double tol = 1e-9,
                             int max_iter = 2000);

FitResult prop1_solve(const GroupedSample& data, const EstimatorConfig& cfg);
FitResult prop2_solve(const GroupedSample& data, const EstimatorConfig& cfg);
// dispatch on cfg.proposal (PooledOnly replicates the pooled fit K times)
FitResult solve(const GroupedSample& data, const EstimatorConfig& cfg);

// Existence condition for Tyler's scatter with shrinkage intensity beta:
// the fraction of points in every proper subspace V must stay below
// dim(V) / (p beta).  strict_ok reports the strict inequality (existence),
// weak_ok the non-strict one (uniqueness of the fixed-center update).
struct TylerCondition {
  bool strict_ok;
  bool weak_ok;
  // true when every proper subspace was covered (exhaustively or through a
  // deterministic general-position certificate)
  bool certified;
  double beta_star;           // largest beta for which the weak condition holds
  double worst_margin;        // P(V) - dim(V)/(p beta) for the binding subspace
  std::vector<int> witness;   // indices spanning the binding subspace, empty if none
  std::string detail;
};

// Exhaustive enumerates spans of all subsets of < p points (n <= 20 only).
// GeneralPosition refutes or certifies general position (deterministically
// for small problems, randomized above that) and reduces the condition to
// n > p beta.
enum class SubspaceCheckMode { Exhaustive, GeneralPosition };

TylerCondition check_tyler_condition(const std::vector<Vector>& points, double beta,
                                     SubspaceCheckMode mode);

// The condition is monotone in beta, so one scan yields the admissible
// range.  Sweep drivers gate a whole beta grid with a single call; the
// strategy (exhaustive enumeration when affordable, general position with a
// collinearity-cluster bound otherwise) matches what the solvers enforce.
struct TylerBetaBound {
  double beta_star;
  bool certified;
  int witness_dim;            // dimension of the binding subspace (0 if none)
  double witness_fraction;    // fraction of points it holds
  std::vector<int> witness;
  std::string detail;
};

TylerBetaBound tyler_beta_bound(const std::vector<Vector>& points);

// Minimizer of sum_i ||x_i - m|| (geometric median) via a damped Weiszfeld
// iteration that handles iterates landing on data points.
Vector spatial_median(const std::vector<Vector>& points, double tol = 1e-10,
                      int max_iter = 10000);

// Scale Tyler's shape estimate to the covariance scale:
//   b = median_i(x_i' Sigma^{-1} x_i) / median(chi2_p),  returns b * Sigma
PDSMatrix tyler_covariance_rescale(const PDSMatrix& sigma, const std::vector<Vector>& group);

}  // namespace mscatter

#endif
