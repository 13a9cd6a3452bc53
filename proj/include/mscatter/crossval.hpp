#ifndef MSCATTER_CROSSVAL_HPP
#define MSCATTER_CROSSVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mscatter/data.hpp"
#include "mscatter/estimators.hpp"

namespace mscatter {

// How the training part of each fold is recentered before fitting.  Auto
// picks the sample mean for all-Gaussian losses and the spatial median
// otherwise; held-out points are shifted by the training centers, never
// their own.
enum class CenterPolicy { None, Mean, SpatialMedian, Auto };

// folds[k][q] holds the indices of group k assigned to fold q.  Sizes within
// a group differ by at most one.  Deterministic in (data sizes, seed).
using FoldAssignment = std::vector<std::vector<std::vector<int>>>;

FoldAssignment make_folds(const GroupedSample& data, int folds, std::uint64_t seed);

// Held-out negative log-likelihood style score:
//   sum_k { sum_{x in heldout_k} rho_k(x' Sigma_k^{-1} x) + |heldout_k| logdet Sigma_k }
double cv_fit(const std::vector<std::vector<Vector>>& heldout, const FitResult& fitted,
              const std::vector<LossSpec>& losses);
double cv_fit(const std::vector<std::vector<Vector>>& heldout, const FitResult& fitted,
              const LossSpec& loss);

struct CVGrid {
  std::vector<double> betas;  // strictly increasing, in (0, 1]
  int folds = 5;
  std::uint64_t seed = 0;
};

struct CVCellFailure {
  double beta;
  int fold;
  std::string message;
};

struct CVReport {
  std::vector<double> betas;                // grid entries with at least one valid fold
  std::vector<double> cv_curve;             // mean held-out score per surviving beta
  std::vector<std::vector<double>> per_fold;  // [beta][fold], NaN where the cell failed
  double chosen_beta;                       // argmin, ties broken towards smaller beta
  std::vector<CVCellFailure> failures;
};

CVReport cross_validate(const GroupedSample& data, const EstimatorConfig& cfg, const CVGrid& grid,
                        CenterPolicy centering = CenterPolicy::Auto);

}  // namespace mscatter

#endif
