#ifndef MSCATTER_RDA_HPP
#define MSCATTER_RDA_HPP

#include <optional>
#include <string>
#include <vector>

#include "mscatter/crossval.hpp"
#include "mscatter/data.hpp"
#include "mscatter/estimators.hpp"

namespace mscatter {

// Quadratic discriminant model with per-class location and scatter.  Priors
// are equal; classification minimizes the score below.
struct RDAModel {
  std::vector<std::string> labels;
  std::vector<Vector> mu;
  std::vector<PDSMatrix> sigma;
  double beta;
  Proposal proposal;
  DistanceKind penalty;
  // loss descriptor, enough to rebuild the LossSpec exactly
  LossKind loss_kind;
  double loss_nu;
  double loss_c;
  double loss_b;
  // cross-validation summary when beta was selected on the training set
  std::vector<double> cv_betas;
  std::vector<double> cv_curve;

  int dim() const { return mu.empty() ? 0 : mu.front().size(); }
  int class_count() const { return static_cast<int>(mu.size()); }
};

//   (x - mu)' Sigma^{-1} (x - mu) + logdet Sigma
double qda_score(const Vector& x, const Vector& mu, const PDSMatrix& sigma);

// argmin of the score over classes; ties resolve to the smallest index
int classify(const RDAModel& model, const Vector& x);

// Per-class centers are sample means under the Gaussian loss and spatial
// medians otherwise; scatter matrices come from the configured solver on the
// centered data.  Tyler fits are rescaled to the covariance scale through
// the median of squared distances.
RDAModel fit_rda(const GroupedSample& train, const EstimatorConfig& cfg,
                 const std::vector<std::string>& labels = {});

// Same, with beta picked by cross-validated held-out fit over the grid
RDAModel fit_rda_cv(const GroupedSample& train, const EstimatorConfig& cfg, const CVGrid& grid,
                    const std::vector<std::string>& labels = {});

// Fraction of misclassified points; test groups are aligned with the model
// classes by index.
double misclassification_risk(const RDAModel& model, const GroupedSample& test);

std::string rda_to_json(const RDAModel& model);
RDAModel rda_from_json(const std::string& text);
void save_rda(const RDAModel& model, const std::string& path);
RDAModel load_rda(const std::string& path);

}  // namespace mscatter

#endif
