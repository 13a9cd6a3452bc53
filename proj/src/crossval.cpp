#include "mscatter/crossval.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mscatter/rng.hpp"

namespace mscatter {

namespace {

constexpr std::uint64_t kFoldStream = 0xf01d5ull;

}  // namespace

FoldAssignment make_folds(const GroupedSample& data, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
  for (int k = 0; k < data.group_count(); ++k)
    if (data.group_size(k) < folds) {
      std::ostringstream os;
      os << "make_folds: group " << k << " has " << data.group_size(k) << " points, fewer than "
         << folds << " folds";
      throw std::invalid_argument(os.str());
    }

  FoldAssignment out(static_cast<size_t>(data.group_count()));
  for (int k = 0; k < data.group_count(); ++k) {
    const int n = data.group_size(k);
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    SubstreamRng rng(seed, {kFoldStream, static_cast<std::uint64_t>(k)});
    rng.shuffle(idx);
    auto& group_folds = out[static_cast<size_t>(k)];
    group_folds.assign(static_cast<size_t>(folds), {});
    for (int i = 0; i < n; ++i)
      group_folds[static_cast<size_t>(i % folds)].push_back(idx[static_cast<size_t>(i)]);
    for (auto& f : group_folds) std::sort(f.begin(), f.end());
  }
  return out;
}

double cv_fit(const std::vector<std::vector<Vector>>& heldout, const FitResult& fitted,
              const std::vector<LossSpec>& losses) {
  const int K = static_cast<int>(fitted.sigma.size());
  if (static_cast<int>(heldout.size()) != K)
    throw std::invalid_argument("cv_fit: held-out groups do not match the fitted groups");
  if (losses.empty() || (losses.size() != 1 && static_cast<int>(losses.size()) != K))
    throw std::invalid_argument("cv_fit: need one loss, or one per group");
  double score = 0.0;
  for (int k = 0; k < K; ++k) {
    const LossSpec& loss = losses.size() == 1 ? losses.front() : losses[static_cast<size_t>(k)];
    const PDSMatrix& sigma = fitted.sigma[static_cast<size_t>(k)];
    const auto& pts = heldout[static_cast<size_t>(k)];
    for (const auto& x : pts) score += loss.rho(sigma.mahalanobis(x));
    score += static_cast<double>(pts.size()) * sigma.logdet();
  }
  return score;
}

double cv_fit(const std::vector<std::vector<Vector>>& heldout, const FitResult& fitted,
              const LossSpec& loss) {
  return cv_fit(heldout, fitted, std::vector<LossSpec>{loss});
}

namespace {

Vector group_center(const std::vector<Vector>& group, CenterPolicy policy) {
  if (policy == CenterPolicy::Mean) {
    Vector c(group.front().size(), 0.0);
    for (const auto& x : group) c += x;
    c *= 1.0 / static_cast<double>(group.size());
    return c;
  }
  return spatial_median(group);
}

CenterPolicy resolve_policy(CenterPolicy policy, const EstimatorConfig& cfg, int K) {
  if (policy != CenterPolicy::Auto) return policy;
  for (int k = 0; k < K; ++k)
    if (cfg.loss_for(k).kind() != LossKind::Gaussian) return CenterPolicy::SpatialMedian;
  return CenterPolicy::Mean;
}

}  // namespace

CVReport cross_validate(const GroupedSample& data, const EstimatorConfig& cfg, const CVGrid& grid,
                        CenterPolicy centering) {
  cfg.validate(data);
  if (grid.betas.empty()) throw std::invalid_argument("cross_validate: empty beta grid");
  for (size_t i = 0; i < grid.betas.size(); ++i) {
    if (!(grid.betas[i] > 0.0 && grid.betas[i] <= 1.0))
      throw std::invalid_argument("cross_validate: beta grid entries must lie in (0, 1]");
    if (i > 0 && !(grid.betas[i] > grid.betas[i - 1]))
      throw std::invalid_argument("cross_validate: beta grid must be strictly increasing");
  }

  const int K = data.group_count();
  const int Q = grid.folds;
  const FoldAssignment folds = make_folds(data, Q, grid.seed);
  const CenterPolicy policy = resolve_policy(centering, cfg, K);
  const int B = static_cast<int>(grid.betas.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::vector<double>> cells(static_cast<size_t>(B),
                                         std::vector<double>(static_cast<size_t>(Q), nan));
  std::vector<CVCellFailure> failures;

  for (int q = 0; q < Q; ++q) {
    std::vector<std::vector<Vector>> train(static_cast<size_t>(K));
    std::vector<std::vector<Vector>> heldout(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
      const auto& fold_q = folds[static_cast<size_t>(k)][static_cast<size_t>(q)];
      std::vector<bool> held(static_cast<size_t>(data.group_size(k)), false);
      for (int i : fold_q) held[static_cast<size_t>(i)] = true;
      for (int i = 0; i < data.group_size(k); ++i) {
        const Vector& x = data.group(k)[static_cast<size_t>(i)];
        (held[static_cast<size_t>(i)] ? heldout : train)[static_cast<size_t>(k)].push_back(x);
      }
    }
    if (policy != CenterPolicy::None) {
      for (int k = 0; k < K; ++k) {
        const Vector c = group_center(train[static_cast<size_t>(k)], policy);
        for (auto& x : train[static_cast<size_t>(k)]) x -= c;
        for (auto& x : heldout[static_cast<size_t>(k)]) x -= c;
      }
    }
    const GroupedSample train_sample(train);

    // the existence condition is monotone in beta: bound each Tyler group
    // once, then gate the whole grid against it
    double beta_admissible = 1e300;
    std::string gate_detail;
    if (cfg.check_preconditions) {
      for (int k = 0; k < K; ++k) {
        if (!cfg.loss_for(k).scale_free()) continue;
        const TylerBetaBound bound = tyler_beta_bound(train_sample.group(k));
        if (bound.beta_star < beta_admissible) {
          beta_admissible = bound.beta_star;
          std::ostringstream os;
          os << "group " << k << ": " << bound.detail;
          gate_detail = os.str();
        }
      }
    }

    EstimatorConfig sweep = cfg;
    sweep.check_preconditions = false;
    bool have_warm_start = false;
    for (int bi = 0; bi < B; ++bi) {
      const double beta = grid.betas[static_cast<size_t>(bi)];
      if (beta > beta_admissible + 1e-12) {
        std::ostringstream os;
        os << "Tyler existence condition fails at beta " << beta << " (" << gate_detail << ")";
        failures.push_back({beta, q, os.str()});
        continue;
      }
      sweep.beta = beta;
      try {
        FitResult fit = solve(train_sample, sweep);
        cells[static_cast<size_t>(bi)][static_cast<size_t>(q)] =
            cv_fit(heldout, fit, sweep.losses);
        // warm-start the next grid point; the fixed point is unique, so this
        // only changes the iteration count
        sweep.init_sigma.clear();
        for (const auto& s : fit.sigma) sweep.init_sigma.push_back(s.matrix());
        sweep.init_center = fit.center.matrix();
        have_warm_start = true;
      } catch (const numerical_error& e) {
        failures.push_back({beta, q, e.what()});
      } catch (const precondition_error& e) {
        failures.push_back({beta, q, e.what()});
      } catch (const std::domain_error& e) {
        failures.push_back({beta, q, e.what()});
      }
    }
    (void)have_warm_start;
  }

  CVReport report;
  report.chosen_beta = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int bi = 0; bi < B; ++bi) {
    double sum = 0.0;
    int valid = 0;
    for (int q = 0; q < Q; ++q) {
      const double v = cells[static_cast<size_t>(bi)][static_cast<size_t>(q)];
      if (!std::isnan(v)) {
        sum += v;
        ++valid;
      }
    }
    if (valid == 0) continue;
    const double mean = sum / valid;
    report.betas.push_back(grid.betas[static_cast<size_t>(bi)]);
    report.cv_curve.push_back(mean);
    report.per_fold.push_back(cells[static_cast<size_t>(bi)]);
    if (mean < best) {
      best = mean;
      report.chosen_beta = report.betas.back();
    }
  }
  report.failures = std::move(failures);
  if (report.betas.empty())
    throw numerical_error("cross_validate: every (beta, fold) cell failed");
  return report;
}

}  // namespace mscatter
