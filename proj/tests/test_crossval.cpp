#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "mscatter/crossval.hpp"
#include "mscatter/data.hpp"
#include "mscatter/errors.hpp"
#include "mscatter/estimators.hpp"
#include "mscatter/rng.hpp"
#include "test_support.hpp"

using namespace mscatter;
using test_support::random_pds;
using test_support::random_points;
using test_support::random_vector;
using test_support::rel_frob;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v[0] = a;
  v[1] = b;
  return v;
}

std::vector<Vector> shaped_points(SubstreamRng& rng, int n, int p) {
  const Matrix root = random_pds(rng, p).power(0.5).matrix();
  std::vector<Vector> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(root * random_vector(rng, p));
  return out;
}

Vector mean_of(const std::vector<Vector>& pts) {
  Vector c(pts.front().size(), 0.0);
  for (const auto& x : pts) c += x;
  c *= 1.0 / static_cast<double>(pts.size());
  return c;
}

// train/held split of one group for one fold, from the published assignment
void split_group(const std::vector<Vector>& group, const std::vector<int>& fold_idx,
                 std::vector<Vector>& train, std::vector<Vector>& held) {
  std::vector<bool> out(group.size(), false);
  for (int i : fold_idx) out[static_cast<size_t>(i)] = true;
  for (size_t i = 0; i < group.size(); ++i)
    (out[i] ? held : train).push_back(group[i]);
}

// held-out score of the convex-blend closed form under unit weights,
// replicating the per-fold mean centering from scratch
std::vector<std::vector<double>> brute_force_blend_scores(const GroupedSample& data,
                                                          const FoldAssignment& folds,
                                                          const std::vector<double>& betas,
                                                          bool center_by_mean) {
  const int K = data.group_count();
  const int Q = static_cast<int>(folds.front().size());
  std::vector<std::vector<double>> cells(betas.size(), std::vector<double>(Q, 0.0));
  for (int q = 0; q < Q; ++q) {
    std::vector<std::vector<Vector>> train(static_cast<size_t>(K));
    std::vector<std::vector<Vector>> held(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k)
      split_group(data.group(k), folds[static_cast<size_t>(k)][static_cast<size_t>(q)],
                  train[static_cast<size_t>(k)], held[static_cast<size_t>(k)]);
    if (center_by_mean) {
      for (int k = 0; k < K; ++k) {
        const Vector c = mean_of(train[static_cast<size_t>(k)]);
        for (auto& x : train[static_cast<size_t>(k)]) x -= c;
        for (auto& x : held[static_cast<size_t>(k)]) x -= c;
      }
    }
    int total = 0;
    for (const auto& g : train) total += static_cast<int>(g.size());
    Matrix pooled(data.dim(), data.dim(), 0.0);
    std::vector<Matrix> group_scm;
    for (int k = 0; k < K; ++k) {
      group_scm.push_back(scm(train[static_cast<size_t>(k)]).matrix());
      pooled += (static_cast<double>(train[static_cast<size_t>(k)].size()) / total) *
                group_scm.back();
    }
    for (size_t bi = 0; bi < betas.size(); ++bi) {
      double score = 0.0;
      for (int k = 0; k < K; ++k) {
        const Matrix sk = betas[bi] * group_scm[static_cast<size_t>(k)] +
                          (1.0 - betas[bi]) * pooled;
        const Matrix inv = spd_inverse(sk);
        for (const auto& x : held[static_cast<size_t>(k)]) score += quad_form(inv, x);
        score += static_cast<double>(held[static_cast<size_t>(k)].size()) * spd_logdet(sk);
      }
      cells[bi][static_cast<size_t>(q)] = score;
    }
  }
  return cells;
}

}  // namespace

TEST_CASE("fold assignment balances, covers, and repeats deterministically") {
  SubstreamRng rng(41, {0});
  GroupedSample data({random_points(rng, 7, 2), random_points(rng, 11, 2)});

  const FoldAssignment folds = make_folds(data, 5, 99);
  REQUIRE(folds.size() == 2);
  for (int k = 0; k < 2; ++k) {
    const auto& gf = folds[static_cast<size_t>(k)];
    REQUIRE(static_cast<int>(gf.size()) == 5);
    int smallest = data.group_size(k), largest = 0;
    std::set<int> seen;
    for (const auto& f : gf) {
      smallest = std::min(smallest, static_cast<int>(f.size()));
      largest = std::max(largest, static_cast<int>(f.size()));
      CHECK(std::is_sorted(f.begin(), f.end()));
      for (int i : f) {
        CHECK(i >= 0);
        CHECK(i < data.group_size(k));
        CHECK(seen.insert(i).second);  // no index lands in two folds
      }
    }
    CHECK(static_cast<int>(seen.size()) == data.group_size(k));
    CHECK(largest - smallest <= 1);
  }
  // n = 7 over 5 folds: two folds of two, three singletons
  std::vector<int> sizes;
  for (const auto& f : folds[0]) sizes.push_back(static_cast<int>(f.size()));
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<int>{1, 1, 1, 2, 2});

  // same sizes and seed give the same assignment, even for different values
  GroupedSample other({random_points(rng, 7, 4), random_points(rng, 11, 4)});
  CHECK(make_folds(other, 5, 99) == folds);
  CHECK(make_folds(data, 5, 99) == folds);
  CHECK(make_folds(data, 5, 100) != folds);

  CHECK_THROWS_AS(make_folds(data, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_folds(data, 8, 0), std::invalid_argument);  // group 0 has 7

  // leave-one-out boundary: every fold is a singleton
  GroupedSample tiny({random_points(rng, 5, 2)});
  const FoldAssignment loo = make_folds(tiny, 5, 3);
  for (const auto& f : loo[0]) CHECK(f.size() == 1);
}

TEST_CASE("held-out scores follow the additive likelihood form") {
  SubstreamRng rng(42, {0});

  Matrix d(2, 2, 0.0);
  d(0, 0) = 4.0;
  d(1, 1) = 1.0;
  FitResult fit{{PDSMatrix(d)}, PDSMatrix(d), 1, 0.0, {}};
  const LossSpec gauss = LossSpec::gaussian(2);

  // single point (2,3): quadratic form 1 + 9 plus the log determinant
  const double got = cv_fit({{vec2(2, 3)}}, fit, gauss);
  CHECK(got == doctest::Approx(10.0 + std::log(4.0)).epsilon(1e-14));

  // empty held-out groups contribute nothing
  CHECK(cv_fit({{}}, fit, gauss) == 0.0);

  // scores add over points, so order and grouping never matter
  const auto pts = random_points(rng, 6, 2);
  double one_by_one = 0.0;
  for (const auto& x : pts) one_by_one += cv_fit({{x}}, fit, gauss);
  std::vector<Vector> reversed(pts.rbegin(), pts.rend());
  CHECK(cv_fit({pts}, fit, gauss) == doctest::Approx(one_by_one).epsilon(1e-13));
  CHECK(cv_fit({reversed}, fit, gauss) == doctest::Approx(one_by_one).epsilon(1e-13));

  CHECK_THROWS_AS(cv_fit({{vec2(1, 0)}, {vec2(0, 1)}}, fit, gauss), std::invalid_argument);
  CHECK_THROWS_AS(cv_fit({pts}, fit, std::vector<LossSpec>{gauss, gauss}),
                  std::invalid_argument);
}

TEST_CASE("grid validation rejects malformed requests") {
  SubstreamRng rng(43, {0});
  GroupedSample data({shaped_points(rng, 10, 2)});
  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop1;
  cfg.losses = {LossSpec::gaussian(2)};

  CVGrid grid;
  grid.folds = 2;
  grid.betas = {};
  CHECK_THROWS_AS(cross_validate(data, cfg, grid), std::invalid_argument);
  grid.betas = {0.0, 0.5};
  CHECK_THROWS_AS(cross_validate(data, cfg, grid), std::invalid_argument);
  grid.betas = {0.5, 1.2};
  CHECK_THROWS_AS(cross_validate(data, cfg, grid), std::invalid_argument);
  grid.betas = {0.5, 0.5};
  CHECK_THROWS_AS(cross_validate(data, cfg, grid), std::invalid_argument);
  grid.betas = {0.7, 0.3};
  CHECK_THROWS_AS(cross_validate(data, cfg, grid), std::invalid_argument);
}

TEST_CASE("single-group unit-weight sweep reproduces the brute-force scores") {
  SubstreamRng rng(44, {0});
  GroupedSample data({shaped_points(rng, 6, 2)});

  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop1;
  cfg.losses = {LossSpec::gaussian(2)};
  cfg.penalty = DistanceKind::KL;
  CVGrid grid;
  grid.betas = {0.3, 0.8};
  grid.folds = 3;
  grid.seed = 7;

  const CVReport report = cross_validate(data, cfg, grid);
  const FoldAssignment folds = make_folds(data, grid.folds, grid.seed);
  const auto want = brute_force_blend_scores(data, folds, grid.betas, true);

  REQUIRE(report.betas == grid.betas);
  REQUIRE(report.per_fold.size() == 2);
  for (size_t bi = 0; bi < 2; ++bi) {
    double sum = 0.0;
    for (int q = 0; q < 3; ++q) {
      const double cell = report.per_fold[bi][static_cast<size_t>(q)];
      CHECK(cell == doctest::Approx(want[bi][static_cast<size_t>(q)]).epsilon(1e-10));
      sum += cell;
    }
    CHECK(report.cv_curve[bi] == doctest::Approx(sum / 3.0).epsilon(1e-13));
  }
  // with one group the blend collapses to the group covariance for every
  // beta, so the curve is flat up to solver rounding
  CHECK(report.cv_curve[0] == doctest::Approx(report.cv_curve[1]).epsilon(1e-10));
  // selection scans with strict improvement, so equal means keep the earlier
  // (smaller) entry
  size_t arg = 0;
  for (size_t bi = 1; bi < report.cv_curve.size(); ++bi)
    if (report.cv_curve[bi] < report.cv_curve[arg]) arg = bi;
  CHECK(report.chosen_beta == report.betas[arg]);
  CHECK(report.failures.empty());

  // a fit that ignores beta entirely scores every entry identically, forcing
  // an exact tie that must resolve to the smallest candidate
  EstimatorConfig pooled = cfg;
  pooled.proposal = Proposal::PooledOnly;
  const CVReport tied = cross_validate(data, pooled, grid);
  CHECK(tied.cv_curve[0] == tied.cv_curve[1]);
  CHECK(tied.chosen_beta == 0.3);
}

TEST_CASE("two-group sweep matches the closed-form oracle cell by cell") {
  SubstreamRng rng(45, {0});
  GroupedSample data({shaped_points(rng, 9, 2), shaped_points(rng, 12, 2)});

  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop1;
  cfg.losses = {LossSpec::gaussian(2)};
  cfg.penalty = DistanceKind::KL;
  CVGrid grid;
  grid.betas = {0.1, 0.35, 0.6, 0.85, 1.0};
  grid.folds = 3;
  grid.seed = 21;

  for (const CenterPolicy policy : {CenterPolicy::Mean, CenterPolicy::None}) {
    const CVReport report = cross_validate(data, cfg, grid, policy);
    const FoldAssignment folds = make_folds(data, grid.folds, grid.seed);
    const auto want =
        brute_force_blend_scores(data, folds, grid.betas, policy == CenterPolicy::Mean);

    REQUIRE(report.betas == grid.betas);
    double best = 1e300;
    double best_beta = 0.0;
    for (size_t bi = 0; bi < grid.betas.size(); ++bi) {
      double sum = 0.0;
      for (int q = 0; q < grid.folds; ++q) {
        CHECK(report.per_fold[bi][static_cast<size_t>(q)] ==
              doctest::Approx(want[bi][static_cast<size_t>(q)]).epsilon(1e-10));
        sum += want[bi][static_cast<size_t>(q)];
      }
      const double mean = sum / grid.folds;
      CHECK(report.cv_curve[bi] == doctest::Approx(mean).epsilon(1e-10));
      if (mean < best) {
        best = mean;
        best_beta = grid.betas[bi];
      }
    }
    CHECK(report.chosen_beta == best_beta);
  }
}

TEST_CASE("automatic centering matches the explicit policies") {
  SubstreamRng rng(46, {0});
  GroupedSample data({shaped_points(rng, 8, 2), shaped_points(rng, 8, 2)});
  CVGrid grid;
  grid.betas = {0.4, 0.9};
  grid.folds = 2;
  grid.seed = 5;

  EstimatorConfig gauss;
  gauss.proposal = Proposal::Prop1;
  gauss.losses = {LossSpec::gaussian(2)};
  const CVReport auto_g = cross_validate(data, gauss, grid, CenterPolicy::Auto);
  const CVReport mean_g = cross_validate(data, gauss, grid, CenterPolicy::Mean);
  CHECK(auto_g.per_fold == mean_g.per_fold);

  EstimatorConfig robust = gauss;
  robust.losses = {LossSpec::huber(2, 0.9)};
  const CVReport auto_r = cross_validate(data, robust, grid, CenterPolicy::Auto);
  const CVReport med_r = cross_validate(data, robust, grid, CenterPolicy::SpatialMedian);
  CHECK(auto_r.per_fold == med_r.per_fold);
  CHECK(auto_r.per_fold != mean_g.per_fold);
}

TEST_CASE("single-entry grids agree with a hand-driven fold loop") {
  SubstreamRng rng(47, {0});
  GroupedSample data({shaped_points(rng, 9, 2), shaped_points(rng, 7, 2)});

  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop2;
  cfg.losses = {LossSpec::huber(2, 0.9)};
  cfg.penalty = DistanceKind::Ellipticity;
  cfg.beta = 0.45;
  CVGrid grid;
  grid.betas = {0.45};
  grid.folds = 3;
  grid.seed = 13;

  const CVReport report = cross_validate(data, cfg, grid, CenterPolicy::SpatialMedian);
  const FoldAssignment folds = make_folds(data, grid.folds, grid.seed);
  for (int q = 0; q < grid.folds; ++q) {
    std::vector<std::vector<Vector>> train(2), held(2);
    for (int k = 0; k < 2; ++k)
      split_group(data.group(k), folds[static_cast<size_t>(k)][static_cast<size_t>(q)],
                  train[static_cast<size_t>(k)], held[static_cast<size_t>(k)]);
    for (int k = 0; k < 2; ++k) {
      const Vector c = spatial_median(train[static_cast<size_t>(k)]);
      for (auto& x : train[static_cast<size_t>(k)]) x -= c;
      for (auto& x : held[static_cast<size_t>(k)]) x -= c;
    }
    EstimatorConfig fold_cfg = cfg;
    fold_cfg.check_preconditions = false;
    const FitResult fit = solve(GroupedSample(train), fold_cfg);
    const double want = cv_fit(held, fit, cfg.losses);
    CHECK(report.per_fold[0][static_cast<size_t>(q)] == want);
  }
}

TEST_CASE("warm-started sweeps agree with independent single-beta runs") {
  SubstreamRng rng(48, {0});
  GroupedSample data({shaped_points(rng, 10, 2), shaped_points(rng, 10, 2)});

  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop2;
  cfg.losses = {LossSpec::tdist(2, 3.0)};
  cfg.penalty = DistanceKind::KL;
  CVGrid grid;
  grid.betas = {0.2, 0.5, 0.8};
  grid.folds = 2;
  grid.seed = 31;
  const CVReport swept = cross_validate(data, cfg, grid);

  for (size_t bi = 0; bi < grid.betas.size(); ++bi) {
    CVGrid single;
    single.betas = {grid.betas[bi]};
    single.folds = grid.folds;
    single.seed = grid.seed;
    const CVReport alone = cross_validate(data, cfg, single);
    for (int q = 0; q < grid.folds; ++q)
      CHECK(swept.per_fold[bi][static_cast<size_t>(q)] ==
            doctest::Approx(alone.per_fold[0][static_cast<size_t>(q)])
                .epsilon(1e-6));
  }
}

TEST_CASE("held-out points cannot influence the model scoring them") {
  SubstreamRng rng(49, {0});
  const int n = 8;
  const auto base = shaped_points(rng, n, 2);

  // fold layout is a function of sizes and seed only, so it is known before
  // choosing values; perturb exactly the points held out in fold 1
  GroupedSample probe({base});
  const FoldAssignment folds = make_folds(probe, 2, 17);
  auto perturbed = base;
  for (int i : folds[0][1]) perturbed[static_cast<size_t>(i)] += random_vector(rng, 2);

  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop1;
  cfg.losses = {LossSpec::huber(2, 0.9)};
  cfg.penalty = DistanceKind::KL;
  CVGrid grid;
  grid.betas = {0.5};
  grid.folds = 2;
  grid.seed = 17;

  const CVReport a = cross_validate(probe, cfg, grid, CenterPolicy::None);
  const CVReport b = cross_validate(GroupedSample({perturbed}), cfg, grid, CenterPolicy::None);

  // the fold-1 model trains on fold-0 points, which are identical in both
  // datasets; its score must shift exactly by the held-out substitution
  std::vector<Vector> train, held_a, held_b;
  split_group(base, folds[0][1], train, held_a);
  {
    std::vector<Vector> unused;
    split_group(perturbed, folds[0][1], unused, held_b);
  }
  EstimatorConfig fold_cfg = cfg;
  fold_cfg.beta = 0.5;
  const FitResult model = solve(GroupedSample({train}), fold_cfg);
  CHECK(a.per_fold[0][1] == cv_fit({held_a}, model, cfg.losses));
  CHECK(b.per_fold[0][1] == cv_fit({held_b}, model, cfg.losses));
}

TEST_CASE("existence gating drops cells and records the reason") {
  SubstreamRng rng(50, {0});
  const int n = 8;
  // decide the fold split first (it depends only on sizes and seed), then
  // concentrate three of fold 0's points on a line: that fold trains the
  // other cell, capping its admissible range at 1/(2 * 3/4) = 2/3
  GroupedSample sizing({random_points(rng, n, 2)});
  const FoldAssignment folds = make_folds(sizing, 2, 23);
  REQUIRE(folds[0][0].size() == 4);
  std::vector<Vector> pts(n, Vector(2, 0.0));
  for (int i = 0; i < n; ++i) pts[static_cast<size_t>(i)] = random_vector(rng, 2);
  for (size_t j = 0; j < 3; ++j) {
    const int i = folds[0][0][j];
    pts[static_cast<size_t>(i)] = (1.0 + static_cast<double>(j)) * vec2(1.0, 2.0);
  }
  GroupedSample data({pts});

  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop2;
  cfg.losses = {LossSpec::tyler(2)};
  cfg.penalty = DistanceKind::Ellipticity;
  cfg.init_sigma = {Matrix::identity(2)};
  cfg.init_center = Matrix::identity(2);
  CVGrid grid;
  grid.betas = {0.5, 0.8};
  grid.folds = 2;
  grid.seed = 23;

  const CVReport report = cross_validate(data, cfg, grid, CenterPolicy::None);

  // beta 0.8 exceeds the degenerate fold's cap but survives on the clean fold
  REQUIRE(report.betas == grid.betas);
  CHECK(!std::isnan(report.per_fold[0][0]));
  CHECK(!std::isnan(report.per_fold[0][1]));
  CHECK(!std::isnan(report.per_fold[1][0]));
  CHECK(std::isnan(report.per_fold[1][1]));
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].beta == 0.8);
  CHECK(report.failures[0].fold == 1);
  CHECK(report.failures[0].message.find("Tyler existence condition fails") !=
        std::string::npos);

  // a fully collinear group defeats every cell and surfaces as one error
  std::vector<Vector> line;
  for (int i = 1; i <= 8; ++i) line.push_back(static_cast<double>(i) * vec2(2.0, -1.0));
  CVGrid high;
  high.betas = {0.9};
  high.folds = 2;
  high.seed = 1;
  CHECK_THROWS_AS(
      cross_validate(GroupedSample({line}), cfg, high, CenterPolicy::None),
      numerical_error);
}

TEST_CASE("reports are deterministic replays") {
  SubstreamRng rng(51, {0});
  GroupedSample data({shaped_points(rng, 9, 2), shaped_points(rng, 8, 2)});
  EstimatorConfig cfg;
  cfg.proposal = Proposal::Prop1;
  cfg.losses = {LossSpec::huber(2, 0.7)};
  cfg.penalty = DistanceKind::Ellipticity;
  CVGrid grid;
  grid.betas = {0.25, 0.6, 0.95};
  grid.folds = 3;
  grid.seed = 77;
  const CVReport a = cross_validate(data, cfg, grid);
  const CVReport b = cross_validate(data, cfg, grid);
  CHECK(a.betas == b.betas);
  CHECK(a.cv_curve == b.cv_curve);
  CHECK(a.per_fold == b.per_fold);
  CHECK(a.chosen_beta == b.chosen_beta);
}
