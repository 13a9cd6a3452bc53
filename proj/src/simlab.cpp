#include "mscatter/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "mscatter/errors.hpp"
#include "mscatter/io.hpp"

namespace mscatter {

namespace {

// fixed substream labels; changing any of them changes every sampled table
constexpr std::uint64_t kSizesStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kTestStream = 3;
constexpr std::uint64_t kCellStream = 4;
constexpr std::uint64_t kSplitStream = 5;
constexpr std::uint64_t kOutlierStream = 6;
constexpr std::uint64_t kFoldStream = 7;

constexpr int kMaxAttempts = 64;
constexpr double kHuberQuantile = 0.9;

std::uint64_t u64(int x) { return static_cast<std::uint64_t>(x); }

double kahan_sum(const std::vector<double>& xs) {
  double sum = 0.0, carry = 0.0;
  for (double x : xs) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

// mean and sample standard deviation over trials, in percent
void risk_summary(const std::vector<double>& risks, double* mean, double* stddev) {
  const int n = static_cast<int>(risks.size());
  const double m = kahan_sum(risks) / n;
  double dev = 0.0;
  if (n > 1) {
    std::vector<double> sq;
    sq.reserve(risks.size());
    for (double r : risks) sq.push_back((r - m) * (r - m));
    dev = std::sqrt(kahan_sum(sq) / (n - 1));
  }
  *mean = 100.0 * m;
  *stddev = 100.0 * dev;
}

void check_beta_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("beta grid must not be empty");
  double prev = 0.0;
  for (double b : grid) {
    if (!(b > 0.0 && b <= 1.0))
      throw std::invalid_argument("beta grid entries must lie in (0, 1]");
    if (b <= prev) throw std::invalid_argument("beta grid must be strictly increasing");
    prev = b;
  }
}

LossSpec loss_from_kind(LossKind kind, int p, double nu) {
  switch (kind) {
    case LossKind::Gaussian: return LossSpec::gaussian(p);
    case LossKind::Huber: return LossSpec::huber(p, kHuberQuantile);
    case LossKind::TDist: return LossSpec::tdist(p, nu);
    case LossKind::Tyler: return LossSpec::tyler(p);
  }
  throw std::invalid_argument("loss_from_kind: unknown loss kind");
}

std::vector<Vector> group_means(const std::vector<std::vector<Vector>>& groups) {
  std::vector<Vector> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    Vector m(g.front().size(), 0.0);
    for (const Vector& x : g) m += x;
    m *= 1.0 / static_cast<double>(g.size());
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Vector> group_medians(const std::vector<std::vector<Vector>>& groups) {
  std::vector<Vector> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(spatial_median(g));
  return out;
}

std::vector<std::vector<Vector>> centered_groups(const std::vector<std::vector<Vector>>& groups,
                                                 const std::vector<Vector>& centers) {
  std::vector<std::vector<Vector>> out(groups.size());
  for (size_t k = 0; k < groups.size(); ++k) {
    out[k].reserve(groups[k].size());
    for (const Vector& x : groups[k]) out[k].push_back(x - centers[k]);
  }
  return out;
}

// fraction of test points whose minimal score picks the wrong class
double classify_risk(const std::vector<std::vector<Vector>>& test, const std::vector<Vector>& mu,
                     const std::vector<PDSMatrix>& sigma) {
  long long wrong = 0, total = 0;
  const int K = static_cast<int>(mu.size());
  for (size_t k = 0; k < test.size(); ++k) {
    for (const Vector& x : test[k]) {
      int best = 0;
      double best_score = qda_score(x, mu[0], sigma[0]);
      for (int j = 1; j < K; ++j) {
        const double s = qda_score(x, mu[static_cast<size_t>(j)], sigma[static_cast<size_t>(j)]);
        if (s < best_score) {
          best_score = s;
          best = j;
        }
      }
      wrong += best != static_cast<int>(k);
      ++total;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(total);
}

std::vector<std::vector<Vector>> draw_groups(SubstreamRng& rng, const std::vector<int>& sizes,
                                             const std::vector<Vector>& mus,
                                             const std::vector<Matrix>& chol, Family family,
                                             double nu) {
  std::vector<std::vector<Vector>> out(sizes.size());
  for (size_t k = 0; k < sizes.size(); ++k) {
    out[k].reserve(static_cast<size_t>(sizes[k]));
    for (int i = 0; i < sizes[k]; ++i)
      out[k].push_back(family == Family::Gaussian ? sample_gaussian_point(rng, mus[k], chol[k])
                                                  : sample_t_point(rng, mus[k], chol[k], nu));
  }
  return out;
}

// Best-over-grid risk for one solver-backed rule within one trial.  The
// sweep walks the grid upward with warm starts.  Grid entries the solver
// cannot certify are skipped and counted rather than failing the trial: for
// Tyler's loss those at or above the existence bound, and for any loss the
// entries whose iterates leave the positive definite cone (weak penalties on
// rank-deficient group scatters, so n_k < p at large beta).
double sweep_best_risk(const GroupedSample& train, const std::vector<std::vector<Vector>>& ctrain,
                       const std::vector<Vector>& centers,
                       const std::vector<std::vector<Vector>>& test, const MethodTag& tag,
                       const LossSpec& loss, double tol, int max_iter,
                       const std::vector<double>& grid, double tyler_beta_cap,
                       long long* skipped) {
  EstimatorConfig cfg;
  cfg.proposal = tag.proposal;
  cfg.losses = {loss};
  cfg.penalty = tag.penalty;
  cfg.tol = tol;
  cfg.max_iter = max_iter;
  cfg.check_preconditions = false;

  // the pooled target does not depend on beta, so it is fitted once here
  std::optional<Matrix> prop1_center;
  if (tag.proposal == Proposal::Prop1)
    prop1_center = pooled_m_estimator(train, cfg.losses, tol, max_iter, false).matrix();

  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  std::vector<Matrix> warm;
  std::optional<Matrix> warm_center;
  for (double beta : grid) {
    if (loss.scale_free() && !(beta < tyler_beta_cap - 1e-12)) {
      ++*skipped;
      continue;
    }
    cfg.beta = beta;
    cfg.init_sigma = warm;
    cfg.init_center = prop1_center ? prop1_center : warm_center;
    std::optional<FitResult> fit;
    try {
      fit = solve(train, cfg);
    } catch (const numerical_error&) {
      ++*skipped;
      continue;
    }
    warm.clear();
    for (const auto& s : fit->sigma) warm.push_back(s.matrix());
    if (tag.proposal == Proposal::Prop2) warm_center = fit->center.matrix();

    std::vector<PDSMatrix> sig;
    sig.reserve(fit->sigma.size());
    for (size_t k = 0; k < fit->sigma.size(); ++k)
      sig.push_back(loss.scale_free() ? tyler_covariance_rescale(fit->sigma[k], ctrain[k])
                                      : fit->sigma[k]);
    const double risk = classify_risk(test, centers, sig);
    if (!any || risk < best) {
      best = risk;
      any = true;
    }
  }
  if (!any)
    throw precondition_error("sweep_best_risk: every grid entry was ruled out for " +
                             method_name(tag));
  return best;
}

std::string csv_method_id(const std::string& name) {
  std::string s = name;
  std::replace(s.begin(), s.end(), ',', ':');
  return s;
}

std::string format_mean_std(const MethodSummary& m) {
  if (!m.present) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f (%.1f)", m.mean_risk, m.std_risk);
  return buf;
}

// first column left-aligned, the rest right-aligned, two-space gutters
std::string aligned_table(const std::vector<std::string>& head,
                          const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width(head.size());
  for (size_t c = 0; c < head.size(); ++c) width[c] = head[c].size();
  for (const auto& row : rows)
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c > 0) os << "  ";
      if (c == 0) {
        os << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        os << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    os << '\n';
  };
  emit(head);
  for (const auto& row : rows) emit(row);
  return os.str();
}

}  // namespace

Vector sample_gaussian_point(SubstreamRng& rng, const Vector& mu, const Matrix& chol) {
  const int p = mu.size();
  if (chol.rows() != p || chol.cols() != p)
    throw std::invalid_argument("sample_gaussian_point: factor dimension mismatch");
  Vector z(p);
  for (int i = 0; i < p; ++i) z[i] = rng.normal();
  Vector x = mu;
  for (int i = 0; i < p; ++i) {
    double acc = 0.0;
    for (int j = 0; j < p; ++j) acc += chol(i, j) * z[j];
    x[i] += acc;
  }
  return x;
}

Vector sample_t_point(SubstreamRng& rng, const Vector& mu, const Matrix& chol, double nu) {
  if (!(nu > 0.0)) throw std::invalid_argument("sample_t_point: nu must be positive");
  const int p = mu.size();
  if (chol.rows() != p || chol.cols() != p)
    throw std::invalid_argument("sample_t_point: factor dimension mismatch");
  Vector z(p);
  for (int i = 0; i < p; ++i) z[i] = rng.normal();
  const double g = rng.chi2(nu);
  const double scale = std::sqrt(nu / g);
  Vector x = mu;
  for (int i = 0; i < p; ++i) {
    double acc = 0.0;
    for (int j = 0; j < p; ++j) acc += chol(i, j) * z[j];
    x[i] += scale * acc;
  }
  return x;
}

std::vector<Vector> sample_gaussian(const Vector& mu, const PDSMatrix& sigma, int n,
                                    std::uint64_t seed) {
  if (mu.size() != sigma.dim()) throw std::invalid_argument("sample_gaussian: dimension mismatch");
  if (n < 0) throw std::invalid_argument("sample_gaussian: negative count");
  const Matrix chol = cholesky(sigma.matrix());
  SubstreamRng rng(seed);
  std::vector<Vector> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample_gaussian_point(rng, mu, chol));
  return out;
}

std::vector<Vector> sample_t(const Vector& mu, const PDSMatrix& sigma, double nu, int n,
                             std::uint64_t seed) {
  if (mu.size() != sigma.dim()) throw std::invalid_argument("sample_t: dimension mismatch");
  if (n < 0) throw std::invalid_argument("sample_t: negative count");
  if (!(nu > 0.0)) throw std::invalid_argument("sample_t: nu must be positive");
  const Matrix chol = cholesky(sigma.matrix());
  SubstreamRng rng(seed);
  std::vector<Vector> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample_t_point(rng, mu, chol, nu));
  return out;
}

std::vector<int> multinomial_sizes(SubstreamRng& rng, int total, const std::vector<double>& probs,
                                   int min_size, int* attempts) {
  if (total < 0) throw std::invalid_argument("multinomial_sizes: negative total");
  if (probs.empty()) throw std::invalid_argument("multinomial_sizes: no classes");
  double sum = 0.0;
  for (double q : probs) {
    if (!(q >= 0.0)) throw std::invalid_argument("multinomial_sizes: negative probability");
    sum += q;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("multinomial_sizes: probabilities must sum to 1");
  const int K = static_cast<int>(probs.size());
  if (min_size > 0 && static_cast<long long>(min_size) * K > total)
    throw std::invalid_argument("multinomial_sizes: minimum sizes exceed the total");

  for (int draw = 1; draw <= 10000; ++draw) {
    std::vector<int> n(static_cast<size_t>(K), 0);
    for (int i = 0; i < total; ++i) {
      const double u = rng.uniform();
      double cum = 0.0;
      int k = K - 1;
      for (int j = 0; j < K; ++j) {
        cum += probs[static_cast<size_t>(j)];
        if (u < cum) {
          k = j;
          break;
        }
      }
      ++n[static_cast<size_t>(k)];
    }
    bool ok = true;
    for (int k = 0; k < K; ++k) ok = ok && n[static_cast<size_t>(k)] >= min_size;
    if (ok) {
      if (attempts) *attempts = draw;
      return n;
    }
  }
  throw numerical_error("multinomial_sizes: no draw met the minimum class size in 10000 attempts");
}

const char* scenario_name(Scenario s) {
  return s == Scenario::UnequalSpherical ? "unequal-spherical" : "equal-spherical";
}

const char* family_name(Family f) { return f == Family::Gaussian ? "gaussian" : "t2"; }

MethodTag parse_method(const std::string& name) {
  std::string s = name;
  // ':' is the comma-free spelling used inside CSV files
  std::replace(s.begin(), s.end(), ':', ',');
  MethodTag tag;
  if (s == "Oracle1") {
    tag.kind = MethodTag::Kind::Oracle1;
    return tag;
  }
  if (s == "Oracle2") {
    tag.kind = MethodTag::Kind::Oracle2;
    return tag;
  }
  if (s == "LDA") {
    tag.kind = MethodTag::Kind::Lda;
    return tag;
  }
  if (s == "QDA") {
    tag.kind = MethodTag::Kind::Qda;
    return tag;
  }
  const bool p1 = s.rfind("Prop1(", 0) == 0;
  const bool p2 = s.rfind("Prop2(", 0) == 0;
  if ((p1 || p2) && s.size() > 7 && s.back() == ')') {
    tag.kind = MethodTag::Kind::Rda;
    tag.proposal = p1 ? Proposal::Prop1 : Proposal::Prop2;
    const std::string inner = s.substr(6, s.size() - 7);
    const size_t comma = inner.find(',');
    if (comma != std::string::npos) {
      const std::string loss = inner.substr(0, comma);
      const std::string penalty = inner.substr(comma + 1);
      bool ok = true;
      if (loss == "G")
        tag.loss = LossKind::Gaussian;
      else if (loss == "H")
        tag.loss = LossKind::Huber;
      else if (loss == "T")
        tag.loss = LossKind::Tyler;
      else
        ok = false;
      if (penalty == "KL")
        tag.penalty = DistanceKind::KL;
      else if (penalty == "E")
        tag.penalty = DistanceKind::Ellipticity;
      else
        ok = false;
      if (ok) return tag;
    }
  }
  throw std::invalid_argument("parse_method: unknown method '" + name + "'");
}

std::string method_name(const MethodTag& tag) {
  switch (tag.kind) {
    case MethodTag::Kind::Oracle1: return "Oracle1";
    case MethodTag::Kind::Oracle2: return "Oracle2";
    case MethodTag::Kind::Lda: return "LDA";
    case MethodTag::Kind::Qda: return "QDA";
    case MethodTag::Kind::Rda: break;
  }
  std::string out;
  if (tag.proposal == Proposal::Prop1)
    out = "Prop1(";
  else if (tag.proposal == Proposal::Prop2)
    out = "Prop2(";
  else
    throw std::invalid_argument("method_name: pooled fits have no method tag spelling");
  switch (tag.loss) {
    case LossKind::Gaussian: out += 'G'; break;
    case LossKind::Huber: out += 'H'; break;
    case LossKind::Tyler: out += 'T'; break;
    case LossKind::TDist:
      throw std::invalid_argument("method_name: the t loss has no method tag spelling");
  }
  out += ',';
  out += tag.penalty == DistanceKind::KL ? "KL" : "E";
  out += ')';
  return out;
}

std::vector<double> default_beta_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 49; i += 2) grid.push_back(i / 100.0);
  for (int i = 55; i <= 90; i += 5) grid.push_back(i / 100.0);
  return grid;
}

std::vector<std::string> default_simulation_methods() {
  return {"Oracle1",     "Oracle2",     "QDA",         "LDA",        "Prop1(G,KL)",
          "Prop1(H,KL)", "Prop1(T,E)",  "Prop2(G,E)",  "Prop2(T,E)", "Prop2(H,E)",
          "Prop2(H,KL)"};
}

std::vector<std::string> default_iris_methods() {
  return {"LDA",         "QDA",        "Prop1(G,KL)", "Prop1(T,E)", "Prop1(H,E)",
          "Prop1(H,KL)", "Prop2(T,E)", "Prop2(H,E)",  "Prop2(H,KL)"};
}

std::vector<double> ExperimentSpec::class_probabilities() const {
  if (group_count == 3) return {0.25, 0.25, 0.5};
  if (group_count == 5) return {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.25, 0.25};
  return std::vector<double>(static_cast<size_t>(group_count), 1.0 / group_count);
}

std::vector<Vector> ExperimentSpec::class_means() const {
  std::vector<Vector> mu(static_cast<size_t>(group_count), Vector(dim, 0.0));
  for (int k = 2; k <= group_count; ++k) {
    const double base = family == Family::Gaussian ? 3.0 : 4.0;
    const double delta = scenario == Scenario::UnequalSpherical ? base + k : base;
    mu[static_cast<size_t>(k - 1)][k - 2] = delta;
  }
  return mu;
}

std::vector<double> ExperimentSpec::class_scales() const {
  std::vector<double> s(static_cast<size_t>(group_count));
  for (int k = 0; k < group_count; ++k)
    s[static_cast<size_t>(k)] = scenario == Scenario::UnequalSpherical ? k + 1.0 : 1.0;
  return s;
}

void ExperimentSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("ExperimentSpec: dim must be positive");
  if (group_count < 2) throw std::invalid_argument("ExperimentSpec: need at least two classes");
  if (dim < group_count - 1)
    throw std::invalid_argument(
        "ExperimentSpec: orthogonal mean directions need dim >= group_count - 1");
  if (sample_size < 1) throw std::invalid_argument("ExperimentSpec: sample_size must be positive");
  if (trials < 1) throw std::invalid_argument("ExperimentSpec: trials must be positive");
  if (!(nu > 0.0)) throw std::invalid_argument("ExperimentSpec: nu must be positive");
  if (min_group_size < 1)
    throw std::invalid_argument("ExperimentSpec: min_group_size must be at least 1");
  if (static_cast<long long>(min_group_size) * group_count > sample_size)
    throw std::invalid_argument("ExperimentSpec: minimum class sizes exceed sample_size");
  if (!(tol > 0.0)) throw std::invalid_argument("ExperimentSpec: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("ExperimentSpec: max_iter must be positive");
  check_beta_grid(beta_grid);
  if (methods.empty()) throw std::invalid_argument("ExperimentSpec: no methods");
  for (const auto& m : methods) (void)parse_method(m);
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const int p = spec.dim;
  const int K = spec.group_count;
  const auto probs = spec.class_probabilities();
  const auto mus = spec.class_means();
  const auto scales = spec.class_scales();

  std::vector<PDSMatrix> truth;
  std::vector<Matrix> chol;
  truth.reserve(static_cast<size_t>(K));
  chol.reserve(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    Matrix m = Matrix::identity(p);
    m *= scales[static_cast<size_t>(k)];
    truth.push_back(PDSMatrix(m));
    Matrix c = Matrix::identity(p);
    c *= std::sqrt(scales[static_cast<size_t>(k)]);
    chol.push_back(std::move(c));
  }

  std::vector<MethodTag> tags;
  tags.reserve(spec.methods.size());
  for (const auto& name : spec.methods) tags.push_back(parse_method(name));
  const int M = static_cast<int>(tags.size());

  std::vector<std::optional<LossSpec>> losses(static_cast<size_t>(M));
  bool any_gaussian_rda = false, any_robust_rda = false, any_tyler = false, want_oracle2 = false;
  for (int i = 0; i < M; ++i) {
    if (tags[static_cast<size_t>(i)].kind == MethodTag::Kind::Oracle2) want_oracle2 = true;
    if (tags[static_cast<size_t>(i)].kind != MethodTag::Kind::Rda) continue;
    losses[static_cast<size_t>(i)] = loss_from_kind(tags[static_cast<size_t>(i)].loss, p, spec.nu);
    if (tags[static_cast<size_t>(i)].loss == LossKind::Gaussian)
      any_gaussian_rda = true;
    else
      any_robust_rda = true;
    if (tags[static_cast<size_t>(i)].loss == LossKind::Tyler) any_tyler = true;
  }
  const bool need_medians = any_robust_rda || (want_oracle2 && spec.family == Family::T2);

  std::vector<std::vector<double>> risks(static_cast<size_t>(M));
  for (auto& r : risks) r.reserve(static_cast<size_t>(spec.trials));
  std::vector<long long> skipped(static_cast<size_t>(M), 0);
  bool qda_ok = true;
  long long size_redraws = 0;
  int trial_redraws = 0;
  std::string last_redraw_error;

  for (int t = 0; t < spec.trials; ++t) {
    bool committed = false;
    std::string last_error;
    for (int attempt = 0; attempt < kMaxAttempts && !committed; ++attempt) {
      SubstreamRng size_rng(spec.seed, {kSizesStream, u64(t), u64(attempt)});
      int draws = 1;
      const std::vector<int> sizes =
          multinomial_sizes(size_rng, spec.sample_size, probs, spec.min_group_size, &draws);
      SubstreamRng train_rng(spec.seed, {kTrainStream, u64(t), u64(attempt)});
      SubstreamRng test_rng(spec.seed, {kTestStream, u64(t), u64(attempt)});
      const auto train = draw_groups(train_rng, sizes, mus, chol, spec.family, spec.nu);
      const auto test = draw_groups(test_rng, sizes, mus, chol, spec.family, spec.nu);

      try {
        std::vector<double> row(static_cast<size_t>(M),
                                std::numeric_limits<double>::quiet_NaN());
        std::vector<long long> row_skipped(static_cast<size_t>(M), 0);
        bool row_qda_ok = true;
        for (int k = 0; k < K; ++k) row_qda_ok = row_qda_ok && sizes[static_cast<size_t>(k)] > p;

        const std::vector<Vector> means = group_means(train);
        std::vector<Vector> medians;
        if (need_medians) medians = group_medians(train);

        std::vector<std::vector<Vector>> mean_centered, med_centered;
        std::optional<GroupedSample> mean_grouped, med_grouped;
        if (any_gaussian_rda) {
          mean_centered = centered_groups(train, means);
          mean_grouped.emplace(mean_centered);
        }
        if (any_robust_rda) {
          med_centered = centered_groups(train, medians);
          med_grouped.emplace(med_centered);
        }

        double tyler_cap = std::numeric_limits<double>::infinity();
        if (any_tyler)
          for (int k = 0; k < K; ++k)
            tyler_cap =
                std::min(tyler_cap, tyler_beta_bound(med_centered[static_cast<size_t>(k)]).beta_star);

        for (int i = 0; i < M; ++i) {
          const MethodTag& tag = tags[static_cast<size_t>(i)];
          switch (tag.kind) {
            case MethodTag::Kind::Oracle1:
              row[static_cast<size_t>(i)] = classify_risk(test, mus, truth);
              break;
            case MethodTag::Kind::Oracle2:
              row[static_cast<size_t>(i)] = classify_risk(
                  test, spec.family == Family::Gaussian ? means : medians, truth);
              break;
            case MethodTag::Kind::Lda: {
              Matrix acc(p, p, 0.0);
              for (int k = 0; k < K; ++k)
                for (const Vector& x : train[static_cast<size_t>(k)])
                  add_outer(acc, x - means[static_cast<size_t>(k)], 1.0);
              acc *= 1.0 / static_cast<double>(spec.sample_size);
              const PDSMatrix pooled(acc);
              const std::vector<PDSMatrix> common(static_cast<size_t>(K), pooled);
              row[static_cast<size_t>(i)] = classify_risk(test, means, common);
              break;
            }
            case MethodTag::Kind::Qda: {
              if (!row_qda_ok) break;
              try {
                std::vector<PDSMatrix> sig;
                sig.reserve(static_cast<size_t>(K));
                for (int k = 0; k < K; ++k)
                  sig.push_back(PDSMatrix(
                      scm(train[static_cast<size_t>(k)], means[static_cast<size_t>(k)])));
                row[static_cast<size_t>(i)] = classify_risk(test, means, sig);
              } catch (const std::domain_error&) {
                row_qda_ok = false;
              } catch (const numerical_error&) {
                row_qda_ok = false;
              }
              break;
            }
            case MethodTag::Kind::Rda: {
              const bool gaussian = tag.loss == LossKind::Gaussian;
              row[static_cast<size_t>(i)] = sweep_best_risk(
                  gaussian ? *mean_grouped : *med_grouped,
                  gaussian ? mean_centered : med_centered, gaussian ? means : medians, test, tag,
                  *losses[static_cast<size_t>(i)], spec.tol, spec.max_iter, spec.beta_grid,
                  tyler_cap, &row_skipped[static_cast<size_t>(i)]);
              break;
            }
          }
        }

        for (int i = 0; i < M; ++i) {
          risks[static_cast<size_t>(i)].push_back(row[static_cast<size_t>(i)]);
          skipped[static_cast<size_t>(i)] += row_skipped[static_cast<size_t>(i)];
        }
        qda_ok = qda_ok && row_qda_ok;
        size_redraws += draws - 1;
        committed = true;
      } catch (const numerical_error& e) {
        ++trial_redraws;
        last_error = e.what();
        last_redraw_error = last_error;
      } catch (const precondition_error& e) {
        ++trial_redraws;
        last_error = e.what();
        last_redraw_error = last_error;
      }
    }
    if (!committed) {
      std::ostringstream os;
      os << "run_experiment: trial " << t << " failed " << kMaxAttempts
         << " attempts in a row; last error: " << last_error;
      throw numerical_error(os.str());
    }
  }
  if (100LL * trial_redraws > spec.trials) {
    std::ostringstream os;
    os << "run_experiment: " << trial_redraws << " of " << spec.trials
       << " trials were redrawn, above the 1% budget; last redraw cause: " << last_redraw_error;
    throw numerical_error(os.str());
  }

  ExperimentResult out;
  out.spec = spec;
  out.size_redraws = size_redraws;
  out.trial_redraws = trial_redraws;
  out.methods.reserve(static_cast<size_t>(M));
  for (int i = 0; i < M; ++i) {
    MethodSummary s;
    s.method = spec.methods[static_cast<size_t>(i)];
    s.skipped_beta_cells = skipped[static_cast<size_t>(i)];
    if (tags[static_cast<size_t>(i)].kind == MethodTag::Kind::Qda && !qda_ok) {
      s.present = false;
      s.mean_risk = std::numeric_limits<double>::quiet_NaN();
      s.std_risk = std::numeric_limits<double>::quiet_NaN();
    } else {
      risk_summary(risks[static_cast<size_t>(i)], &s.mean_risk, &s.std_risk);
    }
    out.methods.push_back(std::move(s));
  }
  return out;
}

ExperimentSpec SyntheticTableSpec::cell_spec(Family family, int groups, int dim) const {
  ExperimentSpec cell;
  cell.scenario = scenario;
  cell.family = family;
  cell.dim = dim;
  cell.group_count = groups;
  cell.sample_size = sample_size;
  cell.trials = trials;
  cell.nu = nu;
  cell.min_group_size = min_group_size;
  cell.methods = methods;
  cell.beta_grid = beta_grid;
  cell.tol = tol;
  cell.max_iter = max_iter;
  cell.seed = derive_stream(
      seed, {kCellStream, family == Family::Gaussian ? 0ULL : 1ULL, u64(groups), u64(dim)});
  return cell;
}

SyntheticTable run_synthetic_table(const SyntheticTableSpec& spec) {
  if (spec.families.empty() || spec.group_counts.empty() || spec.dims.empty())
    throw std::invalid_argument(
        "run_synthetic_table: families, group_counts and dims must be non-empty");
  SyntheticTable out;
  out.spec = spec;
  for (Family f : spec.families)
    for (int g : spec.group_counts)
      for (int d : spec.dims) out.cells.push_back(run_experiment(spec.cell_spec(f, g, d)));
  return out;
}

std::string synthetic_csv(const SyntheticTable& table) {
  std::ostringstream os;
  os << "family,groups,dim,method,mean_percent,std_percent,present,skipped_beta_cells\n";
  for (const auto& cell : table.cells) {
    for (const auto& m : cell.methods) {
      os << family_name(cell.spec.family) << ',' << cell.spec.group_count << ','
         << cell.spec.dim << ',' << csv_method_id(m.method) << ',';
      if (m.present)
        os << format_double(m.mean_risk) << ',' << format_double(m.std_risk);
      else
        os << ',';
      os << ',' << (m.present ? 1 : 0) << ',' << m.skipped_beta_cells << '\n';
    }
  }
  return os.str();
}

std::string synthetic_text(const SyntheticTable& table) {
  const auto& spec = table.spec;
  std::ostringstream os;
  os << (spec.scenario == Scenario::UnequalSpherical
             ? "class scatter Sigma_k = k I (unequal spherical)"
             : "class scatter Sigma_k = I (equal spherical)")
     << ", " << spec.trials << " trials, N = " << spec.sample_size << ", seed " << spec.seed
     << "\n";
  for (Family f : spec.families) {
    os << "\nfamily: " << family_name(f) << "\n";
    std::vector<std::string> head{"method"};
    std::vector<const ExperimentResult*> cols;
    for (int g : spec.group_counts)
      for (int d : spec.dims) {
        for (const auto& cell : table.cells)
          if (cell.spec.family == f && cell.spec.group_count == g && cell.spec.dim == d) {
            cols.push_back(&cell);
            head.push_back("K=" + std::to_string(g) + " p=" + std::to_string(d));
          }
      }
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < spec.methods.size(); ++i) {
      std::vector<std::string> row{spec.methods[i]};
      for (const ExperimentResult* cell : cols) row.push_back(format_mean_std(cell->methods[i]));
      rows.push_back(std::move(row));
    }
    os << aligned_table(head, rows);
  }
  return os.str();
}

namespace {

nlohmann::json method_summaries_json(const std::vector<MethodSummary>& methods) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : methods) {
    nlohmann::json j{{"method", m.method},
                     {"present", m.present},
                     {"skipped_beta_cells", m.skipped_beta_cells}};
    if (m.present) {
      j["mean_percent"] = m.mean_risk;
      j["std_percent"] = m.std_risk;
    } else {
      j["mean_percent"] = nullptr;
      j["std_percent"] = nullptr;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

std::string synthetic_provenance_json(const SyntheticTable& table) {
  const auto& spec = table.spec;
  nlohmann::json j;
  j["format"] = "mscatter-table";
  j["version"] = 1;
  j["kind"] = "synthetic";
  j["scenario"] = scenario_name(spec.scenario);
  nlohmann::json fams = nlohmann::json::array();
  for (Family f : spec.families) fams.push_back(family_name(f));
  j["families"] = std::move(fams);
  j["group_counts"] = spec.group_counts;
  j["dims"] = spec.dims;
  j["sample_size"] = spec.sample_size;
  j["trials"] = spec.trials;
  j["nu"] = spec.nu;
  j["min_group_size"] = spec.min_group_size;
  j["seed"] = spec.seed;
  j["methods"] = spec.methods;
  j["beta_grid"] = spec.beta_grid;
  j["tol"] = spec.tol;
  j["max_iter"] = spec.max_iter;
  j["huber_quantile"] = kHuberQuantile;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : table.cells) {
    cells.push_back({{"family", family_name(cell.spec.family)},
                     {"groups", cell.spec.group_count},
                     {"dim", cell.spec.dim},
                     {"seed", cell.spec.seed},
                     {"size_redraws", cell.size_redraws},
                     {"trial_redraws", cell.trial_redraws},
                     {"methods", method_summaries_json(cell.methods)}});
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

void IrisSpec::validate() const {
  if (train_sizes.empty()) throw std::invalid_argument("IrisSpec: no train sizes");
  for (int T : train_sizes) {
    if (T < 2 || T > 49)
      throw std::invalid_argument("IrisSpec: train sizes must lie in [2, 49]");
    if (T < folds)
      throw std::invalid_argument("IrisSpec: every class needs at least one point per fold");
    if (outliers_per_group > T)
      throw std::invalid_argument("IrisSpec: more outliers than training rows per class");
  }
  if (folds < 2) throw std::invalid_argument("IrisSpec: need at least two folds");
  if (repetitions < 1) throw std::invalid_argument("IrisSpec: repetitions must be positive");
  if (outliers_per_group < 0)
    throw std::invalid_argument("IrisSpec: outliers_per_group must be non-negative");
  if (!(outlier_max > 0.0)) throw std::invalid_argument("IrisSpec: outlier_max must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("IrisSpec: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("IrisSpec: max_iter must be positive");
  check_beta_grid(beta_grid);
  if (methods.empty()) throw std::invalid_argument("IrisSpec: no methods");
  for (const auto& m : methods) {
    const MethodTag tag = parse_method(m);
    if (tag.kind == MethodTag::Kind::Oracle1 || tag.kind == MethodTag::Kind::Oracle2)
      throw std::invalid_argument("IrisSpec: oracle rules need a known distribution");
  }
}

IrisResult run_iris(const IrisSpec& spec) {
  spec.validate();
  const auto& data = iris_groups();
  const auto& labels = iris_labels();
  const int K = static_cast<int>(data.size());
  const int p = data.front().front().size();

  std::vector<MethodTag> tags;
  tags.reserve(spec.methods.size());
  for (const auto& name : spec.methods) tags.push_back(parse_method(name));
  const int M = static_cast<int>(tags.size());
  const int S = static_cast<int>(spec.train_sizes.size());

  std::vector<std::optional<LossSpec>> losses(static_cast<size_t>(M));
  for (int i = 0; i < M; ++i)
    if (tags[static_cast<size_t>(i)].kind == MethodTag::Kind::Rda)
      losses[static_cast<size_t>(i)] = loss_from_kind(tags[static_cast<size_t>(i)].loss, p, 2.0);

  // errors[m][s] collects one validation error per repetition
  std::vector<std::vector<std::vector<double>>> errors(
      static_cast<size_t>(M), std::vector<std::vector<double>>(static_cast<size_t>(S)));
  long long cv_failure_cells = 0;
  int repetition_redraws = 0;

  std::string last_redraw_error;
  for (int s = 0; s < S; ++s) {
    const int T = spec.train_sizes[static_cast<size_t>(s)];
    for (int r = 0; r < spec.repetitions; ++r) {
      bool committed = false;
      std::string last_error;
      for (int attempt = 0; attempt < kMaxAttempts && !committed; ++attempt) {
        SubstreamRng split_rng(spec.seed, {kSplitStream, u64(s), u64(r), u64(attempt)});
        std::vector<std::vector<Vector>> train(static_cast<size_t>(K)),
            val(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k) {
          const auto& g = data[static_cast<size_t>(k)];
          std::vector<int> idx(g.size());
          std::iota(idx.begin(), idx.end(), 0);
          split_rng.shuffle(idx);
          for (size_t i = 0; i < idx.size(); ++i) {
            auto& dst = static_cast<int>(i) < T ? train : val;
            dst[static_cast<size_t>(k)].push_back(g[static_cast<size_t>(idx[i])]);
          }
        }
        SubstreamRng out_rng(spec.seed, {kOutlierStream, u64(s), u64(r), u64(attempt)});
        for (int k = 0; k < K; ++k) {
          std::vector<int> pos;
          while (static_cast<int>(pos.size()) < spec.outliers_per_group) {
            const int c = out_rng.below(T);
            if (std::find(pos.begin(), pos.end(), c) == pos.end()) pos.push_back(c);
          }
          std::sort(pos.begin(), pos.end());
          for (int c : pos) {
            const double zeta = spec.outlier_max * out_rng.uniform();
            train[static_cast<size_t>(k)][static_cast<size_t>(c)] = Vector(p, zeta);
          }
        }

        try {
          const GroupedSample train_g(train);
          const GroupedSample val_g(val);
          std::vector<double> row(static_cast<size_t>(M), 0.0);
          long long row_cells = 0;
          for (int i = 0; i < M; ++i) {
            const MethodTag& tag = tags[static_cast<size_t>(i)];
            EstimatorConfig cfg;
            cfg.tol = spec.tol;
            cfg.max_iter = spec.max_iter;
            if (tag.kind == MethodTag::Kind::Lda) {
              cfg.proposal = Proposal::PooledOnly;
              cfg.losses = {LossSpec::gaussian(p)};
              cfg.beta = 1.0;
              row[static_cast<size_t>(i)] =
                  misclassification_risk(fit_rda(train_g, cfg, labels), val_g);
            } else if (tag.kind == MethodTag::Kind::Qda) {
              // beta = 1 decouples the classes: per-class unpenalized fits
              cfg.proposal = Proposal::Prop1;
              cfg.losses = {LossSpec::gaussian(p)};
              cfg.beta = 1.0;
              row[static_cast<size_t>(i)] =
                  misclassification_risk(fit_rda(train_g, cfg, labels), val_g);
            } else {
              cfg.proposal = tag.proposal;
              cfg.losses = {*losses[static_cast<size_t>(i)]};
              cfg.penalty = tag.penalty;
              CVGrid grid;
              grid.betas = spec.beta_grid;
              grid.folds = spec.folds;
              grid.seed = derive_stream(spec.seed, {kFoldStream, u64(s), u64(r), u64(attempt)});
              const CVReport report = cross_validate(train_g, cfg, grid, CenterPolicy::Auto);
              row_cells += static_cast<long long>(report.failures.size());
              cfg.beta = report.chosen_beta;
              row[static_cast<size_t>(i)] =
                  misclassification_risk(fit_rda(train_g, cfg, labels), val_g);
            }
          }
          for (int i = 0; i < M; ++i)
            errors[static_cast<size_t>(i)][static_cast<size_t>(s)].push_back(
                row[static_cast<size_t>(i)]);
          cv_failure_cells += row_cells;
          committed = true;
        } catch (const numerical_error& e) {
          ++repetition_redraws;
          last_error = e.what();
          last_redraw_error = last_error;
        } catch (const precondition_error& e) {
          ++repetition_redraws;
          last_error = e.what();
          last_redraw_error = last_error;
        }
      }
      if (!committed) {
        std::ostringstream os;
        os << "run_iris: split " << T << "/" << (50 - T) << " repetition " << r << " failed "
           << kMaxAttempts << " attempts in a row; last error: " << last_error;
        throw numerical_error(os.str());
      }
    }
  }
  const long long total_reps = static_cast<long long>(S) * spec.repetitions;
  if (100LL * repetition_redraws > total_reps) {
    std::ostringstream os;
    os << "run_iris: " << repetition_redraws << " of " << total_reps
       << " repetitions were redrawn, above the 1% budget; last redraw cause: "
       << last_redraw_error;
    throw numerical_error(os.str());
  }

  IrisResult out;
  out.spec = spec;
  out.cv_failure_cells = cv_failure_cells;
  out.repetition_redraws = repetition_redraws;
  out.mean_error.assign(static_cast<size_t>(M), std::vector<double>(static_cast<size_t>(S)));
  out.std_error.assign(static_cast<size_t>(M), std::vector<double>(static_cast<size_t>(S)));
  for (int i = 0; i < M; ++i)
    for (int s = 0; s < S; ++s)
      risk_summary(errors[static_cast<size_t>(i)][static_cast<size_t>(s)],
                   &out.mean_error[static_cast<size_t>(i)][static_cast<size_t>(s)],
                   &out.std_error[static_cast<size_t>(i)][static_cast<size_t>(s)]);
  return out;
}

std::string iris_csv(const IrisResult& result) {
  std::ostringstream os;
  os << "train,validation,method,mean_percent,std_percent\n";
  for (size_t i = 0; i < result.spec.methods.size(); ++i)
    for (size_t s = 0; s < result.spec.train_sizes.size(); ++s) {
      const int T = result.spec.train_sizes[s];
      os << T << ',' << (50 - T) << ',' << csv_method_id(result.spec.methods[i]) << ','
         << format_double(result.mean_error[i][s]) << ',' << format_double(result.std_error[i][s])
         << '\n';
    }
  return os.str();
}

std::string iris_text(const IrisResult& result) {
  const auto& spec = result.spec;
  std::ostringstream os;
  os << "iris validation errors (%), " << spec.repetitions << " repetitions, " << spec.folds
     << "-fold selection, seed " << spec.seed << "\n\n";
  std::vector<std::string> head{"method"};
  for (int T : spec.train_sizes) head.push_back(std::to_string(T) + "/" + std::to_string(50 - T));
  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < spec.methods.size(); ++i) {
    std::vector<std::string> row{spec.methods[i]};
    for (size_t s = 0; s < spec.train_sizes.size(); ++s) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.1f", result.mean_error[i][s]);
      row.push_back(buf);
    }
    rows.push_back(std::move(row));
  }
  os << aligned_table(head, rows);
  return os.str();
}

std::string iris_provenance_json(const IrisResult& result) {
  const auto& spec = result.spec;
  nlohmann::json j;
  j["format"] = "mscatter-table";
  j["version"] = 1;
  j["kind"] = "iris";
  j["train_sizes"] = spec.train_sizes;
  j["repetitions"] = spec.repetitions;
  j["folds"] = spec.folds;
  j["outliers_per_group"] = spec.outliers_per_group;
  j["outlier_max"] = spec.outlier_max;
  j["seed"] = spec.seed;
  j["methods"] = spec.methods;
  j["beta_grid"] = spec.beta_grid;
  j["tol"] = spec.tol;
  j["max_iter"] = spec.max_iter;
  j["huber_quantile"] = kHuberQuantile;
  j["cv_failure_cells"] = result.cv_failure_cells;
  j["repetition_redraws"] = result.repetition_redraws;
  nlohmann::json table = nlohmann::json::array();
  for (size_t i = 0; i < spec.methods.size(); ++i) {
    nlohmann::json row;
    row["method"] = spec.methods[i];
    row["mean_percent"] = result.mean_error[i];
    row["std_percent"] = result.std_error[i];
    table.push_back(std::move(row));
  }
  j["table"] = std::move(table);
  return j.dump(2) + "\n";
}

}  // namespace mscatter
