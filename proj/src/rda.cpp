#include "mscatter/rda.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "mscatter/io.hpp"

namespace mscatter {

double qda_score(const Vector& x, const Vector& mu, const PDSMatrix& sigma) {
  if (x.size() != mu.size() || x.size() != sigma.dim())
    throw std::invalid_argument("qda_score: dimension mismatch");
  return sigma.mahalanobis(x - mu) + sigma.logdet();
}

int classify(const RDAModel& model, const Vector& x) {
  if (model.class_count() == 0) throw std::invalid_argument("classify: empty model");
  if (x.size() != model.dim()) throw std::invalid_argument("classify: dimension mismatch");
  int best = 0;
  double best_score = qda_score(x, model.mu.front(), model.sigma.front());
  for (int k = 1; k < model.class_count(); ++k) {
    const double s =
        qda_score(x, model.mu[static_cast<size_t>(k)], model.sigma[static_cast<size_t>(k)]);
    if (s < best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

namespace {

std::vector<std::string> resolve_labels(const std::vector<std::string>& labels, int K) {
  if (!labels.empty()) {
    if (static_cast<int>(labels.size()) != K)
      throw std::invalid_argument("fit_rda: label count does not match the class count");
    return labels;
  }
  std::vector<std::string> out;
  for (int k = 0; k < K; ++k) {
    std::ostringstream os;
    os << k;
    out.push_back(os.str());
  }
  return out;
}

RDAModel fit_core(const GroupedSample& train, const EstimatorConfig& cfg,
                  const std::vector<std::string>& labels, std::vector<double> cv_betas,
                  std::vector<double> cv_curve) {
  cfg.validate(train);
  if (cfg.losses.size() != 1)
    throw std::invalid_argument("fit_rda: classification uses one shared loss");
  const LossSpec& loss = cfg.losses.front();
  const int K = train.group_count();

  std::vector<Vector> mu;
  std::vector<std::vector<Vector>> centered(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    Vector c(train.dim(), 0.0);
    if (loss.kind() == LossKind::Gaussian) {
      for (const auto& x : train.group(k)) c += x;
      c *= 1.0 / static_cast<double>(train.group_size(k));
    } else {
      c = spatial_median(train.group(k));
    }
    for (const auto& x : train.group(k)) centered[static_cast<size_t>(k)].push_back(x - c);
    mu.push_back(std::move(c));
  }
  const GroupedSample centered_sample(centered);

  FitResult fit = solve(centered_sample, cfg);
  std::vector<PDSMatrix> sigma;
  sigma.reserve(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    if (loss.scale_free())
      sigma.push_back(tyler_covariance_rescale(fit.sigma[static_cast<size_t>(k)],
                                               centered_sample.group(k)));
    else
      sigma.push_back(fit.sigma[static_cast<size_t>(k)]);
  }

  RDAModel model{resolve_labels(labels, K),
                 std::move(mu),
                 std::move(sigma),
                 cfg.beta,
                 cfg.proposal,
                 cfg.penalty,
                 loss.kind(),
                 loss.nu(),
                 loss.threshold(),
                 loss.scale_factor(),
                 std::move(cv_betas),
                 std::move(cv_curve)};
  return model;
}

}  // namespace

RDAModel fit_rda(const GroupedSample& train, const EstimatorConfig& cfg,
                 const std::vector<std::string>& labels) {
  return fit_core(train, cfg, labels, {}, {});
}

RDAModel fit_rda_cv(const GroupedSample& train, const EstimatorConfig& cfg, const CVGrid& grid,
                    const std::vector<std::string>& labels) {
  const CVReport report = cross_validate(train, cfg, grid, CenterPolicy::Auto);
  EstimatorConfig chosen = cfg;
  chosen.beta = report.chosen_beta;
  return fit_core(train, chosen, labels, report.betas, report.cv_curve);
}

double misclassification_risk(const RDAModel& model, const GroupedSample& test) {
  if (test.group_count() != model.class_count())
    throw std::invalid_argument("misclassification_risk: class count mismatch");
  if (test.dim() != model.dim())
    throw std::invalid_argument("misclassification_risk: dimension mismatch");
  int wrong = 0;
  for (int k = 0; k < test.group_count(); ++k)
    for (const auto& x : test.group(k))
      if (classify(model, x) != k) ++wrong;
  return static_cast<double>(wrong) / test.total_size();
}

namespace {

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::Gaussian:
      return "gaussian";
    case LossKind::Huber:
      return "huber";
    case LossKind::TDist:
      return "t";
    case LossKind::Tyler:
      return "tyler";
  }
  return "?";
}

LossKind loss_kind_from(const std::string& s) {
  if (s == "gaussian") return LossKind::Gaussian;
  if (s == "huber") return LossKind::Huber;
  if (s == "t") return LossKind::TDist;
  if (s == "tyler") return LossKind::Tyler;
  throw std::invalid_argument("rda model: unknown loss kind '" + s + "'");
}

Proposal proposal_from(const std::string& s) {
  if (s == "pooled") return Proposal::PooledOnly;
  if (s == "prop1") return Proposal::Prop1;
  if (s == "prop2") return Proposal::Prop2;
  throw std::invalid_argument("rda model: unknown proposal '" + s + "'");
}

DistanceKind penalty_from(const std::string& s) {
  if (s == "kl") return DistanceKind::KL;
  if (s == "ellipticity") return DistanceKind::Ellipticity;
  if (s == "frobenius") return DistanceKind::Frobenius;
  if (s == "riemannian") return DistanceKind::Riemannian;
  throw std::invalid_argument("rda model: unknown penalty '" + s + "'");
}

}  // namespace

std::string rda_to_json(const RDAModel& model) {
  nlohmann::json j;
  j["format"] = "mscatter-rda";
  j["version"] = 1;
  j["p"] = model.dim();
  j["labels"] = model.labels;
  j["beta"] = model.beta;
  j["proposal"] = proposal_name(model.proposal);
  j["penalty"] = distance_name(model.penalty);
  j["loss"] = {{"kind", loss_kind_name(model.loss_kind)},
               {"nu", model.loss_nu},
               {"c", model.loss_c},
               {"b", model.loss_b}};
  nlohmann::json mus = nlohmann::json::array();
  for (const auto& m : model.mu) {
    nlohmann::json row = nlohmann::json::array();
    for (int i = 0; i < m.size(); ++i) row.push_back(m[i]);
    mus.push_back(std::move(row));
  }
  j["mu"] = std::move(mus);
  nlohmann::json sigmas = nlohmann::json::array();
  for (const auto& s : model.sigma) {
    nlohmann::json flat = nlohmann::json::array();
    for (int i = 0; i < s.dim(); ++i)
      for (int jj = 0; jj < s.dim(); ++jj) flat.push_back(s(i, jj));
    sigmas.push_back(std::move(flat));
  }
  j["sigma"] = std::move(sigmas);
  if (!model.cv_betas.empty()) {
    j["cv"] = {{"betas", model.cv_betas}, {"curve", model.cv_curve}};
  }
  return j.dump(2) + "\n";
}

RDAModel rda_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("rda model: invalid json: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "mscatter-rda")
      throw std::invalid_argument("rda model: unrecognized format tag");
    if (j.at("version").get<int>() != 1)
      throw std::invalid_argument("rda model: unsupported version");
    const int p = j.at("p").get<int>();
    RDAModel model;
    model.labels = j.at("labels").get<std::vector<std::string>>();
    model.beta = j.at("beta").get<double>();
    model.proposal = proposal_from(j.at("proposal").get<std::string>());
    model.penalty = penalty_from(j.at("penalty").get<std::string>());
    const auto& loss = j.at("loss");
    model.loss_kind = loss_kind_from(loss.at("kind").get<std::string>());
    model.loss_nu = loss.at("nu").get<double>();
    model.loss_c = loss.at("c").get<double>();
    model.loss_b = loss.at("b").get<double>();
    for (const auto& row : j.at("mu")) {
      Vector m(p);
      if (static_cast<int>(row.size()) != p)
        throw std::invalid_argument("rda model: mu dimension mismatch");
      for (int i = 0; i < p; ++i) m[i] = row[static_cast<size_t>(i)].get<double>();
      model.mu.push_back(std::move(m));
    }
    for (const auto& flat : j.at("sigma")) {
      if (static_cast<int>(flat.size()) != p * p)
        throw std::invalid_argument("rda model: sigma size mismatch");
      Matrix s(p, p);
      for (int i = 0; i < p; ++i)
        for (int jj = 0; jj < p; ++jj)
          s(i, jj) = flat[static_cast<size_t>(i * p + jj)].get<double>();
      model.sigma.emplace_back(s);
    }
    if (model.mu.size() != model.sigma.size() ||
        model.mu.size() != model.labels.size() || model.mu.empty())
      throw std::invalid_argument("rda model: class blocks are inconsistent");
    if (j.contains("cv")) {
      model.cv_betas = j["cv"].at("betas").get<std::vector<double>>();
      model.cv_curve = j["cv"].at("curve").get<std::vector<double>>();
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("rda model: malformed document: ") + e.what());
  }
}

void save_rda(const RDAModel& model, const std::string& path) {
  atomic_write_text(path, rda_to_json(model));
}

RDAModel load_rda(const std::string& path) { return rda_from_json(read_text_file(path)); }

}  // namespace mscatter
