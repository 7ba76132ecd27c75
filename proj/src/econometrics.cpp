#include "telecouple/econometrics.hpp"

#include "telecouple/aoe.hpp"
#include "telecouple/error.hpp"
#include "telecouple/log.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace telecouple {

namespace {

std::vector<std::string> split_hash(const std::string& name) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = name.find('#', start);
    parts.push_back(name.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

Categorical restrict(const Categorical& c, const std::vector<Index>& rows) {
  Categorical out;
  out.levels = c.levels;
  out.codes.reserve(rows.size());
  for (Index r : rows) out.codes.push_back(c.codes[std::size_t(r)]);
  return out;
}

struct WlsCore {
  Vector coef;
  Vector resid;
  Matrix bread;
};

// Weighted least squares on full-column-rank X.
WlsCore wls(const Matrix& X, const Vector& y, const Vector& w) {
  const Vector sw = w.cwiseSqrt();
  const Matrix Xw = sw.asDiagonal() * X;
  const Vector yw = sw.cwiseProduct(y);
  const Eigen::HouseholderQR<Matrix> qr(Xw);
  WlsCore core;
  core.coef = qr.solve(yw);
  const Index k = X.cols();
  const Matrix R = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Matrix Rinv = R.triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
  core.bread = Rinv * Rinv.transpose();
  core.resid = y - X * core.coef;
  return core;
}

// Modified Gram-Schmidt screen in column order: a column is dropped when its
// part orthogonal to the already-kept columns is negligible relative to its
// norm before fixed effects were absorbed.
std::vector<Index> screen_columns(const Matrix& X, const Vector& w, const Vector& reference_norms) {
  const Vector sw = w.cwiseSqrt();
  std::vector<Index> kept;
  std::vector<Vector> basis;
  for (Index j = 0; j < X.cols(); ++j) {
    Vector v = sw.cwiseProduct(X.col(j));
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& q : basis) v -= q.dot(v) * q;
    }
    const double norm = v.norm();
    if (reference_norms[j] > 0.0 && norm > 1e-7 * reference_norms[j]) {
      kept.push_back(j);
      basis.push_back(v / norm);
    }
  }
  return kept;
}

Matrix cluster_meat(const Matrix& scores, const Categorical& c) {
  Matrix sums = Matrix::Zero(c.n_levels(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) sums.row(c.codes[std::size_t(i)]) += scores.row(i);
  return sums.transpose() * sums;
}

double wald_f(const Vector& coef, const Matrix& vcov) {
  const Eigen::LDLT<Matrix> ldlt(vcov);
  const double stat = coef.dot(ldlt.solve(coef));
  return stat / double(coef.size());
}

struct FitOptions {
  bool iv = false;
  bool allow_empty = false;
};

FitResult fit_impl(const PanelTable& panel, const DesignSpec& spec, FitOptions opts) {
  spec.validate(panel);
  const auto n_all = static_cast<Index>(panel.rows());
  Vector w_all = spec.weight.empty() ? Vector::Ones(n_all) : panel.numeric(spec.weight);
  if ((w_all.array() < 0.0).any()) {
    fail(ErrorCode::NegativeWeight, "weight column '" + spec.weight + "' has negative values");
  }
  std::vector<Index> rows;
  for (Index i = 0; i < n_all; ++i) {
    if (w_all[i] > 0.0) rows.push_back(i);
  }
  if (rows.empty()) fail(ErrorCode::EmptyPanel, "no observations with positive weight");
  const auto n = static_cast<Index>(rows.size());
  const Vector w = w_all(rows);

  FitResult fit;
  fit.n_obs = rows.size();

  // Columns: y | regressors | excluded instruments.
  const bool add_intercept = spec.fe.empty() && spec.intercept;
  std::vector<std::string> x_names;
  if (add_intercept) x_names.push_back("(Intercept)");
  for (const auto& c : spec.exogenous) x_names.push_back(c);
  for (const auto& c : spec.endogenous) x_names.push_back(c);
  const std::vector<std::string>& z_excluded = opts.iv ? spec.instruments : std::vector<std::string>{};

  const auto kx = static_cast<Index>(x_names.size());
  const auto kz = static_cast<Index>(z_excluded.size());
  Matrix M(n, 1 + kx + kz);
  M.col(0) = panel.numeric(spec.outcome)(rows);
  for (Index j = 0; j < kx; ++j) {
    const std::string& name = x_names[std::size_t(j)];
    M.col(1 + j) = name == "(Intercept)" ? Vector::Ones(n) : Vector(panel.numeric(name)(rows));
  }
  for (Index j = 0; j < kz; ++j) M.col(1 + kx + j) = panel.numeric(z_excluded[std::size_t(j)])(rows);
  const Vector sw = w.cwiseSqrt();
  Vector norms(M.cols());
  for (Index j = 0; j < M.cols(); ++j) norms[j] = sw.cwiseProduct(M.col(j)).norm();

  std::vector<Categorical> fes;
  for (const auto& name : spec.fe) {
    fes.push_back(restrict(resolve_categorical(panel, name), rows));
    std::vector<std::size_t> counts(std::size_t(fes.back().n_levels()));
    for (int code : fes.back().codes) ++counts[std::size_t(code)];
    fit.singletons[name] = std::size_t(std::count(counts.begin(), counts.end(), 1));
  }
  if (!fes.empty()) {
    std::vector<const Categorical*> ptrs;
    for (const auto& f : fes) ptrs.push_back(&f);
    const auto dm = demean(M, ptrs, w, spec.tol, spec.max_iter);
    fit.iterations = dm.iterations;
  }
  const Vector y = M.col(0);
  const Matrix X = M.middleCols(1, kx);

  const auto kept_x = screen_columns(X, w, norms.segment(1, kx));
  for (Index j = 0; j < kx; ++j) {
    if (std::find(kept_x.begin(), kept_x.end(), j) == kept_x.end()) {
      fit.dropped.push_back(x_names[std::size_t(j)]);
      warn("dropping collinear regressor '" + x_names[std::size_t(j)] + "'");
    }
  }
  if (kept_x.empty()) {
    if (!opts.allow_empty) {
      fail(ErrorCode::RankDeficient, "no identifiable regressors remain after absorbing fixed effects");
    }
    fit.residuals = y;
    return fit;
  }
  for (Index j : kept_x) fit.names.push_back(x_names[std::size_t(j)]);
  const Matrix Xk = X(Eigen::all, kept_x);

  Matrix score_basis;  // rows multiplied by w*e to form scores
  Matrix bread;
  if (!opts.iv) {
    const WlsCore core = wls(Xk, y, w);
    fit.coef = core.coef;
    fit.residuals = core.resid;
    bread = core.bread;
    score_basis = Xk;
  } else {
    // Instrument set: included exogenous columns then excluded instruments.
    const Index n_exog_cols = (add_intercept ? 1 : 0) + Index(spec.exogenous.size());
    Matrix Z(n, n_exog_cols + kz);
    Z << X.leftCols(n_exog_cols), M.rightCols(kz);
    Vector z_norms(Z.cols());
    z_norms << norms.segment(1, n_exog_cols), norms.tail(kz);
    const auto kept_z = screen_columns(Z, w, z_norms);
    std::vector<Index> excluded_pos;  // positions within kept_z
    for (std::size_t i = 0; i < kept_z.size(); ++i) {
      if (kept_z[i] >= n_exog_cols) excluded_pos.push_back(Index(i));
    }
    std::vector<Index> endog_pos;  // positions within kept_x
    for (std::size_t i = 0; i < kept_x.size(); ++i) {
      if (kept_x[i] >= n_exog_cols) endog_pos.push_back(Index(i));
    }
    if (excluded_pos.size() < endog_pos.size()) {
      fail(ErrorCode::WeakRank, "excluded instruments (" + std::to_string(excluded_pos.size()) +
                                    " identifiable) cannot identify " +
                                    std::to_string(endog_pos.size()) + " endogenous regressors");
    }
    const Matrix Zk = Z(Eigen::all, kept_z);
    Matrix Xhat = Xk;
    std::vector<const Categorical*> cluster_ptrs;
    std::vector<Categorical> clusters;
    for (const auto& name : spec.cluster) clusters.push_back(restrict(resolve_categorical(panel, name), rows));
    for (const auto& c : clusters) cluster_ptrs.push_back(&c);
    double min_f = std::numeric_limits<double>::infinity();
    for (Index pos : endog_pos) {
      const WlsCore first = wls(Zk, Xk.col(pos), w);
      Xhat.col(pos) = Zk * first.coef;
      const Matrix scores = (w.cwiseProduct(first.resid)).asDiagonal() * Zk;
      const Matrix v = cluster_vcov(first.bread, scores, cluster_ptrs, spec.small_sample);
      const Vector pi = first.coef(excluded_pos);
      const double f = wald_f(pi, v(excluded_pos, excluded_pos));
      fit.first_stage_F_by_regressor[fit.names[std::size_t(pos)]] = f;
      min_f = std::min(min_f, f);
    }
    if (!endog_pos.empty()) {
      fit.first_stage_F = min_f;
      if (min_f < 10.0) {
        std::ostringstream msg;
        msg << "weak first stage: cluster-robust Wald F = " << format_number(min_f) << " < 10";
        fit.warnings.push_back(msg.str());
        warn(msg.str());
      }
    }
    const WlsCore second = wls(Xhat, y, w);
    fit.coef = second.coef;
    fit.residuals = y - Xk * fit.coef;
    bread = second.bread;
    score_basis = Xhat;
  }

  std::vector<Categorical> clusters;
  for (const auto& name : spec.cluster) clusters.push_back(restrict(resolve_categorical(panel, name), rows));
  std::vector<const Categorical*> cluster_ptrs;
  for (const auto& c : clusters) cluster_ptrs.push_back(&c);
  const Matrix scores = (w.cwiseProduct(fit.residuals)).asDiagonal() * score_basis;
  fit.vcov = cluster_vcov(bread, scores, cluster_ptrs, spec.small_sample);
  if (clusters.empty()) {
    fit.vcov_type = "HC0";
  } else {
    fit.n_clusters = count_levels(clusters.front());
    for (const auto& c : clusters) fit.n_clusters = std::min(fit.n_clusters, count_levels(c));
    fit.vcov_type = clusters.size() == 1 ? "cluster:" + spec.cluster[0]
                                         : "cluster2:" + spec.cluster[0] + "," + spec.cluster[1];
    if (clusters.size() == 2 && fit.vcov.rows() > 0) {
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(fit.vcov);
      const double lo = eig.eigenvalues().minCoeff();
      const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
      if (lo < -1e-12 * hi) {
        fit.warnings.push_back("two-way cluster vcov is not positive semi-definite");
        warn(fit.warnings.back());
      }
    }
  }
  // A negative variance has no standard error; report NaN rather than 0.
  fit.se = fit.vcov.diagonal().unaryExpr(
      [](double v) { return v >= 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN(); });
  for (Index j = 0; j < fit.se.size(); ++j) {
    if (std::isnan(fit.se[j])) {
      fit.warnings.push_back("negative variance for '" + fit.names[std::size_t(j)] + "'");
      warn(fit.warnings.back());
    }
  }
  return fit;
}

}  // namespace

// ---------------------------------------------------------------------------

void DesignSpec::validate(const PanelTable& panel) const {
  auto need_numeric = [&](const std::string& name) {
    if (!panel.has_numeric(name)) {
      fail(ErrorCode::SchemaError, "panel has no numeric column '" + name + "'");
    }
  };
  if (outcome.empty()) fail(ErrorCode::InvalidConfig, "design has no outcome");
  need_numeric(outcome);
  for (const auto& c : exogenous) need_numeric(c);
  for (const auto& c : endogenous) need_numeric(c);
  for (const auto& c : instruments) need_numeric(c);
  if (!weight.empty()) need_numeric(weight);
  for (const auto& dims : {fe, cluster}) {
    for (const auto& name : dims) {
      for (const auto& part : split_hash(name)) {
        if (!panel.has_categorical(part)) {
          fail(ErrorCode::SchemaError, "panel has no categorical column '" + part + "'");
        }
      }
    }
  }
  if (cluster.size() > 2) fail(ErrorCode::InvalidConfig, "at most two cluster dimensions");
  if (instruments.size() < endogenous.size()) {
    fail(ErrorCode::InvalidConfig, "fewer instruments than endogenous regressors");
  }
  if (!(tol > 0.0)) fail(ErrorCode::InvalidConfig, "demeaning tolerance must be positive");
  if (max_iter < 1) fail(ErrorCode::InvalidConfig, "max_iter must be positive");
}

DesignSpec design_from_json(const nlohmann::json& j) {
  DesignSpec s;
  try {
    s.outcome = j.at("outcome").get<std::string>();
    s.exogenous = j.value("exogenous", std::vector<std::string>{});
    s.endogenous = j.value("endogenous", std::vector<std::string>{});
    s.instruments = j.value("instruments", std::vector<std::string>{});
    s.fe = j.value("fe", std::vector<std::string>{});
    s.cluster = j.value("cluster", std::vector<std::string>{});
    s.weight = j.value("weight", std::string{});
    s.tol = j.value("tol", 1e-8);
    s.max_iter = j.value("max_iter", 10000);
    s.intercept = j.value("intercept", true);
    s.small_sample = j.value("small_sample", false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("design: ") + e.what());
  }
  return s;
}

nlohmann::json to_json(const DesignSpec& s) {
  return {{"outcome", s.outcome},       {"exogenous", s.exogenous},
          {"endogenous", s.endogenous}, {"instruments", s.instruments},
          {"fe", s.fe},                 {"cluster", s.cluster},
          {"weight", s.weight},         {"tol", s.tol},
          {"max_iter", s.max_iter},     {"intercept", s.intercept},
          {"small_sample", s.small_sample}};
}

std::optional<std::size_t> FitResult::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return std::size_t(it - names.begin());
}

double FitResult::coefficient(const std::string& name) const {
  const auto i = index_of(name);
  if (!i) fail(ErrorCode::SchemaError, "no coefficient '" + name + "' in fit");
  return coef[Index(*i)];
}

double FitResult::std_error(const std::string& name) const {
  const auto i = index_of(name);
  if (!i) fail(ErrorCode::SchemaError, "no coefficient '" + name + "' in fit");
  return se[Index(*i)];
}

double FitResult::t_stat(const std::string& name) const {
  return coefficient(name) / std_error(name);
}

double FitResult::p_value(const std::string& name) const {
  const double t = std::fabs(t_stat(name));
  if (std::isnan(t)) return t;
  if (std::isinf(t)) return 0.0;
  if (n_clusters >= 2) {
    const boost::math::students_t dist(double(n_clusters - 1));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  }
  const boost::math::normal dist;
  return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
}

double FitResult::critical_value(double level) const {
  const double tail = 0.5 * (1.0 + level);
  if (n_clusters >= 2) {
    return boost::math::quantile(boost::math::students_t(double(n_clusters - 1)), tail);
  }
  return boost::math::quantile(boost::math::normal(), tail);
}

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json coefs = nlohmann::json::object();
  nlohmann::json ses = nlohmann::json::object();
  nlohmann::json ps = nlohmann::json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    coefs[fit.names[i]] = fit.coef[Index(i)];
    ses[fit.names[i]] = fit.se[Index(i)];
    ps[fit.names[i]] = fit.p_value(fit.names[i]);
  }
  nlohmann::json vcov = nlohmann::json::array();
  for (Index r = 0; r < fit.vcov.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < fit.vcov.cols(); ++c) row.push_back(fit.vcov(r, c));
    vcov.push_back(row);
  }
  nlohmann::json out = {{"names", fit.names},
                        {"coefficients", coefs},
                        {"se", ses},
                        {"p", ps},
                        {"vcov", vcov},
                        {"vcov_type", fit.vcov_type},
                        {"n_obs", fit.n_obs},
                        {"n_clusters", fit.n_clusters},
                        {"iterations", fit.iterations},
                        {"diagnostics",
                         {{"dropped", fit.dropped},
                          {"singletons", fit.singletons},
                          {"warnings", fit.warnings}}}};
  if (fit.first_stage_F) {
    out["first_stage_F"] = *fit.first_stage_F;
    out["first_stage_F_label"] = "classical cluster-robust Wald F on excluded instruments";
    out["first_stage_F_by_regressor"] = fit.first_stage_F_by_regressor;
  }
  return out;
}

// ---------------------------------------------------------------------------

DemeanResult demean(Eigen::Ref<Matrix> columns, const std::vector<const Categorical*>& fes,
                    const Vector& weights, double tol, int max_iter) {
  if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "tolerance must be positive");
  DemeanResult result;
  if (fes.empty()) return result;
  const Index n = columns.rows();
  std::vector<Vector> inv_weight;
  for (const Categorical* fe : fes) {
    if (Index(fe->size()) != n) fail(ErrorCode::InvalidArgument, "fixed effect length mismatch");
    Vector sums = Vector::Zero(fe->n_levels());
    for (Index i = 0; i < n; ++i) sums[fe->codes[std::size_t(i)]] += weights[i];
    inv_weight.push_back(sums.unaryExpr([](double s) { return s > 0.0 ? 1.0 / s : 0.0; }));
  }
  std::vector<Vector> group_sums(fes.size());
  for (std::size_t d = 0; d < fes.size(); ++d) group_sums[d].resize(fes[d]->n_levels());

  for (Index j = 0; j < columns.cols(); ++j) {
    auto x = columns.col(j);
    const double scale = x.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) {
      result.iterations = std::max(result.iterations, 1);
      continue;
    }
    int it = 0;
    double change = 0.0;
    do {
      ++it;
      change = 0.0;
      for (std::size_t d = 0; d < fes.size(); ++d) {
        const auto& codes = fes[d]->codes;
        Vector& sums = group_sums[d];
        sums.setZero();
        for (Index i = 0; i < n; ++i) sums[codes[std::size_t(i)]] += weights[i] * x[i];
        sums.array() *= inv_weight[d].array();
        for (Index i = 0; i < n; ++i) x[i] -= sums[codes[std::size_t(i)]];
        change = std::max(change, sums.cwiseAbs().maxCoeff());
      }
      if (fes.size() == 1) break;
    } while (change > tol * scale && it < max_iter);
    if (fes.size() > 1 && change > tol * scale) {
      fail(ErrorCode::NonConvergence, "demeaning did not converge after " + std::to_string(it) +
                                          " sweeps; last relative change " +
                                          format_number(change / scale));
    }
    result.iterations = std::max(result.iterations, it);
    result.final_change = std::max(result.final_change, change / scale);
  }
  return result;
}

Categorical resolve_categorical(const PanelTable& panel, const std::string& name) {
  const auto parts = split_hash(name);
  if (parts.size() == 1) return panel.categorical(name);
  std::vector<const Categorical*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&panel.categorical(p));
  return Categorical::interact(ptrs);
}

std::size_t count_levels(const Categorical& c) {
  std::vector<char> seen(std::size_t(c.n_levels()), 0);
  for (int code : c.codes) seen[std::size_t(code)] = 1;
  return std::size_t(std::count(seen.begin(), seen.end(), 1));
}

Matrix cluster_vcov(const Matrix& bread, const Matrix& scores,
                    const std::vector<const Categorical*>& dims, bool small_sample) {
  auto factor = [&](std::size_t g) { return small_sample ? double(g) / double(g - 1) : 1.0; };
  Matrix meat;
  if (dims.empty()) {
    meat = scores.transpose() * scores;
  } else if (dims.size() == 1) {
    const std::size_t g = count_levels(*dims[0]);
    if (g < 2) fail(ErrorCode::SingleCluster, "need at least two clusters");
    meat = factor(g) * cluster_meat(scores, *dims[0]);
  } else if (dims.size() == 2) {
    const std::size_t ga = count_levels(*dims[0]);
    const std::size_t gb = count_levels(*dims[1]);
    if (ga < 2 || gb < 2) fail(ErrorCode::SingleCluster, "need at least two clusters per dimension");
    const Categorical both = Categorical::interact({dims[0], dims[1]});
    const std::size_t gab = count_levels(both);
    meat = factor(ga) * cluster_meat(scores, *dims[0]) + factor(gb) * cluster_meat(scores, *dims[1]) -
           (gab > 1 ? factor(gab) : 1.0) * cluster_meat(scores, both);
  } else {
    fail(ErrorCode::InvalidConfig, "at most two cluster dimensions");
  }
  return bread * meat * bread;
}

FitResult ols(const PanelTable& panel, const DesignSpec& spec) {
  return fit_impl(panel, spec, {false, false});
}

FitResult tsls(const PanelTable& panel, const DesignSpec& spec) {
  return fit_impl(panel, spec, {true, false});
}

Vector zscore_index(const Matrix& series) {
  const Index n = series.rows();
  Vector total = Vector::Zero(n);
  Vector present = Vector::Zero(n);
  for (Index j = 0; j < series.cols(); ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < n; ++i) {
      if (!std::isnan(series(i, j))) {
        sum += series(i, j);
        ++count;
      }
    }
    if (count == 0) fail(ErrorCode::ZeroVariance, "series " + std::to_string(j) + " is empty");
    const double mean = sum / double(count);
    double ss = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (!std::isnan(series(i, j))) ss += (series(i, j) - mean) * (series(i, j) - mean);
    }
    const double sd = std::sqrt(ss / double(count));
    if (!(sd > 0.0)) fail(ErrorCode::ZeroVariance, "series " + std::to_string(j) + " is constant");
    for (Index i = 0; i < n; ++i) {
      if (!std::isnan(series(i, j))) {
        total[i] += (series(i, j) - mean) / sd;
        present[i] += 1.0;
      }
    }
  }
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    out[i] = present[i] > 0.0 ? total[i] / present[i] : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

// ---------------------------------------------------------------------------

DownwindBinSpec downwind_spec_from_json(const nlohmann::json& j) {
  DownwindBinSpec s;
  try {
    s.outcome = j.at("outcome").get<std::string>();
    s.exposure = j.at("exposure").get<std::string>();
    s.bin_column = j.at("bin_column").get<std::string>();
    s.sender = j.value("sender", s.sender);
    s.receiver = j.value("receiver", s.receiver);
    s.month_of_year = j.value("month_of_year", s.month_of_year);
    s.year = j.value("year", s.year);
    s.reference = j.value("reference", s.reference);
    s.controls = j.value("controls", std::vector<std::string>{});
    s.weight = j.value("weight", std::string{});
    s.tol = j.value("tol", 1e-8);
    s.max_iter = j.value("max_iter", 10000);
    s.small_sample = j.value("small_sample", false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("downwind design: ") + e.what());
  }
  return s;
}

DownwindBinResult fit_downwind_bins(const PanelTable& panel, const DownwindBinSpec& spec) {
  const Categorical& bins = panel.categorical(spec.bin_column);
  const Vector& exposure = panel.numeric(spec.exposure);
  const int reference = parse_bin_label(spec.reference);
  std::vector<int> bin_of_level;
  for (const auto& label : bins.levels) {
    if (label.empty()) fail(ErrorCode::MissingBin, "empty bin label in '" + spec.bin_column + "'");
    bin_of_level.push_back(parse_bin_label(label));
  }
  std::vector<char> present(kBinCount, 0);
  for (int code : bins.codes) present[std::size_t(bin_of_level[std::size_t(code)])] = 1;
  if (!present[std::size_t(reference)]) {
    fail(ErrorCode::MissingBin, "reference bin '" + spec.reference + "' has no observations");
  }

  PanelTable work = panel;
  const auto n = static_cast<Index>(panel.rows());
  std::vector<std::string> interactions, mains;
  std::vector<int> estimated_bins;
  for (int b = 0; b < kBinCount; ++b) {
    if (b == reference || !present[std::size_t(b)]) continue;
    Vector indicator(n);
    for (Index i = 0; i < n; ++i) {
      indicator[i] = bin_of_level[std::size_t(bins.codes[std::size_t(i)])] == b ? 1.0 : 0.0;
    }
    const std::string label = bin_label(b);
    interactions.push_back(spec.exposure + ":bin[" + label + "]");
    mains.push_back("bin[" + label + "]");
    work.add_numeric(interactions.back(), exposure.cwiseProduct(indicator));
    work.add_numeric(mains.back(), indicator);
    estimated_bins.push_back(b);
  }

  DesignSpec design;
  design.outcome = spec.outcome;
  design.exogenous = interactions;
  design.exogenous.insert(design.exogenous.end(), mains.begin(), mains.end());
  design.exogenous.push_back(spec.exposure);
  design.exogenous.insert(design.exogenous.end(), spec.controls.begin(), spec.controls.end());
  design.fe = {spec.sender + "#" + spec.receiver + "#" + spec.month_of_year, spec.year};
  design.cluster = {spec.sender, spec.receiver};
  design.weight = spec.weight;
  design.tol = spec.tol;
  design.max_iter = spec.max_iter;
  design.small_sample = spec.small_sample;

  DownwindBinResult result;
  result.fit = fit_impl(work, design, {false, true});
  const double crit = result.fit.names.empty() ? 1.96 : result.fit.critical_value(0.95);
  for (std::size_t k = 0; k < estimated_bins.size(); ++k) {
    BinEstimate est;
    est.bin = bin_label(estimated_bins[k]);
    if (const auto idx = result.fit.index_of(interactions[k])) {
      est.coef = result.fit.coef[Index(*idx)];
      est.se = result.fit.se[Index(*idx)];
      est.ci_lo = est.coef - crit * est.se;
      est.ci_hi = est.coef + crit * est.se;
    } else {
      est.dropped = true;
      est.coef = est.se = est.ci_lo = est.ci_hi = std::numeric_limits<double>::quiet_NaN();
    }
    result.bins.push_back(est);
  }
  return result;
}

std::string write_bin_csv(const DownwindBinResult& result) {
  std::ostringstream out;
  out << "bin,coef,se,ci_lo,ci_hi\n";
  for (const auto& b : result.bins) {
    out << b.bin << ',' << format_number(b.coef) << ',' << format_number(b.se) << ','
        << format_number(b.ci_lo) << ',' << format_number(b.ci_hi) << '\n';
  }
  return out.str();
}

PanelTable synthesize_downwind(const DownwindSynthConfig& c) {
  if (c.n_cities < 3 || c.n_years < 2 || !(c.calm_share >= 0.0 && c.calm_share < 1.0) ||
      !(c.noise_sd >= 0.0)) {
    fail(ErrorCode::InvalidConfig, "downwind synth needs >= 3 cities, >= 2 years, calm share in [0, 1)");
  }
  std::seed_seq seq{std::uint32_t(c.seed), std::uint32_t(c.seed >> 32), 0xd0d0u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int n = c.n_cities;
  auto city = [](int i) { return "C" + std::to_string(1000 + i); };
  std::vector<double> z(std::size_t(n * c.n_years));
  for (double& v : z) v = normal(rng);
  std::vector<double> year_fe(std::size_t(c.n_years));
  for (double& v : year_fe) v = normal(rng);

  std::vector<std::string> sender, receiver, month, year;
  std::vector<double> score, exposure, base;
  for (int s = 0; s < n; ++s) {
    for (int r = 0; r < n; ++r) {
      if (r == s) continue;
      std::array<double, 12> cell_fe;
      for (double& v : cell_fe) v = normal(rng);
      for (int y = 0; y < c.n_years; ++y) {
        for (int m = 0; m < 12; ++m) {
          sender.push_back(city(s));
          receiver.push_back(city(r));
          month.push_back(std::to_string(m + 1));
          year.push_back(std::to_string(c.first_year + y));
          score.push_back(unit(rng) < c.calm_share ? 0.0 : std::exp(normal(rng)));
          exposure.push_back(z[std::size_t(s * c.n_years + y)]);
          base.push_back(cell_fe[std::size_t(m)] + year_fe[std::size_t(y)] + c.noise_sd * normal(rng));
        }
      }
    }
  }
  std::vector<double> positive;
  for (double v : score) {
    if (v > 0.0) positive.push_back(v);
  }
  const WindBins bins = compute_bins(positive);
  const auto rows = static_cast<Index>(score.size());
  std::vector<std::string> bin(score.size());
  Vector x(rows), y(rows);
  for (Index i = 0; i < rows; ++i) {
    const int b = assign_bin(score[std::size_t(i)], bins);
    bin[std::size_t(i)] = bin_label(b);
    x[i] = exposure[std::size_t(i)];
    y[i] = base[std::size_t(i)] + (b == kBinCount - 1 ? c.effect * x[i] : 0.0);
  }
  PanelTable panel(score.size());
  panel.add_categorical("sender", sender);
  panel.add_categorical("receiver", receiver);
  panel.add_categorical("month", month);
  panel.add_categorical("year", year);
  panel.add_categorical("bin", bin);
  panel.add_numeric("exposure", x);
  panel.add_numeric("outcome", y);
  panel.set_roles("sender", {Role::Fe, Role::Cluster});
  panel.set_roles("receiver", {Role::Fe, Role::Cluster});
  panel.set_roles("month", {Role::Fe});
  panel.set_roles("year", {Role::Fe});
  panel.set_roles("exposure", {Role::Regressor});
  panel.set_roles("outcome", {Role::Outcome});
  return panel;
}

}  // namespace telecouple
