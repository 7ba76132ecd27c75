#pragma once

#include "telecouple/ingest.hpp"
#include "telecouple/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace telecouple {

/// What to estimate and how. Fixed-effect and cluster entries name categorical
/// columns; `a#b#c` denotes the interaction of several columns.
struct DesignSpec {
  std::string outcome;
  std::vector<std::string> exogenous;
  std::vector<std::string> endogenous;
  std::vector<std::string> instruments;
  std::vector<std::string> fe;
  std::vector<std::string> cluster;  ///< zero (HC0), one or two dimensions
  std::string weight;                ///< empty: unit weights
  double tol = 1e-8;
  int max_iter = 10000;
  bool intercept = true;      ///< only used when there are no fixed effects
  bool small_sample = false;  ///< G/(G-1) per cluster dimension

  /// Throws Error(SchemaError) for absent columns, Error(InvalidConfig) for
  /// inconsistent settings.
  void validate(const PanelTable& panel) const;
};

DesignSpec design_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DesignSpec& spec);

struct FitResult {
  std::vector<std::string> names;
  Vector coef;
  Matrix vcov;
  Vector se;
  std::size_t n_obs = 0;
  int iterations = 0;
  std::string vcov_type;  ///< "HC0", "cluster:<dim>" or "cluster2:<a>,<b>"
  /// Smallest cluster count across dimensions; 0 without clustering.
  std::size_t n_clusters = 0;
  /// Classical cluster-robust first-stage Wald F on the excluded instruments
  /// (the minimum over endogenous regressors).
  std::optional<double> first_stage_F;
  std::map<std::string, double> first_stage_F_by_regressor;
  std::vector<std::string> dropped;  ///< collinear or absorbed regressors
  std::map<std::string, std::size_t> singletons;
  std::vector<std::string> warnings;
  Vector residuals;

  std::optional<std::size_t> index_of(const std::string& name) const;
  double coefficient(const std::string& name) const;
  double std_error(const std::string& name) const;
  double t_stat(const std::string& name) const;
  /// Two-sided; Student t with G-1 degrees of freedom when clustered,
  /// standard normal otherwise.
  double p_value(const std::string& name) const;
  /// Critical value for a two-sided interval at `level` (e.g. 0.95).
  double critical_value(double level = 0.95) const;
};

nlohmann::json to_json(const FitResult& fit);

// ---------------------------------------------------------------------------
// Building blocks

struct DemeanResult {
  int iterations = 0;
  double final_change = 0.0;
};

/// Alternating weighted group-mean subtraction over the fixed-effect
/// dimensions, applied to each column in place. Stops when the largest change
/// in a sweep, relative to the column's initial sup-norm, falls below `tol`.
/// A single dimension is exact after one sweep. Throws Error(NonConvergence).
DemeanResult demean(Eigen::Ref<Matrix> columns, const std::vector<const Categorical*>& fes,
                    const Vector& weights, double tol = 1e-8, int max_iter = 10000);

/// Resolves `a#b` style names against the panel.
Categorical resolve_categorical(const PanelTable& panel, const std::string& name);

/// Sandwich variance bread * meat * bread with `scores` (n x k, rows are
/// w_i e_i x_i). No dimensions gives HC0; two dimensions use
/// V_A + V_B - V_{A and B}. Throws Error(SingleCluster).
Matrix cluster_vcov(const Matrix& bread, const Matrix& scores,
                    const std::vector<const Categorical*>& dims, bool small_sample = false);

/// Number of distinct codes actually used.
std::size_t count_levels(const Categorical& c);

// ---------------------------------------------------------------------------
// Estimators

/// Weighted least squares after absorbing fixed effects; exogenous and
/// endogenous regressors are both treated as regressors.
/// Throws Error(EmptyPanel), Error(RankDeficient).
FitResult ols(const PanelTable& panel, const DesignSpec& spec);

/// Two-stage least squares with fixed effects absorbed.
/// Throws Error(WeakRank) when the excluded instruments cannot identify the
/// endogenous regressors.
FitResult tsls(const PanelTable& panel, const DesignSpec& spec);

/// Equal-weight average of per-series z-scores (population sd) over the
/// series present in each row; missing cells are NaN.
/// Throws Error(ZeroVariance).
Vector zscore_index(const Matrix& series);

// ---------------------------------------------------------------------------
// Downwind bin designs

struct DownwindBinSpec {
  std::string outcome;
  std::string exposure;
  std::string bin_column;  ///< categorical with labels calm, 10th, ..., 1st
  std::string sender = "sender";
  std::string receiver = "receiver";
  std::string month_of_year = "month";
  std::string year = "year";
  std::string reference = "10th";
  std::vector<std::string> controls;
  std::string weight;
  double tol = 1e-8;
  int max_iter = 10000;
  bool small_sample = false;
};

DownwindBinSpec downwind_spec_from_json(const nlohmann::json& j);

struct BinEstimate {
  std::string bin;
  double coef = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool dropped = false;
};

struct DownwindBinResult {
  std::vector<BinEstimate> bins;  ///< non-reference bins, calm first
  FitResult fit;
};

/// Exposure x bin interactions (reference omitted), bin main effects and the
/// exposure main effect, with sender x receiver x month-of-year and year fixed
/// effects and two-way clustering on sender and receiver.
/// Throws Error(MissingBin).
DownwindBinResult fit_downwind_bins(const PanelTable& panel, const DownwindBinSpec& spec);

std::string write_bin_csv(const DownwindBinResult& result);

/// Sender x receiver x month panel with decile bins drawn from a synthetic
/// score distribution, a standardized sender-year exposure, and
/// outcome = effect * exposure in "1st"-bin months + pair-month FE + year FE + noise.
struct DownwindSynthConfig {
  int n_cities = 20;
  int first_year = 2001;
  int n_years = 3;
  double calm_share = 0.3;
  double effect = 0.5;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
};

/// Columns sender, receiver, month, year (categorical), bin, exposure, outcome.
/// Throws Error(InvalidConfig).
PanelTable synthesize_downwind(const DownwindSynthConfig& config);

}  // namespace telecouple
