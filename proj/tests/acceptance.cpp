// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#define DOCTEST_CONFIG_DISABLE
#include "support.hpp"

#include "telecouple/accounting.hpp"
#include "telecouple/aoe.hpp"
#include "telecouple/cli.hpp"
#include "telecouple/econometrics.hpp"
#include "telecouple/geo.hpp"
#include "telecouple/log.hpp"
#include "telecouple/shiftshare.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

using namespace telecouple;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.clear();
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// 1 -------------------------------------------------------------------------
Outcome fdr_reproduction() {
  const std::vector<double> p{.234, .242, .225, .005, .081, .691, .608, .332, .947, .250, .383, .137};
  const std::vector<double> q{.429, .429, .429, .06, .429, .754, .73, .498, .947, .429, .511, .429};
  Outcome o;
  const auto adj = fdr_adjust(p);
  int matched = 0;
  for (std::size_t i = 0; i < p.size(); ++i) matched += std::round(adj[i] * 1000.0) == std::round(q[i] * 1000.0);
  o.detail = std::to_string(matched) + "/12 q-values match at 3 decimals";
  o.require(matched == 12, o.detail);
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome accounting_arithmetic() {
  Outcome o;
  const double loss = monetize(732000.0, vsl_value(VslParams{}));
  const double base = loss / 0.18;
  o.require(loss == 512.4e9, "732,000 x 0.7M != 512.4B");
  o.require(std::abs(loss / 513e9 - 1.0) < 0.005, "loss not within 0.5% of 513B");
  o.require(std::abs(base / 2.85e12 - 1.0) < 0.005, "implied export base not about 2.85T");
  o.require(std::abs(damage_ratio(loss, base) - 0.18) < 1e-12, "ratio inversion does not round trip");
  if (o.pass) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "loss $%.1fB (%.3f%% from 513B), implied export base $%.0fB",
                  loss / 1e9, 100.0 * (loss / 513e9 - 1.0), base / 1e9);
    o.detail = buf;
  }
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome aoe_oracle() {
  Outcome o;
  double worst = 0.0;
  int used = 0;
  for (const auto& fx : testing::load_aoe_fixtures()) {
    if (fx.registry.size() > 4 || fx.samples.days().size() > 10) continue;
    ++used;
    const auto cmp = testing::compare_fixture(fx);
    if (!cmp.problem.empty()) o.require(false, fx.name + ": " + cmp.problem);
    worst = std::max(worst, cmp.worst());
  }
  o.require(used > 0, "no fixtures loaded");
  o.require(worst <= 1e-12, "relative error above 1e-12");
  if (o.pass) {
    std::ostringstream s;
    s << used << " fixtures, worst relative error " << worst;
    o.detail = s.str();
  }
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome score_law() {
  Outcome o;
  const ScoreParams p = score_params_preset("default");
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> rad(p.rad0, p.radius(p.n_steps - 1)), th(0.0, p.max_offaxis),
      dist(0.0, 6.0), step(1e-6, 0.5);
  int decays = 0;
  for (int i = 0; i < 10000; ++i) {
    const double r = rad(rng), t = th(rng), d = dist(rng);
    const double s = decay_score(r, t, d, p);
    const bool ok = s > 0.0 && decay_score(r + step(rng), t, d, p) < s && decay_score(r, t + step(rng), d, p) < s &&
                    decay_score(r, t, d + step(rng), p) < s;
    decays += ok;
  }
  o.require(decays == 10000, std::to_string(10000 - decays) + " triples without strict decay");

  // Random receiver geometry: emitted iff inside both cutoffs, valued by the law.
  std::uniform_real_distribution<double> coord(-7.0, 7.0), wind(-5.0, 5.0);
  std::uniform_int_distribution<int> which(0, p.n_steps - 1);
  int mismatches = 0, zeros = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vector2 pos(coord(rng) / 4, coord(rng) / 4);
    const Vector2 w(wind(rng), wind(rng));
    const std::vector<Vector2> rec{pos + Vector2(coord(rng) / 1.5, coord(rng) / 1.5)};
    const int k = which(rng);
    const auto out = score_step({0, 0, k, pos, p.radius(k)}, w, rec, p);
    const double d = rad2deg(central_angle<double>(pos, rec[0]));
    const Vector2 l = rec[0] - pos;
    const double a = std::acos(std::clamp(w.dot(l) / (w.norm() * l.norm()), -1.0, 1.0));
    if (std::abs(d - p.radius(k)) < 1e-9 || std::abs(a - p.max_offaxis) < 1e-9) continue;
    const bool inside = d <= p.radius(k) && a <= p.max_offaxis;
    if (!inside) ++zeros;
    if (inside != (out.size() == 1)) {
      ++mismatches;
    } else if (inside) {
      // The off-axis term is the perpendicular offset from the wind axis.
      const double offset = std::abs(w.x() * l.y() - w.y() * l.x()) / w.norm();
      const double expected = std::exp(-p.alpha * p.radius(k) - p.beta * offset - p.gamma * d);
      if (testing::rel_diff(out[0].value, expected) > 1e-12) ++mismatches;
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " cutoff or value mismatches");
  const double spot = decay_score(2.8, 0.0, 0.0, p);
  o.require(std::abs(spot - 0.106459) <= 1e-6, "spot value off");
  if (o.pass) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "10000 decay triples, 10000 geometries (%d outside cutoffs), spot %.7f", zeros,
                  spot);
    o.detail = buf;
  }
  return o;
}

// 5 -------------------------------------------------------------------------
Outcome parallel_determinism() {
  Outcome o;
  const fs::path dir = testing::scratch("acceptance_threads");
  std::ostringstream out, err;
  const std::string data = (dir / "data").string();
  const fs::path cfg = dir / "synth.json";
  write_text_file(cfg, R"({"synth": {"cities": 20, "days": 90, "start": "2004-01-01"}})");
  int code = run_cli({"synth", "--config", cfg.string(), "--seed", "5", "--out", data}, out, err);
  o.require(code == 0, "synth failed: " + err.str());
  if (!o.pass) return o;
  std::vector<std::string> hashes;
  for (const char* t : {"1", "4", "8"}) {
    const std::string o_dir = (dir / (std::string("t") + t)).string();
    code = run_cli({"aoe-build", "--input", "cities=" + data + "/cities.csv", "--input", "wind=" + data + "/wind.csv",
                    "--threads", t, "--out", o_dir},
                   out, err);
    o.require(code == 0, std::string("aoe-build failed at ") + t + " threads: " + err.str());
    if (code != 0) return o;
    hashes.push_back(nlohmann::json::parse(read_text_file(fs::path(o_dir) / "aoe.json")).at("content_hash"));
  }
  o.require(hashes[0] == hashes[1] && hashes[1] == hashes[2], "content hashes differ across thread counts");
  if (o.pass) o.detail = "hash " + hashes[0].substr(0, 16) + "... identical at 1, 4, 8 threads";
  return o;
}

// 6 -------------------------------------------------------------------------
PanelTable random_panel(int rows, int g1, int g2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> a(0, g1 - 1), b(0, g2 - 1);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::vector<int> ca(rows), cb(rows);
  Vector x1(rows), x2(rows), inst(rows), y(rows), w(rows);
  std::vector<double> fa(g1), fb(g2);
  for (double& v : fa) v = z(rng);
  for (double& v : fb) v = z(rng);
  for (int i = 0; i < rows; ++i) {
    ca[i] = i < g1 ? i : a(rng);
    cb[i] = i < g2 ? i : b(rng);
    inst[i] = z(rng);
    x1[i] = 0.8 * inst[i] + z(rng) + fa[ca[i]];
    x2[i] = z(rng) + fb[cb[i]];
    y[i] = 1.5 * x1[i] - 0.7 * x2[i] + fa[ca[i]] + fb[cb[i]] + z(rng);
    w[i] = u(rng);
  }
  PanelTable p(rows);
  p.add_categorical("a", testing::categorical(ca));
  p.add_categorical("b", testing::categorical(cb));
  p.add_numeric("x1", x1);
  p.add_numeric("x2", x2);
  p.add_numeric("z", inst);
  p.add_numeric("y", y);
  p.add_numeric("w", w);
  return p;
}

Matrix cluster_meat_sandwich(const Matrix& bread, const Matrix& scores, const std::vector<int>& groups) {
  std::map<int, Vector> sums;
  for (Index i = 0; i < scores.rows(); ++i) {
    auto [it, fresh] = sums.try_emplace(groups[std::size_t(i)], Vector::Zero(scores.cols()));
    it->second += scores.row(i).transpose();
  }
  Matrix meat = Matrix::Zero(scores.cols(), scores.cols());
  for (const auto& [g, s] : sums) meat += s * s.transpose();
  return bread * meat * bread;
}

Outcome econometrics_oracles() {
  Outcome o;
  std::ostringstream detail;

  {  // Two-way FE against a dense dummy-variable regression.
    const PanelTable p = random_panel(200, 12, 7, 1);
    DesignSpec s;
    s.outcome = "y";
    s.exogenous = {"x1", "x2"};
    s.fe = {"a", "b"};
    s.weight = "w";
    s.tol = 1e-12;
    const FitResult f = ols(p, s);
    const Categorical& a = p.categorical("a");
    const Categorical& b = p.categorical("b");
    Matrix X = Matrix::Zero(200, 2 + a.n_levels() + b.n_levels() - 1);
    X.col(0) = p.numeric("x1");
    X.col(1) = p.numeric("x2");
    for (Index i = 0; i < 200; ++i) {
      X(i, 2 + a.codes[std::size_t(i)]) = 1.0;
      if (b.codes[std::size_t(i)] > 0) X(i, 2 + a.n_levels() + b.codes[std::size_t(i)] - 1) = 1.0;
    }
    const Vector& w = p.numeric("w");
    const Vector beta = (X.transpose() * w.asDiagonal() * X).ldlt().solve(X.transpose() * w.asDiagonal() * p.numeric("y"));
    const double err = std::max(std::abs(f.coefficient("x1") - beta[0]), std::abs(f.coefficient("x2") - beta[1]));
    o.require(err <= 1e-8, "FE vs dummy OLS differ");
    detail << "FE/dummy " << err;
  }
  {  // Just-identified 2SLS against (Z'X)^-1 Z'y.
    const PanelTable p = random_panel(10, 2, 2, 11);
    DesignSpec s;
    s.outcome = "y";
    s.exogenous = {"x2"};
    s.endogenous = {"x1"};
    s.instruments = {"z"};
    const FitResult f = tsls(p, s);
    Matrix X(10, 3), Z(10, 3);
    X << Vector::Ones(10), p.numeric("x2"), p.numeric("x1");
    Z << Vector::Ones(10), p.numeric("x2"), p.numeric("z");
    const Vector b = (Z.transpose() * X).lu().solve(Z.transpose() * p.numeric("y"));
    double err = 0.0;
    const char* names[] = {"(Intercept)", "x2", "x1"};
    for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(f.coefficient(names[j]) - b[j]) / std::max(1.0, std::abs(b[j])));
    o.require(err <= 1e-10, "2SLS vs closed form differ");
    detail << ", 2SLS " << err;
  }
  {  // Two-way clustering against inclusion-exclusion.
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n01(0.0, 1.0);
    PanelTable p(12);
    std::vector<int> ga(12), gb(12), both(12);
    Vector x(12), y(12);
    for (int i = 0; i < 12; ++i) {
      ga[i] = i % 3;
      gb[i] = (i / 3) % 4;
      both[i] = ga[i] * 4 + gb[i];
      x[i] = n01(rng);
      y[i] = 0.5 + 2.0 * x[i] + n01(rng);
    }
    p.add_categorical("ga", testing::categorical(ga));
    p.add_categorical("gb", testing::categorical(gb));
    p.add_numeric("x", x);
    p.add_numeric("y", y);
    DesignSpec s;
    s.outcome = "y";
    s.exogenous = {"x"};
    s.cluster = {"ga", "gb"};
    const FitResult f = ols(p, s);
    Matrix X(12, 2);
    X << Vector::Ones(12), x;
    const Matrix bread = (X.transpose() * X).inverse();
    const Vector e = y - X * (bread * X.transpose() * y);
    const Matrix scores = e.asDiagonal() * X;
    const Matrix v = cluster_meat_sandwich(bread, scores, ga) + cluster_meat_sandwich(bread, scores, gb) -
                     cluster_meat_sandwich(bread, scores, both);
    const double err = max_abs(f.vcov - v) / max_abs(v);
    o.require(err <= 1e-10, "two-way vcov vs inclusion-exclusion differ");
    detail << ", two-way " << err;
  }
  {  // Singleton clusters reduce to HC0.
    PanelTable p = random_panel(80, 6, 5, 4);
    std::vector<int> ids(80);
    for (int i = 0; i < 80; ++i) ids[i] = i;
    p.add_categorical("row", testing::categorical(ids));
    DesignSpec s;
    s.outcome = "y";
    s.exogenous = {"x1", "x2"};
    s.fe = {"a", "b"};
    s.weight = "w";
    const FitResult hc0 = ols(p, s);
    s.cluster = {"row"};
    const double err = max_abs(ols(p, s).vcov - hc0.vcov) / max_abs(hc0.vcov);
    o.require(err <= 1e-12, "singleton clusters differ from HC0");
    detail << ", singleton/HC0 " << err;
  }
  if (o.pass) o.detail = detail.str();
  return o;
}

// 7 -------------------------------------------------------------------------
Outcome planted_effect() {
  Outcome o;
  int passed = 0;
  std::string failures;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    DownwindSynthConfig cfg;
    cfg.seed = seed;
    cfg.effect = 0.5;
    DownwindBinSpec spec;
    spec.outcome = "outcome";
    spec.exposure = "exposure";
    spec.bin_column = "bin";
    const DownwindBinResult r = fit_downwind_bins(synthesize_downwind(cfg), spec);
    const BinEstimate* top = nullptr;
    const BinEstimate* calm = nullptr;
    for (const auto& b : r.bins) {
      if (b.bin == "1st") top = &b;
      if (b.bin == "calm") calm = &b;
    }
    const bool ok = top && calm && !top->dropped && !calm->dropped && std::abs(top->coef - 0.5) <= 2.0 * top->se &&
                    std::abs(calm->coef) < 2.0 * calm->se;
    if (ok) {
      ++passed;
    } else {
      char buf[120];
      std::snprintf(buf, sizeof buf, " seed %d (top %.3f se %.3f, calm %.3f se %.3f)", int(seed),
                    top ? top->coef : NAN, top ? top->se : NAN, calm ? calm->coef : NAN, calm ? calm->se : NAN);
      failures += buf;
    }
  }
  o.detail = std::to_string(passed) + "/20 seeds recover the planted effect";
  if (passed != 20) o.detail += ";" + failures;
  o.pass = passed == 20;
  return o;
}

// 8 -------------------------------------------------------------------------
Outcome placebo_calibration() {
  Outcome o;
  ShiftShareSynthConfig cfg;
  cfg.effect = 0.0;
  cfg.seed = 3;
  const ShiftShareSynth syn = synthesize_shiftshare(cfg);
  DesignSpec spec;
  spec.outcome = "outcome";
  spec.exogenous = {"iv"};
  spec.fe = {"year", "macroregion"};
  spec.cluster = {"region"};
  spec.weight = "weight";
  const PlaceboDesign design = placebo_design(syn.panel, "region", "year", syn.inputs, cfg.horizon);
  const int reps = 1000;
  const PlaceboResult r = placebo_rejection(syn.panel, spec, "iv", design, reps, 17, {0.05},
                                            std::max(1u, std::thread::hardware_concurrency()));
  const boost::math::binomial_distribution<double> dist(reps, 0.05);
  const double lo = boost::math::quantile(dist, 0.005) / reps;
  const double hi = boost::math::quantile(boost::math::complement(dist, 0.005)) / reps;
  const double rate = r.rejection_rates[0];
  char buf[160];
  std::snprintf(buf, sizeof buf, "5%%-level rejection rate %.3f over %d reps, 99%% binomial interval [%.3f, %.3f]", rate,
                reps, lo, hi);
  o.detail = buf;
  o.pass = rate >= lo && rate <= hi;
  return o;
}

// 9 -------------------------------------------------------------------------
Outcome shiftshare_identities() {
  Outcome o;
  o.require(dh_growth(0, 5) == 2.0 && dh_growth(5, 0) == -2.0 && dh_growth(5, 5) == 0.0, "DH endpoints");

  TradeTable t;
  t.add("R", "A", 2001, 30);
  t.add("R", "B", 2001, 70);
  const auto s = build_shares(t, "R", 2001);
  o.require(s.at("A") + s.at("B") == 1.0, "shares do not sum to one");

  // Symmetric cancellation: equal shares, DH growth +1 and -1.
  ShiftShareInputs in;
  in.trade.add("R", "A", 2001, 500.0);
  in.trade.add("R", "B", 2001, 500.0);
  in.population[{"R", 2001}] = 100.0;
  in.imports.add("A", 2005, 1.0);
  in.imports.add("A", 2009, 3.0);
  in.imports.add("B", 2005, 3.0);
  in.imports.add("B", 2009, 1.0);
  const IVSeries iv = build_iv(in, 2005, 4);
  o.require(iv.size() == 1 && iv[0].iv == 0.0, "symmetric shocks do not cancel");

  ShiftShareSynthConfig cfg;
  cfg.n_regions = 80;
  const ShiftShareSynth syn = synthesize_shiftshare(cfg);
  const int year = cfg.first_year + cfg.horizon;
  const std::vector<std::string> products = syn.inputs.trade.products();
  const ExposureMatrix em = exposure_matrix(syn.inputs.trade, syn.inputs.population, cfg.first_year, products);
  for (const auto& r : em.regions) {
    double total = 0.0;
    for (const auto& [p, v] : build_shares(syn.inputs.trade, r, cfg.first_year)) total += v;
    o.require(std::abs(total - 1.0) <= 1e-14, "synthetic shares do not sum to one for " + r);
  }
  const Vector g = import_shifts(syn.inputs.imports, products, year, year + cfg.horizon);
  const Vector base = em.weights * g;
  for (double c : {2.0, -0.5, 8.0}) {
    o.require(((em.weights * (c * g)).array() == c * base.array()).all(), "IV not linear in shocks");
  }
  if (o.pass) o.detail = "DH endpoints, share sums, linearity at c in {2, -0.5, 8}, symmetric IV = 0";
  return o;
}

// 10 ------------------------------------------------------------------------
Outcome ledger_conservation() {
  Outcome o;
  std::size_t cells = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const LedgerInputs in = testing::random_ledger_inputs(50, 50, 24, seed);
    const DamageLedger l = build_ledger(in);
    o.require(l.total_deaths_by_sender == l.total_deaths_by_receiver,
              "sender and receiver totals differ at seed " + std::to_string(seed));
    cells += l.cells;
  }
  if (o.pass) {
    std::ostringstream s;
    s << "3 instances, " << cells << " cells, totals agree exactly";
    o.detail = s.str();
  }
  return o;
}

}  // namespace

int main() {
  set_warning_sink([](const std::string&) {});
  struct Criterion {
    int id;
    const char* name;
    double budget_ms;
    Outcome (*run)();
  };
  const std::vector<Criterion> criteria = {
      {1, "FDR reproduction", 1.0, fdr_reproduction},
      {2, "accounting arithmetic", 1.0, accounting_arithmetic},
      {3, "AoE oracle equivalence", 1000.0, aoe_oracle},
      {4, "score-law properties", 1000.0, score_law},
      {5, "determinism under parallelism", 30000.0, parallel_determinism},
      {6, "econometrics oracles", 5000.0, econometrics_oracles},
      {7, "planted-effect recovery", 60000.0, planted_effect},
      {8, "placebo calibration", 120000.0, placebo_calibration},
      {9, "shift-share identities", 1000.0, shiftshare_identities},
      {10, "ledger conservation", 5000.0, ledger_conservation},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (ms > c.budget_ms) {
      o.pass = false;
      char buf[80];
      std::snprintf(buf, sizeof buf, "; over runtime budget of %.0f ms", c.budget_ms);
      o.detail += buf;
    }
    failures += !o.pass;
    std::printf("%s  %2d  %-30s %10.3f ms  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, ms, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
