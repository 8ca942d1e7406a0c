#pragma once

#include "brprior/inference.hpp"
#include "brprior/priors.hpp"
#include "brprior/registry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace brprior {

inline constexpr int kExperimentSchemaVersion = 1;

/// A replicated bias study. `mcmc` is ignored when `exact` is set.
struct ExperimentConfig {
  std::string model = "logistic";
  ModelOptions model_options;
  Vector true_theta;
  std::vector<PriorKind> priors;
  bool include_mle = false;  // also report the MLE as a pseudo-prior "mle"
  std::size_t n = 30;
  std::size_t replicates = 200;
  bool exact = false;
  McmcConfig mcmc;
  std::size_t pilot_draws = 500;
  Seed master_seed = 1;
  bool regenerate_covariates = true;

  bool has_design() const { return model == "logistic" || model == "linreg"; }

  void validate() const {
    if (replicates < 1) throw UsageError("config: replicates must be at least 1");
    if (n < 1) throw UsageError("config: n must be at least 1");
    if (priors.empty() && !include_mle) throw UsageError("config: priors must not be empty");
    if (true_theta.size() == 0) throw UsageError("config: true_theta is required");
    if (!exact) {
      mcmc.validate();
      if (pilot_draws < 500) throw UsageError("config: pilot_draws must be at least 500");
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& where) {
  const std::set<std::string> ok(known.begin(), known.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw UsageError("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
T json_get(const nlohmann::json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config: bad or missing '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> from_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

/// Parses a JSON experiment config; unknown keys are rejected at every level.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::json_get;
  if (!j.is_object()) throw UsageError("config: top level must be an object");
  detail::reject_unknown_keys(j,
                              {"schema_version", "model", "true_theta", "priors", "include_mle", "n",
                               "replicates", "mcmc", "master_seed", "regenerate_covariates", "rho"},
                              "config");
  const int version = json_get<int>(j, "schema_version", "config");
  if (version != kExperimentSchemaVersion)
    throw UsageError("config: unsupported schema_version " + std::to_string(version) + " (expected " +
                     std::to_string(kExperimentSchemaVersion) + ")");
  ExperimentConfig c;
  const auto& m = j.at("model");
  if (m.is_string()) {
    c.model = m.get<std::string>();
  } else if (m.is_object()) {
    detail::reject_unknown_keys(m, {"name", "kernel", "design_csv", "strata_sizes", "per_stratum", "sigma",
                                    "location_dim", "columns"},
                                "model");
    c.model = json_get<std::string>(m, "name", "model");
    if (m.contains("kernel")) c.model_options.kernel = json_get<std::string>(m, "kernel", "model");
    if (m.contains("design_csv")) c.model_options.design_csv = json_get<std::string>(m, "design_csv", "model");
    if (m.contains("strata_sizes"))
      c.model_options.strata_sizes = json_get<std::vector<std::size_t>>(m, "strata_sizes", "model");
    if (m.contains("per_stratum")) c.model_options.per_stratum = json_get<std::size_t>(m, "per_stratum", "model");
    if (m.contains("sigma")) c.model_options.sigma = json_get<double>(m, "sigma", "model");
    if (m.contains("location_dim")) c.model_options.location_dim = json_get<std::size_t>(m, "location_dim", "model");
    if (m.contains("columns")) c.model_options.columns = json_get<std::size_t>(m, "columns", "model");
  } else {
    throw UsageError("config: model must be a name or an object");
  }
  c.true_theta = detail::to_vector(json_get<std::vector<double>>(j, "true_theta", "config"));
  for (const auto& p : json_get<std::vector<std::string>>(j, "priors", "config")) c.priors.push_back(parse_prior_kind(p));
  if (j.contains("include_mle")) c.include_mle = json_get<bool>(j, "include_mle", "config");
  c.n = json_get<std::size_t>(j, "n", "config");
  c.replicates = json_get<std::size_t>(j, "replicates", "config");
  c.master_seed = json_get<Seed>(j, "master_seed", "config");
  if (j.contains("regenerate_covariates")) c.regenerate_covariates = json_get<bool>(j, "regenerate_covariates", "config");
  if (j.contains("rho")) c.model_options.rho = json_get<double>(j, "rho", "config");

  const auto& mc = j.at("mcmc");
  if (mc.is_string()) {
    if (mc.get<std::string>() != "exact") throw UsageError("config: mcmc must be \"exact\" or an object");
    c.exact = true;
  } else if (mc.is_object()) {
    detail::reject_unknown_keys(mc, {"draws", "burn_in", "draws_include_burn_in", "pilot_draws", "target_accept"},
                                "mcmc");
    if (mc.contains("draws")) c.mcmc.draws = json_get<std::size_t>(mc, "draws", "mcmc");
    if (mc.contains("burn_in")) c.mcmc.burn_in = json_get<std::size_t>(mc, "burn_in", "mcmc");
    if (mc.contains("draws_include_burn_in"))
      c.mcmc.draws_include_burn_in = json_get<bool>(mc, "draws_include_burn_in", "mcmc");
    if (mc.contains("pilot_draws")) c.pilot_draws = json_get<std::size_t>(mc, "pilot_draws", "mcmc");
    if (mc.contains("target_accept")) {
      const auto t = json_get<std::vector<double>>(mc, "target_accept", "mcmc");
      if (t.size() != 2) throw UsageError("config: target_accept needs two values");
      c.mcmc.accept_lo = t[0];
      c.mcmc.accept_hi = t[1];
    }
  } else {
    throw UsageError("config: mcmc must be \"exact\" or an object");
  }
  c.model_options.rows = c.n;
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = kExperimentSchemaVersion;
  j["model"] = {{"name", c.model}, {"kernel", c.model_options.kernel}};
  if (c.model_options.design_csv) j["model"]["design_csv"] = *c.model_options.design_csv;
  if (!c.model_options.strata_sizes.empty()) j["model"]["strata_sizes"] = c.model_options.strata_sizes;
  j["true_theta"] = detail::from_vector(c.true_theta);
  std::vector<std::string> priors;
  for (auto p : c.priors) priors.emplace_back(prior_kind_name(p));
  j["priors"] = priors;
  j["include_mle"] = c.include_mle;
  j["n"] = c.n;
  j["replicates"] = c.replicates;
  if (c.exact) {
    j["mcmc"] = "exact";
  } else {
    j["mcmc"] = {{"draws", c.mcmc.draws},
                 {"burn_in", c.mcmc.burn_in},
                 {"draws_include_burn_in", c.mcmc.draws_include_burn_in},
                 {"pilot_draws", c.pilot_draws},
                 {"target_accept", {c.mcmc.accept_lo, c.mcmc.accept_hi}}};
  }
  j["master_seed"] = c.master_seed;
  j["regenerate_covariates"] = c.regenerate_covariates;
  j["rho"] = c.model_options.rho;
  return j;
}

/// Full-scale profile: 1000 replicates of 10000 retained draws.
inline void apply_full_profile(ExperimentConfig& c) {
  c.replicates = 1000;
  c.mcmc.draws = 10000;
}

/// Per-replicate biases (estimator minus truth) for every reported
/// estimator, plus exclusion accounting.
struct BiasReport {
  std::string model;
  std::vector<std::string> estimators;  // prior names, and "mle" when requested
  std::vector<std::string> labels;
  Vector true_theta;
  std::size_t configured = 0;
  std::vector<std::size_t> included;    // replicate indices, ascending
  std::vector<Matrix> biases;           // per estimator: included x d
  std::map<std::string, std::size_t> exclusion_reasons;
  std::vector<Vector> step_sizes;       // per estimator: mean tuned steps over included replicates

  std::size_t excluded() const { return configured - included.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(true_theta.size()); }
};

struct FiveNumber {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Type-7 (linear interpolation) sample quantile of sorted data.
inline double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw UsageError("quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline FiveNumber five_number(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {v.front(), quantile_type7(v, 0.25), quantile_type7(v, 0.5), quantile_type7(v, 0.75), v.back()};
}

struct SummaryEntry {
  Vector mean;
  std::optional<Vector> sd;  // absent with a single included replicate
  std::optional<Vector> se;
};

struct Summary {
  std::vector<std::string> estimators;
  std::vector<std::string> labels;
  std::vector<SummaryEntry> entries;
  std::size_t included = 0;
  std::size_t excluded = 0;

  /// Table with Mean and Stand dev rows and one column block per estimator,
  /// 3 decimals.
  std::string format_table() const {
    std::ostringstream os;
    os << std::string(10, ' ');
    for (const auto& e : estimators) {
      std::string head = e;
      head.resize(std::max<std::size_t>(head.size(), 10 * labels.size()), ' ');
      os << ' ' << head;
    }
    os << "\n" << std::string(10, ' ');
    for (std::size_t p = 0; p < estimators.size(); ++p) {
      std::string block;
      for (const auto& l : labels) {
        std::string cell = l;
        cell.insert(0, 10 - std::min<std::size_t>(10, cell.size()), ' ');
        block += cell;
      }
      os << ' ' << block;
    }
    auto row = [&](const char* name, auto pick) {
      os << '\n';
      std::string n = name;
      n.resize(10, ' ');
      os << n;
      for (std::size_t p = 0; p < estimators.size(); ++p) {
        os << ' ';
        for (std::size_t k = 0; k < labels.size(); ++k) {
          const std::optional<double> v = pick(entries[p], static_cast<Eigen::Index>(k));
          std::string cell = v ? format_fixed(*v, 3) : std::string("NA");
          cell.insert(0, 10 - std::min<std::size_t>(10, cell.size()), ' ');
          os << cell;
        }
      }
    };
    row("Mean", [](const SummaryEntry& e, Eigen::Index k) { return std::optional<double>(e.mean[k]); });
    row("Stand dev", [](const SummaryEntry& e, Eigen::Index k) {
      return e.sd ? std::optional<double>((*e.sd)[k]) : std::nullopt;
    });
    os << "\nincluded " << included << ", excluded " << excluded << '\n';
    return os.str();
  }
};

inline Summary summarize(const BiasReport& r) {
  Summary s;
  s.estimators = r.estimators;
  s.labels = r.labels;
  s.included = r.included.size();
  s.excluded = r.excluded();
  for (const Matrix& b : r.biases) {
    SummaryEntry e;
    const double m = static_cast<double>(b.rows());
    if (b.rows() == 0) {
      e.mean = Vector::Constant(static_cast<Eigen::Index>(r.dim()), std::numeric_limits<double>::quiet_NaN());
    } else {
      e.mean = b.colwise().sum().transpose() / m;
    }
    if (b.rows() >= 2) {
      Vector sd(b.cols());
      for (Eigen::Index k = 0; k < b.cols(); ++k)
        sd[k] = std::sqrt((b.col(k).array() - e.mean[k]).square().sum() / (m - 1.0));
      e.sd = sd;
      e.se = sd / std::sqrt(m);
    }
    s.entries.push_back(std::move(e));
  }
  return s;
}

namespace detail {

struct ReplicateOutcome {
  bool ok = false;
  std::string reason;
  std::vector<Vector> estimates;
  std::vector<Vector> steps;
};

inline std::size_t worker_count(std::size_t tasks) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("PRIORBENCH_THREADS")) {
    try {
      const long v = std::stol(cap);
      if (v >= 1) n = std::min(n, static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("PRIORBENCH_THREADS must be a positive integer");
    }
  }
  return std::max<std::size_t>(1, std::min(n, tasks));
}

inline std::shared_ptr<Model> replicate_model(const ExperimentConfig& c, Seed rep_seed) {
  if (!c.has_design() || c.model_options.design_csv) return build_model(c.model, c.model_options);
  ModelOptions o = c.model_options;
  o.design_seed = c.regenerate_covariates ? derive_seed(rep_seed, 0xD) : derive_seed(c.master_seed, 0xD);
  return build_model(c.model, o);
}

inline ReplicateOutcome run_replicate(const ExperimentConfig& c, std::size_t index) {
  ReplicateOutcome out;
  const Seed rep_seed = derive_seed(c.master_seed, index);
  std::shared_ptr<Model> model;
  try {
    model = replicate_model(c, rep_seed);
  } catch (const UsageError& e) {
    if (!c.has_design()) throw;
    out.reason = "design_rank_deficient";
    return out;
  }
  const Dataset data = model->sample(c.true_theta, c.n, derive_seed(rep_seed, 1));
  const MleResult mle = newton_mle(*model, data);
  if (!mle.converged()) {
    out.reason = std::string("mle_") + mle_status_name(mle.status);
    return out;
  }
  for (std::size_t p = 0; p < c.priors.size(); ++p) {
    const PriorField prior = make_prior(*model, c.priors[p], c.true_theta);
    if (c.exact) {
      auto est = conjugate_posterior_mean(*model, data, prior);
      if (!est) throw UsageError(std::string("config: no exact posterior mean for ") + model->name() +
                                 " with prior " + prior_kind_name(c.priors[p]));
      out.estimates.push_back(*est);
      out.steps.push_back(Vector());
      continue;
    }
    McmcConfig cfg = c.mcmc;
    cfg.init = mle.theta;
    McmcConfig pilot = cfg;
    pilot.draws = c.pilot_draws;
    pilot.burn_in = 100;
    pilot.draws_include_burn_in = false;
    pilot.seed = derive_seed(rep_seed, 100 + p);
    try {
      cfg.step_sizes = tune_step_sizes(*model, data, prior, pilot);
    } catch (const NumericError&) {
      out.reason = "tuning_failure";
      return out;
    }
    cfg.seed = derive_seed(rep_seed, 10 + p);
    try {
      out.estimates.push_back(metropolis_within_gibbs(*model, data, prior, cfg).mean());
    } catch (const NumericError&) {
      out.reason = "mcmc_failure";
      return out;
    }
    out.steps.push_back(cfg.step_sizes);
  }
  if (c.include_mle) {
    out.estimates.push_back(mle.theta);
    out.steps.push_back(Vector());
  }
  out.ok = true;
  return out;
}

}  // namespace detail

/// Runs all replicates (in parallel, capped by PRIORBENCH_THREADS) and folds
/// the outcomes in replicate order, so results do not depend on scheduling.
/// A replicate whose MLE, tuning or chain fails is excluded for every
/// estimator and its reason counted.
inline BiasReport run_experiment(const ExperimentConfig& c) {
  c.validate();
  auto probe = build_model(c.model, c.model_options);
  if (static_cast<std::size_t>(c.true_theta.size()) != probe->dim())
    throw UsageError("config: true_theta has " + std::to_string(c.true_theta.size()) + " entries, model " +
                     probe->name() + " needs " + std::to_string(probe->dim()));
  if (!probe->in_domain(c.true_theta)) throw UsageError("config: true_theta outside the parameter space");

  std::vector<detail::ReplicateOutcome> outcomes(c.replicates);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < c.replicates; i = next++) {
      try {
        outcomes[i] = detail::run_replicate(c, i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = c.replicates;
      }
    }
  };
  const std::size_t workers = detail::worker_count(c.replicates);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  BiasReport r;
  r.model = probe->name();
  for (auto p : c.priors) r.estimators.emplace_back(prior_kind_name(p));
  if (c.include_mle) r.estimators.emplace_back("mle");
  r.labels = probe->labels();
  r.true_theta = c.true_theta;
  r.configured = c.replicates;
  const auto d = c.true_theta.size();
  for (std::size_t i = 0; i < c.replicates; ++i) {
    if (outcomes[i].ok) r.included.push_back(i);
    else ++r.exclusion_reasons[outcomes[i].reason];
  }
  if (r.included.empty()) throw NumericError("all replicates were excluded");
  for (std::size_t p = 0; p < r.estimators.size(); ++p) {
    Matrix b(static_cast<Eigen::Index>(r.included.size()), d);
    Vector steps = Vector::Zero(d);
    std::size_t with_steps = 0;
    for (std::size_t row = 0; row < r.included.size(); ++row) {
      const auto& o = outcomes[r.included[row]];
      b.row(static_cast<Eigen::Index>(row)) = (o.estimates[p] - c.true_theta).transpose();
      if (o.steps[p].size() == d) {
        steps += o.steps[p];
        ++with_steps;
      }
    }
    r.biases.push_back(std::move(b));
    r.step_sizes.push_back(with_steps ? Vector(steps / static_cast<double>(with_steps)) : Vector());
  }
  return r;
}

inline void write_biases_csv(const BiasReport& r, std::ostream& os) {
  os << "prior,replicate,component,bias\n";
  for (std::size_t p = 0; p < r.estimators.size(); ++p)
    for (std::size_t row = 0; row < r.included.size(); ++row)
      for (Eigen::Index k = 0; k < r.biases[p].cols(); ++k)
        os << r.estimators[p] << ',' << r.included[row] << ',' << r.labels[static_cast<std::size_t>(k)] << ','
           << format_double(r.biases[p](static_cast<Eigen::Index>(row), k)) << '\n';
}

inline nlohmann::json summary_json(const BiasReport& r, const Summary& s) {
  nlohmann::json j;
  j["model"] = r.model;
  j["labels"] = r.labels;
  j["true_theta"] = detail::from_vector(r.true_theta);
  j["replicates"] = r.configured;
  j["included"] = r.included.size();
  j["excluded"] = r.excluded();
  j["exclusion_reasons"] = r.exclusion_reasons;
  j["estimators"] = nlohmann::json::object();
  for (std::size_t p = 0; p < s.estimators.size(); ++p) {
    nlohmann::json e;
    e["mean"] = detail::from_vector(s.entries[p].mean);
    e["sd"] = s.entries[p].sd ? nlohmann::json(detail::from_vector(*s.entries[p].sd)) : nlohmann::json(nullptr);
    e["se"] = s.entries[p].se ? nlohmann::json(detail::from_vector(*s.entries[p].se)) : nlohmann::json(nullptr);
    if (r.step_sizes[p].size()) e["mean_step_sizes"] = detail::from_vector(r.step_sizes[p]);
    j["estimators"][s.estimators[p]] = e;
  }
  return j;
}

inline nlohmann::json boxplot_json(const BiasReport& r) {
  nlohmann::json j;
  j["quantile_type"] = 7;
  j["estimators"] = nlohmann::json::object();
  for (std::size_t p = 0; p < r.estimators.size(); ++p) {
    nlohmann::json comps = nlohmann::json::object();
    for (Eigen::Index k = 0; k < r.biases[p].cols(); ++k) {
      const Vector col = r.biases[p].col(k);
      const FiveNumber f = five_number(std::vector<double>(col.data(), col.data() + col.size()));
      comps[r.labels[static_cast<std::size_t>(k)]] = {
          {"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"q3", f.q3}, {"max", f.max}};
    }
    j["estimators"][r.estimators[p]] = comps;
  }
  return j;
}

/// Writes biases.csv, summary.json and boxplot.json into `dir`.
inline void emit(const BiasReport& r, const std::filesystem::path& dir, const ExperimentConfig* config = nullptr) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
    return f;
  };
  {
    auto f = open("biases.csv");
    write_biases_csv(r, f);
  }
  {
    auto f = open("summary.json");
    nlohmann::json j = summary_json(r, summarize(r));
    if (config) j["config"] = to_json(*config);
    f << j.dump(2) << '\n';
  }
  {
    auto f = open("boxplot.json");
    f << boxplot_json(r).dump(2) << '\n';
  }
}

}  // namespace brprior
