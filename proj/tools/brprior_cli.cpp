// Command-line front end: prior fields, cumulants, bias formulas, Laplace
// posterior means, replicated simulations and the bias-order probe.

#include "brprior/brprior.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

using namespace brprior;
using nlohmann::json;

namespace {

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw UsageError(std::string("invalid ") + what + " value '" + cell + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  for (double v : parse_list(s, what)) {
    if (v < 1 || v != std::floor(v)) throw UsageError(std::string(what) + " entries must be positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> as_list(const Vector& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  for (double& x : out) x += 0.0;  // no "-0" in output
  return out;
}

// Options shared by every subcommand that names a model.
struct ModelArgs {
  std::string name;
  std::string design;
  std::size_t rows = 30;
  std::string kernel = "gaussian";
  std::size_t dim = 1;
  std::string strata_sizes;
  std::size_t per_stratum = 10;
  double sigma = 1.0;
  double rho = 0.1;

  void add(CLI::App* app) {
    app->add_option("model", name, std::string("model name (") + kModelNames + ")")->required();
    app->add_option("--design", design, "design matrix CSV (logistic, linreg)");
    app->add_option("--rows", rows, "rows of a generated design");
    app->add_option("--rho", rho, "covariate correlation of a generated logistic design");
    app->add_option("--kernel", kernel, "location kernel: gaussian or logistic");
    app->add_option("--dim", dim, "location dimension");
    app->add_option("--strata-sizes", strata_sizes, "comma-separated stratum sizes");
    app->add_option("--per-stratum", per_stratum, "units per stratum");
    app->add_option("--sigma", sigma, "known Gumbel scale");
  }

  std::shared_ptr<Model> build(Seed seed) const {
    ModelOptions o;
    if (!design.empty()) o.design_csv = design;
    o.rows = rows;
    o.rho = rho;
    o.kernel = kernel;
    o.location_dim = dim;
    o.per_stratum = per_stratum;
    o.sigma = sigma;
    o.design_seed = seed;
    if (!strata_sizes.empty()) o.strata_sizes = parse_counts(strata_sizes, "--strata-sizes");
    return build_model(name, o);
  }
};

ParamPoint theta_for(const Model& m, const std::string& s) {
  const auto v = parse_list(s, "--theta");
  if (v.size() != m.dim())
    throw UsageError("--theta needs " + std::to_string(m.dim()) + " values for model " + m.name());
  Vector t = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (!m.in_domain(t)) throw UsageError("--theta is outside the parameter space of " + m.name());
  return m.point(t);
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias-reduction priors: prior fields, cumulants, bias formulas and bias studies"};
  app.require_subcommand(1);
  Seed seed = 1;
  app.add_option("--seed", seed, "random seed (designs, sampling, chains)");

  // prior eval
  auto* prior_cmd = app.add_subcommand("prior", "prior fields");
  prior_cmd->require_subcommand(1);
  auto* prior_eval = prior_cmd->add_subcommand("eval", "log-gradient and closed form of a prior at theta");
  ModelArgs prior_model;
  std::string prior_kind, prior_theta;
  prior_model.add(prior_eval);
  prior_eval->add_option("kind", prior_kind, "br, bm, mm, jeffreys or uniform")->required();
  prior_eval->add_option("--theta", prior_theta, "comma-separated parameter values")->required();
  prior_eval->add_option("--seed", seed, "random seed");

  // cumulants
  auto* cum_cmd = app.add_subcommand("cumulants", "analytic (and optionally Monte Carlo) cumulants");
  ModelArgs cum_model;
  std::string cum_theta;
  std::size_t cum_mc = 0;
  cum_model.add(cum_cmd);
  cum_cmd->add_option("--theta", cum_theta, "comma-separated parameter values")->required();
  cum_cmd->add_option("--mc", cum_mc, "Monte Carlo draws (>= 1000)");
  cum_cmd->add_option("--seed", seed, "random seed");

  // bias coxsnell|posterior
  auto* bias_cmd = app.add_subcommand("bias", "first-order bias formulas");
  bias_cmd->require_subcommand(1);
  ModelArgs cs_model, pb_model;
  std::string cs_theta, pb_theta, pb_prior = "uniform";
  std::size_t cs_n = 0, pb_n = 0;
  auto* cs_cmd = bias_cmd->add_subcommand("coxsnell", "first-order MLE bias");
  cs_model.add(cs_cmd);
  cs_cmd->add_option("--theta", cs_theta, "comma-separated parameter values")->required();
  cs_cmd->add_option("--n", cs_n, "sample size")->required();
  cs_cmd->add_option("--seed", seed, "random seed");
  auto* pb_cmd = bias_cmd->add_subcommand("posterior", "first-order bias of the posterior mean");
  pb_model.add(pb_cmd);
  pb_cmd->add_option("--theta", pb_theta, "comma-separated parameter values")->required();
  pb_cmd->add_option("--n", pb_n, "sample size")->required();
  pb_cmd->add_option("--prior", pb_prior, "prior kind");
  pb_cmd->add_option("--seed", seed, "random seed");

  // laplace
  auto* lap_cmd = app.add_subcommand("laplace", "Laplace approximation of the posterior mean");
  ModelArgs lap_model;
  std::string lap_data, lap_prior = "uniform";
  lap_model.add(lap_cmd);
  lap_cmd->add_option("--data", lap_data, "data CSV (columns y | y1.., x1.., stratum)")->required();
  lap_cmd->add_option("--prior", lap_prior, "prior kind");
  lap_cmd->add_option("--seed", seed, "random seed");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "replicated bias study from a JSON config");
  std::string sim_config, sim_out;
  bool sim_full = false;
  std::optional<Seed> sim_seed;
  sim_cmd->add_option("config", sim_config, "experiment config JSON")->required();
  sim_cmd->add_option("--out", sim_out, "output directory for biases.csv, summary.json, boxplot.json");
  sim_cmd->add_flag("--full", sim_full, "full-scale profile: 1000 replicates x 10000 draws");
  sim_cmd->add_option("--seed", sim_seed, "override master_seed");

  // probe-order
  auto* probe_cmd = app.add_subcommand("probe-order", "empirical posterior-mean bias across sample sizes");
  ModelArgs probe_model;
  std::string probe_prior, probe_theta, probe_grid, probe_out;
  std::size_t probe_reps = 1000, probe_draws = 2000;
  probe_model.add(probe_cmd);
  probe_cmd->add_option("prior", probe_prior, "prior kind")->required();
  probe_cmd->add_option("--theta", probe_theta, "true parameter values")->required();
  probe_cmd->add_option("--n-grid", probe_grid, "comma-separated sample sizes")->required();
  probe_cmd->add_option("--replicates", probe_reps, "replicates per sample size");
  probe_cmd->add_option("--draws", probe_draws, "retained MCMC draws when no exact posterior mean exists");
  probe_cmd->add_option("--out", probe_out, "output directory for probe.csv and probe.json");
  probe_cmd->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (prior_cmd->parsed()) {
      const auto model = prior_model.build(seed);
      const ParamPoint theta = theta_for(*model, prior_theta);
      const PriorKind kind = parse_prior_kind(prior_kind);
      const PriorField field = make_prior(*model, kind, theta.values());
      json j;
      j["model"] = model->name();
      j["prior"] = prior_kind_name(kind);
      j["theta"] = as_list(theta.values());
      j["labels"] = theta.labels();
      // Cumulant fields for BR/BM/MM; closed forms are reported alongside.
      const Vector g = kind == PriorKind::Jeffreys || kind == PriorKind::Uniform
                           ? field.log_grad(theta.values())
                           : gradient_field(*model, kind)(theta.values());
      j["log_grad"] = as_list(g);
      j["closed_form"] = field.closed_form.empty() ? json(nullptr) : json(field.closed_form);
      if (field.has_density() && !field.closed_form.empty()) j["log_density"] = field.log_density(theta.values());
      print(j);
    } else if (cum_cmd->parsed()) {
      const auto model = cum_model.build(seed);
      const ParamPoint theta = theta_for(*model, cum_theta);
      const CumulantSet c = analytic_cumulants(*model, theta);
      json j;
      j["model"] = model->name();
      j["theta"] = as_list(theta.values());
      j["analytic"] = to_json(c);
      const BartlettResiduals br = bartlett_residuals(c);
      j["bartlett_residual_max"] = {br.second.cwiseAbs().maxCoeff(), br.third.max_abs()};
      if (cum_mc > 0) {
        const McCumulants mc = mc_cumulants(*model, theta, cum_mc, seed);
        j["monte_carlo"] = to_json(mc.estimate);
        j["monte_carlo"]["draws"] = mc.draws;
        j["monte_carlo"]["se"] = {{"kappa2_cross", matrix_to_json(mc.se.kappa2_cross)},
                                  {"kappa2_hess", matrix_to_json(mc.se.kappa2_hess)},
                                  {"kappa3_pure", tensor_to_json(mc.se.kappa3_pure)},
                                  {"kappa3_cross", tensor_to_json(mc.se.kappa3_cross)},
                                  {"kappa3_score", tensor_to_json(mc.se.kappa3_score)}};
      }
      print(j);
    } else if (cs_cmd->parsed()) {
      const auto model = cs_model.build(seed);
      const ParamPoint theta = theta_for(*model, cs_theta);
      const BiasVector b = cox_snell_bias(analytic_cumulants(*model, theta), cs_n);
      print({{"model", model->name()}, {"n", cs_n}, {"labels", theta.labels()}, {"bias", as_list(b.values)}});
    } else if (pb_cmd->parsed()) {
      const auto model = pb_model.build(seed);
      const ParamPoint theta = theta_for(*model, pb_theta);
      const PriorField prior = make_prior(*model, parse_prior_kind(pb_prior), theta.values());
      const BiasVector b = posterior_bias_first_order(*model, theta, prior, pb_n);
      print({{"model", model->name()},
             {"prior", pb_prior},
             {"n", pb_n},
             {"labels", theta.labels()},
             {"bias", as_list(b.values)},
             {"evaluated_at", "true_theta"}});
    } else if (lap_cmd->parsed()) {
      const auto model = lap_model.build(seed);
      const Dataset data = read_data_csv(lap_data);
      const MleResult mle = newton_mle(*model, data);
      if (!mle.converged())
        throw NumericError(std::string("maximum likelihood failed: ") + mle_status_name(mle.status));
      const PriorField prior = make_prior(*model, parse_prior_kind(lap_prior), mle.theta);
      json j;
      j["model"] = model->name();
      j["prior"] = lap_prior;
      j["labels"] = model->labels();
      j["mle"] = as_list(mle.theta);
      j["laplace_posterior_mean"] = as_list(laplace_posterior_mean(*model, data, prior, model->point(mle.theta)));
      if (auto exact = conjugate_posterior_mean(*model, data, prior)) j["exact_posterior_mean"] = as_list(*exact);
      print(j);
    } else if (sim_cmd->parsed()) {
      ExperimentConfig cfg = load_experiment_config(sim_config);
      if (sim_full) apply_full_profile(cfg);
      if (sim_seed) cfg.master_seed = *sim_seed;
      const BiasReport report = run_experiment(cfg);
      std::cout << summarize(report).format_table();
      for (const auto& [reason, count] : report.exclusion_reasons)
        std::cout << "  excluded (" << reason << "): " << count << '\n';
      if (!sim_out.empty()) {
        emit(report, sim_out, &cfg);
        std::cout << "wrote " << sim_out << "/{biases.csv,summary.json,boxplot.json}\n";
      }
    } else if (probe_cmd->parsed()) {
      const auto model = probe_model.build(seed);
      const ParamPoint theta = theta_for(*model, probe_theta);
      const PriorField prior = make_prior(*model, parse_prior_kind(probe_prior), theta.values());
      ProbeOptions opt;
      opt.mcmc_draws = probe_draws;
      const ProbeTable t =
          bias_order_probe(*model, prior, theta, parse_counts(probe_grid, "--n-grid"), probe_reps, seed, opt);
      if (!probe_out.empty()) {
        std::filesystem::create_directories(probe_out);
        std::ofstream csv(std::filesystem::path(probe_out) / "probe.csv", std::ios::binary);
        t.write_csv(csv);
        std::ofstream js(std::filesystem::path(probe_out) / "probe.json", std::ios::binary);
        js << t.summary_json().dump(2) << '\n';
        if (!csv || !js) throw UsageError("cannot write to '" + probe_out + "'");
      }
      print(t.summary_json());
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
