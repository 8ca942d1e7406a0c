#include "zoo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace brprior;
namespace fs = std::filesystem;

namespace {

nlohmann::json exponential_config() {
  return nlohmann::json::parse(R"({
    "schema_version": 1,
    "model": "exponential",
    "true_theta": [2.0],
    "priors": ["br", "uniform"],
    "n": 20,
    "replicates": 10000,
    "mcmc": "exact",
    "master_seed": 20240601
  })");
}

nlohmann::json logistic_config(std::size_t n, std::size_t replicates) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "schema_version": 1,
    "model": "logistic",
    "true_theta": [-1.25, 0.75, 0.2],
    "priors": ["br", "jeffreys"],
    "rho": 0.1,
    "mcmc": {"draws": 600, "burn_in": 100, "pilot_draws": 500},
    "master_seed": 99
  })");
  j["n"] = n;
  j["replicates"] = replicates;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string csv_of(const BiasReport& r) {
  std::ostringstream os;
  write_biases_csv(r, os);
  return os.str();
}

void expect_usage_error(const nlohmann::json& j, const std::string& fragment) {
  try {
    parse_experiment_config(j);
    FAIL() << "expected UsageError mentioning " << fragment;
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (old_) ::setenv(name_, old_->c_str(), 1);
    else ::unsetenv(name_);
  }
  ScopedEnv(const ScopedEnv&) = delete;
  ScopedEnv& operator=(const ScopedEnv&) = delete;

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

TEST(Config, ParsesAndRoundTrips) {
  const ExperimentConfig c = parse_experiment_config(logistic_config(30, 5));
  EXPECT_EQ(c.model, "logistic");
  EXPECT_EQ(c.priors.size(), 2u);
  EXPECT_EQ(c.model_options.rows, 30u);
  EXPECT_DOUBLE_EQ(c.model_options.rho, 0.1);
  EXPECT_EQ(c.mcmc.draws, 600u);
  EXPECT_FALSE(c.exact);
  const ExperimentConfig again = parse_experiment_config(to_json(c));
  EXPECT_EQ(to_json(again).dump(), to_json(c).dump());
}

TEST(Config, RejectsBadInput) {
  auto j = exponential_config();
  j["replciates"] = 3;
  expect_usage_error(j, "replciates");

  j = exponential_config();
  j["schema_version"] = 2;
  expect_usage_error(j, "schema_version");

  j = exponential_config();
  j["priors"] = {"firth"};
  expect_usage_error(j, "valid: br");

  j = exponential_config();
  j["mcmc"] = "approximate";
  expect_usage_error(j, "mcmc");

  j = exponential_config();
  j["mcmc"] = {{"draws", 100}, {"thin", 2}};
  expect_usage_error(j, "thin");

  j = exponential_config();
  j["mcmc"] = {{"pilot_draws", 100}};
  expect_usage_error(j, "pilot_draws");

  j = exponential_config();
  j["replicates"] = 0;
  expect_usage_error(j, "replicates");

  j = exponential_config();
  j.erase("true_theta");
  expect_usage_error(j, "true_theta");

  j = exponential_config();
  j["model"] = {{"name", "location"}, {"kernal", "gaussian"}};
  expect_usage_error(j, "kernal");

  EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), UsageError);
}

TEST(Config, FullProfile) {
  ExperimentConfig c = parse_experiment_config(logistic_config(30, 5));
  apply_full_profile(c);
  EXPECT_EQ(c.replicates, 1000u);
  EXPECT_EQ(c.mcmc.draws, 10000u);
}

TEST(Experiment, ExponentialBrIsUnbiased) {
  const BiasReport r = run_experiment(parse_experiment_config(exponential_config()));
  ASSERT_EQ(r.included.size(), 10000u);
  EXPECT_EQ(r.excluded(), 0u);
  const Summary s = summarize(r);
  ASSERT_EQ(s.entries.size(), 2u);
  EXPECT_LT(std::abs(s.entries[0].mean[0]), 3.0 * (*s.entries[0].se)[0]);
  // Uniform prior: exact bias 2 theta / (n - 1).
  EXPECT_LT(std::abs(s.entries[1].mean[0] - 4.0 / 19.0), 3.0 * (*s.entries[1].se)[0]);
}

TEST(Experiment, MismatchedThetaAndMissingExactForm) {
  auto j = exponential_config();
  j["true_theta"] = {1.0, 2.0};
  EXPECT_THROW(run_experiment(parse_experiment_config(j)), UsageError);
  j = exponential_config();
  j["true_theta"] = {-1.0};
  EXPECT_THROW(run_experiment(parse_experiment_config(j)), UsageError);
  j = logistic_config(30, 2);
  j["mcmc"] = "exact";
  EXPECT_THROW(run_experiment(parse_experiment_config(j)), UsageError);
}

TEST(Experiment, SingleReplicateHasNoSpread) {
  auto j = exponential_config();
  j["replicates"] = 1;
  const BiasReport r = run_experiment(parse_experiment_config(j));
  const Summary s = summarize(r);
  EXPECT_FALSE(s.entries[0].sd.has_value());
  const auto sj = summary_json(r, s);
  EXPECT_TRUE(sj["estimators"]["br"]["sd"].is_null());
  EXPECT_NE(s.format_table().find("NA"), std::string::npos);
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
  const ExperimentConfig c = parse_experiment_config(logistic_config(30, 6));
  std::string one, many;
  {
    ScopedEnv env("PRIORBENCH_THREADS", "1");
    one = csv_of(run_experiment(c));
  }
  {
    ScopedEnv env("PRIORBENCH_THREADS", "4");
    many = csv_of(run_experiment(c));
  }
  EXPECT_EQ(one, many);
  {
    ScopedEnv env("PRIORBENCH_THREADS", "lots");
    EXPECT_THROW(run_experiment(c), UsageError);
  }
}

TEST(Experiment, CsvHasOneRowPerEstimatorReplicateComponent) {
  auto j = exponential_config();
  j["replicates"] = 7;
  j["include_mle"] = true;
  const BiasReport r = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(r.estimators.size(), 3u);
  EXPECT_EQ(r.estimators.back(), "mle");
  const std::string s = csv_of(r);
  EXPECT_EQ(s.rfind("prior,replicate,component,bias\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 3 * 7);
  EXPECT_NE(s.find("\nmle,6,theta,"), std::string::npos);
}

TEST(Experiment, ExclusionsAreCountedOncePerReplicate) {
  const BiasReport r = run_experiment(parse_experiment_config(logistic_config(10, 30)));
  std::size_t counted = 0;
  for (const auto& [reason, k] : r.exclusion_reasons) {
    counted += k;
    EXPECT_TRUE(reason.rfind("mle_", 0) == 0 || reason == "tuning_failure" || reason == "mcmc_failure" ||
                reason == "design_rank_deficient")
        << reason;
  }
  EXPECT_EQ(counted, r.excluded());
  EXPECT_EQ(r.included.size() + r.excluded(), 30u);
  EXPECT_GT(r.excluded(), 0u);  // separation is common with 10 observations
  for (const Matrix& b : r.biases) EXPECT_EQ(static_cast<std::size_t>(b.rows()), r.included.size());
  const auto sj = summary_json(r, summarize(r));
  EXPECT_EQ(sj["included"].get<std::size_t>() + sj["excluded"].get<std::size_t>(), 30u);
}

TEST(Output, EmitIsByteIdentical) {
  auto j = exponential_config();
  j["replicates"] = 25;
  const ExperimentConfig c = parse_experiment_config(j);
  const fs::path base = fs::temp_directory_path() / ("brprior_emit_" + std::to_string(::getpid()));
  emit(run_experiment(c), base / "a", &c);
  emit(run_experiment(c), base / "b", &c);
  for (const char* f : {"biases.csv", "summary.json", "boxplot.json"}) {
    ASSERT_TRUE(fs::exists(base / "a" / f)) << f;
    EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
  }
  const auto summary = nlohmann::json::parse(slurp(base / "a" / "summary.json"));
  EXPECT_EQ(summary["config"]["replicates"], 25);
  const auto box = nlohmann::json::parse(slurp(base / "a" / "boxplot.json"));
  EXPECT_EQ(box["quantile_type"], 7);
  EXPECT_TRUE(box["estimators"]["br"]["theta"].contains("median"));
  fs::remove_all(base);
}

TEST(Output, QuantilesAreTypeSeven) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_type7(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_type7(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_type7(v, 0.75), 3.25);
  const FiveNumber f = five_number({4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(f.min, 1);
  EXPECT_DOUBLE_EQ(f.max, 4);
  EXPECT_DOUBLE_EQ(five_number({5}).q1, 5);
  EXPECT_THROW(quantile_type7({}, 0.5), UsageError);
}

TEST(Output, TableLayout) {
  BiasReport r;
  r.model = "toy";
  r.estimators = {"br", "uniform"};
  r.labels = {"b1", "b2"};
  r.true_theta = Vector::Zero(2);
  r.configured = 3;
  r.included = {0, 1, 2};
  Matrix zeros = Matrix::Zero(3, 2);
  r.biases = {zeros, zeros};
  r.step_sizes = {Vector(), Vector()};
  const std::string t = summarize(r).format_table();
  std::istringstream lines(t);
  std::string header, labels, mean, sd;
  std::getline(lines, header);
  std::getline(lines, labels);
  std::getline(lines, mean);
  std::getline(lines, sd);
  EXPECT_NE(header.find("br"), std::string::npos);
  EXPECT_NE(header.find("uniform"), std::string::npos);
  EXPECT_EQ(mean.rfind("Mean", 0), 0u);
  EXPECT_EQ(sd.rfind("Stand dev", 0), 0u);
  EXPECT_EQ(std::count(mean.begin(), mean.end(), '.'), 4);
  EXPECT_EQ(mean.find('-'), std::string::npos);
  EXPECT_NE(sd.find("0.000"), std::string::npos);
  EXPECT_NE(t.find("included 3, excluded 0"), std::string::npos);
}
