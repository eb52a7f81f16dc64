#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "nodalmc/acceptance.hpp"
#include "nodalmc/cli/commands.hpp"

using namespace nodalmc;
using namespace nodalmc::cli;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_path(const char* name) { return std::string(NODALMC_SOURCE_DIR) + "/configs/" + name; }

constexpr const char* kMinimal = R"(seed = 3

[model]
name = "two_fermion_trap"
theta = [0.0]

[propagation]
walkers = 200
dt = 1e-3
total_time = 0.3
lambda = 0.0

[vmc]
steps = 2000
)";

}  // namespace

TEST(Configs, ShippedFilesMatchTheAcceptanceRuns) {
  const std::vector<std::pair<const char*, const char*>> pairs{
      {"interval.toml", acceptance::kIntervalToml},
      {"interval_symmetric.toml", acceptance::kSymmetricIntervalToml},
      {"odd_well_theta0.toml", acceptance::kOddWellTheta0Toml},
      {"odd_well_theta01.toml", acceptance::kOddWellTheta01Toml},
      {"odd_well_theta03.toml", acceptance::kOddWellTheta03Toml},
      {"odd_well_start02.toml", acceptance::kOddWellStartToml},
      {"two_fermion.toml", acceptance::kTwoFermionToml},
  };
  for (const auto& [file, text] : pairs) {
    const auto from_file = load_config(config_path(file));
    const auto embedded = parse_config_string(text, file);
    EXPECT_EQ(config_digest(from_file), config_digest(embedded)) << file;
    EXPECT_NO_THROW(resolve(from_file)) << file;
  }
}

TEST(Config, DefaultsAndResolution) {
  const auto c = parse_config_string(kMinimal);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.model.name, "two_fermion_trap");
  EXPECT_EQ(c.propagation.resample_interval, 10u);
  ASSERT_TRUE(c.propagation.lambda);
  const auto r = resolve(c);
  EXPECT_EQ(r.walkers, 200u);
  EXPECT_EQ(r.propagation.mode, diffusion::PropagationMode::drifted);
  EXPECT_EQ(r.propagation.initial, diffusion::InitialDistribution::trial_density);
  EXPECT_FALSE(r.lambda_auto);
}

TEST(Config, LambdaAuto) {
  const auto c = parse_config_string(R"([model]
name = "interval"
[propagation]
lambda = "auto"
)");
  EXPECT_FALSE(c.propagation.lambda);
  EXPECT_TRUE(resolve(c).lambda_auto);
}

TEST(Config, OverridesApplyBeforeValidation) {
  const auto c = parse_config_string(kMinimal, "min", {"propagation.dt=5e-4", "seed=9", "model.theta=[0.05]", "oracle.boundary=linear_ghost"});
  EXPECT_EQ(c.propagation.dt, 5e-4);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model.theta, std::vector<double>{0.05});
  EXPECT_EQ(c.oracle.boundary, "linear_ghost");
  EXPECT_THROW(parse_config_string(kMinimal, "min", {"propagation.dt"}), ConfigError);
  EXPECT_THROW(parse_config_string(kMinimal, "min", {"seed.x=1"}), ConfigError);
}

TEST(Config, ErrorsCarryLineNumbers) {
  try {
    parse_config_string("seed = 1\n[model]\nname = \"interval\"\ncolour = 3\n", "bad.toml");
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.toml:4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
  EXPECT_THROW(parse_config_string("[model]\nname = \"interval\"\n[propagation]\nwalkers = -4\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[model]\nname = \"interval\"\n[propagation]\nmode = \"sideways\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[model\nname = 1"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.toml"), IoError);
}

TEST(Config, ResolutionChecks) {
  EXPECT_THROW(resolve(parse_config_string("[model]\nname = \"nope\"\n")), CatalogError);
  EXPECT_THROW(resolve(parse_config_string("[model]\nname = \"odd_well3d\"\ntheta = [0.1]\n")), ConfigError);
  // 0.1 / (1e-3 · 10) = 10 resampling blocks is too short for the energy fit
  EXPECT_THROW(resolve(parse_config_string("[model]\nname = \"interval\"\n[propagation]\ndt = 1e-3\ntotal_time = 0.1\n")), ConfigError);
}

TEST(Digest, IgnoresThreadsAndOutputOnly) {
  const auto a = parse_config_string(kMinimal);
  const auto b = parse_config_string(kMinimal, "x", {"threads=4", "output.csv=out.csv", "output.walltime=false"});
  const auto c = parse_config_string(kMinimal, "x", {"propagation.walkers=201"});
  EXPECT_EQ(config_digest(a), config_digest(b));
  EXPECT_NE(config_digest(a), config_digest(c));
  EXPECT_EQ(config_digest(a).size(), 16u);
}

TEST(Monomials, Parsing) {
  const Configuration x{2.0, 3.0, 5.0};
  EXPECT_EQ(parse_monomial("1", 3)(x), 1.0);
  EXPECT_EQ(parse_monomial("y^2", 3)(x), 9.0);
  EXPECT_EQ(parse_monomial("x1*x3^2", 3)(x), 50.0);
  EXPECT_EQ(parse_monomial("0.5 * z", 3)(x), 2.5);
  EXPECT_THROW(parse_monomial("w", 3), ConfigError);
  EXPECT_THROW(parse_monomial("z", 2), ConfigError);
  EXPECT_THROW(parse_monomial("x^a", 3), ConfigError);
  const auto d = functionals_or_default({}, 2);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[2].name, "y");
}

TEST(Output, CsvAndJson) {
  auto r = make_record("grad", EstimateWithError{{1.0, -2.5}, {0.1, 0.2}, {0.01, 0.0, 0.0, 0.04}, 50.0, "m", {}, {}});
  r.seed = 4;
  r.config_digest = "abc";
  const auto csv = render_csv({r, make_record("e,1", 0.25)});
  EXPECT_EQ(csv,
            "quantity,value,stderr,n_eff,seed,config_digest,walltime_s\n"
            "grad[0],1,0.10000000000000001,50,4,abc,0\n"
            "grad[1],-2.5,0.20000000000000001,50,4,abc,0\n"
            "\"e,1\",0.25,0,0,0,,0\n");
  const auto j = nlohmann::json::parse(render_json({r}));
  EXPECT_EQ(j["records"][0]["quantity"], "grad");
  EXPECT_EQ(j["records"][0]["covariance"][1][1], 0.04);
  EXPECT_EQ(j["records"][0]["metadata"]["method"], "m");
  EXPECT_THROW(write_outputs({}, OutputFormat::csv, "/tmp/x.csv"), UsageError);
}

TEST(Commands, VmcRecords) {
  std::ostringstream log;
  const auto rec = run_command("vmc", parse_config_string(kMinimal), log);
  ASSERT_EQ(rec.size(), 3u);
  EXPECT_EQ(rec[0].quantity, "vmc_energy");
  EXPECT_NEAR(rec[0].value[0], 2.0, 1e-12);
  EXPECT_EQ(rec[0].seed, 3u);
  EXPECT_THROW(run_command("dance", parse_config_string(kMinimal), log), UsageError);
}

TEST(Commands, DmcIsReproducibleWithoutWalltime) {
  std::ostringstream log;
  const auto c = parse_config_string(kMinimal, "min", {"output.walltime=false"});
  const auto a = render_csv(run_command("dmc", c, log));
  auto c3 = c;
  c3.threads = 3;
  const auto b = render_csv(run_command("dmc", c3, log));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("energy,2,0,"), std::string::npos) << a;
}

TEST(Commands, LambdaAdmissibility) {
  EXPECT_NO_THROW(check_lambda_admissible(0.0, EstimateWithError::scalar_estimate(1.0, 0.1, 10, "")));
  EXPECT_THROW(check_lambda_admissible(0.9, EstimateWithError::scalar_estimate(1.0, 0.1, 10, "")), StatisticalError);
}

TEST(Commands, ModelListing) {
  const auto j = nlohmann::json::parse(list_models_json());
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), models::catalog_names().size());
  const auto d = describe_model(models::make_model("odd_well3d"));
  EXPECT_EQ(d["name"], "odd_well3d");
}

TEST(Commands, WritesOutputFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = (dir / "nodalmc_cli_test.csv").string();
  std::ostringstream log;
  const auto rec = run_command("vmc", parse_config_string(kMinimal), log);
  write_outputs(rec, OutputFormat::csv, csv);
  EXPECT_EQ(read_file(csv), render_csv(rec));
  std::filesystem::remove(csv);
}
