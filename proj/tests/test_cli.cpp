#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dissipic/cli.hpp"
#include "dissipic/io.hpp"

using namespace dissipic;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = DISSIPIC_CONFIG_DIR;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dissipic_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path write_config(const fs::path& dir, const std::string& name, const Json& j) {
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST(Cli, VerifyPendulumIsFeasible) {
  const fs::path out = fresh_dir("verify");
  const CliRun r = run({"verify", (kConfigs / "pendulum.json").string(), "--out", out.string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const Json j = Json::parse(read_file(out / "certificate.json"));
  EXPECT_TRUE(j.at("feasible").get<bool>());
  EXPECT_EQ(j.at("header").at("version"), kVersion);
  EXPECT_EQ(j.at("header").at("seed"), 1);
  EXPECT_EQ(j.at("header").at("config_hash").get<std::string>().size(), 16u);
}

TEST(Cli, UnstableScalarIsInfeasible) {
  const CliRun r = run({"verify", (kConfigs / "unstable_scalar.json").string(), "--out", fresh_dir("unstable").string()});
  EXPECT_EQ(r.code, kExitInfeasible) << r.err;
}

TEST(Cli, MalformedJsonReportsLine) {
  const CliRun r = run({"verify", (kConfigs / "malformed.json").string(), "--out", fresh_dir("malformed").string()});
  EXPECT_EQ(r.code, kExitError);
  EXPECT_NE(r.err.find("malformed.json:3:"), std::string::npos) << r.err;
}

TEST(Cli, BadArgumentsAreErrors) {
  EXPECT_EQ(run({"frobnicate", "x.json"}).code, kExitError);
  EXPECT_EQ(run({"verify"}).code, kExitError);
  EXPECT_EQ(run({"verify", "/nonexistent/config.json", "--out", fresh_dir("missing").string()}).code, kExitError);
  EXPECT_EQ(run({"verify", (kConfigs / "pendulum.json").string(), "--seed", "abc"}).code, kExitError);
}

TEST(Cli, SynthesizeLtiPendulum) {
  const fs::path out = fresh_dir("synth");
  const CliRun r = run({"synthesize", (kConfigs / "pendulum.json").string(), "--lti", "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const RinnController k = controller_from_json(Json::parse(read_file(out / "controller.json")).at("controller"));
  EXPECT_EQ(max_abs(k.B_kw), 0.0);
  EXPECT_EQ(max_abs(k.D_kuw), 0.0);
  const Json cert = Json::parse(read_file(out / "certificate.json"));
  EXPECT_LE(cert.at("certificate").at("feasibility_residual").get<double>(), 1e-6);
  const ThetaHat th = theta_hat_from_json(Json::parse(read_file(out / "theta_hat.json")).at("theta_hat"));
  EXPECT_EQ(th.S.rows(), 2);

  // The synthesized controller verifies from file.
  Json cfg = Json::parse(read_file(kConfigs / "pendulum.json"));
  cfg["controller"] = Json{{"source", "file"}, {"path", "controller.json"}};
  const fs::path c = write_config(out, "verify_file.json", cfg);
  EXPECT_EQ(run({"verify", c.string(), "--out", out.string()}).code, kExitOk);
}

TEST(Cli, SynthesizeFlexrodAndInfeasibleGain) {
  EXPECT_EQ(run({"synthesize", (kConfigs / "flexrod.json").string(), "--out", fresh_dir("flex").string()}).code, kExitOk);
  const fs::path out = fresh_dir("infeasible");
  EXPECT_EQ(run({"synthesize", (kConfigs / "infeasible_gain.json").string(), "--out", out.string()}).code,
            kExitInfeasible);
  EXPECT_FALSE(Json::parse(read_file(out / "synthesis.json")).at("feasible").get<bool>());
}

TEST(Cli, OverridesChangeHashAndAreRecorded) {
  const fs::path a = fresh_dir("hash_a"), b = fresh_dir("hash_b");
  ASSERT_EQ(run({"synthesize", (kConfigs / "pendulum.json").string(), "--out", a.string()}).code, kExitOk);
  ASSERT_EQ(run({"synthesize", (kConfigs / "pendulum.json").string(), "--out", b.string(), "--t-rs", "1.2",
                 "--backoff", "1.5", "--seed", "9"})
                .code,
            kExitOk);
  const Json ha = Json::parse(read_file(a / "theta_hat.json")), hb = Json::parse(read_file(b / "theta_hat.json"));
  EXPECT_NE(ha.at("header").at("config_hash"), hb.at("header").at("config_hash"));
  EXPECT_EQ(hb.at("header").at("seed"), 9);
  EXPECT_DOUBLE_EQ(hb.at("t_rs").get<double>(), 1.2);
  EXPECT_DOUBLE_EQ(hb.at("backoff").get<double>(), 1.5);
}

TEST(Cli, IdentityTrainHasNoProjections) {
  const fs::path out = fresh_dir("train_id");
  ASSERT_EQ(run({"train", (kConfigs / "pendulum_identity_train.json").string(), "--out", out.string()}).code, kExitOk);
  const auto rows = lines(read_file(out / "history.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].rfind("# dissipic ", 0), 0u);
  EXPECT_EQ(rows[1], "iteration,mean_reward,was_projected,projection_distance,cert_residual");
  for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_NE(rows[i].find(",0,0,"), std::string::npos) << rows[i];
}

TEST(Cli, TrainIsReproducible) {
  Json cfg = Json::parse(read_file(kConfigs / "pendulum.json"));
  cfg["training"]["iterations"] = 2;
  cfg["training"]["num_rollouts"] = 2;
  const fs::path dir = fresh_dir("train_seed");
  const fs::path c = write_config(dir, "cfg.json", cfg);
  ASSERT_EQ(run({"train", c.string(), "--out", (dir / "a").string(), "--seed", "5"}).code, kExitOk);
  ASSERT_EQ(run({"train", c.string(), "--out", (dir / "b").string(), "--seed", "5"}).code, kExitOk);
  const auto a = lines(read_file(dir / "a" / "history.csv")), b = lines(read_file(dir / "b" / "history.csv"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 2; i < a.size(); ++i) {
    std::istringstream sa(a[i]), sb(b[i]);
    for (std::string x, y; std::getline(sa, x, ',') && std::getline(sb, y, ',');) {
      EXPECT_NEAR(std::stod(x), std::stod(y), 1e-6);
    }
  }
}

TEST(Cli, SimulateWritesTrajectoriesAndBode) {
  const fs::path out = fresh_dir("sim");
  ASSERT_EQ(run({"simulate", (kConfigs / "flexrod.json").string(), "--out", out.string()}).code, kExitOk);
  const auto bode = lines(read_file(out / "bode.csv"));
  ASSERT_EQ(bode.size(), 102u);
  EXPECT_EQ(bode[1], "omega,mag_rigid,mag_flexible,bound");
  EXPECT_TRUE(Json::parse(read_file(out / "simulate.json")).at("bode").at("ok").get<bool>());
  const auto traj = lines(read_file(out / "trajectory_0.csv"));
  EXPECT_EQ(traj.size(), 2u + 2000u);
}

TEST(Cli, ZeroHorizonGivesHeaderOnlyCsv) {
  Json cfg = Json::parse(read_file(kConfigs / "pendulum.json"));
  cfg["simulation"] = Json{{"rollouts", 1}, {"steps", 0}};
  const fs::path dir = fresh_dir("zero");
  const fs::path c = write_config(dir, "cfg.json", cfg);
  ASSERT_EQ(run({"simulate", c.string(), "--out", dir.string()}).code, kExitOk);
  const auto rows = lines(read_file(dir / "trajectory_0.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], "t,x0,x1,xk0,xk1,u0,y0,e0,e1,reward");
}

TEST(Io, RoundTripsMatricesAndControllers) {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(mat_from_json(to_json(m), "m"), m);
  const Mat empty = Mat::Zero(3, 0);
  const Mat back = mat_from_json(to_json(empty), "e");
  EXPECT_EQ(back.rows(), 3);
  EXPECT_EQ(back.cols(), 0);
  RinnController k = RinnController::zeros(2, 1, 1, 1, Activation::Relu);
  k.A_k << 1, 2, 3, 4;
  const RinnController k2 = controller_from_json(to_json(k));
  EXPECT_EQ(k2.A_k, k.A_k);
  EXPECT_EQ(k2.activation, Activation::Relu);
  EXPECT_THROW(mat_from_json(Json::parse("[[1, 2], [3]]"), "ragged"), Error);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
