#include "dissipic/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "dissipic/interconnect.hpp"
#include "dissipic/io.hpp"
#include "dissipic/simulate.hpp"
#include "dissipic/trainer.hpp"

namespace dissipic {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

struct RunContext {
  std::string command;
  Json config;
  fs::path config_dir;
  fs::path out;
  std::uint64_t seed = 0;
  std::string hash;
};

Json section(const Json& cfg, const char* key) {
  if (!cfg.contains(key)) return Json::object();
  if (!cfg.at(key).is_object()) config_error(std::string("\"") + key + "\" must be an object");
  return cfg.at(key);
}

template <class T>
T field(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    config_error(std::string("\"") + key + "\" has the wrong type");
  }
}

Json header(const RunContext& ctx) {
  return Json{{"tool", "dissipic"}, {"version", kVersion}, {"config_hash", ctx.hash}, {"seed", ctx.seed},
              {"command", ctx.command}};
}

void write_json(const RunContext& ctx, const std::string& name, Json body) {
  body["header"] = header(ctx);
  std::ofstream f(ctx.out / name);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write " + (ctx.out / name).string());
  f << body.dump(2) << '\n';
}

std::ofstream open_csv(const RunContext& ctx, const std::string& name) {
  std::ofstream f(ctx.out / name);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write " + (ctx.out / name).string());
  f << "# dissipic " << kVersion << " config=" << ctx.hash << " seed=" << ctx.seed << " command=" << ctx.command
    << '\n';
  return f;
}

struct Setup {
  std::string env_name;
  std::optional<Environment> env;
  std::optional<FlexrodSetup> flexrod;
  UncertainLtiPlant plant;
  IqcSpec iqc;
  SupplyRate X;
  Eigen::Index n_phi = 4;
  Activation activation = Activation::Tanh;
};

Setup load_setup(const Json& cfg) {
  Setup s;
  std::optional<Mat> env_m;
  if (cfg.contains("environment")) {
    const Json& e = cfg.at("environment");
    const Json params = e.is_object() ? e : Json::object();
    s.env_name = e.is_string() ? e.get<std::string>() : field<std::string>(params, "name", "");
    if (s.env_name == "pendulum") {
      PendulumParams p;
      p.steps = field(params, "steps", p.steps);
      p.dt = field(params, "dt", p.dt);
      p.u_limit = field(params, "u_limit", p.u_limit);
      const PendulumSetup ps = pendulum_env(p);
      s.env = ps.env;
      s.plant = ps.plant;
      env_m = ps.M_dp;
    } else if (s.env_name == "flexrod") {
      FlexrodParams p;
      p.horizon = field(params, "horizon", p.horizon);
      p.dt = field(params, "dt", p.dt);
      p.delta_gain = field(params, "delta_gain", p.delta_gain);
      p.lambda_scale = field(params, "lambda_scale", p.lambda_scale);
      p.u_limit = field(params, "u_limit", p.u_limit);
      s.flexrod = flexrod_env(p);
      s.env = s.flexrod->env;
      s.plant = s.flexrod->plant;
      env_m = s.flexrod->M_dp;
    } else {
      config_error("unknown environment \"" + s.env_name + "\" (expected pendulum or flexrod)");
    }
  }
  if (cfg.contains("plant")) {
    s.plant = plant_from_json(cfg.at("plant"));
  } else if (!s.env) {
    config_error("config needs a \"plant\" or an \"environment\"");
  }
  if (cfg.contains("iqc")) {
    s.iqc = iqc_from_json(cfg.at("iqc"));
  } else if (env_m && !cfg.contains("plant")) {
    s.iqc = IqcSpec::quadratic(*env_m, s.plant.n_v(), IqcKind::StaticIqc);
  } else if (s.plant.n_v() == 0 && s.plant.n_w() == 0) {
    s.iqc = IqcSpec::quadratic(Mat::Zero(0, 0), 0, IqcKind::StaticIqc);
  } else {
    config_error("plant has uncertainty channels but the config has no \"iqc\"");
  }
  s.X = supply_from_json(section(cfg, "supply"), s.plant.n_d(), s.plant.n_e());
  const Json c = section(cfg, "controller");
  s.n_phi = field<Eigen::Index>(c, "n_phi", 4);
  s.activation = activation_from_string(field<std::string>(c, "activation", "tanh"));
  return s;
}

SynthesisProblem make_problem(const Setup& s, const Json& cfg) {
  const Json syn = section(cfg, "synthesis");
  const auto [plant, m] = plant_static_form(s.plant, s.iqc);
  SynthesisProblem prob = SynthesisProblem::make(plant, m, s.X, s.n_phi, field(syn, "t_rs", 1.0), s.activation);
  return prob;
}

ProjectOptions project_options(const Json& cfg) {
  const Json syn = section(cfg, "synthesis");
  ProjectOptions o;
  o.beta = field(syn, "backoff", 1.0);
  o.eps_rs_cap = field(syn, "eps_rs_cap", 10.0);
  o.lti = field(syn, "lti", false);
  return o;
}

struct Synthesized {
  RinnController k;
  Mat P, Lambda;
  ThetaHatProjection projection;
};

// LTI: the initialization program. Otherwise the same seed (theta = 0,
// P = I, Lambda = eps I) projected onto the unrestricted set.
Synthesized synthesize(const SynthesisProblem& prob, const ProjectOptions& opts) {
  if (opts.lti) {
    const InitResult r = init_lti(prob, opts);
    return {r.k, r.P, r.Lambda, r.projection};
  }
  const Eigen::Index np = prob.n_p();
  const ThetaHat seed = construct_theta_hat(prob, prob.controller_shape(), eye(2 * np), tol::kLambdaMin * eye(prob.n_phi));
  Synthesized out;
  out.projection = theta_hat_project(prob, seed, opts);
  const Reconstruction rec = reconstruct_theta(prob, out.projection.theta_hat);
  out.k = rec.k;
  out.P = rec.P;
  out.Lambda = rec.Lambda;
  return out;
}

Json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) config_error("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

struct Acquired {
  RinnController k;
  std::optional<StorageCertificate> cert;  // when the controller came with one
};

Acquired acquire_controller(const RunContext& ctx, const Setup& s) {
  const Json c = section(ctx.config, "controller");
  const std::string source = field<std::string>(c, "source", "synthesize");
  if (source == "synthesize") {
    const SynthesisProblem prob = make_problem(s, ctx.config);
    const Synthesized syn = synthesize(prob, project_options(ctx.config));
    StorageCertificate cert;
    cert.P = syn.P;
    cert.Lambda = syn.Lambda;
    cert.feasibility_residual = closed_loop_residual(prob, syn.k, syn.P, syn.Lambda);
    return {syn.k, cert};
  }
  if (source == "zero") {
    const Eigen::Index nk = field<Eigen::Index>(c, "n_k", plant_static_form(s.plant, s.iqc).first.n_p());
    return {RinnController::zeros(nk, s.n_phi, s.plant.n_y(), s.plant.n_u(), s.activation), std::nullopt};
  }
  if (source == "file") {
    const std::string path = field<std::string>(c, "path", "");
    if (path.empty()) config_error("controller source \"file\" needs \"path\"");
    const Json j = read_json_file(ctx.config_dir / path);
    return {controller_from_json(j.contains("controller") ? j.at("controller") : j), std::nullopt};
  }
  if (source == "inline") return {controller_from_json(c), std::nullopt};
  config_error("unknown controller source \"" + source + "\"");
}

int cmd_verify(const RunContext& ctx, std::ostream& out) {
  UncertainLtiSystem sys;
  IqcSpec iqc = IqcSpec::quadratic(Mat::Zero(0, 0), 0, IqcKind::StaticIqc);
  Eigen::Index n_phi = 0;
  SupplyRate X;
  Json body;
  if (ctx.config.contains("system")) {
    sys = system_from_json(ctx.config.at("system"));
    if (ctx.config.contains("iqc")) iqc = iqc_from_json(ctx.config.at("iqc"));
    n_phi = field<Eigen::Index>(ctx.config, "n_phi", 0);
    X = supply_from_json(section(ctx.config, "supply"), sys.n_d(), sys.n_e());
  } else {
    const Setup s = load_setup(ctx.config);
    const Acquired a = acquire_controller(ctx, s);
    sys = close_loop(s.plant, a.k);
    iqc = s.iqc;
    n_phi = a.k.n_phi();
    X = s.X;
    body["controller"] = to_json(a.k);
  }
  VerifyOptions opts;
  opts.lambda_k_min = n_phi > 0 ? tol::kLambdaMin : 0.0;
  const VerifyResult r = verify(sys, iqc, n_phi, X, opts);
  body["feasible"] = r.feasible();
  body["phase1_margin"] = r.phase1_margin;
  if (r.feasible()) body["certificate"] = to_json(*r.cert);
  write_json(ctx, "certificate.json", body);
  if (r.feasible()) {
    out << "feasible: lambda_max = " << r.cert->feasibility_residual << '\n';
    return kExitOk;
  }
  out << "infeasible: phase-one margin " << r.phase1_margin << '\n';
  return kExitInfeasible;
}

int cmd_synthesize(const RunContext& ctx, std::ostream& out) {
  const Setup s = load_setup(ctx.config);
  const SynthesisProblem prob = make_problem(s, ctx.config);
  const ProjectOptions opts = project_options(ctx.config);
  Synthesized syn;
  try {
    syn = synthesize(prob, opts);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InfeasibleConstraintSet) throw;
    write_json(ctx, "synthesis.json", Json{{"feasible", false}, {"reason", e.what()}});
    out << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  }
  StorageCertificate cert;
  cert.P = syn.P;
  cert.Lambda = syn.Lambda;
  cert.feasibility_residual = closed_loop_residual(prob, syn.k, syn.P, syn.Lambda);
  write_json(ctx, "controller.json", Json{{"controller", to_json(syn.k)}, {"lti", opts.lti}});
  write_json(ctx, "certificate.json", Json{{"feasible", true}, {"certificate", to_json(cert)}});
  write_json(ctx, "theta_hat.json",
             Json{{"theta_hat", to_json(syn.projection.theta_hat)},
                  {"delta_star", syn.projection.delta_star},
                  {"distance", syn.projection.distance},
                  {"eps_rs", syn.projection.eps_rs},
                  {"t_rs", prob.t_rs},
                  {"backoff", opts.beta}});
  write_json(ctx, "synthesis.json", Json{{"feasible", true},
                                         {"lambda_max", cert.feasibility_residual},
                                         {"eps_rs", syn.projection.eps_rs},
                                         {"n_k", syn.k.n_k()},
                                         {"n_phi", syn.k.n_phi()}});
  out << "synthesized: lambda_max = " << cert.feasibility_residual << ", eps_RS = " << syn.projection.eps_rs << '\n';
  return kExitOk;
}

std::unique_ptr<PolicyImprover> make_improver(const Json& tr) {
  const std::string kind = field<std::string>(tr, "improver", "es");
  if (kind == "identity") return std::make_unique<IdentityImprover>();
  if (kind == "random") return std::make_unique<RandomImprover>(field(tr, "sigma", 1e-4));
  if (kind == "es") {
    EsConfig es;
    es.population = field(tr, "population", es.population);
    es.sigma = field(tr, "sigma", es.sigma);
    es.lr = field(tr, "lr", es.lr);
    es.threads = field(tr, "threads", es.threads);
    return std::make_unique<EsImprover>(es);
  }
  config_error("unknown improver \"" + kind + "\"");
}

int cmd_train(const RunContext& ctx, std::ostream& out) {
  const Setup s = load_setup(ctx.config);
  if (!s.env) config_error("train needs an \"environment\"");
  const SynthesisProblem prob = make_problem(s, ctx.config);
  const Acquired a = acquire_controller(ctx, s);
  TrainState init;
  init.theta = a.k;
  if (a.cert) {
    init.P = a.cert->P;
    init.Lambda = a.cert->Lambda;
  } else {
    const auto cert = check_dissipative(prob, a.k);
    if (!cert) throw Error(ErrorCode::InvalidArgument, "the initial controller could not be certified");
    init.P = cert->P;
    init.Lambda = cert->Lambda;
  }
  const Json tr = section(ctx.config, "training");
  TrainConfig cfg;
  cfg.iterations = field(tr, "iterations", cfg.iterations);
  cfg.num_rollouts = field(tr, "num_rollouts", cfg.num_rollouts);
  cfg.seed = ctx.seed;
  cfg.project = project_options(ctx.config);
  cfg.project.lti = false;
  const auto improver = make_improver(tr);
  const TrainState st = train(prob, *improver, *s.env, init, cfg);

  {
    std::ofstream f = open_csv(ctx, "history.csv");
    write_history_csv(f, st.history);
  }
  StorageCertificate cert;
  cert.P = st.P;
  cert.Lambda = st.Lambda;
  cert.feasibility_residual = closed_loop_residual(prob, st.theta, st.P, st.Lambda);
  write_json(ctx, "controller.json", Json{{"controller", to_json(st.theta)}, {"iteration", st.iteration}});
  write_json(ctx, "certificate.json", Json{{"feasible", true}, {"certificate", to_json(cert)}});
  int projected = 0;
  for (const HistoryRow& r : st.history) projected += r.was_projected;
  out << "trained " << st.iteration << " iterations, " << projected << " projected, final lambda_max = "
      << cert.feasibility_residual << '\n';
  if (st.projection_failures > 0) {
    out << "projection failed " << st.projection_failures << " times; last: " << st.last_failure << '\n';
    return kExitProjectionFailed;
  }
  return kExitOk;
}

int cmd_simulate(const RunContext& ctx, std::ostream& out) {
  const Setup s = load_setup(ctx.config);
  if (!s.env) config_error("simulate needs an \"environment\"");
  const Json sim = section(ctx.config, "simulation");
  Environment env = *s.env;
  env.steps = field(sim, "steps", env.steps);
  const int rollouts = field(sim, "rollouts", 1);
  if (rollouts < 0) config_error("\"rollouts\" must be non-negative");
  const Acquired a = acquire_controller(ctx, s);
  Json runs = Json::array();
  for (int i = 0; i < rollouts; ++i) {
    const std::uint64_t seed = derive_seed(ctx.seed, static_cast<std::uint64_t>(i));
    const Trajectory tr = rollout(env, a.k, seed);
    std::ofstream f = open_csv(ctx, "trajectory_" + std::to_string(i) + ".csv");
    write_trajectory_csv(f, tr);
    runs.push_back(Json{{"seed", seed},
                        {"total_reward", tr.total_reward()},
                        {"terminated", tr.terminated},
                        {"steps_alive", tr.steps_alive}});
  }
  Json body{{"rollouts", runs}, {"controller", to_json(a.k)}};
  if (s.flexrod) {
    const Json b = section(sim, "bode");
    const std::vector<double> omega =
        log_grid(field(b, "omega_min", 1e-2), field(b, "omega_max", 1e2), field(b, "points", 100));
    const double gain = field(b, "gain", 0.1);
    const BodeCheck check = bode_bound_check(s.flexrod->rigid, s.flexrod->flexible, gain, omega);
    std::ofstream f = open_csv(ctx, "bode.csv");
    f << "omega,mag_rigid,mag_flexible,bound\n";
    f.precision(12);
    for (std::size_t i = 0; i < omega.size(); ++i) {
      f << check.omega[i] << ',' << check.mag_rigid[i] << ',' << check.mag_flexible[i] << ',' << check.bound[i] << '\n';
    }
    body["bode"] = Json{{"ok", check.ok}, {"worst_ratio", check.worst_ratio}, {"gain", gain}};
  }
  write_json(ctx, "simulate.json", body);
  out << "simulated " << rollouts << " rollouts of " << env.steps << " steps\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Certified synthesis and training of implicit neural network controllers", "dissipic"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> t_rs, backoff;
  bool lti = false;
  for (const char* name : {"verify", "synthesize", "train", "simulate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_flag("--lti", lti, "restrict synthesis to LTI controllers");
    sub->add_option("--t-rs", t_rs, "coupling scale t_RS");
    sub->add_option("--backoff", backoff, "projection backoff factor (>= 1)");
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dissipic: " << e.what() << '\n' << app.help();
    return kExitError;
  }

  try {
    RunContext ctx;
    ctx.command = app.get_subcommands().front()->get_name();
    std::ifstream f(config_path);
    if (!f) config_error("cannot open config " + config_path);
    std::stringstream ss;
    ss << f.rdbuf();
    ctx.config = parse_json_text(ss.str(), config_path);
    if (!ctx.config.is_object()) config_error(config_path + ": top level must be an object");
    if (seed) ctx.config["seed"] = *seed;
    if (lti) ctx.config["synthesis"]["lti"] = true;
    if (t_rs) ctx.config["synthesis"]["t_rs"] = *t_rs;
    if (backoff) ctx.config["synthesis"]["backoff"] = *backoff;
    ctx.seed = field<std::uint64_t>(ctx.config, "seed", 0);
    ctx.hash = hex64(fnv1a64(ctx.config.dump()));
    ctx.config_dir = fs::path(config_path).parent_path();
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
    if (ctx.command == "verify") return cmd_verify(ctx, out);
    if (ctx.command == "synthesize") return cmd_synthesize(ctx, out);
    if (ctx.command == "train") return cmd_train(ctx, out);
    return cmd_simulate(ctx, out);
  } catch (const std::exception& e) {
    err << "dissipic: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace dissipic
