#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mfce/environments.hpp"
#include "mfce/equilibrium.hpp"
#include "mfce/evaluation.hpp"
#include "mfce/mfcil.hpp"
#include "mfce/parallel.hpp"
#include "mfce/serialize.hpp"
#include "mfce/signature.hpp"

using namespace mfce;

namespace {

BehavioralPolicy load_policy_arg(const std::string& arg, const EnvironmentBundle& env) {
  if (arg == "ground-truth") {
    if (!env.expert_policy) throw DomainError("environment has no ground-truth policy");
    return *env.expert_policy;
  }
  if (arg == "uniform")
    return BehavioralPolicy::uniform(env.model.horizon + 1, env.model.num_signals,
                                     env.model.num_states, env.model.num_actions);
  std::ifstream in(arg);
  if (!in) throw DomainError("cannot open policy file " + arg);
  Json j = Json::parse(in);
  if (j.contains("theta")) {  // checkpoint
    PolicyParams theta;
    DeviceParams phi;
    checkpoint_from_json(j, theta, phi, nullptr);
    return theta.policy();
  }
  return policy_from_json(j);
}

CorrelationDevice load_device_arg(const std::string& arg, const EnvironmentBundle& env) {
  int steps = env.model.horizon + 1, Z = env.model.num_signals;
  if (arg == "ground-truth") {
    if (!env.expert_device) throw DomainError("environment has no ground-truth device");
    return *env.expert_device;
  }
  if (arg == "uniform") return CorrelationDevice::uniform(steps, Z);
  if (arg == "dirac") return CorrelationDevice::dirac(steps, Z);
  std::ifstream in(arg);
  if (!in) throw DomainError("cannot open device file " + arg);
  Json j = Json::parse(in);
  if (j.contains("phi")) {
    PolicyParams theta;
    DeviceParams phi;
    checkpoint_from_json(j, theta, phi, nullptr);
    return phi.device();
  }
  return device_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular mean-field correlated equilibrium toolkit"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  int workers = 1;
  std::string config_path;
  app.add_option("--seed", seed, "root RNG seed")->capture_default_str();
  app.add_option("--workers", workers, "rollout/scan parallelism")->capture_default_str();
  app.add_option("--config", config_path, "JSON config file (train options)");

  // env export
  auto* cmd_env = app.add_subcommand("env", "environment utilities");
  auto* cmd_export = cmd_env->add_subcommand("export", "emit the model JSON");
  std::string env_name, out_path = "-";
  cmd_export->add_option("name", env_name, "environment name")->required();
  cmd_export->add_option("--out", out_path, "output file (default stdout)");

  // solve
  auto* cmd_solve = app.add_subcommand("solve", "best-response fixed point");
  std::string solve_env, solve_device = "uniform", solve_out, solve_log;
  int max_iters = 500;
  double damping = 0.1, tol = 1e-6;
  std::string schedule = "harmonic";
  cmd_solve->add_option("--env", solve_env, "environment name")->required();
  cmd_solve->add_option("--device", solve_device, "uniform|dirac|ground-truth|file");
  cmd_solve->add_option("--max-iters", max_iters)->capture_default_str();
  cmd_solve->add_option("--damping", damping)->capture_default_str();
  cmd_solve->add_option("--tol", tol)->capture_default_str();
  cmd_solve->add_option("--schedule", schedule, "constant|harmonic")->capture_default_str();
  cmd_solve->add_option("--out", solve_out, "write solved policy JSON");
  cmd_solve->add_option("--log", solve_log, "per-iteration max_gain CSV");

  // verify
  auto* cmd_verify = app.add_subcommand("verify", "AMFCE deviation check");
  std::string verify_env, verify_policy = "ground-truth", verify_device = "ground-truth";
  double verify_tol = 1e-9;
  bool verify_all_states = false;
  cmd_verify->add_option("--env", verify_env)->required();
  cmd_verify->add_option("--policy", verify_policy, "ground-truth|uniform|file");
  cmd_verify->add_option("--device", verify_device, "ground-truth|uniform|dirac|file");
  cmd_verify->add_option("--tol", verify_tol)->capture_default_str();
  cmd_verify->add_flag("--all-states", verify_all_states, "check unreachable states too");

  // demo
  auto* cmd_demo = app.add_subcommand("demo", "sample expert demonstrations");
  std::string demo_env, demo_out = "demos.jsonl";
  int demo_n = 1000;
  cmd_demo->add_option("--env", demo_env)->required();
  cmd_demo->add_option("--n", demo_n)->capture_default_str();
  cmd_demo->add_option("--out", demo_out)->capture_default_str();

  // train
  auto* cmd_train = app.add_subcommand("train", "MFCIL adversarial imitation");
  std::string train_env, train_demos, train_out = "checkpoint.json", train_hist;
  TrainingConfig cfg;
  cmd_train->add_option("--env", train_env)->required();
  cmd_train->add_option("--demos", train_demos, "JSONL demonstrations")->required();
  cmd_train->add_option("--iters", cfg.iterations)->capture_default_str();
  cmd_train->add_option("--batch", cfg.batch_size)->capture_default_str();
  cmd_train->add_option("--out", train_out)->capture_default_str();
  cmd_train->add_option("--history", train_hist, "training history CSV");

  // eval
  auto* cmd_eval = app.add_subcommand("eval", "metrics and bound checks");
  std::string eval_env, eval_ckpt, eval_out;
  cmd_eval->add_option("--env", eval_env)->required();
  cmd_eval->add_option("--checkpoint", eval_ckpt, "checkpoint or policy JSON")->required();
  cmd_eval->add_option("--out", eval_out, "report JSON path");

  // sig
  auto* cmd_sig = app.add_subcommand("sig", "path signature of a signal history");
  std::string sig_input;
  int sig_dim = 2, sig_depth = 3;
  cmd_sig->add_option("--input", sig_input, "comma-separated signal indices")->required();
  cmd_sig->add_option("--dim", sig_dim)->capture_default_str();
  cmd_sig->add_option("--depth", sig_depth)->capture_default_str();

  // report
  auto* cmd_report = app.add_subcommand("report", "table-style log-loss grid");
  std::vector<std::string> report_inputs;
  std::string report_out = "report.csv";
  cmd_report->add_option("--inputs", report_inputs, "eval report JSON files")->required();
  cmd_report->add_option("--out", report_out)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  set_num_workers(workers);

  try {
    if (cmd_export->parsed()) {
      EnvironmentBundle env = build_env(env_name);
      std::string text = model_to_json(env.model).dump(2) + "\n";
      if (out_path == "-")
        std::cout << text;
      else
        atomic_write(out_path, text);
      return 0;
    }
    if (cmd_solve->parsed()) {
      EnvironmentBundle env = build_env(solve_env);
      CorrelationDevice rho = load_device_arg(solve_device, env);
      SolveOptions opts;
      opts.max_iters = max_iters;
      opts.damping = damping;
      opts.tolerance = tol;
      opts.schedule = schedule == "constant" ? DampingSchedule::kConstant
                                             : DampingSchedule::kHarmonic;
      opts.log_csv = solve_log;
      SolveResult sol = solve_amfce_fixed_point(env.model, rho, opts);
      std::printf("converged: %s after %d iterations (max_gain %.3e)\n",
                  sol.converged ? "true" : "false", sol.iterations, sol.report.max_gain);
      if (!solve_out.empty()) {
        Json j;
        j["policy"] = policy_to_json(sol.policy);
        j["device"] = device_to_json(rho);
        j["report"] = report_to_json(sol.report);
        atomic_write(solve_out, j.dump(2) + "\n");
      }
      return sol.converged ? 0 : 1;
    }
    if (cmd_verify->parsed()) {
      EnvironmentBundle env = build_env(verify_env);
      BehavioralPolicy pi = load_policy_arg(verify_policy, env);
      CorrelationDevice rho = load_device_arg(verify_device, env);
      VerifyOptions opts;
      opts.tolerance = verify_tol;
      opts.all_states = verify_all_states;
      opts.time_shared = env.time_shared && verify_policy == "ground-truth";
      VerificationReport rep = verify_amfce(env.model, pi, rho, opts);
      std::printf("AMFCE: %s (max_gain %s %.1e)\n", rep.is_equilibrium ? "true" : "false",
                  rep.is_equilibrium ? "<=" : ">", rep.tolerance);
      std::printf("max_gain = %.12e\n", rep.max_gain);
      return 0;
    }
    if (cmd_demo->parsed()) {
      EnvironmentBundle env = build_env(demo_env);
      if (!env.expert_policy || !env.expert_device)
        throw DomainError("environment has no expert pair");
      DemonstrationSet demos =
          generate_demonstrations(env.model, *env.expert_policy, *env.expert_device, demo_n, seed);
      write_trajectories_jsonl(demo_out, demos);
      std::printf("wrote %d trajectories to %s\n", demo_n, demo_out.c_str());
      return 0;
    }
    if (cmd_train->parsed()) {
      EnvironmentBundle env = build_env(train_env);
      DemonstrationSet demos = read_trajectories_jsonl(train_demos);
      cfg.seed = seed;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw DomainError("cannot open config " + config_path);
        Json j = Json::parse(in);
        cfg.iterations = j.value("iterations", cfg.iterations);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.disc_steps = j.value("disc_steps", cfg.disc_steps);
        cfg.lr_actor = j.value("lr_actor", cfg.lr_actor);
        cfg.lr_critic = j.value("lr_critic", cfg.lr_critic);
        cfg.lr_disc = j.value("lr_disc", cfg.lr_disc);
        cfg.lr_device = j.value("lr_device", cfg.lr_device);
        cfg.gp_coef = j.value("gp_coef", cfg.gp_coef);
        cfg.signature_depth = j.value("signature_depth", cfg.signature_depth);
      }
      const BehavioralPolicy* ev = env.expert_policy ? &*env.expert_policy : nullptr;
      const CorrelationDevice* ed = env.expert_device ? &*env.expert_device : nullptr;
      TrainResult res = train_mfcil(env.model, demos, cfg, ev, ed);
      atomic_write(train_out,
                   checkpoint_to_json(res.policy, res.device, res.discriminator, cfg).dump() +
                       "\n");
      if (!train_hist.empty()) {
        std::ostringstream hs;
        hs << "iter,disc_loss,mean_policy_reward,log_loss,max_cip_estimate\n";
        for (const HistoryRow& r : res.history)
          hs << r.iter << "," << r.disc_loss << "," << r.mean_policy_reward << "," << r.log_loss
             << "," << r.max_cip_estimate << "\n";
        atomic_write(train_hist, hs.str());
      }
      std::printf("trained %d iterations, checkpoint at %s\n", cfg.iterations, train_out.c_str());
      return 0;
    }
    if (cmd_eval->parsed()) {
      EnvironmentBundle env = build_env(eval_env);
      BehavioralPolicy pi = load_policy_arg(eval_ckpt, env);
      if (!env.expert_policy || !env.expert_device)
        throw DomainError("environment has no expert pair to evaluate against");
      LogLossReport ll = log_loss(env.model, pi, *env.expert_policy, *env.expert_device);
      BoundsReport bounds = check_bounds(env.model, pi, *env.expert_policy, *env.expert_device);
      Json j;
      j["env"] = eval_env;
      j["log_loss"] = log_loss_to_json(ll);
      j["bounds"] = bounds_to_json(bounds);
      std::string text = j.dump(2) + "\n";
      if (eval_out.empty())
        std::cout << text;
      else
        atomic_write(eval_out, text);
      return 0;
    }
    if (cmd_sig->parsed()) {
      std::vector<int> zs;
      std::stringstream ss(sig_input);
      std::string tok;
      while (std::getline(ss, tok, ',')) zs.push_back(std::stoi(tok));
      Vec sig = embed_signal_history(zs, sig_dim, sig_depth);
      for (std::size_t i = 0; i < sig.size(); ++i)
        std::printf("%s%.12g", i ? " " : "", sig[i]);
      std::printf("\n");
      return 0;
    }
    if (cmd_report->parsed()) {
      std::ostringstream out;
      out << "task,signal,log_loss,excess\n";
      for (const std::string& path : report_inputs) {
        std::ifstream in(path);
        if (!in) throw DomainError("cannot open " + path);
        Json j = Json::parse(in);
        const Json& ll = j.at("log_loss");
        auto per = ll.at("per_signal").get<Vec>();
        for (std::size_t z = 0; z < per.size(); ++z)
          out << j.value("env", path) << ",z=" << z << "," << per[z] << ","
              << ll.at("excess").get<double>() << "\n";
      }
      atomic_write(report_out, out.str());
      std::printf("wrote %s\n", report_out.c_str());
      return 0;
    }
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
