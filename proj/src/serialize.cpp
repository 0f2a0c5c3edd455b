#include "mfce/serialize.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mfce {

Json model_to_json(const MfgModel& m) {
  Json j;
  j["states"] = m.state_names.empty() ? Json(m.num_states) : Json(m.state_names);
  j["actions"] = m.action_names.empty() ? Json(m.num_actions) : Json(m.action_names);
  j["signals"] = m.signal_names.empty() ? Json(m.num_signals) : Json(m.signal_names);
  j["horizon"] = m.horizon;
  j["discount"] = m.discount;
  j["mu0"] = m.mu0;
  if (m.dense_kernel) {
    Json k;
    k["type"] = "dense";
    k["table"] = m.dense_kernel->table;  // flat [s][a][s']
    j["kernel"] = k;
  } else {
    j["kernel"] = {{"type", "builtin"}, {"name", m.kernel_builtin}};
  }
  if (m.affine_reward) {
    Json r;
    r["type"] = "affine";
    r["base"] = m.affine_reward->base;
    r["mu_coef"] = m.affine_reward->coef;
    j["reward"] = r;
  } else {
    j["reward"] = {{"type", "builtin"}, {"name", m.reward_builtin}};
  }
  if (m.reward_lipschitz_override) j["reward_lipschitz"] = *m.reward_lipschitz_override;
  if (m.reward_bound_override) j["reward_bound"] = *m.reward_bound_override;
  if (m.kernel_lipschitz_override) j["kernel_lipschitz"] = *m.kernel_lipschitz_override;
  return j;
}

namespace {
int space_size(const Json& j, std::vector<std::string>* names) {
  if (j.is_number_integer()) return j.get<int>();
  *names = j.get<std::vector<std::string>>();
  return static_cast<int>(names->size());
}
}  // namespace

MfgModel model_from_json(const Json& j) {
  MfgModel m;
  m.num_states = space_size(j.at("states"), &m.state_names);
  m.num_actions = space_size(j.at("actions"), &m.action_names);
  m.num_signals = space_size(j.at("signals"), &m.signal_names);
  m.horizon = j.at("horizon").get<int>();
  m.discount = j.value("discount", 1.0);
  m.mu0 = j.at("mu0").get<Vec>();
  const Json& k = j.at("kernel");
  if (k.at("type") == "dense") {
    DenseKernel dk{m.num_states, m.num_actions, k.at("table").get<Vec>()};
    if (static_cast<int>(dk.table.size()) != m.num_states * m.num_actions * m.num_states)
      throw DimensionMismatch("model json: kernel table size");
    m.dense_kernel = dk;
    m.kernel_builtin = "dense";
  } else {
    std::string name = k.at("name").get<std::string>();
    MfgModel built = build_model(name);
    m.dense_kernel = built.dense_kernel;
    m.kernel_fn = built.kernel_fn;
    m.kernel_builtin = name;
  }
  const Json& r = j.at("reward");
  if (r.at("type") == "affine") {
    AffineReward ar{m.num_states, m.num_actions, r.at("base").get<Vec>(),
                    r.at("mu_coef").get<Vec>()};
    if (static_cast<int>(ar.base.size()) != m.num_states * m.num_actions ||
        static_cast<int>(ar.coef.size()) != m.num_states * m.num_actions * m.num_states)
      throw DimensionMismatch("model json: reward table size");
    m.affine_reward = ar;
    m.reward_builtin = "affine";
  } else {
    std::string name = r.at("name").get<std::string>();
    MfgModel built = build_model(name);
    m.affine_reward = built.affine_reward;
    m.reward_fn = built.reward_fn;
    m.reward_builtin = name;
    m.reward_lipschitz_override = built.reward_lipschitz_override;
    m.reward_bound_override = built.reward_bound_override;
  }
  if (j.contains("reward_lipschitz")) m.reward_lipschitz_override = j["reward_lipschitz"].get<double>();
  if (j.contains("reward_bound")) m.reward_bound_override = j["reward_bound"].get<double>();
  if (j.contains("kernel_lipschitz")) m.kernel_lipschitz_override = j["kernel_lipschitz"].get<double>();
  m.validate();
  return m;
}

Json policy_to_json(const BehavioralPolicy& pi) {
  return Json{{"steps", pi.steps},
              {"signals", pi.num_signals},
              {"states", pi.num_states},
              {"actions", pi.num_actions},
              {"table", pi.table}};
}

BehavioralPolicy policy_from_json(const Json& j) {
  BehavioralPolicy pi{j.at("steps").get<int>(), j.at("signals").get<int>(),
                      j.at("states").get<int>(), j.at("actions").get<int>(),
                      j.at("table").get<Vec>()};
  if (pi.table.size() != static_cast<std::size_t>(pi.steps) * pi.num_signals * pi.num_states *
                             pi.num_actions)
    throw DimensionMismatch("policy json: table size");
  pi.validate();
  return pi;
}

Json device_to_json(const CorrelationDevice& rho) {
  return Json{{"steps", rho.steps}, {"signals", rho.num_signals}, {"table", rho.table}};
}

CorrelationDevice device_from_json(const Json& j) {
  CorrelationDevice rho{j.at("steps").get<int>(), j.at("signals").get<int>(),
                        j.at("table").get<Vec>()};
  if (rho.table.size() != static_cast<std::size_t>(rho.steps) * rho.num_signals)
    throw DimensionMismatch("device json: table size");
  rho.validate();
  return rho;
}

Json report_to_json(const VerificationReport& rep) {
  Json w;
  if (!rep.witness.swap.empty()) {
    w["swap"] = rep.witness.swap;
  } else {
    w["t"] = rep.witness.t;
    w["z_prefix"] = rep.witness.z_prefix;
    w["state"] = rep.witness.state;
    w["recommended"] = rep.witness.recommended;
    w["deviation"] = rep.witness.deviation;
  }
  return Json{{"is_equilibrium", rep.is_equilibrium},
              {"max_gain", rep.max_gain},
              {"tolerance", rep.tolerance},
              {"witness", w}};
}

Json bounds_to_json(const BoundsReport& rep) {
  return Json{{"epsilon", rep.epsilon},
              {"measured_max_cip", rep.measured_max_cip},
              {"cip_bound", rep.cip_bound_value},
              {"measured_gap", rep.measured_gap},
              {"gap_bound", rep.gap_bound_value},
              {"pinsker_lhs", rep.pinsker_lhs},
              {"pinsker_rhs_stated", rep.pinsker_rhs_stated},
              {"pinsker_rhs_corrected", rep.pinsker_rhs_corrected},
              {"cip_ok", rep.cip_ok},
              {"gap_ok", rep.gap_ok},
              {"pinsker_ok_stated", rep.pinsker_ok_stated},
              {"pinsker_ok_corrected", rep.pinsker_ok_corrected}};
}

Json log_loss_to_json(const LogLossReport& rep) {
  Json cells = Json::array();
  for (const auto& c : rep.cells)
    cells.push_back({{"t", c.t}, {"s", c.s}, {"z", c.z}, {"value", c.value}, {"weight", c.weight}});
  return Json{{"cells", cells},
              {"per_signal", rep.per_signal},
              {"scalar", rep.scalar},
              {"floor", rep.floor},
              {"excess", rep.excess}};
}

Json checkpoint_to_json(const PolicyParams& theta, const DeviceParams& phi,
                        const Discriminator& disc, const TrainingConfig& cfg) {
  Json j;
  j["theta"] = {{"steps", theta.steps},
                {"signals", theta.num_signals},
                {"states", theta.num_states},
                {"actions", theta.num_actions},
                {"values", theta.theta}};
  j["phi"] = {{"steps", phi.steps}, {"signals", phi.num_signals}, {"values", phi.phi}};
  Json omega;
  omega["sizes"] = disc.net.sizes;
  omega["W"] = disc.net.W;
  omega["b"] = disc.net.b;
  omega["depth"] = disc.depth;
  j["omega"] = omega;
  j["config"] = {{"iterations", cfg.iterations},
                 {"batch_size", cfg.batch_size},
                 {"disc_steps", cfg.disc_steps},
                 {"lr_actor", cfg.lr_actor},
                 {"lr_critic", cfg.lr_critic},
                 {"lr_disc", cfg.lr_disc},
                 {"lr_device", cfg.lr_device},
                 {"gp_coef", cfg.gp_coef},
                 {"signature_depth", cfg.signature_depth}};
  j["seed"] = cfg.seed;
  return j;
}

void checkpoint_from_json(const Json& j, PolicyParams& theta, DeviceParams& phi,
                          Discriminator* disc) {
  const Json& th = j.at("theta");
  theta.steps = th.at("steps").get<int>();
  theta.num_signals = th.at("signals").get<int>();
  theta.num_states = th.at("states").get<int>();
  theta.num_actions = th.at("actions").get<int>();
  theta.theta = th.at("values").get<Vec>();
  const Json& ph = j.at("phi");
  phi.steps = ph.at("steps").get<int>();
  phi.num_signals = ph.at("signals").get<int>();
  phi.phi = ph.at("values").get<Vec>();
  if (disc && j.contains("omega")) {
    const Json& om = j.at("omega");
    disc->net.sizes = om.at("sizes").get<std::vector<int>>();
    disc->net.W = om.at("W").get<std::vector<std::vector<double>>>();
    disc->net.b = om.at("b").get<std::vector<std::vector<double>>>();
    disc->depth = om.value("depth", 3);
  }
}

void write_trajectories_jsonl(const std::string& path, const DemonstrationSet& demos) {
  std::ostringstream out;
  for (const Trajectory& tr : demos) {
    Json steps = Json::array();
    for (const TrajectoryStep& st : tr.steps)
      steps.push_back({{"t", st.t}, {"s", st.s}, {"z", st.z}, {"a", st.a}});
    out << Json{{"steps", steps}}.dump() << "\n";
  }
  atomic_write(path, out.str());
}

DemonstrationSet read_trajectories_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path);
  DemonstrationSet demos;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line);
    Trajectory tr;
    for (const Json& st : j.at("steps"))
      tr.steps.push_back({st.at("t").get<int>(), st.at("s").get<int>(), st.at("z").get<int>(),
                          st.at("a").get<int>()});
    demos.push_back(std::move(tr));
  }
  return demos;
}

void atomic_write(const std::string& path, const std::string& contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("cannot write " + tmp);
    out << contents;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace mfce
