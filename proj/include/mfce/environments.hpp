#pragma once

#include <map>
#include <optional>
#include <string>

#include "mfce/equilibrium.hpp"
#include "mfce/model.hpp"

namespace mfce {

struct EnvironmentBundle {
  MfgModel model;
  std::optional<BehavioralPolicy> expert_policy;
  std::optional<CorrelationDevice> expert_device;
  bool time_shared = false;  // absent-minded verification mode for the expert pair
  std::string notes;
};

using EnvParams = std::map<std::string, double>;

// Bundled benchmark games: traffic, squeeze2, squeeze3, rps, flock, driver.
// Traffic and driver carry ground-truth expert pairs; squeeze/rps/flock
// experts come from the fixed-point solver at build time (cached per process).
EnvironmentBundle build_env(const std::string& name, const EnvParams& params = {});

// Just the model, no expert solve (used by deserialization).
MfgModel build_model(const std::string& name);

std::vector<std::string> env_names();

}  // namespace mfce
