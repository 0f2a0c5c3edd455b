#pragma once

#include <string>

#include "mfce/environments.hpp"
#include "mfce/equilibrium.hpp"
#include "mfce/evaluation.hpp"
#include "mfce/mfcil.hpp"
#include "mfce/model.hpp"

#include <nlohmann/json_fwd.hpp>

namespace mfce {

using Json = nlohmann::json;

Json model_to_json(const MfgModel& model);
MfgModel model_from_json(const Json& j);

Json policy_to_json(const BehavioralPolicy& pi);
BehavioralPolicy policy_from_json(const Json& j);

Json device_to_json(const CorrelationDevice& rho);
CorrelationDevice device_from_json(const Json& j);

Json report_to_json(const VerificationReport& rep);
Json bounds_to_json(const BoundsReport& rep);
Json log_loss_to_json(const LogLossReport& rep);

Json checkpoint_to_json(const PolicyParams& theta, const DeviceParams& phi,
                        const Discriminator& disc, const TrainingConfig& cfg);
void checkpoint_from_json(const Json& j, PolicyParams& theta, DeviceParams& phi,
                          Discriminator* disc);

// JSONL, one trajectory per line: {"steps":[{"t":..,"s":..,"z":..,"a":..},..]}.
void write_trajectories_jsonl(const std::string& path, const DemonstrationSet& demos);
DemonstrationSet read_trajectories_jsonl(const std::string& path);

// Write-to-temp-then-rename; every CLI output goes through this.
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace mfce
