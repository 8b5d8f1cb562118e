#pragma once

// Scripted trials: expert demo synthesis, input preparation and the task
// script (follow the guide path, then insert each clot).

#include "tims/analytics.hpp"
#include "tims/bus/session_log.hpp"
#include "tims/orchestrator/config.hpp"
#include "tims/orchestrator/engine.hpp"
#include "tims/orchestrator/operator.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <vector>

namespace tims {

/// Expert demonstrations hovering `clearance_um` above the vessel, with
/// correlated tremor, uneven sampling density and repeated samples.
std::vector<Demonstration> synthesize_expert_demos(const Phantom& phantom, const GuideSource& src);

/// Loads or builds the phantom and guide path. Throws ConfigError on any
/// problem, before a trial starts.
TrialInputs prepare_inputs(const SessionConfig& cfg);

std::string session_id_for(const SessionConfig& cfg);

struct TrialResult {
  bus::SessionLog log;
  TrialMetrics metrics;
  std::filesystem::path log_file;  // empty when not persisted
};

/// Called before each tick with its timestamp; lets live sessions pace the
/// script in wall time. Return false to abort.
using TickHook = std::function<bool(std::int64_t t_ms)>;

/// Drive `engine` with the scripted task until every clot has been tried.
void run_task_script(const SessionConfig& cfg, TrialEngine& engine, ScriptedOperator& op,
                     const TickHook& hook = {});

TrialResult run_trial(const SessionConfig& cfg);
TrialResult run_trial(const SessionConfig& cfg, const TrialInputs& inputs);

/// Learner series: trial k runs with k completed guided trials and seed
/// base.op.seed + k.
std::vector<TrialMetrics> run_learner_series(const SessionConfig& base, const TrialInputs& inputs, int trials);

}  // namespace tims
