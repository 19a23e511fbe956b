// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_LEAKTEST_HPP
#define SPECTEST_LEAKTEST_HPP

#include <functional>
#include <optional>

#include "spectest/inputgen.hpp"
#include "spectest/microsim.hpp"

namespace spectest::leak {

struct LeakError : std::runtime_error {
  explicit LeakError(const std::string& m) : std::runtime_error(m) {}
};

struct ExperimentPlan {
  ir::Program program;  // the program as executed (possibly hardened)
  gen::StatePair pair;
  std::vector<gen::TrainingInput> training;
  sim::MicroConfig config;
  unsigned cache_config_count = 7;
  unsigned iterations = 10;
  double theta_present = 0.7;
  double theta_agree = 0.8;
  uint64_t seed = 0;
  bool eviction_noise = false;  // extra per-iteration seeded evictions
  bool retry_inconclusive = true;

  void validate() const;
};

enum class Classification { Counterexample, ConclusiveNoLeak, Inconclusive };
const char* classification_name(Classification c);

struct LineKey {
  uint32_t set;
  ir::word_t tag;
  auto operator<=>(const LineKey&) const = default;
};

/// Per-config, per-iteration program-populated probe sets for both runs.
struct ConfigEvidence {
  std::vector<std::vector<LineKey>> runs1;
  std::vector<std::vector<LineKey>> runs2;
};

struct LeakVerdict {
  Classification classification = Classification::Inconclusive;
  std::vector<ConfigEvidence> evidence;
  std::vector<LineKey> distinguishing;  // nonempty iff counterexample
  unsigned retries = 0;
};

/// Pure classification over recorded evidence. A counterexample is a line
/// present in at least theta_present of one run's iterations of some config
/// and never present for the other run. The experiment is conclusive-no-leak
/// when, in every config, each observed line shows up at least once for both
/// runs and the strongly-present-in-both lines cover at least theta_agree of
/// the observed lines.
Classification classify_evidence(const std::vector<ConfigEvidence>& evidence,
                                 unsigned iterations, double theta_present, double theta_agree,
                                 std::vector<LineKey>* distinguishing = nullptr);

/// Runs the full protocol: per cache configuration and iteration, train the
/// predictor and execute both inputs from byte-identical microarchitectural
/// state; classify the recorded probe sets. Simulator faults on the committed
/// path abort with LeakError (distinct from an inconclusive verdict).
LeakVerdict run_experiment(const ExperimentPlan& plan);

struct LeakOutcome {
  bool leak = false;
  unsigned pairs_tested = 0;
  unsigned counterexamples = 0;
  unsigned inconclusive = 0;
  unsigned no_leak = 0;
  std::string reason;
  std::optional<gen::StatePair> witness;
  std::optional<LeakVerdict> verdict;
};

/// Generates up to `pair_budget` diversified pairs and runs the experiment
/// protocol on each; true on the first counterexample. Inconclusive
/// experiments are counted but never flip the verdict.
LeakOutcome has_side_channel_leakage(
    const ir::Program& program, gen::PairGenerator& pairs,
    const std::function<std::vector<gen::TrainingInput>(const gen::StatePair&)>& training_for,
    const sim::MicroConfig& config, unsigned pair_budget, uint64_t seed,
    const ExperimentPlan* plan_template = nullptr);

}  // namespace spectest::leak

#endif  // SPECTEST_LEAKTEST_HPP
