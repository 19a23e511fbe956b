// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_OPTIMIZER_HPP
#define SPECTEST_OPTIMIZER_HPP

#include <functional>

#include "spectest/harden.hpp"
#include "spectest/leaktest.hpp"

namespace spectest::opt {

struct OptError : std::runtime_error {
  explicit OptError(const std::string& m) : std::runtime_error(m) {}
};

struct CycleStats {
  uint64_t max = 0;
  double mean = 0;
  double stddev = 0;
};

/// Cycle statistics over `repetitions` runs. Runs chain the cache (first
/// repetition cold, later ones warm); with one repetition the deviation is
/// zero by construction.
CycleStats measure_cycles(const ir::Program& p, const ir::MachineState& worst_case_input,
                          const sim::MicroConfig& cfg, unsigned repetitions);

/// Concrete input driving the longest satisfiable path of the tree.
std::optional<ir::MachineState> worst_case_input(const symx::SymbolicTree& tree,
                                                 solve::SatisfiabilityService& solver);

using LeakTestFn = std::function<leak::LeakOutcome(const ir::Program&)>;

struct SelectiveOptions {
  LeakTestFn leak_test;  // required: full relational test of one candidate
  // Optional validation: re-run recorded counterexample pairs of the
  // unprotected program against the optimized one.
  std::function<leak::LeakVerdict(const ir::Program&, const gen::StatePair&)> replay;
  std::vector<gen::StatePair> recorded_counterexamples;
  // Optional cycle measurement.
  bool measure = false;
  ir::MachineState worst_input{0};
  sim::MicroConfig config;
  unsigned repetitions = 10;
  bool final_recheck = true;
};

struct StepRecord {
  int point_id;
  bool leaked;
  unsigned pairs_tested;
};

struct OptimizationResult {
  harden::HardenedProgram input;
  harden::HardenedProgram optimized;
  std::vector<int> retained;
  std::vector<int> removed;
  std::vector<StepRecord> steps;
  CycleStats cycles_original, cycles_hardened, cycles_optimized;
  bool measured = false;
  leak::LeakOutcome final_check;
  bool validation_ran = false;
  bool validation_clean = true;
  std::vector<std::string> notes;
};

/// Walks the hardening points top to bottom, removing each and reinserting it
/// when its absence makes the leak test fire; the result keeps exactly the
/// points whose removal was observed to re-enable leakage. Throws OptError
/// with "hardening scheme insufficient" when the fully hardened input already
/// leaks.
OptimizationResult selective_slh(const harden::HardenedProgram& hp, const SelectiveOptions& opts);

/// Diagnostic: exhaustive search over removal orders (programs with at most
/// six points) reporting the best retained count any order achieves.
struct OrderSearchResult {
  size_t default_retained = 0;
  size_t best_retained = 0;
  std::vector<int> best_order;
};
OrderSearchResult selective_slh_order_search(const harden::HardenedProgram& hp,
                                             const LeakTestFn& leak_test);

}  // namespace spectest::opt

#endif  // SPECTEST_OPTIMIZER_HPP
