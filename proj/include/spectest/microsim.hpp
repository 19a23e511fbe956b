// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_MICROSIM_HPP
#define SPECTEST_MICROSIM_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spectest/ir.hpp"

namespace spectest::sim {

using ir::word_t;

struct SimError : std::runtime_error {
  explicit SimError(const std::string& m) : std::runtime_error(m) {}
};

enum class PredictorKind { TwoBit, AlwaysMispredict, AlwaysCorrect };

struct CacheGeometry {
  uint32_t sets = 16;
  uint32_t ways = 2;
  uint32_t line_bytes = 16;
  friend bool operator==(const CacheGeometry&, const CacheGeometry&) = default;
};

/// Simulator parameters. The shortwin/longwin profiles stand in for a short
/// in-order core and a longer out-of-order one; they are simulator settings,
/// not claims about any real processor's timing.
struct MicroConfig {
  std::string profile_name = "longwin";
  uint32_t speculation_window = 64;  // cycles of wrong-path execution
  uint32_t base_latency = 1;
  uint32_t miss_penalty = 30;
  uint32_t fence_latency = 12;   // committed dsb+isb cost
  uint32_t resolve_delay = 24;   // cycles until flags resolve for csel without csdb
  PredictorKind predictor = PredictorKind::TwoBit;
  CacheGeometry cache;
  unsigned training_reps = 3;  // consecutive runs per training input

  void validate() const;
};

struct CacheLine {
  word_t tag = 0;
  bool valid = false;
  bool program_populated = false;
  friend bool operator==(const CacheLine&, const CacheLine&) = default;
};

/// Set-associative data cache with LRU replacement. Way lists are kept in
/// MRU-first order.
struct CacheState {
  CacheGeometry geom;
  std::vector<std::vector<CacheLine>> sets;  // sets[i] holds at most geom.ways lines

  static CacheState empty(CacheGeometry g);

  uint32_t set_of(word_t addr) const { return (addr / geom.line_bytes) % geom.sets; }
  word_t tag_of(word_t addr) const { return addr / geom.line_bytes / geom.sets; }

  bool present(word_t addr) const;
  /// Access: on hit refreshes LRU, on miss optionally installs (evicting the
  /// LRU way). Marks the line program-populated when `mark` is set. Returns
  /// whether the access hit.
  bool access(word_t addr, bool install_on_miss, bool mark);
  void evict(uint32_t set, word_t tag);
  size_t valid_line_count() const;

  std::string dump() const;  // deterministic text, for golden tests

  friend bool operator==(const CacheState&, const CacheState&) = default;
};

struct ProbeEntry {
  uint32_t set;
  word_t tag;
  bool program_populated;
  auto operator<=>(const ProbeEntry&) const = default;
};

/// Full valid-line listing; pure read.
std::vector<ProbeEntry> probe_cache(const CacheState& c);

struct PredictorState {
  PredictorKind kind = PredictorKind::TwoBit;
  std::map<uint32_t, uint8_t> counters;  // branch index -> 2-bit saturating counter

  bool predict(uint32_t branch, bool actual) const;
  void update(uint32_t branch, bool taken);
  friend bool operator==(const PredictorState&, const PredictorState&) = default;
};

struct TransientLoad {
  word_t addr;
  bool suppressed;  // out-of-range, no cache effect
  bool installed;   // line fill completed inside the window
  friend bool operator==(const TransientLoad&, const TransientLoad&) = default;
};

struct RunResult {
  ir::MachineState final_state{0};
  CacheState cache;
  PredictorState predictor;
  uint64_t cycles = 0;
  std::vector<TransientLoad> transient_loads;
  std::vector<ir::Observation> committed_trace;
  unsigned mispredicts = 0;
};

/// Executes `p` from `s0` with the given microarchitectural state. Committed
/// semantics equal ir::eval_step; mispredicted branches execute the wrong
/// path transiently for up to `speculation_window` cycles, touching the cache
/// but never architectural state. Faults on the committed path raise
/// SimError; transient out-of-range accesses are suppressed and logged.
RunResult run(const ir::Program& p, const ir::MachineState& s0, const CacheState& cache0,
              const PredictorState& predictor0, const MicroConfig& cfg);

/// Runs each training input (cfg.training_reps times, speculation disabled)
/// and returns the resulting two-bit counter state. No-op for non-table
/// predictor kinds.
PredictorState train_predictor(const ir::Program& p, const std::vector<ir::MachineState>& training,
                               const MicroConfig& cfg);

/// Cache configurations for the experiment protocol: element 0 is the empty
/// cache (cold start); the rest are copies of `first_run_cache` with a
/// seeded-random subset of lines evicted and population flags reset.
std::vector<CacheState> make_cache_configs(const CacheState& first_run_cache, unsigned n,
                                           uint64_t seed);

}  // namespace spectest::sim

#endif  // SPECTEST_MICROSIM_HPP
