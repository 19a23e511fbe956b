// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_INPUTGEN_HPP
#define SPECTEST_INPUTGEN_HPP

#include <memory>
#include <optional>
#include <set>

#include "spectest/microsim.hpp"
#include "spectest/relsyn.hpp"
#include "spectest/symexec.hpp"

namespace spectest::gen {

struct GenError : std::runtime_error {
  explicit GenError(const std::string& m) : std::runtime_error(m) {}
};

/// A pair of concrete input states that are observationally equivalent under
/// the base model yet (by construction) distinguishable under the refined
/// one. Both follow the path of `witness_leaf`.
struct StatePair {
  ir::MachineState s1{0};
  ir::MachineState s2{0};
  int witness_leaf = -1;
  std::string model_ids;
  uint64_t seed = 0;
};

struct TrainingInput {
  ir::MachineState state{0};
  int target_leaf = -1;
};

enum class GenStatus { Ok, Unsat, Unknown };

struct PairResult {
  GenStatus status = GenStatus::Unsat;
  StatePair pair;
  std::string note;
};

/// Materializes a machine state from a model: registers from the assignment
/// (seeded randomness for registers the formula does not mention), memory
/// from the data-section image overlaid with the model's cells for `copy`.
ir::MachineState materialize_state(const ir::Program& p, const solve::Model& m, int copy,
                                   uint64_t rng_seed, unsigned domain_bits);

/// Iterates distinct satisfying pairs of `constraint` (a distinguishing
/// relation, labels already applied), walking the tree leaf by leaf. Each
/// returned pair is excluded from later queries, so repeated calls explore
/// the equivalence class. When the cache geometry is given, assignments that
/// map a differing shadow address pair to different cache sets are preferred.
class PairGenerator {
 public:
  PairGenerator(const symx::SymbolicTree& tree, rel::Relation constraint,
                solve::EnumerativeSolver& solver, uint64_t seed,
                std::optional<sim::CacheGeometry> spread_geometry = std::nullopt);
  ~PairGenerator();

  PairResult next();

  unsigned pairs_generated() const { return generated_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  unsigned generated_ = 0;
};

/// Single-shot convenience wrapper.
PairResult generate_pair(const symx::SymbolicTree& tree, const rel::Relation& constraint,
                         solve::EnumerativeSolver& solver, uint64_t seed);

/// Satisfying state for some leaf other than `avoid_leaf`, preferring leaves
/// that steer the to-be-mispredicted branch the opposite way. Returns nullopt
/// for single-leaf trees.
std::optional<TrainingInput> generate_training(const symx::SymbolicTree& tree, int avoid_leaf,
                                               solve::SatisfiabilityService& solver, uint64_t seed,
                                               std::optional<uint32_t> mispredict_branch =
                                                   std::nullopt);

}  // namespace spectest::gen

#endif  // SPECTEST_INPUTGEN_HPP
