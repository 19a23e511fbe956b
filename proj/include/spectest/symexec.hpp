// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_SYMEXEC_HPP
#define SPECTEST_SYMEXEC_HPP

#include <memory>
#include <string>
#include <vector>

#include "spectest/ir.hpp"
#include "spectest/solver.hpp"
#include "spectest/symexpr.hpp"

namespace spectest::symx {

using ir::word_t;
using sym::ExprPtr;

struct SymExecError : std::runtime_error {
  explicit SymExecError(const std::string& m) : std::runtime_error(m) {}
};

/// One entry of a path's symbolic observation list. Base-model entries carry
/// guard == true; shadow entries carry the fragment-internal path guard and
/// the static shadow site they originate from.
struct SymObs {
  ir::ObsKind kind;
  ExprPtr value;
  ExprPtr guard;
  int shadow_site = -1;
  int instr_index = -1;
};

struct ConcretizationEntry {
  ExprPtr addr;        // normalized address expression
  word_t value;
  size_t constraints_at_choice;  // path-condition conjunct count when chosen
};

struct SymPath {
  std::array<ExprPtr, ir::kNumRegisters> regs{};
  ExprPtr memory;                        // store chain over the initial memory
  std::vector<ExprPtr> branch_literals;  // branch conditions as taken, in order
  std::vector<bool> branch_outcomes;
  std::vector<ExprPtr> concretization_eqs;
  std::vector<SymObs> obs;
  std::vector<ConcretizationEntry> conc_log;
  int leaf_id = -1;
  uint64_t instruction_count = 0;

  /// Precondition and branch literals only (no concretization artifacts).
  ExprPtr branch_condition(const ExprPtr& precondition) const;
  /// Full p_sigma: precondition, branch literals and concretization equalities.
  ExprPtr path_condition(const ExprPtr& precondition) const;
};

struct TreeNode {
  std::vector<SymObs> segment;  // observations since the parent branch
  ExprPtr branch_cond;          // null at leaves
  int branch_instr = -1;
  std::unique_ptr<TreeNode> not_taken, taken;  // null = pruned (unsatisfiable)
  int leaf_id = -1;

  bool is_leaf() const { return branch_cond == nullptr; }
};

struct SymbolicTree {
  ir::Program program;
  ExprPtr precondition;
  std::unique_ptr<TreeNode> root;
  std::vector<SymPath> leaves;
  bool empty_flagged = false;  // precondition unsatisfiable
  int restarts_used = 0;
  int shadow_site_count = 0;
  std::vector<std::string> notes;
};

struct SymExecOptions {
  uint64_t depth_limit = 4096;  // instruction budget per path
  int max_restarts = 8;
  /// Memory accesses are constrained to [region_lo, region_hi). Defaulted to
  /// the program's data base and address-space end when zero.
  word_t region_lo = 0;
  word_t region_hi = 0;
};

/// Explores every satisfiable path of an acyclic program. Throws SymExecError
/// on back-edges, path-budget exhaustion, solver failure, or restart-budget
/// exhaustion.
SymbolicTree sym_execute(const ir::Program& p, ExprPtr precondition,
                         solve::SatisfiabilityService& solver, SymExecOptions opts = {});

/// Consistent, collision-free address concretization, usable standalone. The
/// per-path log lives in SymPath::conc_log; values are drawn from
/// [region_lo, region_hi) and the chosen equality is appended to the path.
class Concretizer {
 public:
  Concretizer(solve::SatisfiabilityService& solver, ExprPtr precondition, word_t region_lo,
              word_t region_hi);

  struct NoSolution {};  // concretization failure; caller escalates to restart

  /// Returns the concrete address for `a` on this path. Memoized per
  /// normalized expression; never reuses the value of a distinct expression.
  word_t concretize(SymPath& path, const ExprPtr& a);

  /// Pre-seeds (expression, value) choices, used when re-running after a
  /// joint-query restart. Seeds are adopted into the path on first use.
  void seed(const ExprPtr& addr_norm, word_t value);

 private:
  solve::SatisfiabilityService* solver_;
  ExprPtr precondition_;
  word_t region_lo_, region_hi_;
  std::vector<std::pair<ExprPtr, word_t>> seeds_;
};

/// One joint query for all accesses of a failed path: every address gets a
/// fresh in-region value, distinct across syntactically distinct expressions.
/// Returns the per-access values on success.
std::optional<std::vector<std::pair<ExprPtr, word_t>>> joint_concretize(
    solve::SatisfiabilityService& solver, const ExprPtr& constraint,
    const std::vector<ExprPtr>& accesses, word_t region_lo, word_t region_hi);

/// check_sat as a free function over the service (plumbing parity).
solve::SolveOutcome check_sat(const ExprPtr& f, solve::SatisfiabilityService& solver);

/// Structured text dump (one block per leaf) for golden tests.
std::string dump_tree(const SymbolicTree& t);

/// Projection to the base model: drops every shadow-* entry, order preserved.
std::vector<SymObs> project_observations(const std::vector<SymObs>& refined);
std::vector<ir::Observation> project_observations(const std::vector<ir::Observation>& refined);

}  // namespace spectest::symx

#endif  // SPECTEST_SYMEXEC_HPP
