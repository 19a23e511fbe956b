// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_REFINE_HPP
#define SPECTEST_REFINE_HPP

#include <map>
#include <string>
#include <vector>

#include "spectest/ir.hpp"
#include "spectest/relsyn.hpp"
#include "spectest/solver.hpp"
#include "spectest/symexec.hpp"

namespace spectest::refine {

struct RefineError : std::runtime_error {
  explicit RefineError(const std::string& m) : std::runtime_error(m) {}
};

/// Which branches to misspeculate, how each shadow copy treats its condition,
/// and how long the inlined fragments may be (the modelled upper bound on the
/// processor's speculative window, in instructions).
struct RefinementSpec {
  std::vector<uint32_t> branches;
  std::map<uint32_t, bool> negate_choice;  // default: negate
  uint32_t d_shadow = 32;

  bool negates(uint32_t branch) const {
    auto it = negate_choice.find(branch);
    return it == negate_choice.end() ? true : it->second;
  }
  std::string describe() const;
};

struct ShadowedProgram {
  ir::Program original;
  ir::Program transformed;
  std::vector<int> site_origin;      // shadow site -> original instruction index
  std::vector<std::string> flags;    // truncation notes
  RefinementSpec spec;
};

/// Inlines, before each selected branch, a shadow copy of the following
/// program fragment over the duplicated register bank and a copy-on-write
/// memory overlay. Selected branches are (by default) negated in the copies;
/// memory operations in the copies emit shadow observations. The transformed
/// program's architectural behaviour equals the original's.
ShadowedProgram apply_refinement(const ir::Program& p, const RefinementSpec& spec);

struct ShadowedRun {
  ir::MachineState final_state{0};
  std::vector<ir::Observation> trace;  // includes shadow-* entries
};

/// Concrete execution of a transformed program. Shadow state is initialized
/// from the real state at each Start and discarded at End; out-of-range
/// shadow accesses are suppressed (the observation still records the
/// address, the read yields zero).
ShadowedRun run_shadowed(const ir::Program& transformed, ir::MachineState s,
                         uint64_t max_steps = 200000);

using symx::project_observations;

struct Candidate {
  RefinementSpec spec;
  bool kept = false;
  std::string reason;  // why the candidate was filtered, empty if kept
};

struct EnumerateOptions {
  uint32_t d_shadow = 32;
  uint32_t max_subset_branches = 4;  // full subset enumeration bound
  uint64_t depth_limit = 4096;
};

/// Candidate refinements ordered by branch count: a candidate is kept when
/// every fragment raises at least one satisfiable shadow observation, no
/// selected branch's negation suppresses behaviour a lone misspeculation of
/// that fragment's anchor would exhibit, and the distinguishing constraint
/// (with the program's security labels applied) is satisfiable.
std::vector<Candidate> enumerate_refinements_detailed(const ir::Program& p,
                                                      solve::SatisfiabilityService& solver,
                                                      EnumerateOptions opts = {});
std::vector<RefinementSpec> enumerate_refinements(const ir::Program& p,
                                                  solve::SatisfiabilityService& solver,
                                                  EnumerateOptions opts = {});

}  // namespace spectest::refine

#endif  // SPECTEST_REFINE_HPP
