// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_HARDEN_HPP
#define SPECTEST_HARDEN_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "spectest/ir.hpp"

namespace spectest::harden {

struct HardenError : std::runtime_error {
  explicit HardenError(const std::string& m) : std::runtime_error(m) {}
};

enum class PassKind { ValueSlh, AddrSlh, Fence };
const char* pass_name(PassKind k);

enum class PointKind { ValueMask, AddressMask, Fence };

/// One removable protection: the mask (or fence) guarding one load (or one
/// branch arm). Taint-tracking instructions are never part of a point.
struct HardeningPoint {
  int id = 0;              // ordinal, program order
  uint32_t site = 0;       // original instruction index of the protected load/branch
  PointKind kind = PointKind::ValueMask;
  bool taken_arm = false;  // fences: which successor of the branch
};

/// A hardened program is materialized on demand from the unhardened base,
/// the pass kind and the set of active points, which keeps point removal and
/// reinsertion exact inverses and keeps points independent of each other.
struct HardenedProgram {
  ir::Program base;
  PassKind pass = PassKind::ValueSlh;
  std::vector<HardeningPoint> points;
  std::set<int> active;
  unsigned taint_register = ir::kDefaultTaintRegister;
  unsigned scratch_register = 0;  // address-SLH address staging register

  /// Builds the program text with taint tracking plus every active point.
  /// When `point_instrs` is given it receives, per active point, the indices
  /// of that point's inserted instructions in the returned program.
  ir::Program materialize(std::map<int, std::vector<uint32_t>>* point_instrs = nullptr) const;
};

/// Speculative load hardening: taint register initialized to all-ones at
/// entry, a csel+csdb taint update at the head of both successors of every
/// conditional branch, and per-load masks (value: destination anded with the
/// taint after the load; address: the address register anded with the taint
/// into a scratch register the load then uses).
HardenedProgram apply_slh(const ir::Program& p, PassKind kind,
                          unsigned taint_register = ir::kDefaultTaintRegister);

/// Fence (dsb+isb) insertion at the head of both successors of each selected
/// branch; an empty site list selects every conditional branch.
HardenedProgram insert_fences(const ir::Program& p, const std::vector<uint32_t>& branch_sites = {});

HardenedProgram remove_hardening(HardenedProgram hp, int id);
HardenedProgram insert_hardening(HardenedProgram hp, int id);

}  // namespace spectest::harden

#endif  // SPECTEST_HARDEN_HPP
