// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_RELSYN_HPP
#define SPECTEST_RELSYN_HPP

#include <set>
#include <string>
#include <vector>

#include "spectest/symexec.hpp"

namespace spectest::rel {

using sym::ExprPtr;

/// An observational model: the enabled base observation kinds plus a subset
/// of the tree's shadow observation sites. The models over one tree form a
/// lattice ordered by the shadow-site subset; its bottom observes only the
/// architectural program, its top observes every shadow site.
struct ObsModel {
  std::set<ir::ObsKind> kinds;
  std::set<int> shadow_sites;
  std::string id;

  static ObsModel base();
  /// Base plus every shadow site of `tree`.
  static ObsModel refined_top(const symx::SymbolicTree& tree);

  bool enables(const symx::SymObs& o) const;
  bool is_base() const { return shadow_sites.empty(); }
};

/// Self-composed observational-equivalence constraint over two state copies
/// (unprimed / primed `_p` symbols).
struct Relation {
  ExprPtr formula;
  std::string model_id;
  uint64_t program_hash = 0;
};

struct RelsynError : std::runtime_error {
  explicit RelsynError(const std::string& m) : std::runtime_error(m) {}
};

uint64_t program_hash(const ir::Program& p);

/// Equivalence of the enabled observation lists of both copies, built
/// recursively over the tree: branch nodes contribute (cond <=> cond') and
/// guard their subtrees; observation entries contribute guarded value
/// equalities; initial observations are unconditional.
Relation synthesize_relation(const symx::SymbolicTree& tree, const ObsModel& model);

/// Pairs equivalent under `base` but distinguishable under `refined`: the
/// base relation conjoined with the negation of the refined-only equalities
/// (some enabled shadow site differs in value, or is reached by exactly one
/// copy).
Relation distinguishing_constraint(const symx::SymbolicTree& tree, const ObsModel& base,
                                   const ObsModel& refined);

std::vector<ObsModel> lattice_neighbors(const ObsModel& m, bool up,
                                        const symx::SymbolicTree& tree);

/// Low-equivalence constraint for the program's public registers and public
/// data words (word-aligned within each object).
ExprPtr public_equality(const ir::Program& p);
Relation add_public_labels(const Relation& rel, const ir::Program& p);

/// SMT-LIB 2 export: declarations plus one assertion.
std::string relation_smtlib(const Relation& r, unsigned domain_bits);

}  // namespace spectest::rel

#endif  // SPECTEST_RELSYN_HPP
