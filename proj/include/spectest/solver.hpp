// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_SOLVER_HPP
#define SPECTEST_SOLVER_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spectest/symexpr.hpp"

namespace spectest::solve {

using sym::ExprPtr;
using ir::word_t;

enum class SatResult { Sat, Unsat, Unknown };

struct Model {
  std::map<std::pair<int, unsigned>, word_t> regs;   // (copy, index) -> value
  std::map<std::pair<int, word_t>, word_t> cells;    // (copy, byte addr) -> word value
  sym::Valuation to_valuation() const;
};

struct SolveOutcome {
  SatResult status = SatResult::Unknown;
  Model model;       // valid when status == Sat
  std::string note;  // diagnostic for Unknown
};

/// Satisfiability backend. Verdicts are relative to the configured per-symbol
/// value domains: `unsat` means no assignment exists with every register and
/// memory-cell symbol inside its domain.
class SatisfiabilityService {
 public:
  virtual ~SatisfiabilityService() = default;
  virtual SolveOutcome solve(const ExprPtr& formula) = 0;
  virtual std::string name() const = 0;
  virtual unsigned domain_bits() const = 0;
};

struct EnumerativeOptions {
  unsigned domain_bits = 8;
  std::map<unsigned, unsigned> reg_domain_bits;  // per-register override (both copies)
  uint64_t max_evals = 80'000'000;
  unsigned max_variables = 8;
  uint64_t seed = 0;
};

/// Exhaustive enumeration over the symbol domains, with top-level equality
/// substitution and on-demand memory-cell discovery. Deterministic for a
/// fixed seed. Not safe for concurrent use; create one per execution.
class EnumerativeSolver : public SatisfiabilityService {
 public:
  explicit EnumerativeSolver(EnumerativeOptions opts = {});
  ~EnumerativeSolver() override;

  SolveOutcome solve(const ExprPtr& formula) override;
  std::string name() const override { return "enumerate"; }
  unsigned domain_bits() const override { return opts_.domain_bits; }

  /// Resumable model iteration over one fixed formula: each next() yields a
  /// model distinct from all previously yielded ones (the blocking-clause
  /// discipline used for test diversification).
  class Session {
   public:
    Session(const EnumerativeSolver& solver, ExprPtr formula);
    ~Session();
    SolveOutcome next();

   private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
  };

  const EnumerativeOptions& options() const { return opts_; }

 private:
  EnumerativeOptions opts_;
};

/// Emits a complete SMT-LIB 2 QF_ABV query (declarations, domain assertions,
/// assertion of `formula`, check-sat) for the external-process backend and for
/// export; exactly what SmtProcessSolver sends. Pass `check_sat = false` for
/// a bare declarations-plus-assertion export.
std::string emit_smtlib_query(const ExprPtr& formula, unsigned domain_bits,
                              bool check_sat = true);

struct SmtProcessOptions {
  std::string command;  // e.g. "z3 -in"; empty -> $SPECTEST_SMT_SOLVER
  unsigned domain_bits = 8;
  int timeout_ms = 30000;
};

/// Adapter speaking SMT-LIB 2 text to an external solver over stdin/stdout.
/// One subprocess per solve call; timeouts surface as Unknown.
class SmtProcessSolver : public SatisfiabilityService {
 public:
  explicit SmtProcessSolver(SmtProcessOptions opts);
  SolveOutcome solve(const ExprPtr& formula) override;
  std::string name() const override { return "external"; }
  unsigned domain_bits() const override { return opts_.domain_bits; }

 private:
  SmtProcessOptions opts_;
};

}  // namespace spectest::solve

#endif  // SPECTEST_SOLVER_HPP
