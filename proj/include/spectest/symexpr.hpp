// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_SYMEXPR_HPP
#define SPECTEST_SYMEXPR_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spectest/ir.hpp"

namespace spectest::sym {

using ir::word_t;

enum class Sort : uint8_t { Word, Bool, Mem };

enum class Op : uint8_t {
  Const,    // word or bool constant
  RegSym,   // initial-register symbol a<i>, per copy
  MemSym,   // initial-memory array symbol M, per copy
  Select,   // word read of Mem at word address
  Store,    // Mem update
  Add, Sub, Mul, BitAnd, BitOr, BitXor, Shl, Shr,
  Eq, Ne, Ult, Uge,
  And, Or, Not, Implies, Iff,
  Ite,      // word-sorted if-then-else
};

struct Node;
using ExprPtr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  Sort sort;
  uint8_t copy = 0;   // 0 = unprimed, 1 = primed
  uint8_t reg = 0;    // RegSym index
  word_t value = 0;   // Const payload (bools use 0/1)
  ExprPtr a, b, c;
  size_t hash = 0;
};

bool equal(const ExprPtr& x, const ExprPtr& y);

// --- constructors (perform light constant folding) -------------------------
ExprPtr cword(word_t v);
ExprPtr cbool(bool v);
ExprPtr reg_sym(unsigned index, int copy = 0);
ExprPtr mem_sym(int copy = 0);
ExprPtr select(ExprPtr mem, ExprPtr addr);
ExprPtr store(ExprPtr mem, ExprPtr addr, ExprPtr val);
ExprPtr add(ExprPtr x, ExprPtr y);
ExprPtr sub(ExprPtr x, ExprPtr y);
ExprPtr mul(ExprPtr x, ExprPtr y);
ExprPtr bit_and(ExprPtr x, ExprPtr y);
ExprPtr bit_or(ExprPtr x, ExprPtr y);
ExprPtr bit_xor(ExprPtr x, ExprPtr y);
ExprPtr shl(ExprPtr x, ExprPtr y);
ExprPtr shr(ExprPtr x, ExprPtr y);
ExprPtr eq(ExprPtr x, ExprPtr y);
ExprPtr ne(ExprPtr x, ExprPtr y);
ExprPtr ult(ExprPtr x, ExprPtr y);
ExprPtr uge(ExprPtr x, ExprPtr y);
ExprPtr land(ExprPtr x, ExprPtr y);
ExprPtr lor(ExprPtr x, ExprPtr y);
ExprPtr lnot(ExprPtr x);
ExprPtr implies(ExprPtr x, ExprPtr y);
ExprPtr iff(ExprPtr x, ExprPtr y);
ExprPtr ite(ExprPtr c, ExprPtr t, ExprPtr e);
ExprPtr conj(const std::vector<ExprPtr>& xs);  // empty -> true

bool is_const(const ExprPtr& e);
bool is_true(const ExprPtr& e);
bool is_false(const ExprPtr& e);

/// Canonical form: constants folded, commutative operands sorted. Two
/// normalized expressions are memoization-equal iff `equal` holds.
ExprPtr normalize(const ExprPtr& e);

/// Structural copy with unprimed/primed symbols swapped.
ExprPtr swap_copies(const ExprPtr& e);
/// Structural copy with every symbol moved to `copy`.
ExprPtr to_copy(const ExprPtr& e, int copy);

/// Rewrites under assumptions: every subexpression structurally equal to an
/// assumed literal is replaced by its truth value, then refolded.
ExprPtr simplify_assuming(const ExprPtr& e, const std::vector<std::pair<ExprPtr, bool>>& lits);

// --- evaluation -------------------------------------------------------------

struct MissingCell {
  int copy;
  word_t addr;
};

/// Assignment of symbols for evaluation. Register symbols read from `regs`;
/// memory cells from `cells`, falling back to a backing MachineState when
/// provided, else to zero, else (if `strict_cells`) raising MissingCell.
struct Valuation {
  std::array<word_t, ir::kNumRegisters> regs0{};
  std::array<word_t, ir::kNumRegisters> regs1{};
  std::map<std::pair<int, word_t>, word_t> cells;
  const ir::MachineState* state0 = nullptr;
  const ir::MachineState* state1 = nullptr;
  bool strict_cells = false;

  word_t reg(int copy, unsigned idx) const;
  word_t cell(int copy, word_t addr) const;
};

word_t eval(const ExprPtr& e, const Valuation& v);
bool eval_bool(const ExprPtr& e, const Valuation& v);

/// Valuation whose registers and memory come from a pair of machine states.
Valuation state_valuation(const ir::MachineState& s0, const ir::MachineState& s1);

// --- introspection ----------------------------------------------------------

struct SymbolSet {
  std::vector<std::pair<int, unsigned>> regs;  // (copy, index), sorted
  bool mem[2] = {false, false};
};

SymbolSet collect_symbols(const ExprPtr& e);
void collect_selects(const ExprPtr& e, std::vector<ExprPtr>& out);

std::string to_string(const ExprPtr& e);

/// SMT-LIB 2 term in QF_ABV; symbol spellings match emit_smtlib_query.
std::string to_smtlib(const ExprPtr& e);

}  // namespace spectest::sym

#endif  // SPECTEST_SYMEXPR_HPP
