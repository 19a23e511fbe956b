// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPECTEST_IR_HPP
#define SPECTEST_IR_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectest::ir {

using word_t = uint32_t;

inline constexpr unsigned kNumRegisters = 32;
inline constexpr word_t kDefaultAddrSpace = 4096;
inline constexpr word_t kDefaultDataBase = 0x40;
inline constexpr unsigned kDefaultTaintRegister = 16;

/// Error raised by the assembler and by concrete evaluation. `line`/`column`
/// are 1-based and zero when the error is not tied to source text.
struct IrError : std::runtime_error {
  IrError(std::string msg, int line = 0, int column = 0)
      : std::runtime_error(std::move(msg)), line(line), column(column) {}
  int line;
  int column;
};

enum class Opcode {
  Load,
  Store,
  Mov,
  Add,
  Sub,
  And,
  Or,
  Xor,
  Shl,
  Shr,
  Mul,
  Cmp,
  Branch,
  Jump,
  Csel,
  Csdb,
  Fence,
  Nop,
  Obs,
  Halt,
};

enum class Cond { Eq, Ne, Lt, Ge };  // lt/ge compare unsigned

/// Register reference. `shadow` selects the duplicated register bank used by
/// programs produced by the refine transformation; plain programs never set it.
struct Reg {
  uint8_t index = 0;
  bool shadow = false;
  friend bool operator==(const Reg&, const Reg&) = default;
};

struct Operand {
  bool is_reg = false;
  Reg reg;
  word_t imm = 0;
  friend bool operator==(const Operand&, const Operand&) = default;

  static Operand make_reg(Reg r) { return Operand{true, r, 0}; }
  static Operand make_imm(word_t v) { return Operand{false, {}, v}; }
};

/// Effective address `base + offset`; `has_base` is false for absolute
/// addresses.
struct AddrExpr {
  bool has_base = false;
  Reg base;
  word_t offset = 0;
  friend bool operator==(const AddrExpr&, const AddrExpr&) = default;
};

enum class ObsTag { Base, Refined, Initial };

/// Affine observation expression: sum of signed register/flag/constant terms.
struct ObsTerm {
  enum Kind { Register, Flag, Constant } kind = Constant;
  bool negate = false;
  Reg reg;
  char flag = 'Z';  // one of N,Z,C,V
  word_t value = 0;
  friend bool operator==(const ObsTerm&, const ObsTerm&) = default;
};

struct ObsExpr {
  std::vector<ObsTerm> terms;
  friend bool operator==(const ObsExpr&, const ObsExpr&) = default;
};

struct Instruction {
  Opcode op = Opcode::Nop;
  Reg rd;            // destination (load/mov/alu/csel) or store value register
  Reg rs;            // first alu source / csel true-value
  Operand src2;      // alu second operand / mov source / cmp rhs / csel false-value
  AddrExpr addr;     // load/store
  Cond cond = Cond::Eq;  // branch/csel
  uint32_t target = 0;   // resolved branch/jump target (instruction index)
  std::string target_label;
  ObsTag obs_tag = ObsTag::Base;
  ObsExpr obs_expr;

  // Shadow bookkeeping, set by the refine transformation only.
  bool shadow = false;
  int shadow_fragment = -1;
  int origin_index = -1;  // original instruction this shadow copy mirrors

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

enum class SecLabel { Public, Secret };

struct DataObject {
  std::string name;
  word_t offset = 0;  // byte offset in the address space
  word_t size = 0;    // bytes
  word_t init_value = 0;  // scalar initializer (.word); arrays zero-filled
  bool is_array = false;
  SecLabel label = SecLabel::Secret;
  friend bool operator==(const DataObject&, const DataObject&) = default;
};

/// Initial observation attached before the first instruction (`.obs initial`).
struct InitialObs {
  bool is_reg = false;
  Reg reg;
  std::string data_name;
  friend bool operator==(const InitialObs&, const InitialObs&) = default;
};

/// Shadow fragment extent inside a transformed instruction stream.
struct ShadowFragment {
  uint32_t begin = 0;  // index of first shadow instruction
  uint32_t end = 0;    // one past last shadow instruction
  uint32_t anchor = 0;  // index (in the transformed stream) of the anchored branch
  int anchor_origin = -1;  // original index of the anchored branch
  bool truncated_by_fence = false;
  friend bool operator==(const ShadowFragment&, const ShadowFragment&) = default;
};

struct Program {
  std::vector<Instruction> code;
  std::vector<std::pair<std::string, uint32_t>> labels;  // sorted by index
  std::vector<DataObject> data;
  std::array<SecLabel, kNumRegisters> reg_labels{};
  std::vector<InitialObs> initial_obs;
  std::vector<ShadowFragment> fragments;  // populated by the refine transformation
  word_t addrspace = kDefaultAddrSpace;
  uint32_t entry = 0;
  std::string entry_label;
  word_t data_base = kDefaultDataBase;

  Program() { reg_labels.fill(SecLabel::Secret); }

  const DataObject* find_data(const std::string& name) const;
  const DataObject* data_at(word_t addr) const;  // object containing addr, if any
  std::optional<uint32_t> label_index(const std::string& name) const;
  /// Name of a label placed at instruction `index`, empty if none.
  std::string label_at(uint32_t index) const;
  bool has_shadow_code() const;
  word_t data_end() const;  // one past the last data byte

  friend bool operator==(const Program&, const Program&) = default;
};

enum class ObsKind {
  LoadAddress,
  StoreAddress,
  BranchOutcome,
  InitialPublic,
  ShadowLoadAddress,
  ShadowStoreAddress,
};

const char* obs_kind_name(ObsKind k);

struct Observation {
  ObsKind kind;
  word_t value;  // branch outcomes use 0/1
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct Flags {
  bool n = false, z = false, c = false, v = false;
  friend bool operator==(const Flags&, const Flags&) = default;
};

/// Architectural machine state. Single-owner mutable; everything else in this
/// module is immutable after construction.
struct MachineState {
  std::array<word_t, kNumRegisters> regs{};
  Flags flags;
  std::vector<uint8_t> mem;
  uint32_t pc = 0;
  bool halted = false;

  explicit MachineState(word_t addrspace = kDefaultAddrSpace)
      : mem(addrspace, 0) {}

  word_t load_word(word_t addr) const;
  void store_word(word_t addr, word_t value);
  bool in_range(word_t addr) const { return static_cast<uint64_t>(addr) + 4 <= mem.size(); }

  friend bool operator==(const MachineState&, const MachineState&) = default;
};

/// Fresh state for `p`: zero registers, data-section initializers applied.
MachineState initial_state(const Program& p);

bool eval_cond(Cond c, const Flags& f);
Flags compute_flags(word_t a, word_t b);  // flags of `cmp a, b`

/// Executes the instruction at `s.pc`. Deterministic; returns the observation
/// the step emits, if any. Faults (out-of-range access, shadow instruction in
/// a plain evaluation) raise IrError.
std::optional<Observation> eval_step(MachineState& s, const Program& p);

struct ConcreteRun {
  MachineState final_state{0};
  std::vector<Observation> trace;
  uint64_t steps = 0;
};

/// Runs to halt (or `max_steps`) collecting the observation trace.
ConcreteRun run_concrete(const Program& p, MachineState s, uint64_t max_steps = 100000);

/// Low-equivalence: agreement on public registers and public data regions.
bool low_equivalent(const Program& p, const MachineState& a, const MachineState& b);

Program parse_program(const std::string& text);
std::string print_program(const Program& p);

std::string reg_name(Reg r);
std::string cond_name(Cond c);

}  // namespace spectest::ir

#endif  // SPECTEST_IR_HPP
