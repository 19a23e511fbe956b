// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/ir.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace spectest::ir {

namespace {

struct Token {
  std::string text;
  int line;
  int column;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Splits one line into tokens; punctuation characters are single tokens.
std::vector<Token> lex_line(const std::string& line, int lineno) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == ';') break;  // comment
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    int col = static_cast<int>(i) + 1;
    if (is_ident_start(c)) {
      size_t j = i + 1;
      while (j < line.size() && is_ident_char(line[j])) ++j;
      out.push_back({line.substr(i, j - i), lineno, col});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '#' && i + 1 < line.size())) {
      size_t j = i;
      if (line[j] == '#') ++j;
      size_t start = j;
      if (j + 1 < line.size() && line[j] == '0' && (line[j + 1] == 'x' || line[j + 1] == 'X')) j += 2;
      while (j < line.size() && std::isalnum(static_cast<unsigned char>(line[j]))) ++j;
      if (c == '#' && start < line.size() && is_ident_start(line[start])) {
        // '#name' — immediate naming a data object
        out.push_back({line.substr(i, j - i), lineno, col});
      } else {
        out.push_back({line.substr(i, j - i), lineno, col});
      }
      i = j;
    } else {
      out.push_back({std::string(1, c), lineno, col});
      ++i;
    }
  }
  return out;
}

struct PendingObs {
  ObsTag tag;
  ObsExpr expr;
  InitialObs initial;
  bool is_initial = false;
};

struct Parser {
  std::vector<Token> toks;
  size_t pos = 0;
  int lineno = 0;

  bool done() const { return pos >= toks.size(); }
  const Token& peek() const {
    if (done()) throw IrError("unexpected end of line", lineno, 0);
    return toks[pos];
  }
  Token next() {
    Token t = peek();
    ++pos;
    return t;
  }
  void expect(const std::string& s) {
    Token t = next();
    if (t.text != s) throw IrError("expected '" + s + "', got '" + t.text + "'", t.line, t.column);
  }
  bool accept(const std::string& s) {
    if (!done() && toks[pos].text == s) {
      ++pos;
      return true;
    }
    return false;
  }
};

std::optional<Reg> try_parse_reg(const std::string& t) {
  if (t.size() < 2 || (t[0] != 'r' && t[0] != 's')) return std::nullopt;
  for (size_t i = 1; i < t.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(t[i]))) return std::nullopt;
  int idx = std::stoi(t.substr(1));
  if (idx < 0 || idx >= static_cast<int>(kNumRegisters)) return std::nullopt;
  return Reg{static_cast<uint8_t>(idx), t[0] == 's'};
}

Reg parse_reg(Parser& p) {
  Token t = p.next();
  auto r = try_parse_reg(t.text);
  if (!r) throw IrError("expected register, got '" + t.text + "'", t.line, t.column);
  return *r;
}

std::optional<word_t> try_parse_int(const std::string& s) {
  std::string t = s;
  if (!t.empty() && t[0] == '#') t = t.substr(1);
  if (t.empty()) return std::nullopt;
  if (!std::isdigit(static_cast<unsigned char>(t[0]))) return std::nullopt;
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(t, &used, 0);
    if (used != t.size() || v > 0xFFFFFFFFull) return std::nullopt;
    return static_cast<word_t>(v);
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

const DataObject* Program::find_data(const std::string& name) const {
  for (const auto& d : data)
    if (d.name == name) return &d;
  return nullptr;
}

const DataObject* Program::data_at(word_t addr) const {
  for (const auto& d : data)
    if (addr >= d.offset && addr < d.offset + d.size) return &d;
  return nullptr;
}

std::optional<uint32_t> Program::label_index(const std::string& name) const {
  for (const auto& [n, i] : labels)
    if (n == name) return i;
  return std::nullopt;
}

std::string Program::label_at(uint32_t index) const {
  for (const auto& [n, i] : labels)
    if (i == index) return n;
  return {};
}

bool Program::has_shadow_code() const {
  return std::any_of(code.begin(), code.end(), [](const Instruction& in) { return in.shadow; });
}

word_t Program::data_end() const {
  word_t end = data_base;
  for (const auto& d : data) end = std::max(end, d.offset + d.size);
  return end;
}

const char* obs_kind_name(ObsKind k) {
  switch (k) {
    case ObsKind::LoadAddress: return "load-address";
    case ObsKind::StoreAddress: return "store-address";
    case ObsKind::BranchOutcome: return "branch-outcome";
    case ObsKind::InitialPublic: return "initial-public";
    case ObsKind::ShadowLoadAddress: return "shadow-load-address";
    case ObsKind::ShadowStoreAddress: return "shadow-store-address";
  }
  return "?";
}

word_t MachineState::load_word(word_t addr) const {
  if (!in_range(addr)) throw IrError("memory load out of range: " + std::to_string(addr));
  return static_cast<word_t>(mem[addr]) | static_cast<word_t>(mem[addr + 1]) << 8 |
         static_cast<word_t>(mem[addr + 2]) << 16 | static_cast<word_t>(mem[addr + 3]) << 24;
}

void MachineState::store_word(word_t addr, word_t value) {
  if (!in_range(addr)) throw IrError("memory store out of range: " + std::to_string(addr));
  mem[addr] = value & 0xFF;
  mem[addr + 1] = (value >> 8) & 0xFF;
  mem[addr + 2] = (value >> 16) & 0xFF;
  mem[addr + 3] = (value >> 24) & 0xFF;
}

MachineState initial_state(const Program& p) {
  MachineState s(p.addrspace);
  s.pc = p.entry;
  for (const auto& d : p.data)
    if (!d.is_array) s.store_word(d.offset, d.init_value);
  return s;
}

bool eval_cond(Cond c, const Flags& f) {
  switch (c) {
    case Cond::Eq: return f.z;
    case Cond::Ne: return !f.z;
    case Cond::Lt: return !f.c;  // unsigned lower
    case Cond::Ge: return f.c;   // unsigned greater-or-equal
  }
  return false;
}

Flags compute_flags(word_t a, word_t b) {
  word_t d = a - b;
  Flags f;
  f.n = (d >> 31) & 1;
  f.z = a == b;
  f.c = a >= b;
  int64_t sd = static_cast<int64_t>(static_cast<int32_t>(a)) - static_cast<int32_t>(b);
  f.v = sd < INT32_MIN || sd > INT32_MAX;
  return f;
}

namespace {

word_t operand_value(const Operand& o, const MachineState& s) {
  return o.is_reg ? s.regs[o.reg.index] : o.imm;
}

word_t addr_value(const AddrExpr& a, const MachineState& s) {
  word_t v = a.offset;
  if (a.has_base) v += s.regs[a.base.index];
  return v;
}

word_t eval_obs_expr(const ObsExpr& e, const MachineState& s) {
  word_t acc = 0;
  for (const auto& t : e.terms) {
    word_t v = 0;
    switch (t.kind) {
      case ObsTerm::Register: v = s.regs[t.reg.index]; break;
      case ObsTerm::Constant: v = t.value; break;
      case ObsTerm::Flag:
        switch (t.flag) {
          case 'N': v = s.flags.n; break;
          case 'Z': v = s.flags.z; break;
          case 'C': v = s.flags.c; break;
          case 'V': v = s.flags.v; break;
        }
        break;
    }
    acc = t.negate ? acc - v : acc + v;
  }
  return acc;
}

}  // namespace

std::optional<Observation> eval_step(MachineState& s, const Program& p) {
  if (s.halted) throw IrError("eval_step on halted state");
  if (s.pc >= p.code.size()) throw IrError("pc out of range: " + std::to_string(s.pc));
  const Instruction& in = p.code[s.pc];
  if (in.shadow) throw IrError("shadow instruction in plain evaluation (index " + std::to_string(s.pc) + ")");
  std::optional<Observation> obs;
  uint32_t next = s.pc + 1;
  switch (in.op) {
    case Opcode::Load: {
      word_t a = addr_value(in.addr, s);
      s.regs[in.rd.index] = s.load_word(a);
      obs = Observation{ObsKind::LoadAddress, a};
      break;
    }
    case Opcode::Store: {
      word_t a = addr_value(in.addr, s);
      s.store_word(a, s.regs[in.rd.index]);
      obs = Observation{ObsKind::StoreAddress, a};
      break;
    }
    case Opcode::Mov: s.regs[in.rd.index] = operand_value(in.src2, s); break;
    case Opcode::Add: s.regs[in.rd.index] = s.regs[in.rs.index] + operand_value(in.src2, s); break;
    case Opcode::Sub: s.regs[in.rd.index] = s.regs[in.rs.index] - operand_value(in.src2, s); break;
    case Opcode::And: s.regs[in.rd.index] = s.regs[in.rs.index] & operand_value(in.src2, s); break;
    case Opcode::Or: s.regs[in.rd.index] = s.regs[in.rs.index] | operand_value(in.src2, s); break;
    case Opcode::Xor: s.regs[in.rd.index] = s.regs[in.rs.index] ^ operand_value(in.src2, s); break;
    case Opcode::Shl: s.regs[in.rd.index] = s.regs[in.rs.index] << (operand_value(in.src2, s) & 31); break;
    case Opcode::Shr: s.regs[in.rd.index] = s.regs[in.rs.index] >> (operand_value(in.src2, s) & 31); break;
    case Opcode::Mul: s.regs[in.rd.index] = s.regs[in.rs.index] * operand_value(in.src2, s); break;
    case Opcode::Cmp: s.flags = compute_flags(s.regs[in.rd.index], operand_value(in.src2, s)); break;
    case Opcode::Branch: {
      bool taken = eval_cond(in.cond, s.flags);
      obs = Observation{ObsKind::BranchOutcome, taken ? 1u : 0u};
      if (taken) next = in.target;
      break;
    }
    case Opcode::Jump: next = in.target; break;
    case Opcode::Csel:
      s.regs[in.rd.index] =
          eval_cond(in.cond, s.flags) ? s.regs[in.rs.index] : operand_value(in.src2, s);
      break;
    case Opcode::Csdb:
    case Opcode::Fence:
    case Opcode::Nop: break;
    case Opcode::Obs: {
      word_t v = eval_obs_expr(in.obs_expr, s);
      ObsKind k = in.obs_tag == ObsTag::Refined  ? ObsKind::ShadowLoadAddress
                  : in.obs_tag == ObsTag::Initial ? ObsKind::InitialPublic
                                                  : ObsKind::LoadAddress;
      obs = Observation{k, v};
      break;
    }
    case Opcode::Halt:
      s.halted = true;
      return std::nullopt;
  }
  s.pc = next;
  return obs;
}

ConcreteRun run_concrete(const Program& p, MachineState s, uint64_t max_steps) {
  ConcreteRun r;
  while (!s.halted) {
    if (r.steps++ >= max_steps) throw IrError("step budget exceeded");
    auto obs = eval_step(s, p);
    if (obs) r.trace.push_back(*obs);
  }
  r.final_state = std::move(s);
  return r;
}

bool low_equivalent(const Program& p, const MachineState& a, const MachineState& b) {
  for (unsigned i = 0; i < kNumRegisters; ++i)
    if (p.reg_labels[i] == SecLabel::Public && a.regs[i] != b.regs[i]) return false;
  for (const auto& d : p.data) {
    if (d.label != SecLabel::Public) continue;
    for (word_t off = 0; off < d.size; ++off)
      if (a.mem[d.offset + off] != b.mem[d.offset + off]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Assembler
// ---------------------------------------------------------------------------

namespace {

Operand parse_operand(Parser& p, const Program& prog) {
  const Token& t = p.peek();
  if (auto r = try_parse_reg(t.text)) {
    p.next();
    return Operand::make_reg(*r);
  }
  if (auto v = try_parse_int(t.text)) {
    p.next();
    return Operand::make_imm(*v);
  }
  std::string name = t.text;
  if (!name.empty() && name[0] == '#') name = name.substr(1);
  if (const DataObject* d = prog.find_data(name)) {
    p.next();
    return Operand::make_imm(d->offset);
  }
  throw IrError("expected register, immediate or data name, got '" + t.text + "'", t.line, t.column);
}

word_t parse_imm_or_name(Parser& p, const Program& prog) {
  Operand o = parse_operand(p, prog);
  if (o.is_reg) throw IrError("expected immediate or data name", p.lineno, 0);
  return o.imm;
}

AddrExpr parse_addr(Parser& p, const Program& prog) {
  p.expect("[");
  AddrExpr a;
  const Token& t = p.peek();
  if (auto r = try_parse_reg(t.text)) {
    p.next();
    a.has_base = true;
    a.base = *r;
  } else {
    a.offset = parse_imm_or_name(p, prog);
  }
  while (!p.done() && (p.peek().text == "+" || p.peek().text == "-")) {
    bool neg = p.next().text == "-";
    const Token& u = p.peek();
    if (auto r = try_parse_reg(u.text)) {
      if (a.has_base || neg) throw IrError("address must be register + constant", u.line, u.column);
      p.next();
      a.has_base = true;
      a.base = *r;
    } else {
      word_t v = parse_imm_or_name(p, prog);
      a.offset += neg ? static_cast<word_t>(-static_cast<int64_t>(v)) : v;
    }
  }
  p.expect("]");
  return a;
}

std::optional<Cond> cond_from_name(const std::string& s) {
  if (s == "eq") return Cond::Eq;
  if (s == "ne") return Cond::Ne;
  if (s == "lt") return Cond::Lt;
  if (s == "ge") return Cond::Ge;
  return std::nullopt;
}

ObsExpr parse_obs_expr(Parser& p, const Program& prog) {
  ObsExpr e;
  bool neg = false;
  while (!p.done()) {
    const Token& t = p.peek();
    ObsTerm term;
    term.negate = neg;
    if (auto r = try_parse_reg(t.text)) {
      term.kind = ObsTerm::Register;
      term.reg = *r;
      p.next();
    } else if (t.text.size() == 1 && std::string("NZCV").find(t.text[0]) != std::string::npos) {
      term.kind = ObsTerm::Flag;
      term.flag = t.text[0];
      p.next();
    } else {
      term.kind = ObsTerm::Constant;
      term.value = parse_imm_or_name(p, prog);
    }
    e.terms.push_back(term);
    if (p.done()) break;
    if (p.accept("+")) neg = false;
    else if (p.accept("-")) neg = true;
    else throw IrError("unexpected token in observation expression: '" + p.peek().text + "'",
                       p.peek().line, p.peek().column);
  }
  if (e.terms.empty()) throw IrError("empty observation expression", p.lineno, 0);
  return e;
}

}  // namespace

Program parse_program(const std::string& text) {
  Program prog;
  std::vector<std::string> lines;
  {
    std::istringstream is(text);
    std::string l;
    while (std::getline(is, l)) lines.push_back(l);
  }

  // First pass: data and configuration directives only, so that data names
  // are usable as immediates wherever they appear.
  word_t next_data = 0;
  bool data_base_seen = false;
  std::set<std::string> data_names;
  for (int ln = 0; ln < static_cast<int>(lines.size()); ++ln) {
    auto toks = lex_line(lines[ln], ln + 1);
    if (toks.empty()) continue;
    Parser p{toks, 0, ln + 1};
    const std::string& head = toks[0].text;
    if (head == ".addrspace") {
      p.next();
      prog.addrspace = parse_imm_or_name(p, prog);
      if (prog.addrspace < 64 || prog.addrspace > (1u << 28))
        throw IrError("addrspace out of range", ln + 1, 1);
    } else if (head == ".word" || head == ".array") {
      p.next();
      Token name = p.next();
      if (data_names.count(name.text))
        throw IrError("duplicate data name '" + name.text + "'", name.line, name.column);
      data_names.insert(name.text);
      DataObject d;
      d.name = name.text;
      d.is_array = head == ".array";
      word_t v = parse_imm_or_name(p, prog);
      if (!data_base_seen) {
        next_data = prog.data_base;
        data_base_seen = true;
      }
      d.offset = next_data;
      d.size = d.is_array ? v : 4;
      d.init_value = d.is_array ? 0 : v;
      if (d.size == 0) throw IrError("zero-sized data object", name.line, name.column);
      next_data = (d.offset + d.size + 3) & ~3u;  // keep objects word-aligned
      prog.data.push_back(d);
    }
  }
  if (prog.data_end() > prog.addrspace)
    throw IrError("data section exceeds the declared address space");

  // Second pass: labels and instructions.
  struct PendingLabel {
    std::string name;
    int line;
  };
  std::vector<PendingLabel> pending_labels;
  std::map<std::string, uint32_t> label_map;

  auto place_labels = [&]() {
    for (auto& pl : pending_labels) {
      if (label_map.count(pl.name))
        throw IrError("duplicate label '" + pl.name + "'", pl.line, 1);
      label_map[pl.name] = static_cast<uint32_t>(prog.code.size());
      prog.labels.emplace_back(pl.name, static_cast<uint32_t>(prog.code.size()));
    }
    pending_labels.clear();
  };

  for (int ln = 0; ln < static_cast<int>(lines.size()); ++ln) {
    auto toks = lex_line(lines[ln], ln + 1);
    if (toks.empty()) continue;
    Parser p{toks, 0, ln + 1};

    // Leading labels.
    while (p.pos + 1 < p.toks.size() && p.toks[p.pos + 1].text == ":" &&
           is_ident_start(p.toks[p.pos].text[0]) && p.toks[p.pos].text[0] != '.') {
      pending_labels.push_back({p.next().text, ln + 1});
      p.expect(":");
    }
    if (p.done()) continue;

    Token head = p.next();
    const std::string& h = head.text;

    if (h == ".addrspace") continue;  // handled in first pass
    if (h == ".word" || h == ".array") continue;
    if (h == ".entry") {
      prog.entry_label = p.next().text;
      continue;
    }
    if (h == ".public" || h == ".secret") {
      Token t = p.next();
      SecLabel lab = h == ".public" ? SecLabel::Public : SecLabel::Secret;
      if (auto r = try_parse_reg(t.text)) {
        if (r->shadow) throw IrError("cannot label a shadow register", t.line, t.column);
        prog.reg_labels[r->index] = lab;
      } else {
        bool found = false;
        for (auto& d : prog.data)
          if (d.name == t.text) {
            d.label = lab;
            found = true;
          }
        if (!found) throw IrError("unknown data name '" + t.text + "'", t.line, t.column);
      }
      continue;
    }
    if (h == ".obs") {
      Token tag = p.next();
      if (tag.text == "initial") {
        Token t = p.next();
        InitialObs io;
        if (auto r = try_parse_reg(t.text)) {
          io.is_reg = true;
          io.reg = *r;
        } else if (prog.find_data(t.text)) {
          io.data_name = t.text;
        } else {
          throw IrError("'.obs initial' expects a register or data name", t.line, t.column);
        }
        prog.initial_obs.push_back(io);
      } else if (tag.text == "base" || tag.text == "refined") {
        place_labels();
        Instruction in;
        in.op = Opcode::Obs;
        in.obs_tag = tag.text == "base" ? ObsTag::Base : ObsTag::Refined;
        in.obs_expr = parse_obs_expr(p, prog);
        prog.code.push_back(in);
      } else {
        throw IrError("unknown observation tag '" + tag.text + "'", tag.line, tag.column);
      }
      continue;
    }
    if (h[0] == '.') throw IrError("unknown directive '" + h + "'", head.line, head.column);

    place_labels();
    Instruction in;
    auto alu = [&](Opcode op) {
      in.op = op;
      in.rd = parse_reg(p);
      p.expect(",");
      in.rs = parse_reg(p);
      p.expect(",");
      in.src2 = parse_operand(p, prog);
    };
    if (h == "load") {
      in.op = Opcode::Load;
      in.rd = parse_reg(p);
      p.expect(",");
      in.addr = parse_addr(p, prog);
    } else if (h == "store") {
      in.op = Opcode::Store;
      in.rd = parse_reg(p);
      p.expect(",");
      in.addr = parse_addr(p, prog);
    } else if (h == "mov") {
      in.op = Opcode::Mov;
      in.rd = parse_reg(p);
      p.expect(",");
      in.src2 = parse_operand(p, prog);
    } else if (h == "add") alu(Opcode::Add);
    else if (h == "sub") alu(Opcode::Sub);
    else if (h == "and") alu(Opcode::And);
    else if (h == "or") alu(Opcode::Or);
    else if (h == "xor") alu(Opcode::Xor);
    else if (h == "shl") alu(Opcode::Shl);
    else if (h == "shr") alu(Opcode::Shr);
    else if (h == "mul") alu(Opcode::Mul);
    else if (h == "cmp") {
      in.op = Opcode::Cmp;
      in.rd = parse_reg(p);
      p.expect(",");
      in.src2 = parse_operand(p, prog);
    } else if (h == "beq" || h == "bne" || h == "blt" || h == "bge") {
      in.op = Opcode::Branch;
      in.cond = *cond_from_name(h.substr(1));
      in.target_label = p.next().text;
    } else if (h == "jump") {
      in.op = Opcode::Jump;
      in.target_label = p.next().text;
    } else if (h == "csel") {
      in.op = Opcode::Csel;
      in.rd = parse_reg(p);
      p.expect(",");
      in.rs = parse_reg(p);
      p.expect(",");
      in.src2 = parse_operand(p, prog);
      p.expect(",");
      Token c = p.next();
      auto cc = cond_from_name(c.text);
      if (!cc) throw IrError("unknown condition '" + c.text + "'", c.line, c.column);
      in.cond = *cc;
    } else if (h == "csdb") in.op = Opcode::Csdb;
    else if (h == "fence") in.op = Opcode::Fence;
    else if (h == "nop") in.op = Opcode::Nop;
    else if (h == "halt") in.op = Opcode::Halt;
    else throw IrError("unknown mnemonic '" + h + "'", head.line, head.column);

    if (!p.done())
      throw IrError("trailing tokens after instruction: '" + p.peek().text + "'",
                    p.peek().line, p.peek().column);
    prog.code.push_back(in);
  }
  place_labels();

  if (prog.code.empty()) throw IrError("program has no instructions");

  // Resolve control-flow targets.
  for (auto& in : prog.code) {
    if (in.op != Opcode::Branch && in.op != Opcode::Jump) continue;
    auto it = label_map.find(in.target_label);
    if (it == label_map.end()) throw IrError("undefined label '" + in.target_label + "'");
    if (it->second >= prog.code.size()) throw IrError("label '" + in.target_label + "' past program end");
    in.target = it->second;
  }
  if (!prog.entry_label.empty()) {
    auto it = label_map.find(prog.entry_label);
    if (it == label_map.end()) throw IrError("undefined entry label '" + prog.entry_label + "'");
    prog.entry = it->second;
  }

  // Shadow-region sanity: shadow registers may only appear between
  // Start_k/End_k labels that the refine printer emits.
  bool in_shadow = false;
  int frag = -1;
  for (uint32_t i = 0; i < prog.code.size(); ++i) {
    std::string lab = prog.label_at(i);
    if (lab.rfind("Start_", 0) == 0) {
      in_shadow = true;
      ++frag;
      prog.fragments.push_back(ShadowFragment{i, i, i, -1, false});
    } else if (lab.rfind("End_", 0) == 0) {
      in_shadow = false;
      if (!prog.fragments.empty()) {
        prog.fragments.back().end = i;
        prog.fragments.back().anchor = i;  // the real branch carries the End label
      }
    }
    auto uses_shadow = [](const Instruction& x) {
      return x.rd.shadow || x.rs.shadow || (x.src2.is_reg && x.src2.reg.shadow) ||
             (x.addr.has_base && x.addr.base.shadow);
    };
    if (in_shadow) {
      prog.code[i].shadow = true;
      prog.code[i].shadow_fragment = frag;
    } else if (uses_shadow(prog.code[i])) {
      throw IrError("shadow register outside a Start/End region (instruction " +
                    std::to_string(i) + ")");
    }
  }

  return prog;
}

std::string reg_name(Reg r) {
  return std::string(r.shadow ? "s" : "r") + std::to_string(r.index);
}

std::string cond_name(Cond c) {
  switch (c) {
    case Cond::Eq: return "eq";
    case Cond::Ne: return "ne";
    case Cond::Lt: return "lt";
    case Cond::Ge: return "ge";
  }
  return "?";
}

namespace {

std::string imm_str(word_t v) {
  std::ostringstream os;
  if (v >= 10) os << "0x" << std::hex << v;
  else os << v;
  return os.str();
}

std::string operand_str(const Operand& o) {
  return o.is_reg ? reg_name(o.reg) : "#" + imm_str(o.imm);
}

std::string addr_str(const AddrExpr& a) {
  std::string s = "[";
  if (a.has_base) {
    s += reg_name(a.base);
    if (a.offset) s += " + " + imm_str(a.offset);
  } else {
    s += imm_str(a.offset);
  }
  return s + "]";
}

std::string obs_expr_str(const ObsExpr& e) {
  std::string s;
  for (size_t i = 0; i < e.terms.size(); ++i) {
    const auto& t = e.terms[i];
    if (i) s += t.negate ? " - " : " + ";
    else if (t.negate) s += "-";
    switch (t.kind) {
      case ObsTerm::Register: s += reg_name(t.reg); break;
      case ObsTerm::Flag: s += t.flag; break;
      case ObsTerm::Constant: s += imm_str(t.value); break;
    }
  }
  return s;
}

}  // namespace

std::string print_program(const Program& p) {
  std::ostringstream os;
  os << ".addrspace " << p.addrspace << "\n";
  if (!p.entry_label.empty()) os << ".entry " << p.entry_label << "\n";
  for (const auto& d : p.data) {
    if (d.is_array) os << ".array " << d.name << " " << d.size << "\n";
    else os << ".word " << d.name << " " << d.init_value << "\n";
    if (d.label == SecLabel::Public) os << ".public " << d.name << "\n";
  }
  for (unsigned i = 0; i < kNumRegisters; ++i)
    if (p.reg_labels[i] == SecLabel::Public) os << ".public r" << i << "\n";
  for (const auto& io : p.initial_obs)
    os << ".obs initial " << (io.is_reg ? reg_name(io.reg) : io.data_name) << "\n";

  for (uint32_t i = 0; i < p.code.size(); ++i) {
    for (const auto& [n, idx] : p.labels)
      if (idx == i) os << n << ":\n";
    const Instruction& in = p.code[i];
    os << "  ";
    switch (in.op) {
      case Opcode::Load:
        os << "load " << reg_name(in.rd) << ", " << addr_str(in.addr);
        break;
      case Opcode::Store:
        os << "store " << reg_name(in.rd) << ", " << addr_str(in.addr);
        break;
      case Opcode::Mov: os << "mov " << reg_name(in.rd) << ", " << operand_str(in.src2); break;
      case Opcode::Add: os << "add "; goto alu;
      case Opcode::Sub: os << "sub "; goto alu;
      case Opcode::And: os << "and "; goto alu;
      case Opcode::Or: os << "or "; goto alu;
      case Opcode::Xor: os << "xor "; goto alu;
      case Opcode::Shl: os << "shl "; goto alu;
      case Opcode::Shr: os << "shr "; goto alu;
      case Opcode::Mul:
        os << "mul ";
      alu:
        os << reg_name(in.rd) << ", " << reg_name(in.rs) << ", " << operand_str(in.src2);
        break;
      case Opcode::Cmp: os << "cmp " << reg_name(in.rd) << ", " << operand_str(in.src2); break;
      case Opcode::Branch: os << "b" << cond_name(in.cond) << " " << in.target_label; break;
      case Opcode::Jump: os << "jump " << in.target_label; break;
      case Opcode::Csel:
        os << "csel " << reg_name(in.rd) << ", " << reg_name(in.rs) << ", "
           << operand_str(in.src2) << ", " << cond_name(in.cond);
        break;
      case Opcode::Csdb: os << "csdb"; break;
      case Opcode::Fence: os << "fence"; break;
      case Opcode::Nop: os << "nop"; break;
      case Opcode::Obs:
        os << ".obs " << (in.obs_tag == ObsTag::Refined ? "refined" : "base") << " "
           << obs_expr_str(in.obs_expr);
        break;
      case Opcode::Halt: os << "halt"; break;
    }
    os << "\n";
  }
  // Trailing labels (e.g. a label on one-past-the-end is invalid; none emitted).
  return os.str();
}

}  // namespace spectest::ir
