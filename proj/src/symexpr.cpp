// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/symexpr.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace spectest::sym {

namespace {

size_t mix(size_t h, size_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

ExprPtr make(Op op, Sort sort, ExprPtr a = nullptr, ExprPtr b = nullptr, ExprPtr c = nullptr,
             word_t value = 0, uint8_t copy = 0, uint8_t reg = 0) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->sort = sort;
  n->a = std::move(a);
  n->b = std::move(b);
  n->c = std::move(c);
  n->value = value;
  n->copy = copy;
  n->reg = reg;
  size_t h = mix(static_cast<size_t>(op) * 131, value);
  h = mix(h, copy * 7 + reg * 31);
  if (n->a) h = mix(h, n->a->hash);
  if (n->b) h = mix(h, n->b->hash);
  if (n->c) h = mix(h, n->c->hash);
  n->hash = h;
  return n;
}

bool commutative(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Mul:
    case Op::BitAnd:
    case Op::BitOr:
    case Op::BitXor:
    case Op::Eq:
    case Op::Ne:
    case Op::And:
    case Op::Or:
    case Op::Iff:
      return true;
    default:
      return false;
  }
}

// Total order used to canonicalize commutative operands.
int cmp_expr(const ExprPtr& x, const ExprPtr& y) {
  if (x.get() == y.get()) return 0;
  if (x->op != y->op) return x->op < y->op ? -1 : 1;
  if (x->value != y->value) return x->value < y->value ? -1 : 1;
  if (x->copy != y->copy) return x->copy < y->copy ? -1 : 1;
  if (x->reg != y->reg) return x->reg < y->reg ? -1 : 1;
  const ExprPtr* xs[3] = {&x->a, &x->b, &x->c};
  const ExprPtr* ys[3] = {&y->a, &y->b, &y->c};
  for (int i = 0; i < 3; ++i) {
    bool hx = *xs[i] != nullptr, hy = *ys[i] != nullptr;
    if (hx != hy) return hx < hy ? -1 : 1;
    if (hx) {
      int c = cmp_expr(*xs[i], *ys[i]);
      if (c) return c;
    }
  }
  return 0;
}

}  // namespace

bool equal(const ExprPtr& x, const ExprPtr& y) {
  if (x.get() == y.get()) return true;
  if (!x || !y) return false;
  if (x->hash != y->hash) return false;
  return cmp_expr(x, y) == 0;
}

ExprPtr cword(word_t v) { return make(Op::Const, Sort::Word, nullptr, nullptr, nullptr, v); }
ExprPtr cbool(bool v) { return make(Op::Const, Sort::Bool, nullptr, nullptr, nullptr, v ? 1 : 0); }

ExprPtr reg_sym(unsigned index, int copy) {
  return make(Op::RegSym, Sort::Word, nullptr, nullptr, nullptr, 0, static_cast<uint8_t>(copy),
              static_cast<uint8_t>(index));
}

ExprPtr mem_sym(int copy) {
  return make(Op::MemSym, Sort::Mem, nullptr, nullptr, nullptr, 0, static_cast<uint8_t>(copy));
}

ExprPtr select(ExprPtr mem, ExprPtr addr) {
  // select(store(m,a,v), a) -> v when addresses are structurally equal consts
  if (mem->op == Op::Store && is_const(addr) && is_const(mem->b)) {
    if (mem->b->value == addr->value) return mem->c;
    return select(mem->a, std::move(addr));
  }
  return make(Op::Select, Sort::Word, std::move(mem), std::move(addr));
}

ExprPtr store(ExprPtr mem, ExprPtr addr, ExprPtr val) {
  return make(Op::Store, Sort::Mem, std::move(mem), std::move(addr), std::move(val));
}

bool is_const(const ExprPtr& e) { return e && e->op == Op::Const; }
bool is_true(const ExprPtr& e) { return is_const(e) && e->sort == Sort::Bool && e->value; }
bool is_false(const ExprPtr& e) { return is_const(e) && e->sort == Sort::Bool && !e->value; }

namespace {

ExprPtr binary_word(Op op, ExprPtr x, ExprPtr y) {
  if (is_const(x) && is_const(y)) {
    word_t a = x->value, b = y->value;
    switch (op) {
      case Op::Add: return cword(a + b);
      case Op::Sub: return cword(a - b);
      case Op::Mul: return cword(a * b);
      case Op::BitAnd: return cword(a & b);
      case Op::BitOr: return cword(a | b);
      case Op::BitXor: return cword(a ^ b);
      case Op::Shl: return cword(a << (b & 31));
      case Op::Shr: return cword(a >> (b & 31));
      default: break;
    }
  }
  // identity folds
  if (op == Op::Add && is_const(y) && y->value == 0) return x;
  if (op == Op::Add && is_const(x) && x->value == 0) return y;
  if (op == Op::Sub && is_const(y) && y->value == 0) return x;
  if (op == Op::BitAnd && is_const(y)) {
    if (y->value == 0) return cword(0);
    if (y->value == 0xFFFFFFFFu) return x;
  }
  if (op == Op::BitAnd && is_const(x)) {
    if (x->value == 0) return cword(0);
    if (x->value == 0xFFFFFFFFu) return y;
  }
  if (op == Op::BitOr && is_const(y) && y->value == 0) return x;
  if (op == Op::BitOr && is_const(x) && x->value == 0) return y;
  if ((op == Op::Shl || op == Op::Shr) && is_const(y) && (y->value & 31) == 0) return x;
  if (op == Op::Mul && is_const(y)) {
    if (y->value == 0) return cword(0);
    if (y->value == 1) return x;
  }
  if (op == Op::Mul && is_const(x)) {
    if (x->value == 0) return cword(0);
    if (x->value == 1) return y;
  }
  return make(op, Sort::Word, std::move(x), std::move(y));
}

}  // namespace

ExprPtr add(ExprPtr x, ExprPtr y) { return binary_word(Op::Add, std::move(x), std::move(y)); }
ExprPtr sub(ExprPtr x, ExprPtr y) { return binary_word(Op::Sub, std::move(x), std::move(y)); }
ExprPtr mul(ExprPtr x, ExprPtr y) { return binary_word(Op::Mul, std::move(x), std::move(y)); }
ExprPtr bit_and(ExprPtr x, ExprPtr y) { return binary_word(Op::BitAnd, std::move(x), std::move(y)); }
ExprPtr bit_or(ExprPtr x, ExprPtr y) { return binary_word(Op::BitOr, std::move(x), std::move(y)); }
ExprPtr bit_xor(ExprPtr x, ExprPtr y) { return binary_word(Op::BitXor, std::move(x), std::move(y)); }
ExprPtr shl(ExprPtr x, ExprPtr y) { return binary_word(Op::Shl, std::move(x), std::move(y)); }
ExprPtr shr(ExprPtr x, ExprPtr y) { return binary_word(Op::Shr, std::move(x), std::move(y)); }

ExprPtr eq(ExprPtr x, ExprPtr y) {
  if (is_const(x) && is_const(y)) return cbool(x->value == y->value);
  if (equal(x, y)) return cbool(true);
  return make(Op::Eq, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr ne(ExprPtr x, ExprPtr y) {
  if (is_const(x) && is_const(y)) return cbool(x->value != y->value);
  if (equal(x, y)) return cbool(false);
  return make(Op::Ne, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr ult(ExprPtr x, ExprPtr y) {
  if (is_const(x) && is_const(y)) return cbool(x->value < y->value);
  if (equal(x, y)) return cbool(false);
  if (is_const(y) && y->value == 0) return cbool(false);
  return make(Op::Ult, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr uge(ExprPtr x, ExprPtr y) {
  if (is_const(x) && is_const(y)) return cbool(x->value >= y->value);
  if (equal(x, y)) return cbool(true);
  if (is_const(y) && y->value == 0) return cbool(true);
  return make(Op::Uge, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr land(ExprPtr x, ExprPtr y) {
  if (is_false(x) || is_false(y)) return cbool(false);
  if (is_true(x)) return y;
  if (is_true(y)) return x;
  return make(Op::And, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr lor(ExprPtr x, ExprPtr y) {
  if (is_true(x) || is_true(y)) return cbool(true);
  if (is_false(x)) return y;
  if (is_false(y)) return x;
  return make(Op::Or, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr lnot(ExprPtr x) {
  if (is_const(x)) return cbool(!x->value);
  if (x->op == Op::Not) return x->a;
  if (x->op == Op::Eq) return make(Op::Ne, Sort::Bool, x->a, x->b);
  if (x->op == Op::Ne) return make(Op::Eq, Sort::Bool, x->a, x->b);
  if (x->op == Op::Ult) return make(Op::Uge, Sort::Bool, x->a, x->b);
  if (x->op == Op::Uge) return make(Op::Ult, Sort::Bool, x->a, x->b);
  return make(Op::Not, Sort::Bool, std::move(x));
}

ExprPtr implies(ExprPtr x, ExprPtr y) {
  if (is_false(x) || is_true(y)) return cbool(true);
  if (is_true(x)) return y;
  if (is_false(y)) return lnot(std::move(x));
  return make(Op::Implies, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr iff(ExprPtr x, ExprPtr y) {
  if (is_const(x) && is_const(y)) return cbool(x->value == y->value);
  if (is_true(x)) return y;
  if (is_true(y)) return x;
  if (is_false(x)) return lnot(std::move(y));
  if (is_false(y)) return lnot(std::move(x));
  if (equal(x, y)) return cbool(true);
  return make(Op::Iff, Sort::Bool, std::move(x), std::move(y));
}

ExprPtr ite(ExprPtr c, ExprPtr t, ExprPtr e) {
  if (is_true(c)) return t;
  if (is_false(c)) return e;
  if (equal(t, e)) return t;
  return make(Op::Ite, Sort::Word, std::move(c), std::move(t), std::move(e));
}

ExprPtr conj(const std::vector<ExprPtr>& xs) {
  ExprPtr acc = cbool(true);
  for (const auto& x : xs) acc = land(acc, x);
  return acc;
}

ExprPtr normalize(const ExprPtr& e) {
  if (!e->a && !e->b && !e->c) return e;
  ExprPtr a = e->a ? normalize(e->a) : nullptr;
  ExprPtr b = e->b ? normalize(e->b) : nullptr;
  ExprPtr c = e->c ? normalize(e->c) : nullptr;
  if (commutative(e->op) && b && cmp_expr(a, b) > 0) std::swap(a, b);
  // Rebuild through the folding constructors.
  switch (e->op) {
    case Op::Select: return select(a, b);
    case Op::Store: return store(a, b, c);
    case Op::Add: return add(a, b);
    case Op::Sub: return sub(a, b);
    case Op::Mul: return mul(a, b);
    case Op::BitAnd: return bit_and(a, b);
    case Op::BitOr: return bit_or(a, b);
    case Op::BitXor: return bit_xor(a, b);
    case Op::Shl: return shl(a, b);
    case Op::Shr: return shr(a, b);
    case Op::Eq: return eq(a, b);
    case Op::Ne: return ne(a, b);
    case Op::Ult: return ult(a, b);
    case Op::Uge: return uge(a, b);
    case Op::And: return land(a, b);
    case Op::Or: return lor(a, b);
    case Op::Not: return lnot(a);
    case Op::Implies: return implies(a, b);
    case Op::Iff: return iff(a, b);
    case Op::Ite: return ite(a, b, c);
    default: return e;
  }
}

namespace {

ExprPtr map_symbols(const ExprPtr& e, const std::function<int(int)>& copy_map) {
  if (e->op == Op::RegSym) return reg_sym(e->reg, copy_map(e->copy));
  if (e->op == Op::MemSym) return mem_sym(copy_map(e->copy));
  if (!e->a && !e->b && !e->c) return e;
  ExprPtr a = e->a ? map_symbols(e->a, copy_map) : nullptr;
  ExprPtr b = e->b ? map_symbols(e->b, copy_map) : nullptr;
  ExprPtr c = e->c ? map_symbols(e->c, copy_map) : nullptr;
  return make(e->op, e->sort, a, b, c, e->value, e->copy, e->reg);
}

}  // namespace

ExprPtr swap_copies(const ExprPtr& e) {
  return map_symbols(e, [](int c) { return 1 - c; });
}

ExprPtr to_copy(const ExprPtr& e, int copy) {
  return map_symbols(e, [copy](int) { return copy; });
}

ExprPtr simplify_assuming(const ExprPtr& e, const std::vector<std::pair<ExprPtr, bool>>& lits) {
  if (e->sort == Sort::Bool) {
    for (const auto& [lit, val] : lits)
      if (equal(e, lit)) return cbool(val);
  }
  if (!e->a && !e->b && !e->c) return e;
  ExprPtr a = e->a ? simplify_assuming(e->a, lits) : nullptr;
  ExprPtr b = e->b ? simplify_assuming(e->b, lits) : nullptr;
  ExprPtr c = e->c ? simplify_assuming(e->c, lits) : nullptr;
  switch (e->op) {
    case Op::Select: return select(a, b);
    case Op::Store: return store(a, b, c);
    case Op::Add: return add(a, b);
    case Op::Sub: return sub(a, b);
    case Op::Mul: return mul(a, b);
    case Op::BitAnd: return bit_and(a, b);
    case Op::BitOr: return bit_or(a, b);
    case Op::BitXor: return bit_xor(a, b);
    case Op::Shl: return shl(a, b);
    case Op::Shr: return shr(a, b);
    case Op::Eq: return eq(a, b);
    case Op::Ne: return ne(a, b);
    case Op::Ult: return ult(a, b);
    case Op::Uge: return uge(a, b);
    case Op::And: return land(a, b);
    case Op::Or: return lor(a, b);
    case Op::Not: return lnot(a);
    case Op::Implies: return implies(a, b);
    case Op::Iff: return iff(a, b);
    case Op::Ite: return ite(a, b, c);
    default: return e;
  }
}

word_t Valuation::reg(int copy, unsigned idx) const {
  if (copy == 0 && state0) return state0->regs[idx];
  if (copy == 1 && state1) return state1->regs[idx];
  return copy == 0 ? regs0[idx] : regs1[idx];
}

word_t Valuation::cell(int copy, word_t addr) const {
  auto it = cells.find({copy, addr});
  if (it != cells.end()) return it->second;
  const ir::MachineState* s = copy == 0 ? state0 : state1;
  if (s) return s->load_word(addr);
  if (strict_cells) throw MissingCell{copy, addr};
  return 0;
}

namespace {

// Memory evaluation walks store chains; other sorts evaluate to a word.
word_t eval_rec(const Node* e, const Valuation& v);

word_t eval_mem_select(const Node* mem, word_t addr, const Valuation& v) {
  while (mem->op == Op::Store) {
    word_t a = eval_rec(mem->b.get(), v);
    if (a == addr) return eval_rec(mem->c.get(), v);
    mem = mem->a.get();
  }
  return v.cell(mem->copy, addr);
}

word_t eval_rec(const Node* e, const Valuation& v) {
  switch (e->op) {
    case Op::Const: return e->value;
    case Op::RegSym: return v.reg(e->copy, e->reg);
    case Op::Select: return eval_mem_select(e->a.get(), eval_rec(e->b.get(), v), v);
    case Op::Add: return eval_rec(e->a.get(), v) + eval_rec(e->b.get(), v);
    case Op::Sub: return eval_rec(e->a.get(), v) - eval_rec(e->b.get(), v);
    case Op::Mul: return eval_rec(e->a.get(), v) * eval_rec(e->b.get(), v);
    case Op::BitAnd: return eval_rec(e->a.get(), v) & eval_rec(e->b.get(), v);
    case Op::BitOr: return eval_rec(e->a.get(), v) | eval_rec(e->b.get(), v);
    case Op::BitXor: return eval_rec(e->a.get(), v) ^ eval_rec(e->b.get(), v);
    case Op::Shl: return eval_rec(e->a.get(), v) << (eval_rec(e->b.get(), v) & 31);
    case Op::Shr: return eval_rec(e->a.get(), v) >> (eval_rec(e->b.get(), v) & 31);
    case Op::Eq: return eval_rec(e->a.get(), v) == eval_rec(e->b.get(), v);
    case Op::Ne: return eval_rec(e->a.get(), v) != eval_rec(e->b.get(), v);
    case Op::Ult: return eval_rec(e->a.get(), v) < eval_rec(e->b.get(), v);
    case Op::Uge: return eval_rec(e->a.get(), v) >= eval_rec(e->b.get(), v);
    case Op::And: return eval_rec(e->a.get(), v) && eval_rec(e->b.get(), v);
    case Op::Or: return eval_rec(e->a.get(), v) || eval_rec(e->b.get(), v);
    case Op::Not: return !eval_rec(e->a.get(), v);
    case Op::Implies: return !eval_rec(e->a.get(), v) || eval_rec(e->b.get(), v);
    case Op::Iff: return eval_rec(e->a.get(), v) == eval_rec(e->b.get(), v);
    case Op::Ite:
      return eval_rec(e->a.get(), v) ? eval_rec(e->b.get(), v) : eval_rec(e->c.get(), v);
    case Op::MemSym:
    case Op::Store:
      throw std::logic_error("cannot evaluate a memory-sorted expression to a word");
  }
  return 0;
}

}  // namespace

word_t eval(const ExprPtr& e, const Valuation& v) { return eval_rec(e.get(), v); }
bool eval_bool(const ExprPtr& e, const Valuation& v) { return eval_rec(e.get(), v) != 0; }

Valuation state_valuation(const ir::MachineState& s0, const ir::MachineState& s1) {
  Valuation v;
  v.state0 = &s0;
  v.state1 = &s1;
  return v;
}

namespace {

void collect_rec(const Node* e, SymbolSet& out, std::vector<const Node*>& seen) {
  for (const Node* s : seen)
    if (s == e) return;
  seen.push_back(e);
  if (e->op == Op::RegSym) {
    std::pair<int, unsigned> key{e->copy, e->reg};
    if (std::find(out.regs.begin(), out.regs.end(), key) == out.regs.end()) out.regs.push_back(key);
  } else if (e->op == Op::MemSym) {
    out.mem[e->copy] = true;
  }
  if (e->a) collect_rec(e->a.get(), out, seen);
  if (e->b) collect_rec(e->b.get(), out, seen);
  if (e->c) collect_rec(e->c.get(), out, seen);
}

}  // namespace

SymbolSet collect_symbols(const ExprPtr& e) {
  SymbolSet s;
  std::vector<const Node*> seen;
  collect_rec(e.get(), s, seen);
  std::sort(s.regs.begin(), s.regs.end());
  return s;
}

void collect_selects(const ExprPtr& e, std::vector<ExprPtr>& out) {
  if (e->op == Op::Select) {
    bool dup = false;
    for (const auto& x : out)
      if (equal(x, e)) dup = true;
    if (!dup) out.push_back(e);
  }
  if (e->a) collect_selects(e->a, out);
  if (e->b) collect_selects(e->b, out);
  if (e->c) collect_selects(e->c, out);
}

namespace {

const char* op_text(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::BitAnd: return "&";
    case Op::BitOr: return "|";
    case Op::BitXor: return "^";
    case Op::Shl: return "<<";
    case Op::Shr: return ">>";
    case Op::Eq: return "=";
    case Op::Ne: return "!=";
    case Op::Ult: return "<";
    case Op::Uge: return ">=";
    case Op::And: return "&&";
    case Op::Or: return "||";
    case Op::Implies: return "=>";
    case Op::Iff: return "<=>";
    default: return "?";
  }
}

void print_rec(const Node* e, std::ostringstream& os) {
  switch (e->op) {
    case Op::Const:
      if (e->sort == Sort::Bool) os << (e->value ? "true" : "false");
      else if (e->value >= 10) os << "0x" << std::hex << e->value << std::dec;
      else os << e->value;
      return;
    case Op::RegSym:
      os << "a" << static_cast<int>(e->reg);
      if (e->copy) os << "'";
      return;
    case Op::MemSym:
      os << "M";
      if (e->copy) os << "'";
      return;
    case Op::Select:
      print_rec(e->a.get(), os);
      os << "[";
      print_rec(e->b.get(), os);
      os << "]";
      return;
    case Op::Store:
      print_rec(e->a.get(), os);
      os << "{";
      print_rec(e->b.get(), os);
      os << " := ";
      print_rec(e->c.get(), os);
      os << "}";
      return;
    case Op::Not:
      os << "!(";
      print_rec(e->a.get(), os);
      os << ")";
      return;
    case Op::Ite:
      os << "ite(";
      print_rec(e->a.get(), os);
      os << ", ";
      print_rec(e->b.get(), os);
      os << ", ";
      print_rec(e->c.get(), os);
      os << ")";
      return;
    default:
      os << "(";
      print_rec(e->a.get(), os);
      os << " " << op_text(e->op) << " ";
      print_rec(e->b.get(), os);
      os << ")";
      return;
  }
}

void smt_rec(const Node* e, std::ostringstream& os) {
  switch (e->op) {
    case Op::Const:
      if (e->sort == Sort::Bool) {
        os << (e->value ? "true" : "false");
      } else {
        char buf[16];
        std::snprintf(buf, sizeof buf, "#x%08x", e->value);
        os << buf;
      }
      return;
    case Op::RegSym:
      os << "a" << static_cast<int>(e->reg) << (e->copy ? "_p" : "");
      return;
    case Op::MemSym:
      os << (e->copy ? "mem_p" : "mem");
      return;
    default:
      break;
  }
  auto bin = [&](const char* name) {
    os << "(" << name << " ";
    smt_rec(e->a.get(), os);
    os << " ";
    smt_rec(e->b.get(), os);
    os << ")";
  };
  switch (e->op) {
    case Op::Select: bin("select"); return;
    case Op::Store:
      os << "(store ";
      smt_rec(e->a.get(), os);
      os << " ";
      smt_rec(e->b.get(), os);
      os << " ";
      smt_rec(e->c.get(), os);
      os << ")";
      return;
    case Op::Add: bin("bvadd"); return;
    case Op::Sub: bin("bvsub"); return;
    case Op::Mul: bin("bvmul"); return;
    case Op::BitAnd: bin("bvand"); return;
    case Op::BitOr: bin("bvor"); return;
    case Op::BitXor: bin("bvxor"); return;
    case Op::Shl:
      os << "(bvshl ";
      smt_rec(e->a.get(), os);
      os << " (bvand ";
      smt_rec(e->b.get(), os);
      os << " #x0000001f))";
      return;
    case Op::Shr:
      os << "(bvlshr ";
      smt_rec(e->a.get(), os);
      os << " (bvand ";
      smt_rec(e->b.get(), os);
      os << " #x0000001f))";
      return;
    case Op::Eq: bin("="); return;
    case Op::Ne:
      os << "(not (= ";
      smt_rec(e->a.get(), os);
      os << " ";
      smt_rec(e->b.get(), os);
      os << "))";
      return;
    case Op::Ult: bin("bvult"); return;
    case Op::Uge: bin("bvuge"); return;
    case Op::And: bin("and"); return;
    case Op::Or: bin("or"); return;
    case Op::Not:
      os << "(not ";
      smt_rec(e->a.get(), os);
      os << ")";
      return;
    case Op::Implies: bin("=>"); return;
    case Op::Iff: bin("="); return;
    case Op::Ite:
      os << "(ite ";
      smt_rec(e->a.get(), os);
      os << " ";
      smt_rec(e->b.get(), os);
      os << " ";
      smt_rec(e->c.get(), os);
      os << ")";
      return;
    default:
      throw std::logic_error("unhandled op in smt emission");
  }
}

}  // namespace

std::string to_string(const ExprPtr& e) {
  std::ostringstream os;
  print_rec(e.get(), os);
  return os.str();
}

std::string to_smtlib(const ExprPtr& e) {
  std::ostringstream os;
  smt_rec(e.get(), os);
  return os.str();
}

}  // namespace spectest::sym
