// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/solver.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace spectest::solve {

using namespace sym;

sym::Valuation Model::to_valuation() const {
  Valuation v;
  for (const auto& [key, val] : regs) {
    if (key.first == 0) v.regs0[key.second] = val;
    else v.regs1[key.second] = val;
  }
  v.cells = cells;
  return v;
}

namespace {

void flatten_conj(const ExprPtr& e, std::vector<ExprPtr>& out) {
  if (e->op == Op::And) {
    flatten_conj(e->a, out);
    flatten_conj(e->b, out);
  } else {
    out.push_back(e);
  }
}

struct VarKey {
  int copy;
  unsigned reg;
  bool operator<(const VarKey& o) const { return std::tie(copy, reg) < std::tie(o.copy, o.reg); }
  bool operator==(const VarKey& o) const { return copy == o.copy && reg == o.reg; }
};

// Union-find over register symbols plus an optional pinned constant per class,
// fed by top-level equality conjuncts. Classes enumerate once.
struct EqClasses {
  std::vector<VarKey> vars;
  std::vector<int> parent;
  std::vector<std::optional<word_t>> pinned;

  int index_of(VarKey k) {
    for (size_t i = 0; i < vars.size(); ++i)
      if (vars[i] == k) return static_cast<int>(i);
    vars.push_back(k);
    parent.push_back(static_cast<int>(vars.size()) - 1);
    pinned.push_back(std::nullopt);
    return static_cast<int>(vars.size()) - 1;
  }
  int find(int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  // Returns false on contradictory constant pins.
  bool merge(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return true;
    if (pinned[a] && pinned[b] && *pinned[a] != *pinned[b]) return false;
    if (!pinned[a]) std::swap(a, b);
    parent[b] = a;
    if (pinned[b] && !pinned[a]) pinned[a] = pinned[b];
    return true;
  }
  bool pin(int i, word_t v) {
    i = find(i);
    if (pinned[i] && *pinned[i] != v) return false;
    pinned[i] = v;
    return true;
  }
};

}  // namespace

EnumerativeSolver::EnumerativeSolver(EnumerativeOptions opts) : opts_(std::move(opts)) {}
EnumerativeSolver::~EnumerativeSolver() = default;

struct EnumerativeSolver::Session::Impl {
  EnumerativeOptions opts;
  ExprPtr formula;
  bool contradiction = false;

  // Enumerated register variables: one per equivalence class without a pin.
  struct RegVar {
    std::vector<VarKey> members;
    word_t domain;   // number of values
    word_t offset;   // seed-derived start point
    word_t index;    // current position, 0..domain-1
  };
  std::vector<RegVar> reg_vars;
  std::map<VarKey, word_t> fixed;  // pinned classes, fully expanded

  // Memory cells discovered during evaluation, in discovery order.
  struct CellVar {
    int copy;
    word_t addr;
    word_t domain;
    word_t offset;
    word_t index;
  };
  std::vector<CellVar> cells;

  bool exhausted = false;
  bool fresh = true;
  uint64_t evals = 0;

  word_t out_of(unsigned bits) const { return bits >= 32 ? 0 : (1u << bits); }

  unsigned bits_for_reg(unsigned reg) const {
    auto it = opts.reg_domain_bits.find(reg);
    return it != opts.reg_domain_bits.end() ? it->second : opts.domain_bits;
  }

  explicit Impl(const EnumerativeOptions& o, ExprPtr f) : opts(o), formula(std::move(f)) {
    std::vector<ExprPtr> conjs;
    flatten_conj(formula, conjs);

    EqClasses eq;
    SymbolSet syms = collect_symbols(formula);
    for (auto& [copy, reg] : syms.regs) eq.index_of({copy, reg});

    auto as_var = [&](const ExprPtr& e) -> std::optional<int> {
      if (e->op == Op::RegSym) return eq.index_of({e->copy, e->reg});
      return std::nullopt;
    };
    for (const auto& c : conjs) {
      if (c->op != Op::Eq) continue;
      auto va = as_var(c->a), vb = as_var(c->b);
      if (va && vb) {
        if (!eq.merge(*va, *vb)) contradiction = true;
      } else if (va && is_const(c->b)) {
        if (!eq.pin(*va, c->b->value)) contradiction = true;
      } else if (vb && is_const(c->a)) {
        if (!eq.pin(*vb, c->a->value)) contradiction = true;
      }
    }

    // Group classes; deterministic order by smallest member.
    std::map<int, std::vector<VarKey>> classes;
    for (size_t i = 0; i < eq.vars.size(); ++i) classes[eq.find(static_cast<int>(i))].push_back(eq.vars[i]);
    std::vector<std::pair<VarKey, int>> ordered;
    for (auto& [root, members] : classes) {
      std::sort(members.begin(), members.end());
      ordered.push_back({members[0], root});
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });

    uint64_t h = opts.seed * 0x9e3779b97f4a7c15ull + 0x51ull;
    for (auto& [first, root] : ordered) {
      auto& members = classes[root];
      if (eq.pinned[root]) {
        word_t v = *eq.pinned[root];
        // A pin outside every member's domain makes the query unsat.
        for (auto& m : members)
          if (out_of(bits_for_reg(m.reg)) && v >= out_of(bits_for_reg(m.reg))) contradiction = true;
        for (auto& m : members) fixed[m] = v;
        continue;
      }
      unsigned bits = 32;
      for (auto& m : members) bits = std::min(bits, bits_for_reg(m.reg));
      RegVar rv;
      rv.members = members;
      rv.domain = bits >= 31 ? 0x7FFFFFFFu : (1u << bits);
      h = h * 0x2545F4914F6CDD1Dull + 17;
      rv.offset = static_cast<word_t>(h % rv.domain);
      rv.index = 0;
      reg_vars.push_back(std::move(rv));
    }
    if (!contradiction && reg_vars.size() > opts.max_variables) too_many_vars = true;
  }

  bool too_many_vars = false;

  void fill_valuation(Valuation& v) const {
    for (const auto& [key, val] : fixed) {
      if (key.copy == 0) v.regs0[key.reg] = val;
      else v.regs1[key.reg] = val;
    }
    for (const auto& rv : reg_vars) {
      word_t val = (rv.index + rv.offset) % rv.domain;
      for (const auto& m : rv.members) {
        if (m.copy == 0) v.regs0[m.reg] = val;
        else v.regs1[m.reg] = val;
      }
    }
    v.cells.clear();
    for (const auto& cv : cells) v.cells[{cv.copy, cv.addr}] = (cv.index + cv.offset) % cv.domain;
    v.strict_cells = true;
  }

  // Advances the odometer: cells first (innermost), then registers.
  bool advance() {
    while (!cells.empty()) {
      auto& cv = cells.back();
      if (++cv.index < cv.domain) return true;
      cells.pop_back();
    }
    for (size_t i = reg_vars.size(); i-- > 0;) {
      auto& rv = reg_vars[i];
      if (++rv.index < rv.domain) {
        for (size_t j = i + 1; j < reg_vars.size(); ++j) reg_vars[j].index = 0;
        cells.clear();
        return true;
      }
    }
    exhausted = true;
    return false;
  }

  SolveOutcome step() {
    if (contradiction || exhausted) return {SatResult::Unsat, {}, ""};
    if (too_many_vars)
      return {SatResult::Unknown, {}, "too many free symbols for enumeration"};
    if (!fresh && !advance()) return {SatResult::Unsat, {}, ""};
    fresh = false;

    Valuation v;
    uint64_t h = opts.seed ^ 0xABCDEF12ull;
    while (true) {
      if (evals++ > opts.max_evals)
        return {SatResult::Unknown, {}, "enumeration budget exceeded"};
      fill_valuation(v);
      bool ok;
      try {
        ok = eval_bool(formula, v);
      } catch (const MissingCell& mc) {
        CellVar cv;
        cv.copy = mc.copy;
        cv.addr = mc.addr;
        cv.domain = opts.domain_bits >= 31 ? 0x7FFFFFFFu : (1u << opts.domain_bits);
        h = (h + mc.addr * 2654435761u + mc.copy) * 0x2545F4914F6CDD1Dull;
        cv.offset = static_cast<word_t>(h % cv.domain);
        cv.index = 0;
        cells.push_back(cv);
        continue;
      }
      if (ok) {
        Model m;
        for (const auto& [key, val] : fixed) m.regs[{key.copy, key.reg}] = val;
        for (const auto& rv : reg_vars) {
          word_t val = (rv.index + rv.offset) % rv.domain;
          for (const auto& mem : rv.members) m.regs[{mem.copy, mem.reg}] = val;
        }
        for (const auto& cv : cells) m.cells[{cv.copy, cv.addr}] = (cv.index + cv.offset) % cv.domain;
        return {SatResult::Sat, std::move(m), ""};
      }
      if (!advance()) return {SatResult::Unsat, {}, ""};
    }
  }
};

EnumerativeSolver::Session::Session(const EnumerativeSolver& solver, ExprPtr formula)
    : impl_(std::make_unique<Impl>(solver.options(), std::move(formula))) {}
EnumerativeSolver::Session::~Session() = default;

SolveOutcome EnumerativeSolver::Session::next() { return impl_->step(); }

SolveOutcome EnumerativeSolver::solve(const ExprPtr& formula) {
  if (is_true(formula)) return {SatResult::Sat, {}, ""};
  if (is_false(formula)) return {SatResult::Unsat, {}, ""};
  Session s(*this, formula);
  return s.next();
}

std::string emit_smtlib_query(const ExprPtr& formula, unsigned domain_bits, bool check_sat) {
  std::ostringstream os;
  os << "(set-logic QF_ABV)\n";
  SymbolSet syms = collect_symbols(formula);
  for (const auto& [copy, reg] : syms.regs)
    os << "(declare-const a" << reg << (copy ? "_p" : "") << " (_ BitVec 32))\n";
  for (int c = 0; c < 2; ++c)
    if (syms.mem[c])
      os << "(declare-const " << (c ? "mem_p" : "mem")
         << " (Array (_ BitVec 32) (_ BitVec 32)))\n";
  if (domain_bits < 32) {
    char bound[16];
    std::snprintf(bound, sizeof bound, "#x%08x", 1u << domain_bits);
    for (const auto& [copy, reg] : syms.regs)
      os << "(assert (bvult a" << reg << (copy ? "_p" : "") << " " << bound << "))\n";
  }
  os << "(assert " << to_smtlib(formula) << ")\n";
  if (check_sat) os << "(check-sat)\n";
  return os.str();
}

}  // namespace spectest::solve
