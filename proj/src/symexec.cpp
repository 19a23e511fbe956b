// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/symexec.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

namespace spectest::symx {

using namespace sym;
using ir::Cond;
using ir::Instruction;
using ir::ObsKind;
using ir::Opcode;
using ir::Program;
using solve::SatResult;

ExprPtr SymPath::branch_condition(const ExprPtr& precondition) const {
  ExprPtr acc = precondition ? precondition : cbool(true);
  for (const auto& b : branch_literals) acc = land(acc, b);
  return acc;
}

ExprPtr SymPath::path_condition(const ExprPtr& precondition) const {
  ExprPtr acc = branch_condition(precondition);
  for (const auto& c : concretization_eqs) acc = land(acc, c);
  return acc;
}

std::vector<SymObs> project_observations(const std::vector<SymObs>& refined) {
  std::vector<SymObs> out;
  for (const auto& o : refined)
    if (o.kind != ObsKind::ShadowLoadAddress && o.kind != ObsKind::ShadowStoreAddress)
      out.push_back(o);
  return out;
}

std::vector<ir::Observation> project_observations(const std::vector<ir::Observation>& refined) {
  std::vector<ir::Observation> out;
  for (const auto& o : refined)
    if (o.kind != ObsKind::ShadowLoadAddress && o.kind != ObsKind::ShadowStoreAddress)
      out.push_back(o);
  return out;
}

solve::SolveOutcome check_sat(const ExprPtr& f, solve::SatisfiabilityService& solver) {
  return solver.solve(f);
}

// ---------------------------------------------------------------------------
// Concretizer
// ---------------------------------------------------------------------------

Concretizer::Concretizer(solve::SatisfiabilityService& solver, ExprPtr precondition,
                         word_t region_lo, word_t region_hi)
    : solver_(&solver), precondition_(std::move(precondition)), region_lo_(region_lo),
      region_hi_(region_hi) {}

void Concretizer::seed(const ExprPtr& addr_norm, word_t value) {
  seeds_.push_back({normalize(addr_norm), value});
}

namespace {

void adopt_choice(SymPath& path, const ExprPtr& norm, word_t v) {
  if (!is_const(norm)) path.concretization_eqs.push_back(eq(norm, cword(v)));
  path.conc_log.push_back(
      {norm, v, path.branch_literals.size() + path.concretization_eqs.size()});
}

}  // namespace

word_t Concretizer::concretize(SymPath& path, const ExprPtr& a) {
  ExprPtr norm = normalize(a);

  // Memoization: a previously concretized expression reuses its value with no
  // solver query.
  for (const auto& e : path.conc_log)
    if (equal(e.addr, norm)) return e.value;

  // Restart-provided choices.
  for (const auto& [e, v] : seeds_)
    if (equal(e, norm)) {
      adopt_choice(path, norm, v);
      return v;
    }

  if (is_const(norm)) {
    // Constant addresses skip the solver but still honor region bounds and
    // collision-freedom against previously chosen values.
    word_t v = norm->value;
    if (v < region_lo_ || v >= region_hi_ - 3) throw NoSolution{};
    for (const auto& e : path.conc_log)
      if (e.value == v) throw NoSolution{};
    adopt_choice(path, norm, v);
    return v;
  }

  ExprPtr query = path.path_condition(precondition_);
  query = land(query, uge(norm, cword(region_lo_)));
  query = land(query, ult(norm, cword(region_hi_ - 3)));
  for (const auto& e : path.conc_log) query = land(query, ne(norm, cword(e.value)));

  auto out = solver_->solve(query);
  if (out.status == SatResult::Unknown)
    throw SymExecError("solver could not decide a concretization query: " + out.note);
  if (out.status == SatResult::Unsat) throw NoSolution{};

  word_t v = eval(norm, out.model.to_valuation());
  adopt_choice(path, norm, v);
  return v;
}

std::optional<std::vector<std::pair<ExprPtr, word_t>>> joint_concretize(
    solve::SatisfiabilityService& solver, const ExprPtr& constraint,
    const std::vector<ExprPtr>& accesses, word_t region_lo, word_t region_hi) {
  ExprPtr q = constraint;
  std::vector<ExprPtr> norms;
  for (const auto& a : accesses) norms.push_back(normalize(a));
  for (const auto& n : norms) {
    q = land(q, uge(n, cword(region_lo)));
    q = land(q, ult(n, cword(region_hi - 3)));
  }
  for (size_t i = 0; i < norms.size(); ++i)
    for (size_t j = i + 1; j < norms.size(); ++j)
      if (!equal(norms[i], norms[j])) q = land(q, ne(norms[i], norms[j]));

  auto out = solver.solve(q);
  if (out.status == SatResult::Unknown)
    throw SymExecError("solver could not decide a joint concretization query: " + out.note);
  if (out.status == SatResult::Unsat) return std::nullopt;

  auto v = out.model.to_valuation();
  std::vector<std::pair<ExprPtr, word_t>> result;
  for (const auto& n : norms) {
    word_t val = eval(n, v);
    bool dup = false;
    for (const auto& [e, x] : result)
      if (equal(e, n)) dup = true;
    if (!dup) result.push_back({n, val});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace {

void check_acyclic(const Program& p) {
  enum Color { White, Grey, Black };
  std::vector<Color> color(p.code.size(), White);
  std::vector<std::pair<uint32_t, int>> stack;  // (node, next-successor)
  auto successors = [&](uint32_t i) {
    std::vector<uint32_t> out;
    const Instruction& in = p.code[i];
    switch (in.op) {
      case Opcode::Halt: break;
      case Opcode::Jump: out.push_back(in.target); break;
      case Opcode::Branch:
        out.push_back(i + 1);
        out.push_back(in.target);
        break;
      default:
        if (i + 1 < p.code.size()) out.push_back(i + 1);
        break;
    }
    return out;
  };
  stack.push_back({p.entry, 0});
  color[p.entry] = Grey;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    auto succ = successors(node);
    if (next >= static_cast<int>(succ.size())) {
      color[node] = Black;
      stack.pop_back();
      continue;
    }
    uint32_t s = succ[next++];
    if (s >= p.code.size()) throw SymExecError("control flow past program end");
    if (color[s] == Grey) throw SymExecError("back-edge detected (loop not unrolled)");
    if (color[s] == White) {
      color[s] = Grey;
      stack.push_back({s, 0});
    }
  }
}

struct FailedPath {
  std::vector<ExprPtr> branch_literals;
  std::vector<bool> outcomes;
  std::vector<ExprPtr> accesses;
  std::string reason;
};

struct Engine {
  const Program& p;
  solve::SatisfiabilityService& solver;
  const SymExecOptions& opts;
  ExprPtr precondition;
  word_t region_lo, region_hi;
  std::vector<std::pair<ExprPtr, word_t>> seeds;  // restart-provided choices

  std::vector<SymPath> leaves;
  std::vector<FailedPath> failures;
  std::map<int, int> shadow_sites;  // instruction index -> site id
  int shadow_site_count = 0;

  Engine(const Program& prog, solve::SatisfiabilityService& sol, const SymExecOptions& o,
         ExprPtr pre)
      : p(prog), solver(sol), opts(o), precondition(std::move(pre)) {
    region_lo = o.region_lo ? o.region_lo : prog.data_base;
    region_hi = o.region_hi ? o.region_hi : prog.addrspace;
    for (uint32_t i = 0; i < p.code.size(); ++i) {
      const auto& in = p.code[i];
      if (in.shadow && (in.op == Opcode::Load || in.op == Opcode::Store))
        shadow_sites[i] = shadow_site_count++;
    }
  }

  struct State {
    std::array<ExprPtr, ir::kNumRegisters> regs;
    std::optional<std::pair<ExprPtr, ExprPtr>> last_cmp;
    std::vector<std::pair<word_t, ExprPtr>> store_log;
    ExprPtr mem_chain;
    SymPath path;
    Concretizer conc;
    std::vector<SymObs> segment;
    uint64_t steps = 0;
    uint32_t pc = 0;

    explicit State(Concretizer c) : conc(std::move(c)) {}
  };

  ExprPtr cond_expr(Cond c, const std::optional<std::pair<ExprPtr, ExprPtr>>& cmp) {
    if (!cmp) {
      // Flags start cleared: eq/ge read false, ne/lt read true.
      return cbool(c == Cond::Ne || c == Cond::Lt);
    }
    switch (c) {
      case Cond::Eq: return eq(cmp->first, cmp->second);
      case Cond::Ne: return ne(cmp->first, cmp->second);
      case Cond::Lt: return ult(cmp->first, cmp->second);
      case Cond::Ge: return uge(cmp->first, cmp->second);
    }
    return cbool(false);
  }

  ExprPtr operand_expr(const State& st, const ir::Operand& o) {
    return o.is_reg ? st.regs[o.reg.index] : cword(o.imm);
  }

  ExprPtr addr_expr(const State& st, const ir::AddrExpr& a) {
    ExprPtr e = cword(a.offset);
    if (a.has_base) e = add(st.regs[a.base.index], cword(a.offset));
    return e;
  }

  ExprPtr obs_expr(const State& st, const ir::ObsExpr& e) {
    ExprPtr acc = cword(0);
    for (const auto& t : e.terms) {
      ExprPtr v;
      switch (t.kind) {
        case ir::ObsTerm::Register: v = st.regs[t.reg.index]; break;
        case ir::ObsTerm::Constant: v = cword(t.value); break;
        case ir::ObsTerm::Flag: {
          ExprPtr c;
          switch (t.flag) {
            case 'Z': c = cond_expr(Cond::Eq, st.last_cmp); break;
            case 'C': c = cond_expr(Cond::Ge, st.last_cmp); break;
            case 'N':
              if (!st.last_cmp) {
                c = cbool(false);
              } else {
                v = shr(sub(st.last_cmp->first, st.last_cmp->second), cword(31));
              }
              break;
            default: throw SymExecError("flag V unsupported in symbolic observation expressions");
          }
          if (!v) v = ite(c, cword(1), cword(0));
          break;
        }
      }
      acc = t.negate ? sub(acc, v) : add(acc, v);
    }
    return acc;
  }

  bool satisfiable(const ExprPtr& f) {
    auto out = solver.solve(f);
    if (out.status == SatResult::Unknown)
      throw SymExecError("solver could not decide a path query: " + out.note);
    return out.status == SatResult::Sat;
  }

  // Loaded value: store-to-load forwarding by concrete address, otherwise a
  // select of the initial memory at the (symbolic) address.
  ExprPtr load_value(const State& st, word_t concrete_addr, const ExprPtr& a) {
    for (auto it = st.store_log.rbegin(); it != st.store_log.rend(); ++it)
      if (it->first == concrete_addr) return it->second;
    return select(mem_sym(0), a);
  }

  void record_failure(const State& st, std::string reason, ExprPtr extra_access) {
    FailedPath f;
    f.branch_literals = st.path.branch_literals;
    f.outcomes = st.path.branch_outcomes;
    for (const auto& e : st.path.conc_log) f.accesses.push_back(e.addr);
    if (extra_access) f.accesses.push_back(normalize(extra_access));
    f.reason = std::move(reason);
    failures.push_back(std::move(f));
  }

  // Shadow fragments: explore every satisfiable shadow-internal path and
  // attach the observations, each guarded by its shadow path condition, to
  // the surrounding (single) architectural path.
  void shadow_explore(State& st, const ir::ShadowFragment& frag,
                      std::array<ExprPtr, ir::kNumRegisters> regs,
                      std::optional<std::pair<ExprPtr, ExprPtr>> last_cmp, ExprPtr chain,
                      uint32_t spc, const ExprPtr& guard, int depth) {
    if (depth > 4096) throw SymExecError("shadow exploration budget exceeded");
    while (spc < frag.end) {
      const Instruction& in = p.code[spc];
      if (!in.shadow) throw SymExecError("non-shadow instruction inside fragment");
      switch (in.op) {
        case Opcode::Load: {
          ExprPtr a = cword(in.addr.offset);
          if (in.addr.has_base) a = add(regs[in.addr.base.index], cword(in.addr.offset));
          SymObs o{ObsKind::ShadowLoadAddress, a, guard, shadow_sites.at(static_cast<int>(spc)),
                   static_cast<int>(spc)};
          st.path.obs.push_back(o);
          st.segment.push_back(o);
          regs[in.rd.index] = select(chain, a);
          break;
        }
        case Opcode::Store: {
          ExprPtr a = cword(in.addr.offset);
          if (in.addr.has_base) a = add(regs[in.addr.base.index], cword(in.addr.offset));
          SymObs o{ObsKind::ShadowStoreAddress, a, guard, shadow_sites.at(static_cast<int>(spc)),
                   static_cast<int>(spc)};
          st.path.obs.push_back(o);
          st.segment.push_back(o);
          chain = store(chain, a, regs[in.rd.index]);
          break;
        }
        case Opcode::Mov: regs[in.rd.index] = shadow_operand(regs, in.src2); break;
        case Opcode::Add: regs[in.rd.index] = add(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::Sub: regs[in.rd.index] = sub(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::And: regs[in.rd.index] = bit_and(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::Or: regs[in.rd.index] = bit_or(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::Xor: regs[in.rd.index] = bit_xor(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::Shl: regs[in.rd.index] = shl(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::Shr: regs[in.rd.index] = shr(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::Mul: regs[in.rd.index] = mul(regs[in.rs.index], shadow_operand(regs, in.src2)); break;
        case Opcode::Cmp: last_cmp = {{regs[in.rd.index], shadow_operand(regs, in.src2)}}; break;
        case Opcode::Csel:
          regs[in.rd.index] =
              ite(cond_expr(in.cond, last_cmp), regs[in.rs.index], shadow_operand(regs, in.src2));
          break;
        case Opcode::Branch: {
          ExprPtr c = cond_expr(in.cond, last_cmp);
          ExprPtr base = land(st.path.path_condition(precondition), guard);
          bool t_sat = !is_false(c) && satisfiable(land(base, c));
          bool f_sat = !is_true(c) && satisfiable(land(base, lnot(c)));
          if (t_sat && f_sat) {
            shadow_explore(st, frag, regs, last_cmp, chain, spc + 1, land(guard, lnot(c)),
                           depth + 1);
            shadow_explore(st, frag, regs, last_cmp, chain, in.target, land(guard, c), depth + 1);
            return;
          }
          if (t_sat) {
            spc = in.target;
            continue;
          }
          if (f_sat) break;  // fall through
          return;            // shadow path unsatisfiable under both arms
        }
        case Opcode::Jump: spc = in.target; continue;
        case Opcode::Halt: return;  // misspeculated halt ends the shadow run
        case Opcode::Csdb:
        case Opcode::Fence:
        case Opcode::Nop:
        case Opcode::Obs:
          break;  // no shadow effect; refine strips fences, annotations ignored
      }
      ++spc;
      ++depth;
    }
  }

  static ExprPtr shadow_operand(const std::array<ExprPtr, ir::kNumRegisters>& regs,
                                const ir::Operand& o) {
    return o.is_reg ? regs[o.reg.index] : cword(o.imm);
  }

  std::unique_ptr<TreeNode> explore(State st) {
    auto node = std::make_unique<TreeNode>();
    while (true) {
      if (st.steps++ > opts.depth_limit) throw SymExecError("path budget exceeded");

      // Shadow fragment entry.
      bool entered = false;
      for (const auto& frag : p.fragments) {
        if (st.pc == frag.begin && frag.end > frag.begin) {
          shadow_explore(st, frag, st.regs, st.last_cmp, st.mem_chain, frag.begin, cbool(true), 0);
          st.pc = frag.end;
          entered = true;
          break;
        }
      }
      if (entered) continue;

      if (st.pc >= p.code.size()) throw SymExecError("control flow past program end");
      const Instruction& in = p.code[st.pc];
      switch (in.op) {
        case Opcode::Halt: {
          node->segment = std::move(st.segment);
          node->leaf_id = static_cast<int>(leaves.size());
          st.path.leaf_id = node->leaf_id;
          st.path.regs = st.regs;
          st.path.memory = st.mem_chain;
          st.path.instruction_count = st.steps;
          leaves.push_back(std::move(st.path));
          return node;
        }
        case Opcode::Load:
        case Opcode::Store: {
          ExprPtr a = addr_expr(st, in.addr);
          word_t ca;
          try {
            ca = st.conc.concretize(st.path, a);
          } catch (const Concretizer::NoSolution&) {
            // Distinguish a genuinely out-of-region path from a failure
            // induced by earlier concretization choices.
            ExprPtr feasible = land(st.path.branch_condition(precondition),
                                    land(uge(normalize(a), cword(region_lo)),
                                         ult(normalize(a), cword(region_hi - 3))));
            if (!satisfiable(feasible)) return nullptr;  // provably outside the region
            record_failure(st, "no consistent concretization", a);
            return nullptr;
          }
          if (in.op == Opcode::Load) {
            SymObs o{ObsKind::LoadAddress, a, cbool(true), -1, static_cast<int>(st.pc)};
            st.path.obs.push_back(o);
            st.segment.push_back(o);
            st.regs[in.rd.index] = load_value(st, ca, a);
          } else {
            SymObs o{ObsKind::StoreAddress, a, cbool(true), -1, static_cast<int>(st.pc)};
            st.path.obs.push_back(o);
            st.segment.push_back(o);
            st.store_log.push_back({ca, st.regs[in.rd.index]});
            st.mem_chain = store(st.mem_chain, cword(ca), st.regs[in.rd.index]);
          }
          break;
        }
        case Opcode::Mov: st.regs[in.rd.index] = operand_expr(st, in.src2); break;
        case Opcode::Add: st.regs[in.rd.index] = add(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::Sub: st.regs[in.rd.index] = sub(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::And: st.regs[in.rd.index] = bit_and(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::Or: st.regs[in.rd.index] = bit_or(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::Xor: st.regs[in.rd.index] = bit_xor(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::Shl: st.regs[in.rd.index] = shl(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::Shr: st.regs[in.rd.index] = shr(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::Mul: st.regs[in.rd.index] = mul(st.regs[in.rs.index], operand_expr(st, in.src2)); break;
        case Opcode::Cmp:
          st.last_cmp = {{st.regs[in.rd.index], operand_expr(st, in.src2)}};
          break;
        case Opcode::Csel:
          st.regs[in.rd.index] =
              ite(cond_expr(in.cond, st.last_cmp), st.regs[in.rs.index], operand_expr(st, in.src2));
          break;
        case Opcode::Csdb:
        case Opcode::Fence:
        case Opcode::Nop:
          break;
        case Opcode::Obs: {
          ExprPtr v = obs_expr(st, in.obs_expr);
          ObsKind k = in.obs_tag == ir::ObsTag::Refined ? ObsKind::ShadowLoadAddress
                      : in.obs_tag == ir::ObsTag::Initial ? ObsKind::InitialPublic
                                                          : ObsKind::LoadAddress;
          SymObs o{k, v, cbool(true), -1, static_cast<int>(st.pc)};
          st.path.obs.push_back(o);
          st.segment.push_back(o);
          break;
        }
        case Opcode::Jump: st.pc = in.target; continue;
        case Opcode::Branch: {
          ExprPtr c = cond_expr(in.cond, st.last_cmp);
          node->segment = std::move(st.segment);
          node->branch_cond = c;
          node->branch_instr = static_cast<int>(st.pc);

          auto side = [&](bool taken) -> std::unique_ptr<TreeNode> {
            ExprPtr lit = taken ? c : lnot(c);
            ExprPtr full = land(st.path.path_condition(precondition), lit);
            if (is_false(lit) || !satisfiable(full)) {
              if (!is_false(lit)) {
                ExprPtr branch_only = land(st.path.branch_condition(precondition), lit);
                if (satisfiable(branch_only)) {
                  // Earlier concretization choices contradict this side.
                  State probe = st;
                  probe.path.branch_literals.push_back(lit);
                  probe.path.branch_outcomes.push_back(taken);
                  record_failure(probe, "branch side unsatisfiable after concretization", nullptr);
                }
              }
              return nullptr;
            }
            State next = st;
            next.path.branch_literals.push_back(lit);
            next.path.branch_outcomes.push_back(taken);
            SymObs o{ObsKind::BranchOutcome, cbool(taken), cbool(true), -1,
                     static_cast<int>(st.pc)};
            next.path.obs.push_back(o);
            next.segment.clear();
            next.pc = taken ? in.target : st.pc + 1;
            return explore(std::move(next));
          };
          node->not_taken = side(false);
          node->taken = side(true);
          if (!node->not_taken && !node->taken) return nullptr;
          return node;
        }
      }
      ++st.pc;
    }
  }

  std::unique_ptr<TreeNode> run() {
    Concretizer conc(solver, precondition, region_lo, region_hi);
    for (const auto& [e, v] : seeds) conc.seed(e, v);
    State st(std::move(conc));
    for (unsigned i = 0; i < ir::kNumRegisters; ++i) st.regs[i] = reg_sym(i);
    st.mem_chain = mem_sym(0);
    st.pc = p.entry;

    // Initial observations precede the first instruction.
    for (const auto& io : p.initial_obs) {
      if (io.is_reg) {
        SymObs o{ObsKind::InitialPublic, reg_sym(io.reg.index), cbool(true), -1, -1};
        st.path.obs.push_back(o);
        st.segment.push_back(o);
      } else if (const ir::DataObject* d = p.find_data(io.data_name)) {
        for (word_t off = 0; off + 4 <= d->size; off += 4) {
          SymObs o{ObsKind::InitialPublic, select(mem_sym(0), cword(d->offset + off)),
                   cbool(true), -1, -1};
          st.path.obs.push_back(o);
          st.segment.push_back(o);
        }
      }
    }
    return explore(std::move(st));
  }
};

}  // namespace

// Grafts `sub` (the restarted run, restricted to the failed path) into `main`
// at the first junction where main is missing a child along `outcomes`.
static bool graft(TreeNode* main_node, std::unique_ptr<TreeNode>& sub_node,
           const std::vector<bool>& outcomes, size_t depth, std::vector<SymPath>& main_leaves,
           std::vector<SymPath>& sub_leaves) {
  if (!main_node || !sub_node) return false;
  if (main_node->is_leaf() || sub_node->is_leaf()) return false;
  if (depth >= outcomes.size()) return false;
  bool taken = outcomes[depth];
  auto& main_child = taken ? main_node->taken : main_node->not_taken;
  auto& sub_child = taken ? sub_node->taken : sub_node->not_taken;
  if (!sub_child) return false;
  if (main_child) return graft(main_child.get(), sub_child, outcomes, depth + 1, main_leaves,
                               sub_leaves);
  // Renumber leaves of the grafted subtree.
  std::vector<TreeNode*> stack{sub_child.get()};
  while (!stack.empty()) {
    TreeNode* n = stack.back();
    stack.pop_back();
    if (n->is_leaf()) {
      SymPath moved = std::move(sub_leaves[n->leaf_id]);
      n->leaf_id = static_cast<int>(main_leaves.size());
      moved.leaf_id = n->leaf_id;
      main_leaves.push_back(std::move(moved));
    } else {
      if (n->not_taken) stack.push_back(n->not_taken.get());
      if (n->taken) stack.push_back(n->taken.get());
    }
  }
  main_child = std::move(sub_child);
  return true;
}

SymbolicTree sym_execute(const Program& p, ExprPtr precondition,
                         solve::SatisfiabilityService& solver, SymExecOptions opts) {
  if (!precondition) precondition = cbool(true);
  check_acyclic(p);

  SymbolicTree tree;
  tree.program = p;
  tree.precondition = precondition;

  if (solver.solve(precondition).status == SatResult::Unsat) {
    tree.empty_flagged = true;
    tree.notes.push_back("precondition unsatisfiable; empty tree");
    return tree;
  }

  Engine eng(p, solver, opts, precondition);
  tree.root = eng.run();
  tree.leaves = std::move(eng.leaves);
  tree.shadow_site_count = eng.shadow_site_count;

  // Restart queue: failed paths are re-solved jointly and re-executed with the
  // failed path's constraints pinned, then merged back.
  std::deque<FailedPath> queue(eng.failures.begin(), eng.failures.end());
  int restarts = 0;
  while (!queue.empty()) {
    if (restarts >= opts.max_restarts)
      throw SymExecError("restart budget exceeded (" + std::to_string(opts.max_restarts) + ")");
    ++restarts;
    FailedPath f = std::move(queue.front());
    queue.pop_front();

    ExprPtr pinned = precondition;
    for (const auto& b : f.branch_literals) pinned = land(pinned, b);
    auto joint = joint_concretize(solver, pinned, f.accesses, eng.region_lo, eng.region_hi);
    if (!joint) {
      tree.notes.push_back("path impossible to concretize: " + f.reason);
      continue;
    }
    Engine again(p, solver, opts, pinned);
    again.seeds = *joint;
    auto sub = again.run();
    for (auto& nf : again.failures) queue.push_back(std::move(nf));
    if (!sub) continue;
    if (!tree.root) {
      tree.root = std::move(sub);
      for (auto& leaf : again.leaves) {
        leaf.leaf_id = static_cast<int>(tree.leaves.size());
        tree.leaves.push_back(std::move(leaf));
      }
    } else {
      if (!graft(tree.root.get(), sub, f.outcomes, 0, tree.leaves, again.leaves))
        tree.notes.push_back("restarted path could not be merged: " + f.reason);
    }
  }
  tree.restarts_used = restarts;

  if (tree.leaves.empty()) {
    tree.empty_flagged = true;
    tree.notes.push_back("no satisfiable path");
  }
  return tree;
}

std::string dump_tree(const SymbolicTree& t) {
  std::ostringstream os;
  os << "tree: " << t.leaves.size() << " leaves, " << t.shadow_site_count << " shadow sites\n";
  for (const auto& leaf : t.leaves) {
    os << "leaf " << leaf.leaf_id << ":\n";
    os << "  outcomes:";
    for (bool b : leaf.branch_outcomes) os << " " << (b ? "T" : "F");
    os << "\n  path-condition: " << sym::to_string(leaf.path_condition(t.precondition)) << "\n";
    os << "  observations:\n";
    for (const auto& o : leaf.obs) {
      os << "    " << ir::obs_kind_name(o.kind) << " " << sym::to_string(o.value);
      if (o.shadow_site >= 0) os << " site=" << o.shadow_site;
      if (o.guard && !sym::is_true(o.guard)) os << " guard=" << sym::to_string(o.guard);
      os << "\n";
    }
    os << "  concretizations:\n";
    for (const auto& c : leaf.conc_log)
      os << "    " << sym::to_string(c.addr) << " -> 0x" << std::hex << c.value << std::dec
         << "\n";
  }
  for (const auto& n : t.notes) os << "note: " << n << "\n";
  return os.str();
}

}  // namespace spectest::symx
