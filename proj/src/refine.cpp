// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/refine.hpp"

#include <algorithm>
#include <sstream>

namespace spectest::refine {

using ir::Cond;
using ir::Instruction;
using ir::Opcode;
using ir::Program;
using ir::word_t;

std::string RefinementSpec::describe() const {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < branches.size(); ++i) {
    if (i) os << ",";
    os << "b" << branches[i] << (negates(branches[i]) ? "" : ":keep");
  }
  os << "}";
  return os.str();
}

namespace {

Cond negate_cond(Cond c) {
  switch (c) {
    case Cond::Eq: return Cond::Ne;
    case Cond::Ne: return Cond::Eq;
    case Cond::Lt: return Cond::Ge;
    case Cond::Ge: return Cond::Lt;
  }
  return c;
}

ir::Reg shadow_of(ir::Reg r) { return ir::Reg{r.index, true}; }

Instruction shadow_copy(const Instruction& in, int origin) {
  Instruction s = in;
  s.shadow = true;
  s.origin_index = origin;
  s.rd = shadow_of(s.rd);
  s.rs = shadow_of(s.rs);
  if (s.src2.is_reg) s.src2.reg = shadow_of(s.src2.reg);
  if (s.addr.has_base) s.addr.base = shadow_of(s.addr.base);
  return s;
}

}  // namespace

ShadowedProgram apply_refinement(const Program& p, const RefinementSpec& spec) {
  if (spec.d_shadow < 1) throw RefineError("d_shadow must be at least 1");
  for (uint32_t b : spec.branches) {
    if (b >= p.code.size() || p.code[b].op != Opcode::Branch)
      throw RefineError("selected index " + std::to_string(b) + " is not a conditional branch");
    if (p.code[b].shadow)
      throw RefineError("selected branch lies inside an existing shadow fragment; "
                        "nested fragments are rejected");
  }
  std::vector<uint32_t> selected = spec.branches;
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());

  ShadowedProgram out;
  out.original = p;
  out.spec = spec;

  Program t;
  t.data = p.data;
  t.reg_labels = p.reg_labels;
  t.initial_obs = p.initial_obs;
  t.addrspace = p.addrspace;
  t.data_base = p.data_base;
  t.entry_label = p.entry_label;

  std::vector<int> new_index(p.code.size(), -1);
  struct PendingLabel {
    std::string name;
    uint32_t at;
  };
  std::vector<PendingLabel> labels;

  int frag_no = 0;
  for (uint32_t i = 0; i < p.code.size(); ++i) {
    bool is_anchor = std::find(selected.begin(), selected.end(), i) != selected.end();
    if (is_anchor) {
      // Window of original instructions the shadow copy covers.
      uint32_t wend = std::min<uint32_t>(p.code.size(), i + spec.d_shadow);
      bool truncated_at_end = wend < i + spec.d_shadow ? false : false;
      if (i + spec.d_shadow > p.code.size()) {
        out.flags.push_back("fragment " + std::to_string(frag_no) +
                            " truncated at program end");
      }
      // Existing shadow code never enters a new fragment.
      for (uint32_t j = i; j < wend; ++j)
        if (p.code[j].shadow) {
          wend = j;
          break;
        }
      ir::ShadowFragment frag;
      frag.begin = static_cast<uint32_t>(t.code.size());
      frag.anchor_origin = static_cast<int>(i);
      labels.push_back({"Start_" + std::to_string(frag_no), frag.begin});

      std::map<uint32_t, uint32_t> local_index;  // original idx -> copy idx
      std::vector<std::pair<uint32_t, uint32_t>> pending_targets;  // (copy idx, original target)
      bool fence_truncated = false;
      for (uint32_t j = i; j < wend && !fence_truncated; ++j) {
        const Instruction& orig = p.code[j];
        if (orig.op == Opcode::Fence) {
          // A fence ends speculation, so it also ends the shadow fragment.
          fence_truncated = true;
          out.flags.push_back("fragment " + std::to_string(frag_no) +
                              " truncated by fence at instruction " + std::to_string(j));
          break;
        }
        if (orig.op == Opcode::Obs) continue;  // annotations are not duplicated
        Instruction s = shadow_copy(orig, static_cast<int>(j));
        if (orig.op == Opcode::Branch &&
            std::find(selected.begin(), selected.end(), j) != selected.end() &&
            spec.negates(j))
          s.cond = negate_cond(s.cond);
        local_index[j] = static_cast<uint32_t>(t.code.size());
        if (orig.op == Opcode::Branch || orig.op == Opcode::Jump)
          pending_targets.push_back({static_cast<uint32_t>(t.code.size()), orig.target});
        t.code.push_back(std::move(s));
      }
      (void)truncated_at_end;

      // Resolve shadow-local control flow; targets outside the window exit to
      // End (the real anchored branch).
      uint32_t end_index = static_cast<uint32_t>(t.code.size());
      for (auto& [copy_idx, orig_target] : pending_targets) {
        auto it = local_index.find(orig_target);
        uint32_t tgt = it != local_index.end() ? it->second : end_index;
        t.code[copy_idx].target = tgt;
        t.code[copy_idx].target_label =
            it != local_index.end()
                ? "S" + std::to_string(frag_no) + "_" + std::to_string(orig_target)
                : "End_" + std::to_string(frag_no);
        if (it != local_index.end())
          labels.push_back({"S" + std::to_string(frag_no) + "_" + std::to_string(orig_target),
                            it->second});
      }
      frag.end = end_index;
      frag.anchor = end_index;
      frag.truncated_by_fence = fence_truncated;
      labels.push_back({"End_" + std::to_string(frag_no), end_index});
      t.fragments.push_back(frag);
      for (auto& c : t.code)
        if (c.shadow && c.shadow_fragment < 0) c.shadow_fragment = frag_no;
      ++frag_no;
    }
    new_index[i] = static_cast<int>(t.code.size());
    t.code.push_back(p.code[i]);
  }

  // Re-point architectural control flow and original labels.
  for (auto& in : t.code) {
    if (in.shadow) continue;
    if (in.op == Opcode::Branch || in.op == Opcode::Jump)
      in.target = static_cast<uint32_t>(new_index[in.target]);
  }
  for (const auto& [name, idx] : p.labels)
    labels.push_back({name, static_cast<uint32_t>(new_index[idx])});
  std::stable_sort(labels.begin(), labels.end(),
                   [](const PendingLabel& a, const PendingLabel& b) { return a.at < b.at; });
  for (const auto& l : labels) t.labels.emplace_back(l.name, l.at);
  t.entry = static_cast<uint32_t>(new_index[p.entry]);

  // Shadow observation sites, in instruction order, mapped to their origins.
  for (const auto& in : t.code)
    if (in.shadow && (in.op == Opcode::Load || in.op == Opcode::Store))
      out.site_origin.push_back(in.origin_index);

  out.transformed = std::move(t);
  return out;
}

// ---------------------------------------------------------------------------
// Concrete execution of a transformed program
// ---------------------------------------------------------------------------

ShadowedRun run_shadowed(const Program& p, ir::MachineState s, uint64_t max_steps) {
  ShadowedRun run;
  uint64_t steps = 0;
  while (!s.halted) {
    if (steps++ >= max_steps) throw RefineError("step budget exceeded in shadowed run");

    const ir::ShadowFragment* frag = nullptr;
    for (const auto& f : p.fragments)
      if (s.pc == f.begin && f.end > f.begin) {
        frag = &f;
        break;
      }
    if (!frag) {
      auto obs = ir::eval_step(s, p);
      if (obs) run.trace.push_back(*obs);
      continue;
    }

    // Shadow episode: duplicate registers and flags, overlay memory.
    std::array<word_t, ir::kNumRegisters> sregs = s.regs;
    ir::Flags sflags = s.flags;
    std::map<word_t, word_t> overlay;  // word-granular, keyed by byte address
    auto sread = [&](word_t addr) -> word_t {
      auto it = overlay.find(addr);
      if (it != overlay.end()) return it->second;
      if (!s.in_range(addr)) return 0;  // suppressed out-of-range access
      return s.load_word(addr);
    };
    auto regval = [&](ir::Reg r) { return sregs[r.index]; };
    auto opval = [&](const ir::Operand& o) { return o.is_reg ? regval(o.reg) : o.imm; };

    uint32_t pc = frag->begin;
    uint64_t shadow_steps = 0;
    while (pc < frag->end) {
      if (shadow_steps++ > 4096) throw RefineError("shadow episode budget exceeded");
      const Instruction& in = p.code[pc];
      uint32_t next = pc + 1;
      switch (in.op) {
        case Opcode::Load: {
          word_t a = in.addr.offset + (in.addr.has_base ? regval(in.addr.base) : 0);
          run.trace.push_back({ir::ObsKind::ShadowLoadAddress, a});
          sregs[in.rd.index] = sread(a);
          break;
        }
        case Opcode::Store: {
          word_t a = in.addr.offset + (in.addr.has_base ? regval(in.addr.base) : 0);
          run.trace.push_back({ir::ObsKind::ShadowStoreAddress, a});
          overlay[a] = regval(in.rd);
          break;
        }
        case Opcode::Mov: sregs[in.rd.index] = opval(in.src2); break;
        case Opcode::Add: sregs[in.rd.index] = regval(in.rs) + opval(in.src2); break;
        case Opcode::Sub: sregs[in.rd.index] = regval(in.rs) - opval(in.src2); break;
        case Opcode::And: sregs[in.rd.index] = regval(in.rs) & opval(in.src2); break;
        case Opcode::Or: sregs[in.rd.index] = regval(in.rs) | opval(in.src2); break;
        case Opcode::Xor: sregs[in.rd.index] = regval(in.rs) ^ opval(in.src2); break;
        case Opcode::Shl: sregs[in.rd.index] = regval(in.rs) << (opval(in.src2) & 31); break;
        case Opcode::Shr: sregs[in.rd.index] = regval(in.rs) >> (opval(in.src2) & 31); break;
        case Opcode::Mul: sregs[in.rd.index] = regval(in.rs) * opval(in.src2); break;
        case Opcode::Cmp: sflags = ir::compute_flags(regval(in.rd), opval(in.src2)); break;
        case Opcode::Csel:
          sregs[in.rd.index] = ir::eval_cond(in.cond, sflags) ? regval(in.rs) : opval(in.src2);
          break;
        case Opcode::Branch:
          if (ir::eval_cond(in.cond, sflags)) next = in.target;
          break;
        case Opcode::Jump: next = in.target; break;
        case Opcode::Halt: next = frag->end; break;  // misspeculated halt: episode ends
        case Opcode::Csdb:
        case Opcode::Fence:
        case Opcode::Nop:
        case Opcode::Obs:
          break;
      }
      pc = next;
    }
    s.pc = frag->end;  // shadow state and overlay are discarded here
  }
  run.final_state = std::move(s);
  return run;
}

// ---------------------------------------------------------------------------
// Candidate enumeration
// ---------------------------------------------------------------------------

namespace {

bool fragment_has_live_obs(const symx::SymbolicTree& tree, const ir::ShadowFragment& frag,
                           solve::SatisfiabilityService& solver) {
  for (const auto& leaf : tree.leaves) {
    for (const auto& o : leaf.obs) {
      if (o.shadow_site < 0) continue;
      if (o.instr_index < static_cast<int>(frag.begin) ||
          o.instr_index >= static_cast<int>(frag.end))
        continue;
      auto q = sym::land(leaf.path_condition(tree.precondition), o.guard);
      if (solver.solve(q).status == solve::SatResult::Sat) return true;
    }
  }
  return false;
}

// Disjunction of the guards under which `leaf` observes a shadow site whose
// original instruction is `origin`, restricted to `frag`. False when the leaf
// never observes it.
sym::ExprPtr origin_guard(const symx::SymPath& leaf, const ir::Program& transformed,
                          const ir::ShadowFragment& frag, int origin) {
  sym::ExprPtr acc = sym::cbool(false);
  for (const auto& o : leaf.obs) {
    if (o.shadow_site < 0 || o.instr_index < static_cast<int>(frag.begin) ||
        o.instr_index >= static_cast<int>(frag.end))
      continue;
    if (transformed.code[o.instr_index].origin_index != origin) continue;
    acc = sym::lor(acc, o.guard);
  }
  return acc;
}

const ir::ShadowFragment* fragment_at(const ir::Program& transformed, int anchor_origin) {
  for (const auto& f : transformed.fragments)
    if (f.anchor_origin == anchor_origin) return &f;
  return nullptr;
}

const symx::SymPath* leaf_by_outcomes(const symx::SymbolicTree& tree,
                                      const std::vector<bool>& outcomes) {
  for (const auto& l : tree.leaves)
    if (l.branch_outcomes == outcomes) return &l;
  return nullptr;
}

// A candidate that negates several branches must still exhibit, per fragment,
// every access that misspeculating only that fragment's anchor would exhibit.
std::string suppression_reason(const ir::Program& p, const ShadowedProgram& cand_sp,
                               const symx::SymbolicTree& cand_tree,
                               const std::vector<uint32_t>& subset,
                               solve::SatisfiabilityService& solver,
                               std::map<uint32_t, symx::SymbolicTree>& single_trees,
                               std::map<uint32_t, ShadowedProgram>& single_programs,
                               const EnumerateOptions& opts) {
  for (uint32_t b : subset) {
    if (!single_trees.count(b)) {
      RefinementSpec s;
      s.branches = {b};
      s.d_shadow = opts.d_shadow;
      ShadowedProgram sp = apply_refinement(p, s);
      symx::SymExecOptions so;
      so.depth_limit = opts.depth_limit;
      single_trees.emplace(b, symx::sym_execute(sp.transformed, sym::cbool(true), solver, so));
      single_programs.emplace(b, std::move(sp));
    }
    const symx::SymbolicTree& alt_tree = single_trees.at(b);
    const ShadowedProgram& alt_sp = single_programs.at(b);
    const ir::ShadowFragment* alt_frag = fragment_at(alt_sp.transformed, static_cast<int>(b));
    const ir::ShadowFragment* cand_frag = fragment_at(cand_sp.transformed, static_cast<int>(b));
    if (!alt_frag || !cand_frag) continue;

    for (const auto& alt_leaf : alt_tree.leaves) {
      const symx::SymPath* cand_leaf = leaf_by_outcomes(cand_tree, alt_leaf.branch_outcomes);
      if (!cand_leaf) continue;
      // Origins of shadow memory ops inside the anchor-only fragment.
      std::set<int> origins;
      for (const auto& o : alt_leaf.obs)
        if (o.shadow_site >= 0 && o.instr_index >= static_cast<int>(alt_frag->begin) &&
            o.instr_index < static_cast<int>(alt_frag->end))
          origins.insert(alt_sp.transformed.code[o.instr_index].origin_index);
      for (int origin : origins) {
        sym::ExprPtr g_alt = origin_guard(alt_leaf, alt_sp.transformed, *alt_frag, origin);
        sym::ExprPtr g_cand = origin_guard(*cand_leaf, cand_sp.transformed, *cand_frag, origin);
        sym::ExprPtr q = sym::land(alt_leaf.branch_condition(alt_tree.precondition),
                                   sym::land(g_alt, sym::lnot(g_cand)));
        if (solver.solve(q).status == solve::SatResult::Sat)
          return "negations suppress the misspeculated access of instruction " +
                 std::to_string(origin) + " (fragment at branch " + std::to_string(b) + ")";
      }
    }
  }
  return {};
}

}  // namespace

std::vector<Candidate> enumerate_refinements_detailed(const Program& p,
                                                      solve::SatisfiabilityService& solver,
                                                      EnumerateOptions opts) {
  std::vector<uint32_t> branches;
  for (uint32_t i = 0; i < p.code.size(); ++i)
    if (p.code[i].op == Opcode::Branch && !p.code[i].shadow) branches.push_back(i);

  // Candidate subsets ordered by size, then by branch indices.
  std::vector<std::vector<uint32_t>> subsets;
  if (branches.size() <= opts.max_subset_branches) {
    for (uint32_t mask = 1; mask < (1u << branches.size()); ++mask) {
      std::vector<uint32_t> s;
      for (size_t i = 0; i < branches.size(); ++i)
        if (mask & (1u << i)) s.push_back(branches[i]);
      subsets.push_back(std::move(s));
    }
    std::stable_sort(subsets.begin(), subsets.end(),
                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
  } else {
    for (uint32_t b : branches) subsets.push_back({b});
    subsets.push_back(branches);
  }

  // Shadow trees for singleton specs, reused by the suppression check.
  std::map<uint32_t, symx::SymbolicTree> single_trees;
  std::map<uint32_t, ShadowedProgram> single_programs;

  std::vector<Candidate> out;
  for (const auto& subset : subsets) {
    Candidate cand;
    cand.spec.branches = subset;
    cand.spec.d_shadow = opts.d_shadow;

    ShadowedProgram sp = apply_refinement(p, cand.spec);
    symx::SymExecOptions so;
    so.depth_limit = opts.depth_limit;
    symx::SymbolicTree tree = symx::sym_execute(sp.transformed, sym::cbool(true), solver, so);

    if (tree.shadow_site_count == 0) {
      cand.reason = "no shadow observations";
      out.push_back(std::move(cand));
      continue;
    }

    // Every fragment must contribute at least one satisfiable shadow
    // observation.
    bool dead_fragment = false;
    for (const auto& frag : sp.transformed.fragments)
      if (!fragment_has_live_obs(tree, frag, solver)) {
        cand.reason = "fragment at branch " + std::to_string(frag.anchor_origin) +
                      " raises no satisfiable shadow observation";
        dead_fragment = true;
        break;
      }
    if (dead_fragment) {
      out.push_back(std::move(cand));
      continue;
    }

    // Negating additional branches must not suppress accesses that a lone
    // misspeculation of the fragment's anchor would perform.
    if (subset.size() > 1) {
      std::string kill = suppression_reason(p, sp, tree, subset, solver, single_trees,
                                            single_programs, opts);
      if (!kill.empty()) {
        cand.reason = kill;
        out.push_back(std::move(cand));
        continue;
      }
    }

    // The refined relation must be able to distinguish anything at all.
    try {
      rel::Relation d = rel::distinguishing_constraint(tree, rel::ObsModel::base(),
                                                       rel::ObsModel::refined_top(tree));
      d = rel::add_public_labels(d, p);
      auto outc = solver.solve(d.formula);
      if (outc.status == solve::SatResult::Unsat) {
        cand.reason = "distinguishing relation unsatisfiable for all shadow paths";
        out.push_back(std::move(cand));
        continue;
      }
    } catch (const rel::RelsynError& e) {
      cand.reason = e.what();
      out.push_back(std::move(cand));
      continue;
    }

    cand.kept = true;
    out.push_back(std::move(cand));
  }
  return out;
}

std::vector<RefinementSpec> enumerate_refinements(const Program& p,
                                                  solve::SatisfiabilityService& solver,
                                                  EnumerateOptions opts) {
  std::vector<RefinementSpec> out;
  for (auto& c : enumerate_refinements_detailed(p, solver, opts))
    if (c.kept) out.push_back(c.spec);
  return out;
}

}  // namespace spectest::refine
