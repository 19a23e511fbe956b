// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/relsyn.hpp"

#include <algorithm>

#include "spectest/solver.hpp"

namespace spectest::rel {

using namespace sym;
using symx::SymObs;
using symx::TreeNode;

ObsModel ObsModel::base() {
  ObsModel m;
  m.kinds = {ir::ObsKind::LoadAddress, ir::ObsKind::StoreAddress, ir::ObsKind::BranchOutcome,
             ir::ObsKind::InitialPublic};
  m.id = "base";
  return m;
}

ObsModel ObsModel::refined_top(const symx::SymbolicTree& tree) {
  ObsModel m = base();
  m.kinds.insert(ir::ObsKind::ShadowLoadAddress);
  m.kinds.insert(ir::ObsKind::ShadowStoreAddress);
  for (int i = 0; i < tree.shadow_site_count; ++i) m.shadow_sites.insert(i);
  m.id = "refined-top";
  return m;
}

bool ObsModel::enables(const SymObs& o) const {
  if (o.kind == ir::ObsKind::ShadowLoadAddress || o.kind == ir::ObsKind::ShadowStoreAddress) {
    // Annotation-produced refined observations carry site -1 and follow the
    // kind switch alone.
    if (o.shadow_site >= 0) return shadow_sites.count(o.shadow_site) > 0;
    return kinds.count(o.kind) > 0;
  }
  return kinds.count(o.kind) > 0;
}

uint64_t program_hash(const ir::Program& p) {
  std::string text = ir::print_program(p);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

using Assumptions = std::vector<std::pair<ExprPtr, bool>>;

// Splits a conjunction of literals into assumption entries.
void assume_literals(const ExprPtr& g, bool value, Assumptions& out) {
  if (value && g->op == Op::And) {
    assume_literals(g->a, true, out);
    assume_literals(g->b, true, out);
    return;
  }
  if (g->op == Op::Not) {
    assume_literals(g->a, !value, out);
    return;
  }
  if (is_const(g)) return;
  out.push_back({g, value});
}

ExprPtr under(const ExprPtr& e, const Assumptions& as) {
  return as.empty() ? e : simplify_assuming(e, as);
}

struct Synth {
  const ObsModel* model;
  bool extras_only = false;  // emit only shadow sites listed in `diff`
  const std::set<int>* diff = nullptr;

  bool wants(const SymObs& o) const {
    if (extras_only)
      return o.shadow_site >= 0 && diff->count(o.shadow_site) &&
             (o.kind == ir::ObsKind::ShadowLoadAddress ||
              o.kind == ir::ObsKind::ShadowStoreAddress);
    return model->enables(o);
  }

  ExprPtr segment_formula(const std::vector<SymObs>& segment, const Assumptions& as) {
    ExprPtr acc = cbool(true);
    for (const auto& o : segment) {
      if (!wants(o)) continue;
      ExprPtr v = under(o.value, as);
      ExprPtr vp = under(swap_copies(o.value), as);
      if (o.kind == ir::ObsKind::InitialPublic) {
        acc = land(acc, eq(v, vp));
        continue;
      }
      ExprPtr g = under(o.guard, as);
      ExprPtr gp = under(swap_copies(o.guard), as);
      if (is_true(g) && is_true(gp)) {
        acc = land(acc, eq(v, vp));
        continue;
      }
      // Presence must agree, and when both copies observe the site the
      // values must agree.
      Assumptions with_guard = as;
      assume_literals(g, true, with_guard);
      assume_literals(gp, true, with_guard);
      acc = land(acc, iff(g, gp));
      acc = land(acc, implies(land(g, gp), eq(under(o.value, with_guard),
                                              under(swap_copies(o.value), with_guard))));
    }
    return acc;
  }

  ExprPtr node_formula(const TreeNode* n, Assumptions as) {
    if (!n) return cbool(true);
    ExprPtr acc = segment_formula(n->segment, as);
    if (n->is_leaf()) return acc;

    ExprPtr c = under(n->branch_cond, as);
    ExprPtr cp = under(swap_copies(n->branch_cond), as);
    bool outcome_observed = model->kinds.count(ir::ObsKind::BranchOutcome) > 0;
    if (outcome_observed && !extras_only) acc = land(acc, iff(c, cp));

    auto arm = [&](const TreeNode* child, bool taken) -> ExprPtr {
      if (!child) return cbool(true);
      Assumptions sub = as;
      assume_literals(c, taken, sub);
      // Both copies follow the same arm whenever branch outcomes are
      // observed (the iff above), so the primed condition joins the
      // assumption set.
      if (outcome_observed) assume_literals(cp, taken, sub);
      ExprPtr body = node_formula(child, sub);
      return implies(taken ? c : lnot(c), body);
    };
    acc = land(acc, arm(n->not_taken.get(), false));
    acc = land(acc, arm(n->taken.get(), true));
    return acc;
  }
};

void validate_sites(const symx::SymbolicTree& tree, const ObsModel& m) {
  for (int s : m.shadow_sites)
    if (s < 0 || s >= tree.shadow_site_count)
      throw RelsynError("model references shadow site " + std::to_string(s) +
                        " absent from the tree");
}

}  // namespace

Relation synthesize_relation(const symx::SymbolicTree& tree, const ObsModel& model) {
  validate_sites(tree, model);
  Relation r;
  r.model_id = model.id;
  r.program_hash = program_hash(tree.program);
  if (!tree.root) {
    r.formula = cbool(true);
    return r;
  }
  Synth s{&model, false, nullptr};
  r.formula = s.node_formula(tree.root.get(), {});
  return r;
}

Relation distinguishing_constraint(const symx::SymbolicTree& tree, const ObsModel& base,
                                   const ObsModel& refined) {
  validate_sites(tree, base);
  validate_sites(tree, refined);
  std::set<int> diff;
  for (int s : refined.shadow_sites)
    if (!base.shadow_sites.count(s)) diff.insert(s);
  if (diff.empty())
    throw RelsynError("refined model adds no shadow observation over the base model");

  Relation base_rel = synthesize_relation(tree, base);

  Synth extra{&base, true, &diff};
  ExprPtr extras = extra.node_formula(tree.root.get(), {});

  Relation r;
  r.model_id = base.id + " & not(" + refined.id + ")";
  r.program_hash = base_rel.program_hash;
  r.formula = land(base_rel.formula, lnot(extras));
  return r;
}

std::vector<ObsModel> lattice_neighbors(const ObsModel& m, bool up,
                                        const symx::SymbolicTree& tree) {
  std::vector<ObsModel> out;
  if (up) {
    for (int s = 0; s < tree.shadow_site_count; ++s) {
      if (m.shadow_sites.count(s)) continue;
      ObsModel n = m;
      n.kinds.insert(ir::ObsKind::ShadowLoadAddress);
      n.kinds.insert(ir::ObsKind::ShadowStoreAddress);
      n.shadow_sites.insert(s);
      n.id = m.id + "+s" + std::to_string(s);
      out.push_back(std::move(n));
    }
  } else {
    for (int s : m.shadow_sites) {
      ObsModel n = m;
      n.shadow_sites.erase(s);
      n.id = m.id + "-s" + std::to_string(s);
      out.push_back(std::move(n));
    }
  }
  return out;
}

ExprPtr public_equality(const ir::Program& p) {
  ExprPtr acc = cbool(true);
  for (unsigned i = 0; i < ir::kNumRegisters; ++i)
    if (p.reg_labels[i] == ir::SecLabel::Public)
      acc = land(acc, eq(reg_sym(i, 0), reg_sym(i, 1)));
  for (const auto& d : p.data) {
    if (d.label != ir::SecLabel::Public) continue;
    for (ir::word_t off = 0; off + 4 <= d.size; off += 4)
      acc = land(acc, eq(select(mem_sym(0), cword(d.offset + off)),
                         select(mem_sym(1), cword(d.offset + off))));
  }
  return acc;
}

Relation add_public_labels(const Relation& rel, const ir::Program& p) {
  Relation r = rel;
  r.formula = land(rel.formula, public_equality(p));
  r.model_id = rel.model_id + "+labels";
  return r;
}

std::string relation_smtlib(const Relation& r, unsigned domain_bits) {
  return solve::emit_smtlib_query(r.formula, domain_bits, /*check_sat=*/false);
}

}  // namespace spectest::rel
