// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/inputgen.hpp"

#include <algorithm>

namespace spectest::gen {

using namespace sym;
using solve::SatResult;

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t state_fingerprint(const ir::MachineState& s) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  for (auto r : s.regs) mix(r);
  for (auto b : s.mem) mix(b);
  return h;
}

}  // namespace

ir::MachineState materialize_state(const ir::Program& p, const solve::Model& m, int copy,
                                   uint64_t rng_seed, unsigned domain_bits) {
  ir::MachineState s = ir::initial_state(p);
  uint64_t rng = rng_seed ^ 0x5eed5eedull;
  ir::word_t mask = domain_bits >= 32 ? 0xFFFFFFFFu : ((1u << domain_bits) - 1);
  for (unsigned i = 0; i < ir::kNumRegisters; ++i) {
    uint64_t r = splitmix64(rng);
    auto it = m.regs.find({copy, i});
    s.regs[i] = it != m.regs.end() ? it->second : static_cast<ir::word_t>(r) & mask;
  }
  // Cells carry word values at byte addresses; later writes win, and the
  // caller re-verifies the constraint by substitution.
  for (const auto& [key, val] : m.cells) {
    if (key.first != copy) continue;
    if (static_cast<uint64_t>(key.second) + 4 <= s.mem.size()) s.store_word(key.second, val);
  }
  return s;
}

struct PairGenerator::Impl {
  const symx::SymbolicTree& tree;
  rel::Relation constraint;
  solve::EnumerativeSolver& solver;
  uint64_t seed;
  std::optional<sim::CacheGeometry> geometry;

  struct LeafPlan {
    int leaf_id;
    std::vector<ExprPtr> queries;  // spread-preferring first, plain last
    size_t active = 0;
    std::unique_ptr<solve::EnumerativeSolver::Session> session;
  };
  std::vector<LeafPlan> plans;
  size_t active_plan = 0;
  std::set<std::pair<uint64_t, uint64_t>> seen;
  bool unknown_seen = false;
  std::string unknown_note;

  Impl(const symx::SymbolicTree& t, rel::Relation c, solve::EnumerativeSolver& s, uint64_t sd,
       std::optional<sim::CacheGeometry> g)
      : tree(t), constraint(std::move(c)), solver(s), seed(sd), geometry(std::move(g)) {
    for (const auto& leaf : tree.leaves) {
      LeafPlan plan;
      plan.leaf_id = leaf.leaf_id;
      ExprPtr pc0 = leaf.path_condition(tree.precondition);
      ExprPtr base = land(land(pc0, swap_copies(pc0)), constraint.formula);

      if (geometry) {
        // Prefer assignments whose differing shadow addresses land in
        // different cache sets: better detectability, purely a heuristic.
        word_t line = geometry->line_bytes;
        unsigned shift = 0;
        while ((1u << shift) < line) ++shift;
        word_t set_mask = geometry->sets - 1;
        std::set<int> sites_done;
        for (const auto& o : leaf.obs) {
          if (o.shadow_site < 0 || sites_done.count(o.shadow_site)) continue;
          sites_done.insert(o.shadow_site);
          ExprPtr set0 = bit_and(shr(o.value, cword(shift)), cword(set_mask));
          ExprPtr set1 = bit_and(shr(swap_copies(o.value), cword(shift)), cword(set_mask));
          ExprPtr spread = land(land(o.guard, swap_copies(o.guard)), ne(set0, set1));
          plan.queries.push_back(land(base, spread));
        }
      }
      plan.queries.push_back(base);
      plans.push_back(std::move(plan));
    }
  }

  PairResult step() {
    while (active_plan < plans.size()) {
      LeafPlan& plan = plans[active_plan];
      if (plan.active >= plan.queries.size()) {
        ++active_plan;
        continue;
      }
      if (!plan.session)
        plan.session = std::make_unique<solve::EnumerativeSolver::Session>(
            solver, plan.queries[plan.active]);
      auto out = plan.session->next();
      if (out.status == SatResult::Unknown) {
        unknown_seen = true;
        unknown_note = out.note;
        ++plan.active;
        plan.session.reset();
        continue;
      }
      if (out.status == SatResult::Unsat) {
        ++plan.active;
        plan.session.reset();
        continue;
      }

      uint64_t rng_seed = seed * 0x9e3779b97f4a7c15ull + active_plan;
      StatePair pair;
      pair.s1 = materialize_state(tree.program, out.model, 0, rng_seed,
                                  solver.options().domain_bits);
      pair.s2 = materialize_state(tree.program, out.model, 1, rng_seed,
                                  solver.options().domain_bits);
      pair.witness_leaf = plan.leaf_id;
      pair.model_ids = constraint.model_id;
      pair.seed = seed;

      // Substitution check: materialization can lose a model to overlapping
      // word cells; skip such models.
      auto v = state_valuation(pair.s1, pair.s2);
      if (!eval_bool(plan.queries[plan.active], v)) continue;

      auto key = std::make_pair(state_fingerprint(pair.s1), state_fingerprint(pair.s2));
      if (seen.count(key)) continue;  // a new model may materialize identically
      seen.insert(key);
      return {GenStatus::Ok, std::move(pair), ""};
    }
    if (unknown_seen) return {GenStatus::Unknown, {}, unknown_note};
    return {GenStatus::Unsat, {}, "constraint exhausted"};
  }
};

PairGenerator::PairGenerator(const symx::SymbolicTree& tree, rel::Relation constraint,
                             solve::EnumerativeSolver& solver, uint64_t seed,
                             std::optional<sim::CacheGeometry> spread_geometry)
    : impl_(std::make_unique<Impl>(tree, std::move(constraint), solver, seed,
                                   std::move(spread_geometry))) {}
PairGenerator::~PairGenerator() = default;

PairResult PairGenerator::next() {
  PairResult r = impl_->step();
  if (r.status == GenStatus::Ok) ++generated_;
  return r;
}

PairResult generate_pair(const symx::SymbolicTree& tree, const rel::Relation& constraint,
                         solve::EnumerativeSolver& solver, uint64_t seed) {
  PairGenerator g(tree, constraint, solver, seed);
  return g.next();
}

std::optional<TrainingInput> generate_training(const symx::SymbolicTree& tree, int avoid_leaf,
                                               solve::SatisfiabilityService& solver, uint64_t seed,
                                               std::optional<uint32_t> mispredict_branch) {
  if (tree.leaves.size() < 2) return std::nullopt;

  const symx::SymPath* avoid = nullptr;
  for (const auto& l : tree.leaves)
    if (l.leaf_id == avoid_leaf) avoid = &l;

  // Preference: flip the to-be-mispredicted branch relative to the avoided
  // path; fall back to any other leaf.
  std::vector<const symx::SymPath*> order;
  auto outcome_at = [&](const symx::SymPath& l, uint32_t branch) -> std::optional<bool> {
    size_t k = 0;
    for (const auto& o : l.obs) {
      if (o.kind != ir::ObsKind::BranchOutcome) continue;
      if (o.instr_index == static_cast<int>(branch) && k < l.branch_outcomes.size())
        return l.branch_outcomes[k];
      ++k;
    }
    return std::nullopt;
  };
  std::vector<const symx::SymPath*> preferred, rest;
  for (const auto& l : tree.leaves) {
    if (l.leaf_id == avoid_leaf) continue;
    bool pref = false;
    if (mispredict_branch && avoid) {
      auto a = outcome_at(*avoid, *mispredict_branch);
      auto b = outcome_at(l, *mispredict_branch);
      pref = a && b && *a != *b;
    }
    (pref ? preferred : rest).push_back(&l);
  }
  order = preferred;
  order.insert(order.end(), rest.begin(), rest.end());

  for (const symx::SymPath* leaf : order) {
    auto out = solver.solve(leaf->path_condition(tree.precondition));
    if (out.status != SatResult::Sat) continue;
    TrainingInput t;
    t.state = materialize_state(tree.program, out.model, 0, seed ^ 0x7Aa117ull,
                                solver.domain_bits());
    t.target_leaf = leaf->leaf_id;
    return t;
  }
  return std::nullopt;
}

}  // namespace spectest::gen
