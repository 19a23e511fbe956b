// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/leaktest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace spectest::leak {

void ExperimentPlan::validate() const {
  if (iterations < 1) throw LeakError("iterations must be at least 1");
  if (cache_config_count < 1) throw LeakError("need at least one cache configuration");
  if (theta_present <= 0 || theta_present > 1) throw LeakError("theta_present out of range");
  if (theta_agree <= 0 || theta_agree > 1) throw LeakError("theta_agree out of range");
}

const char* classification_name(Classification c) {
  switch (c) {
    case Classification::Counterexample: return "counterexample";
    case Classification::ConclusiveNoLeak: return "conclusive-no-leak";
    case Classification::Inconclusive: return "inconclusive";
  }
  return "?";
}

Classification classify_evidence(const std::vector<ConfigEvidence>& evidence,
                                 unsigned iterations, double theta_present, double theta_agree,
                                 std::vector<LineKey>* distinguishing) {
  unsigned present_need =
      static_cast<unsigned>(std::ceil(theta_present * iterations - 1e-9));
  if (present_need == 0) present_need = 1;

  std::vector<LineKey> found;
  bool all_conclusive = true;

  for (const auto& cfg : evidence) {
    std::map<LineKey, unsigned> count1, count2;
    for (const auto& it : cfg.runs1)
      for (const auto& l : it) ++count1[l];
    for (const auto& it : cfg.runs2)
      for (const auto& l : it) ++count2[l];

    std::set<LineKey> all_lines;
    for (const auto& [l, n] : count1) all_lines.insert(l);
    for (const auto& [l, n] : count2) all_lines.insert(l);

    for (const auto& l : all_lines) {
      unsigned c1 = count1.count(l) ? count1[l] : 0;
      unsigned c2 = count2.count(l) ? count2[l] : 0;
      if ((c1 >= present_need && c2 == 0) || (c2 >= present_need && c1 == 0))
        found.push_back(l);
    }

    if (all_lines.empty()) continue;  // vacuously agreeing config
    unsigned both_ever = 0, both_strong = 0;
    for (const auto& l : all_lines) {
      unsigned c1 = count1.count(l) ? count1[l] : 0;
      unsigned c2 = count2.count(l) ? count2[l] : 0;
      if (c1 >= 1 && c2 >= 1) ++both_ever;
      if (c1 >= present_need && c2 >= present_need) ++both_strong;
    }
    if (both_ever != all_lines.size() ||
        static_cast<double>(both_strong) + 1e-9 < theta_agree * all_lines.size())
      all_conclusive = false;
  }

  if (!found.empty()) {
    if (distinguishing) {
      std::sort(found.begin(), found.end());
      found.erase(std::unique(found.begin(), found.end()), found.end());
      *distinguishing = std::move(found);
    }
    return Classification::Counterexample;
  }
  return all_conclusive ? Classification::ConclusiveNoLeak : Classification::Inconclusive;
}

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<LineKey> populated_lines(const sim::CacheState& c) {
  std::vector<LineKey> out;
  for (const auto& e : sim::probe_cache(c))
    if (e.program_populated) out.push_back({e.set, e.tag});
  std::sort(out.begin(), out.end());
  return out;
}

LeakVerdict run_once(const ExperimentPlan& plan, uint64_t eviction_seed) {
  std::vector<ir::MachineState> training_states;
  for (const auto& t : plan.training) training_states.push_back(t.state);
  sim::PredictorState trained =
      sim::train_predictor(plan.program, training_states, plan.config);

  // First iteration from a cold cache defines the content the derived
  // configurations are built from.
  sim::CacheState cold = sim::CacheState::empty(plan.config.cache);
  sim::RunResult first = sim::run(plan.program, plan.pair.s1, cold, trained, plan.config);
  auto configs = sim::make_cache_configs(first.cache, plan.cache_config_count, plan.seed);

  LeakVerdict v;
  uint64_t noise = eviction_seed ^ 0xA5A5A5A5ull;
  for (const auto& cfg_cache : configs) {
    ConfigEvidence ev;
    for (unsigned k = 0; k < plan.iterations; ++k) {
      sim::CacheState base_cache = cfg_cache;
      if (plan.eviction_noise) {
        for (auto& ways : base_cache.sets) {
          std::vector<sim::CacheLine> kept;
          for (auto& l : ways)
            if ((splitmix64(noise) & 3) != 0) kept.push_back(l);  // evict ~1/4
          ways = std::move(kept);
        }
      }
      // Both runs start from byte-identical microarchitectural state.
      sim::RunResult r1 = sim::run(plan.program, plan.pair.s1, base_cache, trained, plan.config);
      sim::RunResult r2 = sim::run(plan.program, plan.pair.s2, base_cache, trained, plan.config);
      ev.runs1.push_back(populated_lines(r1.cache));
      ev.runs2.push_back(populated_lines(r2.cache));
    }
    v.evidence.push_back(std::move(ev));
  }
  v.classification = classify_evidence(v.evidence, plan.iterations, plan.theta_present,
                                       plan.theta_agree, &v.distinguishing);
  return v;
}

}  // namespace

LeakVerdict run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  try {
    LeakVerdict v = run_once(plan, plan.seed);
    if (v.classification == Classification::Inconclusive && plan.retry_inconclusive) {
      LeakVerdict retry = run_once(plan, plan.seed + 1);
      retry.retries = 1;
      return retry;
    }
    return v;
  } catch (const sim::SimError& e) {
    throw LeakError(std::string("experiment aborted: ") + e.what());
  }
}

LeakOutcome has_side_channel_leakage(
    const ir::Program& program, gen::PairGenerator& pairs,
    const std::function<std::vector<gen::TrainingInput>(const gen::StatePair&)>& training_for,
    const sim::MicroConfig& config, unsigned pair_budget, uint64_t seed,
    const ExperimentPlan* plan_template) {
  LeakOutcome out;
  for (unsigned i = 0; i < pair_budget; ++i) {
    gen::PairResult pr = pairs.next();
    if (pr.status == gen::GenStatus::Unsat) {
      if (out.pairs_tested == 0)
        out.reason = "no distinguishable inputs under refined model";
      else
        out.reason = "pair constraint exhausted after " + std::to_string(out.pairs_tested) +
                     " pairs";
      return out;
    }
    if (pr.status == gen::GenStatus::Unknown) {
      ++out.inconclusive;
      out.reason = "solver could not decide pair constraint: " + pr.note;
      return out;
    }

    ExperimentPlan plan;
    if (plan_template) plan = *plan_template;
    plan.program = program;
    plan.pair = pr.pair;
    plan.training = training_for(pr.pair);
    plan.config = config;
    plan.seed = seed + i;

    LeakVerdict v = run_experiment(plan);
    ++out.pairs_tested;
    switch (v.classification) {
      case Classification::Counterexample:
        ++out.counterexamples;
        out.leak = true;
        out.witness = pr.pair;
        out.verdict = std::move(v);
        return out;
      case Classification::ConclusiveNoLeak: ++out.no_leak; break;
      case Classification::Inconclusive: ++out.inconclusive; break;
    }
  }
  out.reason = "pair budget exhausted without counterexample";
  return out;
}

}  // namespace spectest::leak
