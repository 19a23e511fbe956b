// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/microsim.hpp"

#include <algorithm>
#include <sstream>

namespace spectest::sim {

using ir::Cond;
using ir::Instruction;
using ir::Opcode;
using ir::Program;

void MicroConfig::validate() const {
  auto pow2 = [](uint32_t v) { return v && (v & (v - 1)) == 0; };
  if (!pow2(cache.sets) || !pow2(cache.ways))
    throw SimError("cache sets and ways must be powers of two");
  if (cache.line_bytes < 4) throw SimError("cache line must hold at least one word");
  if (base_latency < 1) throw SimError("base latency must be at least 1");
}

CacheState CacheState::empty(CacheGeometry g) {
  CacheState c;
  c.geom = g;
  c.sets.resize(g.sets);
  return c;
}

bool CacheState::present(word_t addr) const {
  uint32_t s = set_of(addr);
  word_t t = tag_of(addr);
  for (const auto& l : sets[s])
    if (l.valid && l.tag == t) return true;
  return false;
}

bool CacheState::access(word_t addr, bool install_on_miss, bool mark) {
  uint32_t s = set_of(addr);
  word_t t = tag_of(addr);
  auto& ways = sets[s];
  for (size_t i = 0; i < ways.size(); ++i) {
    if (ways[i].valid && ways[i].tag == t) {
      CacheLine line = ways[i];
      if (mark) line.program_populated = true;
      ways.erase(ways.begin() + static_cast<long>(i));
      ways.insert(ways.begin(), line);  // MRU
      return true;
    }
  }
  if (install_on_miss) {
    CacheLine line{t, true, mark};
    ways.insert(ways.begin(), line);
    while (ways.size() > geom.ways) ways.pop_back();
  }
  return false;
}

void CacheState::evict(uint32_t set, word_t tag) {
  auto& ways = sets[set];
  ways.erase(std::remove_if(ways.begin(), ways.end(),
                            [&](const CacheLine& l) { return l.valid && l.tag == tag; }),
             ways.end());
}

size_t CacheState::valid_line_count() const {
  size_t n = 0;
  for (const auto& w : sets)
    for (const auto& l : w)
      if (l.valid) ++n;
  return n;
}

std::string CacheState::dump() const {
  std::ostringstream os;
  for (uint32_t s = 0; s < geom.sets; ++s) {
    if (sets[s].empty()) continue;
    os << "set " << s << ":";
    for (const auto& l : sets[s])
      os << " tag=0x" << std::hex << l.tag << std::dec << (l.program_populated ? "*" : "");
    os << "\n";
  }
  return os.str();
}

std::vector<ProbeEntry> probe_cache(const CacheState& c) {
  std::vector<ProbeEntry> out;
  for (uint32_t s = 0; s < c.geom.sets; ++s)
    for (const auto& l : c.sets[s])
      if (l.valid) out.push_back({s, l.tag, l.program_populated});
  std::sort(out.begin(), out.end());
  return out;
}

bool PredictorState::predict(uint32_t branch, bool actual) const {
  switch (kind) {
    case PredictorKind::TwoBit: {
      auto it = counters.find(branch);
      uint8_t c = it == counters.end() ? 1 : it->second;  // weakly-not-taken start
      return c >= 2;
    }
    case PredictorKind::AlwaysMispredict: return !actual;
    case PredictorKind::AlwaysCorrect: return actual;
  }
  return false;
}

void PredictorState::update(uint32_t branch, bool taken) {
  if (kind != PredictorKind::TwoBit) return;
  auto it = counters.find(branch);
  uint8_t c = it == counters.end() ? 1 : it->second;
  if (taken) c = static_cast<uint8_t>(std::min<int>(3, c + 1));
  else c = static_cast<uint8_t>(std::max<int>(0, c - 1));
  counters[branch] = c;
}

namespace {

word_t opval(const ir::Operand& o, const std::array<word_t, ir::kNumRegisters>& regs) {
  return o.is_reg ? regs[o.reg.index] : o.imm;
}

// Wrong-path execution after a mispredicted branch. Mutates only the cache
// and the transient-load log; architectural state is read through copies.
struct TransientEpisode {
  const Program& p;
  const MicroConfig& cfg;
  CacheState& cache;
  const PredictorState& predictor;
  std::vector<TransientLoad>& log;

  void run(const ir::MachineState& commit_state, uint32_t start_pc, Cond anchor_cond,
           bool predicted_taken) {
    const uint64_t W = cfg.speculation_window;
    std::array<word_t, ir::kNumRegisters> regs = commit_state.regs;
    std::array<uint64_t, ir::kNumRegisters> ready{};
    ir::Flags flags = commit_state.flags;
    uint64_t flags_ready = 0;
    bool flags_from_anchor = true;  // no transient cmp yet
    bool csdb_executed = false;
    uint64_t t = 0;
    uint32_t pc = start_pc;
    uint64_t guard = 0;

    while (true) {
      if (guard++ > 100000) throw SimError("transient episode failed to terminate");
      if (pc >= p.code.size()) return;
      const Instruction& in = p.code[pc];
      if (in.shadow) return;  // refined programs are not meant for the simulator

      uint64_t start = t;
      auto need = [&](ir::Reg r) { start = std::max(start, ready[r.index]); };
      auto need_op = [&](const ir::Operand& o) {
        if (o.is_reg) need(o.reg);
      };
      switch (in.op) {
        case Opcode::Load:
          if (in.addr.has_base) need(in.addr.base);
          break;
        case Opcode::Store:
          need(in.rd);
          if (in.addr.has_base) need(in.addr.base);
          break;
        case Opcode::Mov: need_op(in.src2); break;
        case Opcode::Cmp:
          need(in.rd);
          need_op(in.src2);
          break;
        case Opcode::Branch: start = std::max(start, flags_ready); break;
        case Opcode::Csel:
          need(in.rs);
          need_op(in.src2);
          start = std::max(start, flags_ready);
          break;
        case Opcode::Halt:
        case Opcode::Jump:
        case Opcode::Csdb:
        case Opcode::Fence:
        case Opcode::Nop:
        case Opcode::Obs:
          break;
        default:  // two-source alu
          need(in.rs);
          need_op(in.src2);
          break;
      }
      if (start >= W) return;  // window expires before issue
      t = start + cfg.base_latency;

      switch (in.op) {
        case Opcode::Load: {
          word_t addr = in.addr.offset + (in.addr.has_base ? regs[in.addr.base.index] : 0);
          if (static_cast<uint64_t>(addr) + 4 > commit_state.mem.size()) {
            // Transient faults are suppressed: no cache effect, logged.
            log.push_back({addr, true, false});
            regs[in.rd.index] = 0;
            ready[in.rd.index] = t;
            break;
          }
          bool hit = cache.present(addr);
          bool installed = hit;
          if (hit) {
            cache.access(addr, false, true);
            ready[in.rd.index] = t;
          } else {
            uint64_t fill_done = t + cfg.miss_penalty;
            // A squash cancels in-flight fills: the line lands only if the
            // fill completes inside the window.
            if (fill_done <= W) {
              cache.access(addr, true, true);
              installed = true;
            }
            ready[in.rd.index] = fill_done;
          }
          log.push_back({addr, false, installed});
          regs[in.rd.index] = [&] {
            word_t a = addr;
            return static_cast<word_t>(commit_state.mem[a]) |
                   static_cast<word_t>(commit_state.mem[a + 1]) << 8 |
                   static_cast<word_t>(commit_state.mem[a + 2]) << 16 |
                   static_cast<word_t>(commit_state.mem[a + 3]) << 24;
          }();
          break;
        }
        case Opcode::Store:
          // Speculative stores stay in the store buffer and are squashed;
          // no cache or memory effect is modelled.
          break;
        case Opcode::Mov:
          regs[in.rd.index] = opval(in.src2, regs);
          ready[in.rd.index] = t;
          break;
        case Opcode::Add: regs[in.rd.index] = regs[in.rs.index] + opval(in.src2, regs); ready[in.rd.index] = t; break;
        case Opcode::Sub: regs[in.rd.index] = regs[in.rs.index] - opval(in.src2, regs); ready[in.rd.index] = t; break;
        case Opcode::And: regs[in.rd.index] = regs[in.rs.index] & opval(in.src2, regs); ready[in.rd.index] = t; break;
        case Opcode::Or: regs[in.rd.index] = regs[in.rs.index] | opval(in.src2, regs); ready[in.rd.index] = t; break;
        case Opcode::Xor: regs[in.rd.index] = regs[in.rs.index] ^ opval(in.src2, regs); ready[in.rd.index] = t; break;
        case Opcode::Shl: regs[in.rd.index] = regs[in.rs.index] << (opval(in.src2, regs) & 31); ready[in.rd.index] = t; break;
        case Opcode::Shr: regs[in.rd.index] = regs[in.rs.index] >> (opval(in.src2, regs) & 31); ready[in.rd.index] = t; break;
        case Opcode::Mul: regs[in.rd.index] = regs[in.rs.index] * opval(in.src2, regs); ready[in.rd.index] = t; break;
        case Opcode::Cmp:
          flags = ir::compute_flags(regs[in.rd.index], opval(in.src2, regs));
          flags_ready = t;
          flags_from_anchor = false;
          break;
        case Opcode::Csel: {
          // Until csdb (or natural resolution) the condition may be consumed
          // under the predicted branch direction rather than the resolved
          // flags.
          bool resolved = csdb_executed || t >= cfg.resolve_delay ||
                          (pc + 1 < p.code.size() && p.code[pc + 1].op == Opcode::Csdb);
          bool cond_val;
          if (!resolved && flags_from_anchor) {
            if (in.cond == anchor_cond) cond_val = predicted_taken;
            else if (in.cond == ir::Cond::Eq && anchor_cond == ir::Cond::Ne)
              cond_val = !predicted_taken;
            else if (in.cond == ir::Cond::Ne && anchor_cond == ir::Cond::Eq)
              cond_val = !predicted_taken;
            else if (in.cond == ir::Cond::Lt && anchor_cond == ir::Cond::Ge)
              cond_val = !predicted_taken;
            else if (in.cond == ir::Cond::Ge && anchor_cond == ir::Cond::Lt)
              cond_val = !predicted_taken;
            else cond_val = ir::eval_cond(in.cond, flags);
          } else {
            cond_val = ir::eval_cond(in.cond, flags);
          }
          regs[in.rd.index] = cond_val ? regs[in.rs.index] : opval(in.src2, regs);
          ready[in.rd.index] = t;
          break;
        }
        case Opcode::Branch: {
          // Nested branches follow the predictor but open no new window;
          // there is a single squash point.
          bool actual = ir::eval_cond(in.cond, flags);
          bool dir = predictor.predict(pc, actual);
          pc = dir ? in.target : pc + 1;
          continue;
        }
        case Opcode::Jump: pc = in.target; continue;
        case Opcode::Csdb: csdb_executed = true; break;
        case Opcode::Fence: return;  // dsb+isb: speculation ends immediately
        case Opcode::Halt: return;
        case Opcode::Nop:
        case Opcode::Obs:
          break;
      }
      ++pc;
    }
  }
};

}  // namespace

RunResult run(const Program& p, const ir::MachineState& s0, const CacheState& cache0,
              const PredictorState& predictor0, const MicroConfig& cfg) {
  cfg.validate();
  if (p.has_shadow_code()) throw SimError("the simulator runs architectural programs only");
  if (cache0.geom != cfg.cache) throw SimError("initial cache geometry mismatch");

  RunResult r;
  r.cache = cache0;
  r.predictor = predictor0;
  ir::MachineState s = s0;
  uint64_t steps = 0;

  while (!s.halted) {
    if (steps++ > 1000000) throw SimError("committed execution failed to halt");
    if (s.pc >= p.code.size()) throw SimError("pc out of range on committed path");
    const Instruction& in = p.code[s.pc];

    if (in.op == Opcode::Branch) {
      bool actual = ir::eval_cond(in.cond, s.flags);
      bool predicted = r.predictor.predict(s.pc, actual);
      r.cycles += cfg.base_latency;
      r.committed_trace.push_back({ir::ObsKind::BranchOutcome, actual ? 1u : 0u});
      if (predicted != actual && cfg.speculation_window > 0) {
        ++r.mispredicts;
        uint32_t wrong_pc = predicted ? in.target : s.pc + 1;
        TransientEpisode ep{p, cfg, r.cache, r.predictor, r.transient_loads};
        ep.run(s, wrong_pc, in.cond, predicted);
      }
      r.predictor.update(s.pc, actual);
      s.pc = actual ? in.target : s.pc + 1;
      continue;
    }

    if (in.op == Opcode::Load) {
      word_t addr = in.addr.offset + (in.addr.has_base ? s.regs[in.addr.base.index] : 0);
      bool hit = r.cache.access(addr, true, true);
      r.cycles += cfg.base_latency + (hit ? 0 : cfg.miss_penalty);
    } else if (in.op == Opcode::Fence) {
      r.cycles += cfg.fence_latency;
    } else {
      r.cycles += cfg.base_latency;
    }

    try {
      auto obs = ir::eval_step(s, p);
      if (obs) r.committed_trace.push_back(*obs);
    } catch (const ir::IrError& e) {
      throw SimError(std::string("fault on committed path: ") + e.what());
    }
  }

  r.final_state = std::move(s);
  return r;
}

PredictorState train_predictor(const Program& p, const std::vector<ir::MachineState>& training,
                               const MicroConfig& cfg) {
  PredictorState ps;
  ps.kind = cfg.predictor;
  if (cfg.predictor != PredictorKind::TwoBit) return ps;
  for (const auto& t0 : training) {
    for (unsigned rep = 0; rep < cfg.training_reps; ++rep) {
      ir::MachineState s = t0;
      uint64_t steps = 0;
      while (!s.halted) {
        if (steps++ > 1000000) throw SimError("training run failed to halt");
        const Instruction& in = p.code[s.pc];
        if (in.op == Opcode::Branch)
          ps.update(s.pc, ir::eval_cond(in.cond, s.flags));
        ir::eval_step(s, p);
      }
    }
  }
  return ps;
}

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<CacheState> make_cache_configs(const CacheState& first_run_cache, unsigned n,
                                           uint64_t seed) {
  if (n < 1) throw SimError("need at least one cache configuration");
  std::vector<CacheState> out;
  out.push_back(CacheState::empty(first_run_cache.geom));  // cold start
  uint64_t rng = seed ^ 0xC0FFEE123456789Aull;
  for (unsigned k = 1; k < n; ++k) {
    CacheState c = first_run_cache;
    for (auto& ways : c.sets) {
      std::vector<CacheLine> kept;
      for (auto& l : ways) {
        bool evict_line = (splitmix64(rng) & 1) != 0;
        if (!evict_line) {
          CacheLine copy = l;
          copy.program_populated = false;  // becomes pre-existing content
          kept.push_back(copy);
        }
      }
      ways = std::move(kept);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace spectest::sim
