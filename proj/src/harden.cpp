// Copyright 2026 The spectest authors
// SPDX-License-Identifier: Apache-2.0

#include "spectest/harden.hpp"

#include <algorithm>

namespace spectest::harden {

using ir::Cond;
using ir::Instruction;
using ir::Opcode;
using ir::Program;

const char* pass_name(PassKind k) {
  switch (k) {
    case PassKind::ValueSlh: return "value-slh";
    case PassKind::AddrSlh: return "addr-slh";
    case PassKind::Fence: return "fence";
  }
  return "?";
}

namespace {

Cond invert(Cond c) {
  switch (c) {
    case Cond::Eq: return Cond::Ne;
    case Cond::Ne: return Cond::Eq;
    case Cond::Lt: return Cond::Ge;
    case Cond::Ge: return Cond::Lt;
  }
  return c;
}

bool uses_register(const Instruction& in, unsigned r) {
  auto is = [&](ir::Reg x) { return !x.shadow && x.index == r; };
  switch (in.op) {
    case Opcode::Load: return is(in.rd) || (in.addr.has_base && is(in.addr.base));
    case Opcode::Store: return is(in.rd) || (in.addr.has_base && is(in.addr.base));
    case Opcode::Mov: return is(in.rd) || (in.src2.is_reg && is(in.src2.reg));
    case Opcode::Cmp: return is(in.rd) || (in.src2.is_reg && is(in.src2.reg));
    case Opcode::Csel:
      return is(in.rd) || is(in.rs) || (in.src2.is_reg && is(in.src2.reg));
    case Opcode::Branch:
    case Opcode::Jump:
    case Opcode::Csdb:
    case Opcode::Fence:
    case Opcode::Nop:
    case Opcode::Halt:
      return false;
    case Opcode::Obs:
      for (const auto& t : in.obs_expr.terms)
        if (t.kind == ir::ObsTerm::Register && is(t.reg)) return true;
      return false;
    default:  // two-source alu
      return is(in.rd) || is(in.rs) || (in.src2.is_reg && is(in.src2.reg));
  }
}

bool program_uses_register(const Program& p, unsigned r) {
  for (const auto& in : p.code)
    if (uses_register(in, r)) return true;
  for (const auto& io : p.initial_obs)
    if (io.is_reg && io.reg.index == r) return true;
  return false;
}

Instruction make_mov_imm(unsigned rd, ir::word_t v) {
  Instruction i;
  i.op = Opcode::Mov;
  i.rd = {static_cast<uint8_t>(rd), false};
  i.src2 = ir::Operand::make_imm(v);
  return i;
}

Instruction make_csel_taint(unsigned taint, Cond c) {
  Instruction i;
  i.op = Opcode::Csel;
  i.rd = {static_cast<uint8_t>(taint), false};
  i.rs = {static_cast<uint8_t>(taint), false};
  i.src2 = ir::Operand::make_imm(0);
  i.cond = c;
  return i;
}

Instruction make_and(unsigned rd, unsigned rs, unsigned rt) {
  Instruction i;
  i.op = Opcode::And;
  i.rd = {static_cast<uint8_t>(rd), false};
  i.rs = {static_cast<uint8_t>(rs), false};
  i.src2 = ir::Operand::make_reg({static_cast<uint8_t>(rt), false});
  return i;
}

Instruction make_simple(Opcode op) {
  Instruction i;
  i.op = op;
  return i;
}

Instruction make_jump(const std::string& label) {
  Instruction i;
  i.op = Opcode::Jump;
  i.target_label = label;
  return i;
}

}  // namespace

ir::Program HardenedProgram::materialize(
    std::map<int, std::vector<uint32_t>>* point_instrs) const {
  const Program& p = base;
  Program t;
  t.data = p.data;
  t.reg_labels = p.reg_labels;
  t.initial_obs = p.initial_obs;
  t.addrspace = p.addrspace;
  t.data_base = p.data_base;
  t.entry_label = p.entry_label;

  if (point_instrs) point_instrs->clear();
  auto record = [&](int id, uint32_t idx) {
    if (point_instrs) (*point_instrs)[id].push_back(idx);
  };

  bool slh = pass == PassKind::ValueSlh || pass == PassKind::AddrSlh;

  std::map<uint32_t, std::vector<const HardeningPoint*>> by_site;
  for (const auto& pt : points)
    if (active.count(pt.id)) by_site[pt.site].push_back(&pt);

  struct ArmBlock {
    std::string label;
    std::string target;  // original destination label
    Cond cond;
    const HardeningPoint* fence_point = nullptr;  // fences on the taken arm
  };
  std::vector<ArmBlock> arm_blocks;

  std::vector<std::pair<std::string, uint32_t>> labels;

  for (uint32_t i = 0; i < p.code.size(); ++i) {
    // Taint update on the fall-through arm of the preceding branch.
    if (i > 0 && p.code[i - 1].op == Opcode::Branch) {
      const Instruction& br = p.code[i - 1];
      if (slh) {
        t.code.push_back(make_csel_taint(taint_register, invert(br.cond)));
        t.code.push_back(make_simple(Opcode::Csdb));
      }
      if (pass == PassKind::Fence) {
        for (const auto* pt : by_site.count(i - 1) ? by_site[i - 1]
                                                   : std::vector<const HardeningPoint*>{})
          if (!pt->taken_arm) {
            record(pt->id, static_cast<uint32_t>(t.code.size()));
            t.code.push_back(make_simple(Opcode::Fence));
          }
      }
    }

    if (i == p.entry && slh) t.code.push_back(make_mov_imm(taint_register, 0xFFFFFFFFu));
    // Labels bind to the original instruction (after any fall-through arm
    // code, which belongs to the edge, not to the join point).
    for (const auto& [name, idx] : p.labels)
      if (idx == i) labels.emplace_back(name, static_cast<uint32_t>(t.code.size()));

    const Instruction& in = p.code[i];
    if (in.op == Opcode::Branch) {
      // Taken arm goes through a dedicated block carrying its taint update
      // (and fences), then jumps on to the original target.
      ArmBlock ab;
      ab.label = "hrd_arm_" + std::to_string(arm_blocks.size());
      ab.target = in.target_label;
      ab.cond = in.cond;
      if (pass == PassKind::Fence && by_site.count(i))
        for (const auto* pt : by_site[i])
          if (pt->taken_arm) ab.fence_point = pt;
      Instruction br = in;
      br.target_label = ab.label;
      br.target = 0;  // re-resolved below
      t.code.push_back(br);
      arm_blocks.push_back(std::move(ab));
      continue;
    }

    if (in.op == Opcode::Load && pass == PassKind::AddrSlh && by_site.count(i)) {
      const HardeningPoint* pt = by_site[i][0];
      // Stage the (possibly absolute) address through the scratch register
      // and poison it with the taint.
      record(pt->id, static_cast<uint32_t>(t.code.size()));
      if (in.addr.has_base) {
        t.code.push_back(make_and(scratch_register, in.addr.base.index, taint_register));
      } else {
        t.code.push_back(make_mov_imm(scratch_register, in.addr.offset));
        record(pt->id, static_cast<uint32_t>(t.code.size()));
        t.code.push_back(make_and(scratch_register, scratch_register, taint_register));
      }
      Instruction ld = in;
      ld.addr.has_base = true;
      ld.addr.base = {static_cast<uint8_t>(scratch_register), false};
      if (!in.addr.has_base) ld.addr.offset = 0;
      record(pt->id, static_cast<uint32_t>(t.code.size()));
      t.code.push_back(ld);
      continue;
    }

    t.code.push_back(in);

    if (in.op == Opcode::Load && pass == PassKind::ValueSlh && by_site.count(i)) {
      const HardeningPoint* pt = by_site[i][0];
      record(pt->id, static_cast<uint32_t>(t.code.size()));
      t.code.push_back(make_and(in.rd.index, in.rd.index, taint_register));
    }
  }

  // Taken-arm blocks, appended past the halt(s).
  for (const auto& ab : arm_blocks) {
    labels.emplace_back(ab.label, static_cast<uint32_t>(t.code.size()));
    if (slh) {
      t.code.push_back(make_csel_taint(taint_register, ab.cond));
      t.code.push_back(make_simple(Opcode::Csdb));
    }
    if (ab.fence_point) {
      record(ab.fence_point->id, static_cast<uint32_t>(t.code.size()));
      t.code.push_back(make_simple(Opcode::Fence));
    }
    t.code.push_back(make_jump(ab.target));
  }

  // Entry: the taint initializer was inserted at the original entry index;
  // execution must start there.
  t.labels = labels;
  std::map<std::string, uint32_t> label_map(labels.begin(), labels.end());
  for (auto& in : t.code)
    if (in.op == Opcode::Branch || in.op == Opcode::Jump) {
      auto it = label_map.find(in.target_label);
      if (it == label_map.end())
        throw HardenError("internal: unresolved label " + in.target_label);
      in.target = it->second;
    }
  if (!p.entry_label.empty()) {
    t.entry = label_map.at(p.entry_label);
    if (slh) {
      // Start at the taint initializer immediately before the labelled entry.
      if (t.entry > 0 && t.code[t.entry - 1].op == Opcode::Mov &&
          t.code[t.entry - 1].rd.index == taint_register)
        --t.entry;
    }
  } else {
    t.entry = 0;
  }
  std::stable_sort(t.labels.begin(), t.labels.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  return t;
}

namespace {

unsigned pick_scratch(const Program& p, unsigned taint) {
  for (int r = static_cast<int>(ir::kNumRegisters) - 1; r >= 0; --r) {
    if (static_cast<unsigned>(r) == taint) continue;
    if (!program_uses_register(p, static_cast<unsigned>(r))) return static_cast<unsigned>(r);
  }
  throw HardenError("no free register available for address staging");
}

}  // namespace

HardenedProgram apply_slh(const Program& p, PassKind kind, unsigned taint_register) {
  if (kind == PassKind::Fence) throw HardenError("apply_slh expects a mask pass kind");
  if (p.has_shadow_code()) throw HardenError("cannot harden a shadow-instrumented program");
  if (program_uses_register(p, taint_register))
    throw HardenError("taint register r" + std::to_string(taint_register) +
                      " is used by the program");
  HardenedProgram hp;
  hp.base = p;
  hp.pass = kind;
  hp.taint_register = taint_register;
  if (kind == PassKind::AddrSlh) {
    hp.scratch_register = pick_scratch(p, taint_register);
    if (program_uses_register(p, hp.scratch_register))
      throw HardenError("no scratch register available");
  }
  int id = 0;
  for (uint32_t i = 0; i < p.code.size(); ++i)
    if (p.code[i].op == Opcode::Load) {
      HardeningPoint pt;
      pt.id = id++;
      pt.site = i;
      pt.kind = kind == PassKind::ValueSlh ? PointKind::ValueMask : PointKind::AddressMask;
      hp.points.push_back(pt);
      hp.active.insert(pt.id);
    }
  return hp;
}

HardenedProgram insert_fences(const Program& p, const std::vector<uint32_t>& branch_sites) {
  if (p.has_shadow_code()) throw HardenError("cannot harden a shadow-instrumented program");
  std::vector<uint32_t> sites = branch_sites;
  if (sites.empty())
    for (uint32_t i = 0; i < p.code.size(); ++i)
      if (p.code[i].op == Opcode::Branch) sites.push_back(i);
  for (uint32_t s : sites)
    if (s >= p.code.size() || p.code[s].op != Opcode::Branch)
      throw HardenError("fence site " + std::to_string(s) + " is not a conditional branch");
  std::sort(sites.begin(), sites.end());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());

  HardenedProgram hp;
  hp.base = p;
  hp.pass = PassKind::Fence;
  int id = 0;
  for (uint32_t s : sites)
    for (bool taken : {false, true}) {
      HardeningPoint pt;
      pt.id = id++;
      pt.site = s;
      pt.kind = PointKind::Fence;
      pt.taken_arm = taken;
      hp.points.push_back(pt);
      hp.active.insert(pt.id);
    }
  return hp;
}

HardenedProgram remove_hardening(HardenedProgram hp, int id) {
  bool known = std::any_of(hp.points.begin(), hp.points.end(),
                           [&](const HardeningPoint& p) { return p.id == id; });
  if (!known) throw HardenError("unknown hardening point " + std::to_string(id));
  if (!hp.active.count(id))
    throw HardenError("hardening point " + std::to_string(id) + " already removed");
  hp.active.erase(id);
  return hp;
}

HardenedProgram insert_hardening(HardenedProgram hp, int id) {
  bool known = std::any_of(hp.points.begin(), hp.points.end(),
                           [&](const HardeningPoint& p) { return p.id == id; });
  if (!known) throw HardenError("unknown hardening point " + std::to_string(id));
  if (hp.active.count(id))
    throw HardenError("hardening point " + std::to_string(id) + " already inserted");
  hp.active.insert(id);
  return hp;
}

}  // namespace spectest::harden
