#include "vps/ssa.hpp"

#include <algorithm>
#include <set>

namespace vps {

bool op_defines_reg(const MicroInstr& i) {
    switch (i.op) {
        case Op::move:
        case Op::load:
        case Op::lea:
        case Op::add:
        case Op::sub:
            return i.dst.has_value();
        default:
            return false;
    }
}

bool SsaFunction::defines_dst(uint32_t instr_index) const {
    return op_defines_reg(fn->instrs[instr_index]);
}

namespace {

// Registers written by an instruction (rsp handled separately via sp_adjust).
void written_regs(const MicroInstr& i, std::vector<Reg>& out) {
    out.clear();
    if (op_defines_reg(i)) out.push_back(*i.dst);
    if (i.op == Op::call_direct || i.op == Op::call_indirect) out.push_back(kRetReg);
    if (i.op == Op::clobber)
        for (Reg r : i.clobbers) out.push_back(r);
    if (i.sp_adjust != 0) out.push_back(Reg::rsp);
}

}  // namespace

SsaFunction to_ssa(const MirFunction& fn, Cfg cfg) {
    SsaFunction ssa;
    ssa.fn = &fn;
    ssa.cfg = std::move(cfg);
    const Cfg& g = ssa.cfg;
    size_t nblocks = g.blocks.size();
    ssa.ivals.assign(fn.instrs.size(), InstrVals{});

    auto new_value = [&](SsaDef d) {
        ssa.defs.push_back(d);
        ssa.uses.emplace_back();
        return static_cast<ValueId>(ssa.defs.size() - 1);
    };

    // Entry definitions for every register.
    std::array<ValueId, kRegCount> entry_vals{};
    for (int r = 0; r < kRegCount; ++r)
        entry_vals[r] = new_value({SsaDef::Kind::entry, static_cast<Reg>(r), 0, 0, false});
    for (Reg r : kArgRegs) ssa.arg_values[r] = entry_vals[static_cast<int>(r)];

    // Dominance frontiers.
    std::vector<std::set<uint32_t>> df(nblocks);
    for (uint32_t b = 0; b < nblocks; ++b) {
        if (g.blocks[b].preds.size() < 2) continue;
        for (uint32_t p : g.blocks[b].preds) {
            if (g.idom[b] == UINT32_MAX || g.idom[p] == UINT32_MAX) continue;
            uint32_t runner = p;
            while (runner != g.idom[b]) {
                df[runner].insert(b);
                if (runner == g.idom[runner]) break;
                uint32_t next = g.idom[runner];
                if (next == UINT32_MAX) break;
                runner = next;
            }
        }
    }

    // Def sites per register (entry block counts for all registers).
    std::array<std::set<uint32_t>, kRegCount> def_blocks;
    for (int r = 0; r < kRegCount; ++r) def_blocks[r].insert(g.entry);
    std::vector<Reg> wr;
    for (uint32_t b = 0; b < nblocks; ++b)
        for (uint32_t i = g.blocks[b].first; i <= g.blocks[b].last; ++i) {
            written_regs(fn.instrs[i], wr);
            for (Reg r : wr) def_blocks[static_cast<int>(r)].insert(b);
        }

    // Iterated dominance frontier phi placement.
    std::vector<std::vector<int>> phi_at(nblocks);  // block -> phi indices
    for (int r = 0; r < kRegCount; ++r) {
        std::set<uint32_t> placed;
        std::vector<uint32_t> work(def_blocks[r].begin(), def_blocks[r].end());
        while (!work.empty()) {
            uint32_t b = work.back();
            work.pop_back();
            for (uint32_t d : df[b]) {
                if (placed.count(d)) continue;
                placed.insert(d);
                SsaPhi phi;
                phi.block = d;
                phi.reg = static_cast<Reg>(r);
                ssa.phis.push_back(phi);
                int pi = static_cast<int>(ssa.phis.size() - 1);
                ssa.phis[pi].result =
                    new_value({SsaDef::Kind::phi, static_cast<Reg>(r), 0,
                               static_cast<uint32_t>(pi), false});
                phi_at[d].push_back(pi);
                if (!def_blocks[r].count(d)) work.push_back(d);
            }
        }
    }

    // Renaming over the dominator tree.
    std::vector<std::vector<uint32_t>> dom_children(nblocks);
    for (uint32_t b = 0; b < nblocks; ++b) {
        if (b == g.entry || g.idom[b] == UINT32_MAX) continue;
        dom_children[g.idom[b]].push_back(b);
    }

    std::array<std::vector<ValueId>, kRegCount> stacks;
    for (int r = 0; r < kRegCount; ++r) stacks[r].push_back(entry_vals[r]);

    auto top = [&](Reg r) { return stacks[static_cast<int>(r)].back(); };
    auto use = [&](Reg r, uint32_t instr, uint8_t slot) {
        ValueId v = top(r);
        ssa.uses[v].push_back({instr, slot});
        return v;
    };

    struct Frame {
        uint32_t block;
        size_t child = 0;
        std::vector<std::pair<int, size_t>> pushed;  // (reg, stack size to restore)
        bool entered = false;
    };
    std::vector<Frame> stack;
    stack.push_back(Frame{g.entry, 0, {}, false});

    while (!stack.empty()) {
        Frame& fr = stack.back();
        uint32_t b = fr.block;
        if (!fr.entered) {
            fr.entered = true;
            for (int pi : phi_at[b]) {
                int r = static_cast<int>(ssa.phis[pi].reg);
                fr.pushed.push_back({r, stacks[r].size()});
                stacks[r].push_back(ssa.phis[pi].result);
            }
            for (uint32_t i = g.blocks[b].first; i <= g.blocks[b].last; ++i) {
                const MicroInstr& ins = fn.instrs[i];
                InstrVals& iv = ssa.ivals[i];

                if (!ins.srcs.empty() && ins.srcs[0].is_reg() && ins.op != Op::call_indirect)
                    iv.src0 = use(ins.srcs[0].reg, i, kSlotSrc0);
                if (ins.op == Op::call_indirect && !ins.srcs.empty() && ins.srcs[0].is_reg())
                    iv.src0 = use(ins.srcs[0].reg, i, kSlotSrc0);
                if (ins.mem) {
                    if (ins.mem->base) iv.mem_base = use(*ins.mem->base, i, kSlotMemBase);
                    if (ins.mem->index) iv.mem_index = use(*ins.mem->index, i, kSlotMemIndex);
                }
                if ((ins.op == Op::add || ins.op == Op::sub) && ins.dst)
                    iv.dst_in = use(*ins.dst, i, kSlotDstIn);
                if (ins.op == Op::call_direct || ins.op == Op::call_indirect)
                    for (int a = 0; a < 6; ++a)
                        iv.args[a] = use(kArgRegs[a], i, static_cast<uint8_t>(kSlotArg0 + a));
                if (ins.op == Op::ret) {
                    ValueId v = use(kRetReg, i, kSlotRetRax);
                    ssa.ret_rax.push_back({i, v});
                }

                written_regs(ins, wr);
                for (Reg r : wr) {
                    ValueId v = new_value({SsaDef::Kind::instr, r, i, 0, r == Reg::rsp &&
                                           ins.sp_adjust != 0 && ins.dst != Reg::rsp});
                    int ri = static_cast<int>(r);
                    fr.pushed.push_back({ri, stacks[ri].size()});
                    stacks[ri].push_back(v);
                    if (op_defines_reg(ins) && r == *ins.dst)
                        iv.result = v;
                    else if (r == kRetReg &&
                             (ins.op == Op::call_direct || ins.op == Op::call_indirect))
                        iv.result = v;
                    else if (r == Reg::rsp && ins.sp_adjust != 0)
                        iv.sp_result = v;
                }
            }
            // Fill phi arguments of successors.
            for (uint32_t s : g.blocks[b].succs)
                for (int pi : phi_at[s])
                    ssa.phis[pi].args.push_back({b, top(ssa.phis[pi].reg)});
        }
        if (fr.child < dom_children[b].size()) {
            uint32_t c = dom_children[b][fr.child++];
            stack.push_back(Frame{c, 0, {}, false});
        } else {
            for (auto it = fr.pushed.rbegin(); it != fr.pushed.rend(); ++it)
                stacks[it->first].resize(it->second);
            stack.pop_back();
        }
    }

    return ssa;
}

}  // namespace vps
