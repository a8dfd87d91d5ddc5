#include "vps/vcall.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <stdexcept>

namespace vps {

const char* vc_state_name(VcState s) {
    switch (s) {
        case VcState::candidate: return "candidate";
        case VcState::static_verified: return "static_verified";
        case VcState::dyn_verified: return "dyn_verified";
        case VcState::removed: return "removed";
    }
    return "candidate";
}

void VCallSite::set_state(VcState next) {
    bool ok = (state == VcState::candidate &&
               (next == VcState::static_verified || next == VcState::dyn_verified ||
                next == VcState::removed)) ||
              (state == VcState::static_verified && next == VcState::dyn_verified);
    if (!ok)
        throw std::logic_error(std::string("illegal vcall state transition ") +
                               vc_state_name(state) + " -> " + vc_state_name(next));
    state = next;
}

LinForm linear_form(const ProgramAnalysis& pa, GlobalValue start, int64_t initial_disp) {
    LinForm f;
    if (!start.valid()) return f;
    const SsaFunction& ssa = pa.fns[start.func];
    ValueId v = start.value;
    int64_t disp = initial_disp;
    for (int guard = 0; guard < 256; ++guard) {
        const SsaDef& d = ssa.def(v);
        if (d.kind != SsaDef::Kind::instr) break;
        const MicroInstr& ins = ssa.fn->instrs[d.instr];
        const InstrVals& iv = ssa.ivals[d.instr];
        if (d.is_sp_def) break;
        if (ins.op == Op::move && ins.srcs[0].is_reg() && iv.src0 != kNoValue) {
            v = iv.src0;
        } else if (ins.op == Op::move && ins.srcs[0].is_imm()) {
            f.root = LinForm::Root::constant;
            f.c = ins.srcs[0].imm;
            f.disp = disp;
            return f;
        } else if (ins.op == Op::lea && ins.mem->is_absolute()) {
            f.root = LinForm::Root::constant;
            f.c = static_cast<uint64_t>(ins.mem->disp);
            f.disp = disp;
            return f;
        } else if (ins.op == Op::lea && ins.mem->base && !ins.mem->index &&
                   iv.mem_base != kNoValue) {
            disp += ins.mem->disp;
            v = iv.mem_base;
        } else if (ins.op == Op::add && ins.srcs[0].is_imm() && iv.dst_in != kNoValue) {
            disp += static_cast<int64_t>(ins.srcs[0].imm);
            v = iv.dst_in;
        } else if (ins.op == Op::sub && ins.srcs[0].is_imm() && iv.dst_in != kNoValue) {
            disp -= static_cast<int64_t>(ins.srcs[0].imm);
            v = iv.dst_in;
        } else {
            break;
        }
    }
    f.root = LinForm::Root::value;
    f.v = {start.func, v};
    f.disp = disp;
    return f;
}

// ---------------------------------------------------------------------------
// Candidate identification

namespace {

// Locates the outer vtable-entry load of an indirect call. Returns the
// vtblptr value, the entry offset, and whether the shape matched.
struct TargetShape {
    bool matched = false;
    ValueId vtblptr = kNoValue;  // value holding [thisptr]
    int64_t entry_offset = 0;
    ValueId raw_target = kNoValue;  // backward-tracking start
};

TargetShape target_shape(const ProgramAnalysis& pa, uint32_t func, uint32_t instr_index) {
    TargetShape out;
    const SsaFunction& ssa = pa.fns[func];
    const MicroInstr& call = ssa.fn->instrs[instr_index];
    const InstrVals& iv = ssa.ivals[instr_index];
    if (call.mem) {
        if (call.mem->index || !call.mem->base || iv.mem_base == kNoValue) return out;
        out.matched = true;
        out.vtblptr = iv.mem_base;
        out.entry_offset = call.mem->disp;
        out.raw_target = iv.mem_base;
        return out;
    }
    if (call.srcs.empty() || !call.srcs[0].is_reg() || iv.src0 == kNoValue) return out;
    out.raw_target = iv.src0;
    // call reg: the register must hold exactly the value fetched by the
    // vtable-entry load (copies allowed, arithmetic not).
    LinForm t = linear_form(pa, {func, iv.src0});
    if (t.root != LinForm::Root::value || t.disp != 0) return out;
    const SsaDef& d = ssa.def(t.v.value);
    if (d.kind != SsaDef::Kind::instr) return out;
    const MicroInstr& ld = ssa.fn->instrs[d.instr];
    if (ld.op != Op::load || !ld.mem || ld.mem->index || !ld.mem->base) return out;
    if (ssa.ivals[d.instr].mem_base == kNoValue) return out;
    out.matched = true;
    out.vtblptr = ssa.ivals[d.instr].mem_base;
    out.entry_offset = ld.mem->disp;
    return out;
}

}  // namespace

std::vector<VCallSite> find_candidates(const ProgramAnalysis& pa,
                                       uint64_t entry_offset_cap) {
    std::vector<VCallSite> out;
    for (uint32_t fi = 0; fi < pa.prog->functions.size(); ++fi) {
        const MirFunction& fn = pa.prog->functions[fi];
        const SsaFunction& ssa = pa.fns[fi];
        for (uint32_t ii = 0; ii < fn.instrs.size(); ++ii) {
            if (fn.instrs[ii].op != Op::call_indirect) continue;
            TargetShape shape = target_shape(pa, fi, ii);
            if (!shape.matched) continue;

            // The vtblptr must come from dereferencing the thisptr: walk the
            // vtblptr through copies/adjustments to the inner load.
            LinForm vp = linear_form(pa, {fi, shape.vtblptr});
            if (vp.root != LinForm::Root::value) continue;
            const SsaDef& d = ssa.def(vp.v.value);
            if (d.kind != SsaDef::Kind::instr) continue;
            const MicroInstr& inner = ssa.fn->instrs[d.instr];
            if (inner.op != Op::load || !inner.mem || inner.mem->index) continue;

            int64_t offset = shape.entry_offset + vp.disp;
            if (offset < 0 || offset % 8 != 0 ||
                static_cast<uint64_t>(offset) > entry_offset_cap)
                continue;

            LinForm inner_addr;
            if (inner.mem->base) {
                if (ssa.ivals[d.instr].mem_base == kNoValue) continue;
                inner_addr = linear_form(pa, {fi, ssa.ivals[d.instr].mem_base},
                                         inner.mem->disp);
            } else {
                inner_addr.root = LinForm::Root::constant;
                inner_addr.c = static_cast<uint64_t>(inner.mem->disp);
            }

            ValueId rdi = ssa.ivals[ii].args[0];
            if (rdi == kNoValue) continue;
            LinForm first_arg = linear_form(pa, {fi, rdi});
            if (inner_addr != first_arg) continue;

            VCallSite c;
            c.instr_addr = fn.instrs[ii].addr;
            c.func = fi;
            c.instr_index = ii;
            c.entry_offset = static_cast<uint64_t>(offset);
            c.thisptr_value = {fi, rdi};
            out.push_back(c);
        }
    }
    return out;
}

GlobalValue candidate_target_value(const ProgramAnalysis& pa, const VCallSite& cand) {
    TargetShape shape = target_shape(pa, cand.func, cand.instr_index);
    return {cand.func, shape.raw_target};
}

// ---------------------------------------------------------------------------
// Control-flow path construction

namespace {

using BlockRef = std::pair<uint32_t, uint32_t>;  // (func, block)

// Interprocedural successor expansion: intra-function CFG edges, direct-call
// edges into known callees, resolved indirect-call edges, and return edges
// back to every known return site.
void block_successors(const ProgramAnalysis& pa, const TrackContext& ctx, BlockRef b,
                      std::vector<BlockRef>& out) {
    out.clear();
    const SsaFunction& ssa = pa.fns[b.first];
    const BasicBlock& blk = ssa.cfg.blocks[b.second];
    for (uint32_t s : blk.succs) out.push_back({b.first, s});
    const MicroInstr& term = ssa.fn->instrs[blk.last];
    if (term.op == Op::call_direct) {
        auto it = pa.func_by_entry.find(term.target);
        if (it != pa.func_by_entry.end())
            out.push_back({it->second, pa.fns[it->second].cfg.entry});
    } else if (term.op == Op::call_indirect) {
        auto rit = ctx.resolved_indirect.find(term.addr);
        if (rit != ctx.resolved_indirect.end())
            for (uint64_t target : rit->second) {
                auto it = pa.func_by_entry.find(target);
                if (it != pa.func_by_entry.end())
                    out.push_back({it->second, pa.fns[it->second].cfg.entry});
            }
    } else if (term.op == Op::ret) {
        auto add_return_sites = [&](const std::vector<std::pair<uint32_t, uint32_t>>& cs) {
            for (auto [cf, ci] : cs) {
                const Cfg& cg = pa.fns[cf].cfg;
                uint32_t cb = cg.instr_block[ci];
                for (uint32_t s : cg.blocks[cb].succs) out.push_back({cf, s});
            }
        };
        auto cit = pa.callers.find(ssa.fn->entry);
        if (cit != pa.callers.end()) add_return_sites(cit->second);
        auto vit = ctx.virtual_callers.find(ssa.fn->entry);
        if (vit != ctx.virtual_callers.end()) add_return_sites(vit->second);
    }
}

// Shortest-first simple paths from `from` to `to`, at most `max_paths`.
std::vector<std::vector<BlockRef>> paths_between(const ProgramAnalysis& pa,
                                                 const TrackContext& ctx, BlockRef from,
                                                 BlockRef to, uint32_t max_paths,
                                                 uint32_t max_len) {
    std::vector<std::vector<BlockRef>> found;
    std::deque<std::vector<BlockRef>> queue{{from}};
    std::vector<BlockRef> succs;
    size_t expansions = 0;
    while (!queue.empty() && found.size() < max_paths && expansions < 20000) {
        std::vector<BlockRef> path = std::move(queue.front());
        queue.pop_front();
        ++expansions;
        if (path.back() == to) {
            found.push_back(path);
            continue;
        }
        if (path.size() >= max_len) continue;
        block_successors(pa, ctx, path.back(), succs);
        for (BlockRef s : succs) {
            if (std::find(path.begin(), path.end(), s) != path.end()) continue;
            auto next = path;
            next.push_back(s);
            queue.push_back(std::move(next));
        }
    }
    return found;
}

BlockRef block_of_instr(const ProgramAnalysis& pa, uint64_t addr) {
    auto loc = pa.instr_loc.find(addr);
    if (loc == pa.instr_loc.end()) return {UINT32_MAX, UINT32_MAX};
    return {loc->second.first, pa.fns[loc->second.first].cfg.instr_block[loc->second.second]};
}

BlockRef anchor_block(const ProgramAnalysis& pa, const DfNode& n) {
    if (n.kind == DfNode::Kind::argument || n.kind == DfNode::Kind::virtual_fn)
        return {n.func, pa.fns[n.func].cfg.entry};
    return block_of_instr(pa, n.instr_addr);
}

void append_segment(std::vector<BlockRef>& path, const std::vector<BlockRef>& seg) {
    size_t start = !path.empty() && !seg.empty() && path.back() == seg.front() ? 1 : 0;
    path.insert(path.end(), seg.begin() + start, seg.end());
}

bool shareable(const SourceKey& k) { return k.tag >= 1 && k.tag <= 3; }

}  // namespace

std::vector<VerificationPath> build_verification_paths(const ProgramAnalysis& pa,
                                                       const TrackContext& ctx,
                                                       const std::vector<ObjectSite>& sites,
                                                       const VCallSite& cand) {
    std::vector<VerificationPath> out;
    GlobalValue target = candidate_target_value(pa, cand);
    if (!target.valid()) return out;
    DataFlowGraph gc = track_backward(pa, ctx, target);
    std::set<SourceKey> ckeys;
    for (const SourceKey& k : gc.source_keys())
        if (shareable(k)) ckeys.insert(k);
    if (ckeys.empty()) return out;

    BlockRef vcall_block = block_of_instr(pa, cand.instr_addr);

    std::map<GlobalValue, DataFlowGraph> memo;
    for (const ObjectSite& s : sites) {
        if (out.size() >= kMaxPathsPerTriple) break;
        if (!s.dest_base.valid()) continue;
        auto mit = memo.find(s.dest_base);
        if (mit == memo.end())
            mit = memo.emplace(s.dest_base, track_backward(pa, ctx, s.dest_base)).first;
        const DataFlowGraph& gs = mit->second;

        for (const SourceKey& key : gs.source_keys()) {
            if (!shareable(key) || !ckeys.count(key)) continue;
            auto anchors = gs.nodes_with_key(key);
            if (anchors.empty()) continue;
            const DfNode& src = gs.nodes[anchors.front()];
            BlockRef src_block = anchor_block(pa, src);
            BlockRef ref_block = block_of_instr(pa, s.via_ref.instr_addr);
            BlockRef store_block = block_of_instr(pa, s.instr_addr);
            if (src_block.first == UINT32_MAX || ref_block.first == UINT32_MAX ||
                store_block.first == UINT32_MAX || vcall_block.first == UINT32_MAX)
                continue;

            auto seg1 = paths_between(pa, ctx, src_block, ref_block, 4, kMaxPathBlocks);
            auto seg2 = paths_between(pa, ctx, ref_block, store_block, 2, kMaxPathBlocks);
            auto seg3 = paths_between(pa, ctx, store_block, vcall_block, 4, kMaxPathBlocks);
            for (const auto& p1 : seg1) {
                for (const auto& p2 : seg2) {
                    for (const auto& p3 : seg3) {
                        std::vector<BlockRef> blocks;
                        append_segment(blocks, p1);
                        append_segment(blocks, p2);
                        append_segment(blocks, p3);
                        if (blocks.size() > kMaxPathBlocks) continue;
                        VerificationPath vp;
                        vp.source_instr = src.instr_addr;
                        vp.ref_instr = s.via_ref.instr_addr;
                        vp.vcall_instr = cand.instr_addr;
                        vp.blocks = std::move(blocks);
                        vp.vtable_addr = s.vtable_addr;
                        out.push_back(std::move(vp));
                        if (out.size() >= kMaxPathsPerTriple) return out;
                    }
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const VerificationPath& a, const VerificationPath& b) {
                         return a.blocks.size() < b.blocks.size();
                     });
    return out;
}

// ---------------------------------------------------------------------------
// Lightweight symbolic execution

namespace {

struct SymVal {
    enum class Kind : uint8_t { concrete, sym, vtbl, vtbl_entry };
    Kind kind = Kind::sym;
    uint64_t base = 0;      // concrete value / symbol id / vtable address
    int64_t disp = 0;       // sym and vtbl carry a displacement
    uint64_t entry_off = 0; // vtbl_entry: offset of the loaded table slot

    static SymVal concrete(uint64_t v) { return {Kind::concrete, v, 0, 0}; }
};

struct SymState {
    const ProgramAnalysis& pa;
    const ElfImage& img;
    const VTableSet& vts;
    std::array<std::optional<SymVal>, kRegCount> regs;
    std::map<std::tuple<uint8_t, uint64_t, int64_t>, SymVal> mem;
    uint64_t next_sym = 1;
    uint64_t executed = 0;
    bool budget_exceeded = false;

    SymVal fresh() { return {SymVal::Kind::sym, next_sym++, 0, 0}; }

    SymVal get(Reg r) {
        auto& slot = regs[static_cast<int>(r)];
        if (!slot) slot = fresh();
        return *slot;
    }
    void set(Reg r, SymVal v) { regs[static_cast<int>(r)] = v; }

    static std::tuple<uint8_t, uint64_t, int64_t> key(const SymVal& a) {
        return {static_cast<uint8_t>(a.kind), a.base, a.disp};
    }

    SymVal eval_operand(const Operand& o) {
        return o.is_reg() ? get(o.reg) : SymVal::concrete(o.imm);
    }

    SymVal eval_addr(const AddrExpr& a) {
        if (a.is_absolute()) return SymVal::concrete(static_cast<uint64_t>(a.disp));
        SymVal v = a.base ? get(*a.base) : SymVal::concrete(0);
        if (a.index) {
            SymVal idx = get(*a.index);
            if (idx.kind == SymVal::Kind::concrete && v.kind == SymVal::Kind::concrete)
                return SymVal::concrete(v.base + idx.base * a.scale +
                                        static_cast<uint64_t>(a.disp));
            return fresh();  // symbolic indexing is out of model
        }
        if (v.kind == SymVal::Kind::concrete)
            return SymVal::concrete(v.base + static_cast<uint64_t>(a.disp));
        v.disp += a.disp;
        return v;
    }

    SymVal load(const SymVal& addr) {
        auto it = mem.find(key(addr));
        if (it != mem.end()) return it->second;
        if (addr.kind == SymVal::Kind::vtbl) {
            // Reading a table slot through the tagged pointer.
            SymVal e{SymVal::Kind::vtbl_entry, addr.base, 0,
                     static_cast<uint64_t>(addr.disp)};
            return e;
        }
        if (addr.kind == SymVal::Kind::concrete) {
            uint64_t a = addr.base;
            auto git = img.got_entries.find(a);
            if (git != img.got_entries.end()) {
                uint64_t t = git->second.is_symbolic() ? a : *git->second.addr;
                return SymVal::concrete(t);
            }
            const Section* sec = img.section_at(a);
            if (sec && !sec->write && sec->has_contents()) {
                if (auto w = read_word(img, a)) return SymVal::concrete(*w);
            }
        }
        SymVal v = fresh();
        mem[key(addr)] = v;
        return v;
    }

    void store(const SymVal& addr, SymVal value) {
        // vtblptr writes become tagged symbols in the memory state.
        if (value.kind == SymVal::Kind::concrete && vts.is_known(value.base))
            value = SymVal{SymVal::Kind::vtbl, value.base, 0, 0};
        mem[key(addr)] = value;
    }

    void add_disp(Reg r, int64_t d) {
        SymVal v = get(r);
        if (v.kind == SymVal::Kind::concrete)
            v.base += static_cast<uint64_t>(d);
        else
            v.disp += d;
        set(r, v);
    }
};

constexpr uint64_t kSymexecInstrBudget = 4096;

}  // namespace

namespace {

VerifyOutcome symexec_run(const ProgramAnalysis& pa, const VerificationPath& path,
                          const VCallSite& cand, SymState& st) {
    VerifyOutcome out;

    for (size_t bi = 0; bi < path.blocks.size(); ++bi) {
        auto [fi, blk] = path.blocks[bi];
        const SsaFunction& ssa = pa.fns[fi];
        const BasicBlock& b = ssa.cfg.blocks[blk];
        for (uint32_t ii = b.first; ii <= b.last; ++ii) {
            const MicroInstr& ins = ssa.fn->instrs[ii];
            if (++st.executed > kSymexecInstrBudget) {
                out.budget_exceeded = true;
                return out;
            }

            // The candidate itself: evaluate the call target form.
            if (ins.addr == cand.instr_addr && ins.op == Op::call_indirect) {
                if (ins.mem && ins.mem->base && !ins.mem->index) {
                    SymVal base = st.get(*ins.mem->base);
                    if (base.kind == SymVal::Kind::vtbl &&
                        base.disp + ins.mem->disp ==
                            static_cast<int64_t>(cand.entry_offset)) {
                        out.verified = true;
                        out.vtable = base.base;
                    }
                } else if (!ins.srcs.empty() && ins.srcs[0].is_reg()) {
                    SymVal t = st.get(ins.srcs[0].reg);
                    if (t.kind == SymVal::Kind::vtbl_entry &&
                        t.entry_off == cand.entry_offset) {
                        out.verified = true;
                        out.vtable = t.base;
                    }
                }
                return out;
            }

            switch (ins.op) {
                case Op::move:
                    st.set(*ins.dst, st.eval_operand(ins.srcs[0]));
                    break;
                case Op::lea:
                    st.set(*ins.dst, st.eval_addr(*ins.mem));
                    break;
                case Op::add:
                case Op::sub: {
                    SymVal rhs = st.eval_operand(ins.srcs[0]);
                    if (rhs.kind == SymVal::Kind::concrete) {
                        int64_t sign = ins.op == Op::add ? 1 : -1;
                        st.add_disp(*ins.dst, sign * static_cast<int64_t>(rhs.base));
                    } else if (ins.op == Op::add &&
                               st.get(*ins.dst).kind == SymVal::Kind::concrete) {
                        SymVal lhs = st.get(*ins.dst);
                        st.set(*ins.dst, SymVal{rhs.kind, rhs.base,
                                                rhs.disp + static_cast<int64_t>(lhs.base),
                                                rhs.entry_off});
                    } else {
                        // concrete - symbol and symbol +/- symbol leave the
                        // representable domain
                        st.set(*ins.dst, st.fresh());
                    }
                    break;
                }
                case Op::load: {
                    if (ins.sp_adjust != 0) {  // pop
                        st.set(*ins.dst, st.load(st.get(Reg::rsp)));
                        st.add_disp(Reg::rsp, ins.sp_adjust);
                    } else {
                        st.set(*ins.dst, st.load(st.eval_addr(*ins.mem)));
                    }
                    break;
                }
                case Op::store: {
                    if (ins.sp_adjust != 0) {  // push
                        st.add_disp(Reg::rsp, ins.sp_adjust);
                        st.store(st.get(Reg::rsp), st.eval_operand(ins.srcs[0]));
                    } else {
                        st.store(st.eval_addr(*ins.mem), st.eval_operand(ins.srcs[0]));
                    }
                    break;
                }
                case Op::call_direct:
                case Op::call_indirect: {
                    // On-path when the path's next block enters a callee;
                    // otherwise complete the call immediately with an
                    // unconstrained return value.
                    bool on_path = false;
                    if (bi + 1 < path.blocks.size()) {
                        auto [nf, nb] = path.blocks[bi + 1];
                        on_path = nf != fi && nb == pa.fns[nf].cfg.entry;
                    }
                    if (!on_path) st.set(kRetReg, st.fresh());
                    break;
                }
                case Op::clobber:
                    for (Reg r : ins.clobbers) st.set(r, st.fresh());
                    break;
                case Op::jump:
                case Op::branch_cond:
                case Op::ret:
                    break;  // the path dictates control flow
            }
        }
    }
    return out;
}

}  // namespace

VerifyOutcome symexec_verify(const ProgramAnalysis& pa, const ElfImage& img,
                             const VerificationPath& path, const VTableSet& vts,
                             const VCallSite& cand) {
    SymState st{pa, img, vts, {}, {}, 1, 0, false};
    return symexec_run(pa, path, cand, st);
}

VerifyOutcome implicit_receiver_verify(const ProgramAnalysis& pa, const ElfImage& img,
                                       const TrackContext& ctx, const VCallSite& cand,
                                       const VTableSet& vts) {
    VerifyOutcome out;
    GlobalValue target = candidate_target_value(pa, cand);
    if (!target.valid()) return out;
    DataFlowGraph g = track_backward(pa, ctx, target);

    std::set<std::pair<uint32_t, uint64_t>> tried;  // (func, vtable)
    for (const DfNode& n : g.nodes) {
        if (n.kind != DfNode::Kind::virtual_fn) continue;
        uint64_t fentry = pa.prog->functions[n.func].entry;
        auto bit = vts.by_entry.find(fentry);
        if (bit == vts.by_entry.end()) continue;
        for (auto [vtable, index] : bit->second) {
            if (!tried.insert({n.func, vtable}).second) continue;
            BlockRef from{n.func, pa.fns[n.func].cfg.entry};
            BlockRef to{cand.func, pa.fns[cand.func].cfg.instr_block[cand.instr_index]};
            auto paths = paths_between(pa, ctx, from, to, 4, kMaxPathBlocks);
            for (const auto& blocks : paths) {
                VerificationPath vp;
                vp.vcall_instr = cand.instr_addr;
                vp.ref_instr = fentry;
                vp.source_instr = fentry;
                vp.blocks = blocks;
                vp.vtable_addr = vtable;

                // Artificial receiver: word 0 of a fresh object holds the
                // containing vtable; the thisptr sits in the first argument
                // register.
                SymState st{pa, img, vts, {}, {}, 1, 0, false};
                SymVal thisptr = st.fresh();
                st.mem[SymState::key(thisptr)] = SymVal{SymVal::Kind::vtbl, vtable, 0, 0};
                st.set(kArgRegs[0], thisptr);

                VerifyOutcome r = symexec_run(pa, vp, cand, st);
                if (r.budget_exceeded) out.budget_exceeded = true;
                if (r.verified) return r;
            }
        }
    }
    return out;
}

FixedPointStats verify_fixed_point(const ProgramAnalysis& pa, const ElfImage& img,
                                   const std::vector<ObjectSite>& sites,
                                   std::vector<VCallSite>& cands, const VTableSet& vts,
                                   int depth_budget) {
    FixedPointStats stats;
    TrackContext ctx;
    ctx.vtables = &vts;
    ctx.img = &img;
    ctx.depth_budget = depth_budget;

    auto publish = [&](const VCallSite& c) {
        std::set<uint64_t> targets;
        for (const auto& [addr, table] : vts.tables) {
            if (table.is_overestimate) continue;
            size_t index = c.entry_offset / 8;
            if (index < table.entries.size()) targets.insert(table.entries[index]);
        }
        auto& vec = ctx.resolved_indirect[c.instr_addr];
        vec.assign(targets.begin(), targets.end());
        for (uint64_t t : targets)
            ctx.virtual_callers[t].push_back({c.func, c.instr_index});
    };

    while (true) {
        // Per-candidate verification is independent within a round; newly
        // verified results merge into the context only between rounds.
        std::vector<VCallSite*> round_verified;
        for (VCallSite& c : cands) {
            if (c.state != VcState::candidate) continue;
            VerifyOutcome r;
            auto paths = build_verification_paths(pa, ctx, sites, c);
            for (const auto& p : paths) {
                r = symexec_verify(pa, img, p, vts, c);
                if (r.verified) {
                    c.evidence = VCallSite::Evidence{p.source_instr, p.ref_instr,
                                                     static_cast<uint32_t>(p.blocks.size()),
                                                     r.vtable};
                    break;
                }
            }
            if (!r.verified) {
                r = implicit_receiver_verify(pa, img, ctx, c, vts);
                if (r.verified)
                    c.evidence = VCallSite::Evidence{0, 0, 0, r.vtable};
            }
            if (r.verified) round_verified.push_back(&c);
        }
        for (VCallSite* c : round_verified) {
            c->set_state(VcState::static_verified);
            publish(*c);
        }
        stats.verified_per_round.push_back(static_cast<uint32_t>(round_verified.size()));
        ++stats.rounds;
        if (round_verified.empty()) break;
    }
    return stats;
}

}  // namespace vps
