#include "vps/dataflow.hpp"

#include <algorithm>
#include <deque>

#include "vps/elf_image.hpp"
#include "vps/vtable.hpp"

namespace vps {

namespace {

constexpr size_t kMaxNodes = 4096;
constexpr size_t kCallerFanout = 16;
constexpr size_t kResolvedFanout = 8;

bool is_stack_base(const AddrExpr& a) {
    return a.base && (*a.base == Reg::rsp || *a.base == Reg::rbp) && !a.index;
}

// A store that could alias a tracked stack slot without being comparable.
bool kills_stack_tracking(const MicroInstr& i) {
    if (i.op == Op::clobber && i.mem) return true;  // unknown memory write
    if (i.op == Op::store && i.mem && i.mem->base &&
        (*i.mem->base == Reg::rsp || *i.mem->base == Reg::rbp) && i.mem->index)
        return true;
    return false;
}

}  // namespace

std::vector<uint32_t> stack_slot_loads(const SsaFunction& ssa, uint32_t store_index) {
    std::vector<uint32_t> out;
    const auto& instrs = ssa.fn->instrs;
    const MicroInstr& st = instrs[store_index];
    if (st.op != Op::store || !st.mem || !is_stack_base(*st.mem)) return out;
    ValueId base_val = ssa.ivals[store_index].mem_base;
    for (uint32_t i = store_index + 1; i < instrs.size(); ++i) {
        const MicroInstr& in = instrs[i];
        if (kills_stack_tracking(in)) break;
        if (in.op == Op::store && in.mem && is_stack_base(*in.mem) &&
            ssa.ivals[i].mem_base == base_val && in.mem->disp == st.mem->disp)
            break;  // slot overwritten
        if (in.op == Op::load && in.mem && is_stack_base(*in.mem) &&
            ssa.ivals[i].mem_base == base_val && in.mem->disp == st.mem->disp)
            out.push_back(i);
    }
    return out;
}

std::optional<uint32_t> stack_slot_store_for(const SsaFunction& ssa, uint32_t load_index) {
    const auto& instrs = ssa.fn->instrs;
    const MicroInstr& ld = instrs[load_index];
    if (ld.op != Op::load || !ld.mem || !is_stack_base(*ld.mem)) return std::nullopt;
    ValueId base_val = ssa.ivals[load_index].mem_base;
    for (int i = static_cast<int>(load_index) - 1; i >= 0; --i) {
        const MicroInstr& in = instrs[i];
        if (kills_stack_tracking(in)) return std::nullopt;
        if (in.op == Op::store && in.mem && is_stack_base(*in.mem) &&
            ssa.ivals[i].mem_base == base_val && in.mem->disp == ld.mem->disp)
            return static_cast<uint32_t>(i);
    }
    return std::nullopt;
}

SourceKey source_key(const DfNode& n) {
    switch (n.kind) {
        case DfNode::Kind::argument:
            return {3, n.func, static_cast<uint64_t>(n.arg_index)};
        case DfNode::Kind::virtual_fn:
            return {4, n.func, 0};
        case DfNode::Kind::data_source:
            switch (n.source) {
                case DfNode::Source::constant:
                    return {1, n.const_val, 0};
                case DfNode::Source::unresolved_call:
                case DfNode::Source::external_call:
                    return {2, n.instr_addr, 0};
                default:
                    return {5, (static_cast<uint64_t>(n.func) << 32) | n.value, n.instr_addr};
            }
        default:
            return {0, 0, 0};
    }
}

std::set<SourceKey> DataFlowGraph::source_keys() const {
    std::set<SourceKey> out;
    for (int t : terminals) out.insert(source_key(nodes[t]));
    return out;
}

std::vector<int> DataFlowGraph::nodes_with_key(const SourceKey& k) const {
    std::vector<int> out;
    for (int t : terminals)
        if (source_key(nodes[t]) == k) out.push_back(t);
    return out;
}

std::vector<int> DataFlowGraph::chain_to(int node) const {
    std::vector<int> chain;
    for (int n = node; n != -1; n = parent[n]) chain.push_back(n);
    std::reverse(chain.begin(), chain.end());
    return chain;
}

bool DataFlowGraph::has_virtual_fn_node() const {
    for (const auto& n : nodes)
        if (n.kind == DfNode::Kind::virtual_fn) return true;
    return false;
}

// ---------------------------------------------------------------------------

namespace {

struct Tracker {
    const ProgramAnalysis& pa;
    const TrackContext& ctx;
    DataFlowGraph g;
    std::map<GlobalValue, int> visited;  // value -> node index

    struct Item {
        GlobalValue v;
        int depth;
        int parent;
    };
    std::deque<Item> work;

    explicit Tracker(const ProgramAnalysis& pa, const TrackContext& ctx) : pa(pa), ctx(ctx) {}

    int add_node(DfNode n, int parent) {
        g.nodes.push_back(n);
        g.parent.push_back(parent);
        int id = static_cast<int>(g.nodes.size() - 1);
        if (parent >= 0) g.edges.push_back({id, parent});
        return id;
    }
    // Forward direction: edges run parent -> child (data flows onward).
    int add_node_fwd(DfNode n, int parent) {
        g.nodes.push_back(n);
        g.parent.push_back(parent);
        int id = static_cast<int>(g.nodes.size() - 1);
        if (parent >= 0) g.edges.push_back({parent, id});
        return id;
    }

    uint64_t def_anchor(uint32_t func, ValueId v) const {
        const SsaFunction& ssa = pa.fns[func];
        const SsaDef& d = ssa.def(v);
        switch (d.kind) {
            case SsaDef::Kind::instr:
                return ssa.fn->instrs[d.instr].addr;
            case SsaDef::Kind::phi:
                return ssa.fn->instrs[ssa.cfg.blocks[ssa.phis[d.phi].block].first].addr;
            case SsaDef::Kind::entry:
                return ssa.fn->entry;
        }
        return ssa.fn->entry;
    }

    DfNode value_node(uint32_t func, ValueId v) const {
        DfNode n;
        n.kind = DfNode::Kind::instr;
        n.func = func;
        n.value = v;
        n.instr_addr = def_anchor(func, v);
        n.is_phi = pa.fns[func].def(v).kind == SsaDef::Kind::phi;
        return n;
    }

    void add_terminal(DfNode n, int parent) {
        int id = add_node(n, parent);
        g.terminals.push_back(id);
    }

    bool budget_ok(int depth, int node) {
        if (depth <= ctx.depth_budget) return true;
        DfNode n;
        n.kind = DfNode::Kind::data_source;
        n.source = DfNode::Source::budget;
        add_terminal(n, node);
        g.truncated = true;
        return false;
    }

    bool node_limit_reached() {
        if (g.nodes.size() < kMaxNodes) return false;
        g.truncated = true;
        return true;
    }
};

}  // namespace

DataFlowGraph track_backward(const ProgramAnalysis& pa, const TrackContext& ctx,
                             GlobalValue start) {
    Tracker t(pa, ctx);
    if (!start.valid()) return std::move(t.g);

    auto enqueue = [&](GlobalValue v, int depth, int parent) -> int {
        auto it = t.visited.find(v);
        if (it != t.visited.end()) {
            // Revisit: keep the graph acyclic per query; record as back-edge.
            if (parent >= 0)
                t.g.back_edges.push_back({it->second, parent});
            return it->second;
        }
        int id = t.add_node(t.value_node(v.func, v.value), parent);
        t.visited[v] = id;
        t.work.push_back({v, depth, id});
        return id;
    };

    t.g.root = enqueue(start, 0, -1);

    while (!t.work.empty()) {
        if (t.node_limit_reached()) break;
        auto [gv, depth, node] = t.work.front();
        t.work.pop_front();
        const SsaFunction& ssa = pa.fns[gv.func];
        const SsaDef& d = ssa.def(gv.value);

        if (d.kind == SsaDef::Kind::phi) {
            for (const auto& [pred, v] : ssa.phis[d.phi].args)
                if (v != kNoValue) enqueue({gv.func, v}, depth, node);
            continue;
        }
        if (d.kind == SsaDef::Kind::entry) {
            int arg_index = -1;
            for (int a = 0; a < 6; ++a)
                if (kArgRegs[a] == d.reg) arg_index = a;
            if (arg_index < 0) {
                DfNode n;
                n.kind = DfNode::Kind::data_source;
                n.source = DfNode::Source::entry_reg;
                n.func = gv.func;
                n.value = gv.value;
                n.instr_addr = ssa.fn->entry;
                t.add_terminal(n, node);
                continue;
            }
            DfNode arg;
            arg.kind = DfNode::Kind::argument;
            arg.func = gv.func;
            arg.value = gv.value;
            arg.arg_index = arg_index;
            arg.instr_addr = ssa.fn->entry;

            auto callers_it = pa.callers.find(ssa.fn->entry);
            bool has_direct = callers_it != pa.callers.end() && !callers_it->second.empty();
            auto vcallers_it = ctx.virtual_callers.find(ssa.fn->entry);
            bool has_vcallers =
                vcallers_it != ctx.virtual_callers.end() && !vcallers_it->second.empty();
            bool in_vtable = arg_index == 0 && ctx.vtables &&
                             ctx.vtables->by_entry.count(ssa.fn->entry) != 0;

            int arg_node = t.add_node(arg, node);
            if (!has_direct && !has_vcallers) t.g.terminals.push_back(arg_node);
            if (in_vtable) {
                DfNode vf;
                vf.kind = DfNode::Kind::virtual_fn;
                vf.func = gv.func;
                vf.instr_addr = ssa.fn->entry;
                int id = t.add_node(vf, arg_node);
                t.g.terminals.push_back(id);
            }
            if (!t.budget_ok(depth + 1, arg_node)) continue;
            if (has_direct) {
                size_t n = std::min(callers_it->second.size(), kCallerFanout);
                for (size_t k = 0; k < n; ++k) {
                    auto [cf, ci] = callers_it->second[k];
                    ValueId av = pa.fns[cf].ivals[ci].args[arg_index];
                    if (av != kNoValue) enqueue({cf, av}, depth + 1, arg_node);
                }
            }
            if (has_vcallers) {
                size_t n = std::min(vcallers_it->second.size(), kCallerFanout);
                for (size_t k = 0; k < n; ++k) {
                    auto [cf, ci] = vcallers_it->second[k];
                    ValueId av = pa.fns[cf].ivals[ci].args[arg_index];
                    if (av != kNoValue) enqueue({cf, av}, depth + 1, arg_node);
                }
            }
            continue;
        }

        // Instruction definition.
        const MicroInstr& ins = ssa.fn->instrs[d.instr];
        const InstrVals& iv = ssa.ivals[d.instr];
        uint64_t addr = ins.addr;

        if (d.is_sp_def) {  // rsp adjustment from push/pop
            if (iv.mem_base != kNoValue) enqueue({gv.func, iv.mem_base}, depth, node);
            continue;
        }

        switch (ins.op) {
            case Op::move:
                if (ins.srcs[0].is_reg())
                    enqueue({gv.func, iv.src0}, depth, node);
                else {
                    DfNode n;
                    n.kind = DfNode::Kind::data_source;
                    n.source = DfNode::Source::constant;
                    n.const_val = ins.srcs[0].imm;
                    n.instr_addr = addr;
                    n.func = gv.func;
                    t.add_terminal(n, node);
                }
                break;
            case Op::lea:
                if (ins.mem->base || ins.mem->index) {
                    if (iv.mem_base != kNoValue) enqueue({gv.func, iv.mem_base}, depth, node);
                    if (iv.mem_index != kNoValue) enqueue({gv.func, iv.mem_index}, depth, node);
                } else {
                    DfNode n;
                    n.kind = DfNode::Kind::data_source;
                    n.source = DfNode::Source::constant;
                    n.const_val = static_cast<uint64_t>(ins.mem->disp);
                    n.instr_addr = addr;
                    n.func = gv.func;
                    t.add_terminal(n, node);
                }
                break;
            case Op::add:
            case Op::sub:
                if (iv.dst_in != kNoValue) enqueue({gv.func, iv.dst_in}, depth, node);
                if (ins.srcs[0].is_reg() && iv.src0 != kNoValue)
                    enqueue({gv.func, iv.src0}, depth, node);
                break;
            case Op::load: {
                // Through a matched stack slot to the stored value, and along
                // the pointer chain toward the object's origin.
                if (auto st = stack_slot_store_for(ssa, d.instr)) {
                    ValueId sv = ssa.ivals[*st].src0;
                    if (sv != kNoValue) enqueue({gv.func, sv}, depth, node);
                }
                if (iv.mem_base != kNoValue) enqueue({gv.func, iv.mem_base}, depth, node);
                if (iv.mem_index != kNoValue) enqueue({gv.func, iv.mem_index}, depth, node);
                if (iv.mem_base == kNoValue && iv.mem_index == kNoValue) {
                    DfNode n;  // absolute load: a constant-address data source
                    n.kind = DfNode::Kind::data_source;
                    n.source = DfNode::Source::constant;
                    n.const_val = static_cast<uint64_t>(ins.mem->disp);
                    n.instr_addr = addr;
                    n.func = gv.func;
                    t.add_terminal(n, node);
                }
                break;
            }
            case Op::call_direct: {
                // Imports go through stub sections; their return values are
                // external data, not chains worth entering.
                bool external_stub =
                    ctx.img && (ctx.img->points_to_kind(ins.target, SectionKind::plt) ||
                                ctx.img->points_to_kind(ins.target, SectionKind::extern_stub));
                auto fit = pa.func_by_entry.find(ins.target);
                if (!external_stub && fit != pa.func_by_entry.end() &&
                    !pa.fns[fit->second].ret_rax.empty()) {
                    if (!t.budget_ok(depth + 1, node)) break;
                    DfNode rn;
                    rn.kind = DfNode::Kind::ret;
                    rn.func = fit->second;
                    rn.instr_addr = ins.target;
                    int rid = t.add_node(rn, node);
                    for (const auto& [ri, rv] : pa.fns[fit->second].ret_rax)
                        enqueue({fit->second, rv}, depth + 1, rid);
                } else {
                    DfNode n;
                    n.kind = DfNode::Kind::data_source;
                    n.source = DfNode::Source::external_call;
                    n.instr_addr = addr;
                    n.func = gv.func;
                    t.add_terminal(n, node);
                }
                break;
            }
            case Op::call_indirect: {
                auto rit = ctx.resolved_indirect.find(addr);
                if (rit != ctx.resolved_indirect.end() && !rit->second.empty()) {
                    if (!t.budget_ok(depth + 1, node)) break;
                    size_t n = std::min(rit->second.size(), kResolvedFanout);
                    bool any = false;
                    for (size_t k = 0; k < n; ++k) {
                        auto fit = pa.func_by_entry.find(rit->second[k]);
                        if (fit == pa.func_by_entry.end()) continue;
                        if (pa.fns[fit->second].ret_rax.empty()) continue;
                        DfNode rn;
                        rn.kind = DfNode::Kind::ret;
                        rn.func = fit->second;
                        rn.instr_addr = rit->second[k];
                        int rid = t.add_node(rn, node);
                        for (const auto& [ri, rv] : pa.fns[fit->second].ret_rax)
                            enqueue({fit->second, rv}, depth + 1, rid);
                        any = true;
                    }
                    if (any) break;
                }
                DfNode n;
                n.kind = DfNode::Kind::data_source;
                n.source = DfNode::Source::unresolved_call;
                n.instr_addr = addr;
                n.func = gv.func;
                t.add_terminal(n, node);
                break;
            }
            default: {  // clobber and anything else opaque
                DfNode n;
                n.kind = DfNode::Kind::data_source;
                n.source = DfNode::Source::clobbered;
                n.instr_addr = addr;
                n.func = gv.func;
                n.value = gv.value;
                t.add_terminal(n, node);
                break;
            }
        }
    }
    return std::move(t.g);
}

DataFlowGraph track_forward(const ProgramAnalysis& pa, const TrackContext& ctx,
                            GlobalValue start) {
    Tracker t(pa, ctx);
    if (!start.valid()) return std::move(t.g);

    auto enqueue = [&](GlobalValue v, int depth, int parent) -> int {
        auto it = t.visited.find(v);
        if (it != t.visited.end()) {
            if (parent >= 0) t.g.back_edges.push_back({parent, it->second});
            return it->second;
        }
        int id = t.add_node_fwd(t.value_node(v.func, v.value), parent);
        t.visited[v] = id;
        t.work.push_back({v, depth, id});
        return id;
    };

    t.g.root = enqueue(start, 0, -1);

    while (!t.work.empty()) {
        if (t.node_limit_reached()) break;
        auto [gv, depth, node] = t.work.front();
        t.work.pop_front();
        const SsaFunction& ssa = pa.fns[gv.func];

        // Phi results are uses of their arguments.
        for (size_t pi = 0; pi < ssa.phis.size(); ++pi)
            for (const auto& [pred, av] : ssa.phis[pi].args)
                if (av == gv.value) enqueue({gv.func, ssa.phis[pi].result}, depth, node);

        for (const SsaUse& u : ssa.uses[gv.value]) {
            const MicroInstr& ins = ssa.fn->instrs[u.instr];
            const InstrVals& iv = ssa.ivals[u.instr];
            switch (ins.op) {
                case Op::move:
                    if (u.slot == kSlotSrc0) enqueue({gv.func, iv.result}, depth, node);
                    break;
                case Op::add:
                case Op::sub:
                    if (u.slot == kSlotSrc0 || u.slot == kSlotDstIn)
                        enqueue({gv.func, iv.result}, depth, node);
                    break;
                case Op::lea:
                    // Pointer arithmetic keeps the value alive (base or index).
                    if (u.slot == kSlotMemBase || u.slot == kSlotMemIndex)
                        enqueue({gv.func, iv.result}, depth, node);
                    break;
                case Op::store:
                    if (u.slot == kSlotSrc0) {
                        DfNode n;
                        n.kind = DfNode::Kind::instr;
                        n.func = gv.func;
                        n.instr_addr = ins.addr;
                        n.is_store_sink = true;
                        n.stack_slot_store = ins.mem && is_stack_base(*ins.mem);
                        int sid = t.add_node_fwd(n, node);
                        t.g.terminals.push_back(sid);
                        // The overapproximated stack temporary: tracking
                        // continues through matching reloads.
                        for (uint32_t li : stack_slot_loads(ssa, u.instr)) {
                            ValueId lv = ssa.ivals[li].result;
                            if (lv != kNoValue) enqueue({gv.func, lv}, depth, sid);
                        }
                    }
                    break;
                case Op::call_direct: {
                    if (u.slot >= kSlotArg0 && u.slot < kSlotArg0 + 6) {
                        int arg_index = u.slot - kSlotArg0;
                        auto fit = pa.func_by_entry.find(ins.target);
                        if (fit == pa.func_by_entry.end()) break;
                        if (depth + 1 > ctx.depth_budget) {
                            t.g.truncated = true;
                            break;
                        }
                        const SsaFunction& callee = pa.fns[fit->second];
                        DfNode an;
                        an.kind = DfNode::Kind::argument;
                        an.func = fit->second;
                        an.arg_index = arg_index;
                        an.instr_addr = callee.fn->entry;
                        an.value = callee.arg_values.at(kArgRegs[arg_index]);
                        int aid = t.add_node_fwd(an, node);
                        enqueue({fit->second, an.value}, depth + 1, aid);
                    }
                    break;
                }
                case Op::call_indirect:
                    if (u.slot == kSlotMemBase || u.slot == kSlotMemIndex ||
                        u.slot == kSlotSrc0) {
                        DfNode n;
                        n.kind = DfNode::Kind::instr;
                        n.func = gv.func;
                        n.instr_addr = ins.addr;
                        n.is_vcall_sink = true;
                        int sid = t.add_node_fwd(n, node);
                        t.g.terminals.push_back(sid);
                    } else if (u.slot >= kSlotArg0 && u.slot < kSlotArg0 + 6) {
                        auto rit = ctx.resolved_indirect.find(ins.addr);
                        if (rit == ctx.resolved_indirect.end()) break;
                        if (depth + 1 > ctx.depth_budget) {
                            t.g.truncated = true;
                            break;
                        }
                        int arg_index = u.slot - kSlotArg0;
                        size_t nmax = std::min(rit->second.size(), kResolvedFanout);
                        for (size_t k = 0; k < nmax; ++k) {
                            auto fit = pa.func_by_entry.find(rit->second[k]);
                            if (fit == pa.func_by_entry.end()) continue;
                            const SsaFunction& callee = pa.fns[fit->second];
                            DfNode an;
                            an.kind = DfNode::Kind::argument;
                            an.func = fit->second;
                            an.arg_index = arg_index;
                            an.instr_addr = callee.fn->entry;
                            an.value = callee.arg_values.at(kArgRegs[arg_index]);
                            int aid = t.add_node_fwd(an, node);
                            enqueue({fit->second, an.value}, depth + 1, aid);
                        }
                    }
                    break;
                case Op::ret: {
                    if (u.slot != kSlotRetRax) break;
                    auto callers_it = pa.callers.find(ssa.fn->entry);
                    if (callers_it == pa.callers.end()) break;
                    if (depth + 1 > ctx.depth_budget) {
                        t.g.truncated = true;
                        break;
                    }
                    DfNode rn;
                    rn.kind = DfNode::Kind::ret;
                    rn.func = gv.func;
                    rn.instr_addr = ins.addr;
                    int rid = t.add_node_fwd(rn, node);
                    size_t nmax = std::min(callers_it->second.size(), kCallerFanout);
                    for (size_t k = 0; k < nmax; ++k) {
                        auto [cf, ci] = callers_it->second[k];
                        ValueId rv = pa.fns[cf].ivals[ci].result;
                        if (rv != kNoValue) enqueue({cf, rv}, depth + 1, rid);
                    }
                    break;
                }
                case Op::load:
                    // Address use only: the loaded word is new data.
                    break;
                default:
                    break;
            }
        }
    }
    return std::move(t.g);
}

}  // namespace vps
