#include "vps/object_sites.hpp"

#include <algorithm>
#include <set>

#include "vps/vcall.hpp"

namespace vps {

const char* dest_kind_name(DestKind k) {
    return k == DestKind::object_field ? "object_field" : "stack_temp_overapprox";
}

namespace {

// Destination chains rooted in an unmodeled instruction give no usable
// object identity; such stores are skipped rather than guessed, and the
// profiling stage surfaces any resulting gap as a check failure.
bool base_is_clobbered(const ProgramAnalysis& pa, GlobalValue base) {
    if (!base.valid()) return true;
    LinForm f = linear_form(pa, base);
    if (f.root != LinForm::Root::value) return false;
    const SsaDef& d = pa.fns[f.v.func].def(f.v.value);
    return d.kind == SsaDef::Kind::instr &&
           pa.fns[f.v.func].fn->instrs[d.instr].op == Op::clobber;
}

}  // namespace

std::vector<ObjectSite> find_object_sites(const ProgramAnalysis& pa,
                                          const std::vector<VTableRef>& refs,
                                          const VTableSet& vts) {
    std::vector<ObjectSite> sites;
    std::set<std::pair<uint64_t, uint64_t>> seen;  // (store addr, vtable)

    auto emit = [&](uint32_t func, uint32_t instr_index, const VTableRef& ref) {
        const MicroInstr& st = pa.instr(func, instr_index);
        if (!seen.insert({st.addr, ref.vtable_addr}).second) return;
        ObjectSite s;
        s.instr_addr = st.addr;
        s.vtable_addr = ref.vtable_addr;
        s.func = func;
        s.instr_index = instr_index;
        s.via_ref = ref;
        if (st.mem) {
            s.dest_disp = st.mem->disp;
            if (st.mem->base) {
                s.dest_base = {func, pa.fns[func].ivals[instr_index].mem_base};
                if (base_is_clobbered(pa, s.dest_base)) return;
            }
            bool stack = st.mem->base &&
                         (*st.mem->base == Reg::rsp || *st.mem->base == Reg::rbp) &&
                         !st.mem->index;
            s.dest_kind = stack ? DestKind::stack_temp_overapprox : DestKind::object_field;
        }
        sites.push_back(std::move(s));
    };

    TrackContext ctx;
    ctx.vtables = &vts;
    for (const VTableRef& ref : refs) {
        if (!ref.value.valid()) {
            // Immediate stored without a register: the reference instruction
            // is itself the write site.
            if (pa.instr(ref.func, ref.instr_index).op == Op::store)
                emit(ref.func, ref.instr_index, ref);
            continue;
        }
        DataFlowGraph g = track_forward(pa, ctx, ref.value);
        for (int t : g.terminals) {
            const DfNode& n = g.nodes[t];
            if (!n.is_store_sink) continue;
            auto loc = pa.instr_loc.find(n.instr_addr);
            if (loc == pa.instr_loc.end()) continue;
            emit(loc->second.first, loc->second.second, ref);
        }
    }

    std::sort(sites.begin(), sites.end(), [](const ObjectSite& a, const ObjectSite& b) {
        if (a.func != b.func) return a.func < b.func;
        if (a.instr_index != b.instr_index) return a.instr_index < b.instr_index;
        return a.vtable_addr < b.vtable_addr;
    });
    return sites;
}

}  // namespace vps
