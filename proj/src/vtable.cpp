#include "vps/vtable.hpp"

#include <algorithm>
#include <deque>

namespace vps {

namespace {

constexpr int64_t kOffsetToTopMax = 0xFFFFFF;
constexpr uint64_t kMetadataBytes = 0x10;

bool is_data_kind(SectionKind k) {
    return k == SectionKind::rodata || k == SectionKind::data_rel_ro ||
           k == SectionKind::data || k == SectionKind::bss || k == SectionKind::other;
}

}  // namespace

const char* provenance_name(VtProvenance p) {
    switch (p) {
        case VtProvenance::rodata: return "rodata";
        case VtProvenance::data_rel_ro: return "data_rel_ro";
        case VtProvenance::bss_copyreloc: return "bss_copyreloc";
        case VtProvenance::got_indirect: return "got_indirect";
    }
    return "rodata";
}

const char* ref_method_name(VTableRef::Method m) {
    switch (m) {
        case VTableRef::Method::direct: return "direct";
        case VTableRef::Method::metadata_offset: return "metadata_offset";
        case VTableRef::Method::got: return "got";
    }
    return "direct";
}

void VTableSet::insert(VTable v) {
    uint64_t addr = v.addr;
    auto [it, fresh] = tables.emplace(addr, std::move(v));
    if (!fresh) return;
    if (it->second.is_overestimate) return;
    for (uint32_t i = 0; i < it->second.entries.size(); ++i)
        by_entry[it->second.entries[i]].push_back({addr, i});
}

bool check_offset_to_top(int64_t v) { return v >= -kOffsetToTopMax && v <= kOffsetToTopMax; }

bool check_entry(const ElfImage& img, uint64_t slot_addr, uint64_t word) {
    return img.is_code_target(word) || img.is_reloc_site(slot_addr);
}

bool check_rtti(const ElfImage& img, uint64_t slot_addr, uint64_t word) {
    if (word == 0) return true;
    if (img.is_reloc_site(slot_addr)) return true;
    const Section* s = img.section_at(word);
    return s && is_data_kind(s->kind);
}

namespace {

// Layout test at a metadata address and entry accumulation. Entries run from
// meta+0x10 until a word fails the entry rule, a new metadata pair begins,
// or the section ends; the Itanium layout packs consecutive (sub-)vtables.
bool metadata_pair_ok(const ElfImage& img, uint64_t meta) {
    auto ott = read_word(img, meta);
    auto rtti = read_word(img, meta + 8);
    auto first = read_word(img, meta + 0x10);
    if (!ott || !rtti || !first) return false;
    return check_offset_to_top(static_cast<int64_t>(*ott)) &&
           check_rtti(img, meta + 8, *rtti) && check_entry(img, meta + 0x10, *first);
}

std::optional<VTable> parse_table_at_meta(const ElfImage& img, uint64_t meta,
                                          VtProvenance prov, uint64_t* next_pos) {
    if (!metadata_pair_ok(img, meta)) return std::nullopt;
    VTable v;
    v.addr = meta + kMetadataBytes;
    v.offset_to_top = static_cast<int64_t>(*read_word(img, meta));
    v.rtti = *read_word(img, meta + 8);
    v.provenance = prov;
    uint64_t p = v.addr;
    while (true) {
        auto w = read_word(img, p);
        if (!w || !check_entry(img, p, *w)) break;
        if (p != v.addr && metadata_pair_ok(img, p)) break;  // next table starts here
        v.entries.push_back(*w);
        p += 8;
    }
    if (next_pos) *next_pos = p;
    if (v.entries.empty()) return std::nullopt;
    return v;
}

}  // namespace

VTableSet scan_vtables(const ElfImage& img) {
    VTableSet out;

    for (const auto& sec : img.sections) {
        if (sec.kind != SectionKind::rodata && sec.kind != SectionKind::data_rel_ro) continue;
        VtProvenance prov = sec.kind == SectionKind::rodata ? VtProvenance::rodata
                                                            : VtProvenance::data_rel_ro;
        uint64_t p = sec.vaddr & ~7ULL;
        if (p < sec.vaddr) p += 8;
        uint64_t end = sec.vaddr + sec.size;
        while (p + 0x18 <= end) {
            uint64_t next = 0;
            if (auto v = parse_table_at_meta(img, p, prov, &next)) {
                out.insert(std::move(*v));
                p = next;
            } else {
                p += 8;
            }
        }
    }

    // Copy-relocated chunks: every 8-byte aligned address is a candidate
    // (the chunk may pack a base vtable and sub-vtables; the relocation
    // symbol gives only its start and length).
    for (const auto& sym : img.dyn_symbols) {
        if (!sym.is_copy_relocated) continue;
        for (uint64_t a = sym.vaddr; a < sym.vaddr + sym.size; a += 8) {
            VTable v;
            v.addr = a;
            v.provenance = VtProvenance::bss_copyreloc;
            v.is_overestimate = true;
            v.symbol = sym.name;
            out.insert(std::move(v));
        }
    }

    // GOT slots: concrete targets are validated in place; imports stay
    // symbolic, keyed by the slot address, and skip entry validation.
    for (const auto& [slot, target] : img.got_entries) {
        if (target.is_symbolic()) {
            VTable v;
            v.addr = slot;
            v.provenance = VtProvenance::got_indirect;
            v.is_overestimate = true;
            v.symbol = target.symbol;
            out.insert(std::move(v));
        } else if (!out.is_known(*target.addr)) {
            if (auto v = parse_table_at_meta(img, *target.addr - kMetadataBytes,
                                             VtProvenance::got_indirect, nullptr))
                out.insert(std::move(*v));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vtable references in code

namespace {

// Follows copies and constant adjustments from `start` until the accumulated
// displacement equals `needed`; returns the adjusted value.
std::optional<GlobalValue> find_adjusted_value(const ProgramAnalysis& pa, GlobalValue start,
                                               int64_t needed) {
    struct Item {
        ValueId v;
        int64_t delta;
    };
    const SsaFunction& ssa = pa.fns[start.func];
    std::deque<Item> work{{start.value, 0}};
    std::set<ValueId> seen{start.value};
    while (!work.empty()) {
        auto [v, delta] = work.front();
        work.pop_front();
        if (delta == needed) return GlobalValue{start.func, v};
        for (const SsaUse& u : ssa.uses[v]) {
            const MicroInstr& ins = ssa.fn->instrs[u.instr];
            const InstrVals& iv = ssa.ivals[u.instr];
            int64_t next = delta;
            if (ins.op == Op::move && u.slot == kSlotSrc0)
                next = delta;
            else if (ins.op == Op::add && u.slot == kSlotDstIn && ins.srcs[0].is_imm())
                next = delta + static_cast<int64_t>(ins.srcs[0].imm);
            else if (ins.op == Op::sub && u.slot == kSlotDstIn && ins.srcs[0].is_imm())
                next = delta - static_cast<int64_t>(ins.srcs[0].imm);
            else if (ins.op == Op::lea && u.slot == kSlotMemBase && !ins.mem->index)
                next = delta + ins.mem->disp;
            else
                continue;
            ValueId r = iv.result;
            if (r == kNoValue || seen.count(r)) continue;
            seen.insert(r);
            work.push_back({r, next});
        }
    }
    return std::nullopt;
}

}  // namespace

std::vector<VTableRef> find_vtable_refs(const ProgramAnalysis& pa, const VTableSet& vts,
                                        const ElfImage& img) {
    std::vector<VTableRef> refs;
    for (uint32_t fi = 0; fi < pa.prog->functions.size(); ++fi) {
        const MirFunction& fn = pa.prog->functions[fi];
        const SsaFunction& ssa = pa.fns[fi];
        for (uint32_t ii = 0; ii < fn.instrs.size(); ++ii) {
            const MicroInstr& ins = fn.instrs[ii];
            VTableRef ref;
            ref.instr_addr = ins.addr;
            ref.func = fi;
            ref.instr_index = ii;

            // Constant address materialization: direct or metadata-start.
            std::optional<uint64_t> matv;
            if (ins.op == Op::move && ins.dst && ins.srcs[0].is_imm())
                matv = ins.srcs[0].imm;
            else if (ins.op == Op::lea && ins.mem && ins.mem->is_absolute())
                matv = static_cast<uint64_t>(ins.mem->disp);
            if (matv) {
                ValueId result = ssa.ivals[ii].result;
                if (vts.is_known(*matv)) {
                    ref.vtable_addr = *matv;
                    ref.method = VTableRef::Method::direct;
                    ref.value = {fi, result};
                    refs.push_back(ref);
                } else {
                    for (int64_t adj : {int64_t{0x10}, int64_t{0x18}}) {
                        if (!vts.is_known(*matv + adj)) continue;
                        auto adjusted =
                            find_adjusted_value(pa, GlobalValue{fi, result}, adj);
                        if (!adjusted) continue;
                        ref.vtable_addr = *matv + adj;
                        ref.method = VTableRef::Method::metadata_offset;
                        ref.value = *adjusted;
                        refs.push_back(ref);
                        break;
                    }
                }
                continue;
            }

            // Stored immediate, no register involved.
            if (ins.op == Op::store && ins.srcs[0].is_imm() && vts.is_known(ins.srcs[0].imm)) {
                ref.vtable_addr = ins.srcs[0].imm;
                ref.method = VTableRef::Method::direct;
                ref.value = {};
                refs.push_back(ref);
                continue;
            }

            // Indirect reference through the GOT.
            if (ins.op == Op::load && ins.mem && ins.mem->is_absolute()) {
                uint64_t slot = static_cast<uint64_t>(ins.mem->disp);
                auto it = img.got_entries.find(slot);
                if (it == img.got_entries.end()) continue;
                uint64_t table = it->second.is_symbolic() ? slot : *it->second.addr;
                if (!vts.is_known(table)) continue;
                ref.vtable_addr = table;
                ref.method = VTableRef::Method::got;
                ref.value = {fi, ssa.ivals[ii].result};
                refs.push_back(ref);
            }
        }
    }
    return refs;
}

}  // namespace vps
