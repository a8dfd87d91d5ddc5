#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vps/analysis.hpp"
#include "vps/elf_image.hpp"

namespace vps {

enum class VtProvenance : uint8_t { rodata, data_rel_ro, bss_copyreloc, got_indirect };

const char* provenance_name(VtProvenance p);

struct VTable {
    uint64_t addr = 0;          // first function entry
    int64_t offset_to_top = 0;  // 0 for base vtables, negative for sub-vtables
    uint64_t rtti = 0;
    std::vector<uint64_t> entries;
    VtProvenance provenance = VtProvenance::rodata;
    // Copy-relocated grid candidates and symbolic GOT imports skip field
    // validation and carry no entries.
    bool is_overestimate = false;
    std::string symbol;  // import name for symbolic GOT vtables
};

struct VTableSet {
    std::map<uint64_t, VTable> tables;
    // function address -> (vtable addr, entry index); inverse of entries
    std::map<uint64_t, std::vector<std::pair<uint64_t, uint32_t>>> by_entry;

    bool is_known(uint64_t addr) const { return tables.count(addr) != 0; }
    const VTable* at(uint64_t addr) const {
        auto it = tables.find(addr);
        return it == tables.end() ? nullptr : &it->second;
    }
    void insert(VTable v);
};

// Offset-to-Top sanity range check: closed interval [-0xFFFFFF, 0xFFFFFF].
bool check_offset_to_top(int64_t v);

// Function-entry validity: targets text/plt/extern or is a relocation site.
bool check_entry(const ElfImage& img, uint64_t slot_addr, uint64_t word);

// RTTI validity: zero, pointer into a data-bearing section, or relocated slot.
bool check_rtti(const ElfImage& img, uint64_t slot_addr, uint64_t word);

// Scans read-only sections for vtable layouts, emits every 8-byte aligned
// address of copy-relocated chunks as an overestimate, and records symbolic
// vtables for GOT slots that resolve outside the image. Sub-vtables are
// independent records. Pure function of the image.
VTableSet scan_vtables(const ElfImage& img);

struct VTableRef {
    enum class Method : uint8_t { direct, metadata_offset, got };
    uint64_t instr_addr = 0;
    uint64_t vtable_addr = 0;
    Method method = Method::direct;
    uint32_t func = UINT32_MAX;
    uint32_t instr_index = 0;
    // SSA value holding the finished vtblptr (the adjusted value for
    // metadata-offset references). kNoValue when an immediate is stored
    // directly without touching a register.
    GlobalValue value;
};

const char* ref_method_name(VTableRef::Method m);

// The three reference methods: direct address of the first function entry,
// metadata-start reference later adjusted by +0x10/+0x18, and loads from
// GOT slots that resolve to a vtable.
std::vector<VTableRef> find_vtable_refs(const ProgramAnalysis& pa, const VTableSet& vts,
                                        const ElfImage& img);

}  // namespace vps
