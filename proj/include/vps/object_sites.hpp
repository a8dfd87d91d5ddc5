#pragma once

#include <cstdint>
#include <vector>

#include "vps/dataflow.hpp"
#include "vps/vtable.hpp"

namespace vps {

enum class DestKind : uint8_t { object_field, stack_temp_overapprox };

const char* dest_kind_name(DestKind k);

// An instruction that writes a vtblptr into memory (object initialization
// or destruction; the two need not be distinguished).
struct ObjectSite {
    uint64_t instr_addr = 0;
    uint64_t vtable_addr = 0;  // first-entry address actually written
    uint32_t func = UINT32_MAX;
    uint32_t instr_index = 0;
    GlobalValue dest_base;  // SSA base of the destination expression
    int64_t dest_disp = 0;
    DestKind dest_kind = DestKind::object_field;
    VTableRef via_ref;
};

// Tracks each vtable reference forward to the stores of the vtblptr. Stores
// through a stack slot are themselves emitted (stack_temp_overapprox) and
// tracking continues past the slot. Output is order-preserving: sites in one
// function appear in program order.
std::vector<ObjectSite> find_object_sites(const ProgramAnalysis& pa,
                                          const std::vector<VTableRef>& refs,
                                          const VTableSet& vts);

}  // namespace vps
