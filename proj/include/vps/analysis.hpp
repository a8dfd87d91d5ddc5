#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "vps/mir.hpp"
#include "vps/ssa.hpp"

namespace vps {

// CFG + SSA for every function plus cross-function indices. Immutable after
// build; data-flow queries over it are pure and may run concurrently.
struct ProgramAnalysis {
    const MicroProgram* prog = nullptr;
    std::vector<SsaFunction> fns;  // parallel to prog->functions
    std::map<uint64_t, std::pair<uint32_t, uint32_t>> instr_loc;  // addr -> (func, index)
    std::map<uint64_t, uint32_t> func_by_entry;
    // callee entry -> direct call sites (func, instr index)
    std::map<uint64_t, std::vector<std::pair<uint32_t, uint32_t>>> callers;

    static ProgramAnalysis build(const MicroProgram& prog);

    const MirFunction& function(uint32_t f) const { return prog->functions[f]; }
    const MicroInstr& instr(uint32_t f, uint32_t i) const {
        return prog->functions[f].instrs[i];
    }
};

// Global SSA value handle.
struct GlobalValue {
    uint32_t func = UINT32_MAX;
    ValueId value = kNoValue;

    bool valid() const { return func != UINT32_MAX && value != kNoValue; }
    bool operator<(const GlobalValue& o) const {
        return func != o.func ? func < o.func : value < o.value;
    }
    bool operator==(const GlobalValue&) const = default;
};

}  // namespace vps
