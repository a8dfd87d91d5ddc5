#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "vps/cfg.hpp"
#include "vps/mir.hpp"

namespace vps {

using ValueId = uint32_t;
constexpr ValueId kNoValue = UINT32_MAX;

struct SsaDef {
    enum class Kind : uint8_t { entry, instr, phi };
    Kind kind = Kind::entry;
    Reg reg = Reg::rax;
    uint32_t instr = 0;  // defining instruction index (kind == instr)
    uint32_t phi = 0;    // index into phis (kind == phi)
    bool is_sp_def = false;
};

struct SsaPhi {
    uint32_t block = 0;
    Reg reg = Reg::rax;
    ValueId result = kNoValue;
    std::vector<std::pair<uint32_t, ValueId>> args;  // (pred block, incoming value)
};

// Use slots identify where in an instruction a value is read.
enum : uint8_t {
    kSlotSrc0 = 0,
    kSlotMemBase = 1,
    kSlotMemIndex = 2,
    kSlotDstIn = 3,    // add/sub read-modify-write input
    kSlotArg0 = 10,    // implicit argument-register reads at calls (10..15)
    kSlotRetRax = 20,  // implicit rax read at ret
};

struct SsaUse {
    uint32_t instr = 0;
    uint8_t slot = 0;
};

// Reaching values per instruction, resolved during renaming.
struct InstrVals {
    ValueId result = kNoValue;   // dst output value
    ValueId sp_result = kNoValue;
    ValueId src0 = kNoValue;
    ValueId mem_base = kNoValue;
    ValueId mem_index = kNoValue;
    ValueId dst_in = kNoValue;
    std::array<ValueId, 6> args{kNoValue, kNoValue, kNoValue, kNoValue, kNoValue, kNoValue};
};

// Registers are in SSA form; memory is not (loads and stores stay explicit).
struct SsaFunction {
    const MirFunction* fn = nullptr;
    Cfg cfg;
    std::vector<SsaDef> defs;             // index == ValueId
    std::vector<std::vector<SsaUse>> uses;
    std::vector<SsaPhi> phis;
    std::map<Reg, ValueId> arg_values;    // System V argument registers at entry
    std::vector<InstrVals> ivals;         // per instruction
    std::vector<std::pair<uint32_t, ValueId>> ret_rax;  // (ret instr index, rax value)

    const SsaDef& def(ValueId v) const { return defs[v]; }
    bool defines_dst(uint32_t instr_index) const;
};

SsaFunction to_ssa(const MirFunction& fn, Cfg cfg);

// True for ops that write their dst register.
bool op_defines_reg(const MicroInstr& i);

}  // namespace vps
