#pragma once

#include <cstdint>
#include <vector>

#include "vps/mir.hpp"

namespace vps {

struct BasicBlock {
    uint32_t id = 0;
    uint32_t first = 0, last = 0;  // instruction index range, inclusive
    std::vector<uint32_t> succs;
    std::vector<uint32_t> preds;
    bool exits_function = false;  // branch/jump target outside the function
};

struct Cfg {
    std::vector<BasicBlock> blocks;
    uint32_t entry = 0;
    std::vector<uint32_t> instr_block;  // instruction index -> block id
    std::vector<uint32_t> idom;         // immediate dominator per block (entry -> itself)

    bool dominates(uint32_t a, uint32_t b) const;
};

// Splits at branch targets and after terminators. A call terminates its
// block with a single return edge to the next block. Branch/jump targets
// outside the function become exit edges, not errors.
Cfg build_cfg(const MirFunction& fn);

}  // namespace vps
