#include "vps/analysis.hpp"

namespace vps {

ProgramAnalysis ProgramAnalysis::build(const MicroProgram& prog) {
    ProgramAnalysis pa;
    pa.prog = &prog;
    pa.fns.reserve(prog.functions.size());
    for (uint32_t fi = 0; fi < prog.functions.size(); ++fi) {
        const MirFunction& fn = prog.functions[fi];
        pa.fns.push_back(to_ssa(fn, build_cfg(fn)));
        pa.func_by_entry[fn.entry] = fi;
        for (uint32_t ii = 0; ii < fn.instrs.size(); ++ii) {
            pa.instr_loc[fn.instrs[ii].addr] = {fi, ii};
            if (fn.instrs[ii].op == Op::call_direct)
                pa.callers[fn.instrs[ii].target].push_back({fi, ii});
        }
    }
    return pa;
}

}  // namespace vps
