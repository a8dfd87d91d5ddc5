#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vps/dataflow.hpp"
#include "vps/object_sites.hpp"
#include "vps/vtable.hpp"

namespace vps {

enum class VcState : uint8_t { candidate, static_verified, dyn_verified, removed };

const char* vc_state_name(VcState s);

struct VCallSite {
    uint64_t instr_addr = 0;
    uint32_t func = UINT32_MAX;
    uint32_t instr_index = 0;
    uint64_t entry_offset = 0;  // byte offset into the vtable, multiple of 8
    GlobalValue thisptr_value;  // SSA value feeding the first argument register
    VcState state = VcState::candidate;

    struct Evidence {
        uint64_t source_instr = 0;
        uint64_t ref_instr = 0;
        uint32_t path_blocks = 0;
        uint64_t vtable = 0;
    };
    std::optional<Evidence> evidence;

    // Transitions: candidate -> {static_verified, dyn_verified, removed},
    // static_verified -> dyn_verified. Throws on anything else.
    void set_state(VcState next);
};

struct VerificationPath {
    uint64_t source_instr = 0;
    uint64_t ref_instr = 0;
    uint64_t vcall_instr = 0;
    std::vector<std::pair<uint32_t, uint32_t>> blocks;  // (func, block id)
    uint64_t vtable_addr = 0;  // table of the contributing reference
};

// Linear normalization of an SSA value: root value or constant plus a
// byte displacement, chased through copies and constant adjustments.
struct LinForm {
    enum class Root : uint8_t { none, value, constant } root = Root::none;
    GlobalValue v;
    uint64_t c = 0;
    int64_t disp = 0;

    bool operator==(const LinForm&) const = default;
};

LinForm linear_form(const ProgramAnalysis& pa, GlobalValue start, int64_t initial_disp = 0);

// Indirect calls whose target is [[t] + offset] where t also reaches the
// first argument register, possibly as t + distance under multiple
// inheritance. Offsets above the sanity cap are rejected.
constexpr uint64_t kEntryOffsetCap = 0x4000;
std::vector<VCallSite> find_candidates(const ProgramAnalysis& pa,
                                       uint64_t entry_offset_cap = kEntryOffsetCap);

// Backward-tracking start value for a candidate's call target.
GlobalValue candidate_target_value(const ProgramAnalysis& pa, const VCallSite& cand);

// Control-flow paths from a shared data source through a vtable-referencing
// instruction to the candidate; empty when the data-flow graphs share no
// source.
constexpr uint32_t kMaxPathBlocks = 64;
constexpr uint32_t kMaxPathsPerTriple = 16;
std::vector<VerificationPath> build_verification_paths(const ProgramAnalysis& pa,
                                                       const TrackContext& ctx,
                                                       const std::vector<ObjectSite>& sites,
                                                       const VCallSite& cand);

struct VerifyOutcome {
    bool verified = false;
    uint64_t vtable = 0;
    bool budget_exceeded = false;
};

// Executes the path's blocks in order without branch feasibility checks.
// Calls not on the path complete immediately with an unconstrained return
// register; stores of vtable references write tagged vtbl symbols. Verified
// when the final call target is [vtbl_symbol + entry_offset].
VerifyOutcome symexec_verify(const ProgramAnalysis& pa, const ElfImage& img,
                             const VerificationPath& path, const VTableSet& vts,
                             const VCallSite& cand);

// For candidates whose receiver chain roots in the first argument of a
// function that is itself a vtable entry: seeds an artificial object whose
// word 0 holds the containing vtable's symbol and verifies from the
// function entry.
VerifyOutcome implicit_receiver_verify(const ProgramAnalysis& pa, const ElfImage& img,
                                       const TrackContext& ctx, const VCallSite& cand,
                                       const VTableSet& vts);

struct FixedPointStats {
    uint32_t rounds = 0;
    std::vector<uint32_t> verified_per_round;
};

// Re-runs static verification until a round verifies nothing new. Chains
// that previously stopped at an indirect call continue once that call is
// verified (targets become the vtable entries at its offset); chains that
// stopped at a virtual-function entry continue once a calling vcall is
// known.
FixedPointStats verify_fixed_point(const ProgramAnalysis& pa, const ElfImage& img,
                                   const std::vector<ObjectSite>& sites,
                                   std::vector<VCallSite>& cands, const VTableSet& vts,
                                   int depth_budget = 8);

}  // namespace vps
