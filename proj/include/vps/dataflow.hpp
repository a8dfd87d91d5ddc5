#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vps/analysis.hpp"

namespace vps {

struct VTableSet;  // vtable.hpp
struct ElfImage;   // elf_image.hpp

struct DfNode {
    enum class Kind : uint8_t { instr, argument, ret, virtual_fn, data_source };
    enum class Source : uint8_t {
        none,
        constant,         // immediate / absolute address materialization
        unresolved_call,  // indirect call with unknown targets
        external_call,    // direct call leaving the program
        clobbered,        // value produced by an unmodeled instruction
        entry_reg,        // non-argument register at function entry
        budget,           // interprocedural depth budget exhausted
    };

    Kind kind = Kind::instr;
    uint32_t func = UINT32_MAX;
    ValueId value = kNoValue;  // SSA value for instr/argument nodes
    uint64_t instr_addr = 0;   // anchor instruction address
    bool is_phi = false;
    bool is_store_sink = false;    // forward: tracked value written to memory here
    bool is_vcall_sink = false;    // forward: tracked value feeds an indirect call target
    bool stack_slot_store = false; // store destination is an rsp/rbp slot
    int arg_index = -1;            // argument nodes
    Source source = Source::none;
    uint64_t const_val = 0;
};

// Canonical identity used to decide when two chains "share a data source".
struct SourceKey {
    int tag = 0;
    uint64_t a = 0, b = 0;
    auto operator<=>(const SourceKey&) const = default;
};

struct DataFlowGraph {
    std::vector<DfNode> nodes;
    // Edges run in data direction: dependency -> dependent.
    std::vector<std::pair<int, int>> edges;
    // Phi cycles are broken per query; the skipped edges are recorded here.
    std::vector<std::pair<int, int>> back_edges;
    std::vector<int> parent;  // discovery parent toward the query root (-1 at root)
    int root = -1;
    bool truncated = false;
    std::vector<int> terminals;

    std::set<SourceKey> source_keys() const;
    // Node indices whose source key matches (for path anchoring).
    std::vector<int> nodes_with_key(const SourceKey& k) const;
    // Discovery chain root -> node, as node indices.
    std::vector<int> chain_to(int node) const;
    bool has_virtual_fn_node() const;
};

SourceKey source_key(const DfNode& n);

// Knowledge gained across fixed-point rounds.
struct TrackContext {
    // verified vcall instr addr -> possible callee entries (vtable slots)
    std::map<uint64_t, std::vector<uint64_t>> resolved_indirect;
    // virtual function entry -> verified vcall sites calling it (func, instr index)
    std::map<uint64_t, std::vector<std::pair<uint32_t, uint32_t>>> virtual_callers;
    const VTableSet* vtables = nullptr;  // enables virtual-function nodes
    const ElfImage* img = nullptr;       // plt/extern calls terminate as external
    int depth_budget = 8;                // call-boundary crossings per query
};

// Interprocedural def-chain walk toward the sources of `start`. Chains
// entering a function through its first argument from an unknown caller end
// in an argument node; chains hitting an unresolved indirect call end in a
// data-source node. Budget exhaustion flags the graph truncated.
DataFlowGraph track_backward(const ProgramAnalysis& pa, const TrackContext& ctx,
                             GlobalValue start);

// Mirror of track_backward: follows uses, argument passing at direct calls,
// returns, and stack-slot reloads within one function.
DataFlowGraph track_forward(const ProgramAnalysis& pa, const TrackContext& ctx,
                            GlobalValue start);

// Stack-slot matching (syntactic rsp/rbp base + displacement). Returns load
// instruction indices in `fn` that observe the value stored by `store_index`.
std::vector<uint32_t> stack_slot_loads(const SsaFunction& ssa, uint32_t store_index);
// Latest store in `fn` before `load_index` that feeds the load, if any.
std::optional<uint32_t> stack_slot_store_for(const SsaFunction& ssa, uint32_t load_index);

}  // namespace vps
