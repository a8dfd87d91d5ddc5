#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vps/object_sites.hpp"
#include "vps/runtime.hpp"
#include "vps/vcall.hpp"
#include "vps/vtable.hpp"

namespace vps {

std::string hex_str(uint64_t v);
uint64_t parse_hex(const std::string& s);

// Analysis artifacts, fixed filenames under the output directory:
// vtables.json, object_sites.json, vcalls.json, trace.jsonl, metrics.json.
void write_vtables_json(const std::string& path, const VTableSet& vts);
void write_object_sites_json(const std::string& path, const std::vector<ObjectSite>& sites);
void write_vcalls_json(const std::string& path, const std::vector<VCallSite>& vcalls);

// Reloads persisted vcall states onto freshly recomputed candidates
// (matched by instruction address). Throws MissingArtifacts when the file
// does not exist.
void overlay_vcall_states(const std::string& path, std::vector<VCallSite>& vcalls);

void write_trace_jsonl(const std::string& path, const std::vector<Event>& events);

// Ground truth sidecar: {vtables:[], object_sites:[], vcalls:[{instr_addr,label}]}.
struct GroundTruth {
    std::vector<uint64_t> vtables;
    std::vector<uint64_t> object_sites;
    struct Vcall {
        uint64_t instr_addr = 0;
        bool is_vcall = false;  // label: vcall | c_style
        bool expect_static_verified = false;
    };
    std::vector<Vcall> vcalls;
};

GroundTruth load_ground_truth(const std::string& path);

}  // namespace vps
