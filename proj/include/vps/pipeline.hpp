#pragma once

#include <memory>
#include <string>

#include "vps/artifacts.hpp"
#include "vps/decoder.hpp"
#include "vps/object_sites.hpp"
#include "vps/vcall.hpp"
#include "vps/vtable.hpp"

namespace vps {

// Synthetic address-space model for textual fixtures: data sections become
// image sections (name selects the kind), functions span text sections, and
// a section named "got" populates the GOT map (zero slots are imports).
ElfImage image_from_mir(const MicroProgram& prog);

struct AnalysisOptions {
    int depth_budget = 8;
};

// Full static pipeline over one input. The result owns program and image;
// internal pointers stay valid for its lifetime.
struct AnalysisResult {
    ElfImage img;
    MicroProgram prog;
    ProgramAnalysis pa;
    VTableSet vts;
    std::vector<VTableRef> refs;
    std::vector<ObjectSite> sites;
    std::vector<VCallSite> vcalls;
    FixedPointStats fixed_point;
};

std::unique_ptr<AnalysisResult> analyze_program(ElfImage img, MicroProgram prog,
                                                const AnalysisOptions& opts = {});

// Loads an input by format ("mir" parses the text fixture, "elf" loads and
// decodes the binary) and runs the static pipeline.
std::unique_ptr<AnalysisResult> analyze_file(const std::string& path,
                                             const std::string& format,
                                             const AnalysisOptions& opts = {});

}  // namespace vps
