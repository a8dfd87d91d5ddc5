#include "vps/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "vps/errors.hpp"

namespace vps {

ElfImage image_from_mir(const MicroProgram& prog) {
    ElfImage img;
    for (const auto& d : prog.data) {
        Section sec;
        sec.name = d.name;
        sec.vaddr = d.vaddr;
        sec.size = d.words.size() * 8;
        sec.write = d.writable;
        sec.kind = classify_section(d.name, d.writable, false, d.name.find("bss") == 0);
        if (sec.kind == SectionKind::text || sec.kind == SectionKind::plt ||
            sec.kind == SectionKind::extern_stub) {
            sec.execute = true;
            sec.write = false;
        }
        if (sec.kind != SectionKind::bss) {
            sec.bytes.resize(sec.size);
            for (size_t i = 0; i < d.words.size(); ++i)
                for (int b = 0; b < 8; ++b)
                    sec.bytes[i * 8 + b] = static_cast<uint8_t>(d.words[i] >> (8 * b));
        }
        if (sec.kind == SectionKind::got) {
            for (size_t i = 0; i < d.words.size(); ++i) {
                uint64_t slot = d.vaddr + i * 8;
                GotTarget t;
                if (d.words[i] != 0)
                    t.addr = d.words[i];
                else
                    t.symbol = "import_" + hex_str(slot);
                img.got_entries[slot] = std::move(t);
            }
        }
        img.sections.push_back(std::move(sec));
    }
    for (const auto& f : prog.functions) {
        if (f.instrs.empty()) continue;
        Section sec;
        sec.name = ".text." + f.name;
        sec.vaddr = f.entry;
        sec.size = f.instrs.back().addr + f.instrs.back().size - f.entry;
        sec.execute = true;
        sec.kind = SectionKind::text;
        sec.bytes.assign(sec.size, 0);
        img.sections.push_back(std::move(sec));
        if (f.name == "main" || img.entry_point == 0) img.entry_point = f.entry;
    }
    std::sort(img.sections.begin(), img.sections.end(),
              [](const Section& a, const Section& b) { return a.vaddr < b.vaddr; });
    return img;
}

std::unique_ptr<AnalysisResult> analyze_program(ElfImage img, MicroProgram prog,
                                                const AnalysisOptions& opts) {
    auto r = std::make_unique<AnalysisResult>();
    r->img = std::move(img);
    r->prog = std::move(prog);
    r->pa = ProgramAnalysis::build(r->prog);
    r->vts = scan_vtables(r->img);
    r->refs = find_vtable_refs(r->pa, r->vts, r->img);
    r->sites = find_object_sites(r->pa, r->refs, r->vts);
    r->vcalls = find_candidates(r->pa);
    r->fixed_point =
        verify_fixed_point(r->pa, r->img, r->sites, r->vcalls, r->vts, opts.depth_budget);
    return r;
}

std::unique_ptr<AnalysisResult> analyze_file(const std::string& path,
                                             const std::string& format,
                                             const AnalysisOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open input: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (format == "mir") {
        MicroProgram prog = parse_mir_text(bytes);
        ElfImage img = image_from_mir(prog);
        return analyze_program(std::move(img), std::move(prog), opts);
    }
    if (format == "elf") {
        std::vector<uint8_t> raw(bytes.begin(), bytes.end());
        ElfImage img = load_elf(raw);
        MicroProgram prog = decode(img);
        return analyze_program(std::move(img), std::move(prog), opts);
    }
    throw Error("unknown input format: " + format + " (use elf|mir)");
}

}  // namespace vps
