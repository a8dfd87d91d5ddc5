#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vps::testing {

// Minimal ELF64 x86-64 writer for synthesizing test binaries with sections,
// a symbol table, and RELA relocations.
class ElfBuilder {
public:
    struct SectionSpec {
        std::string name;
        uint32_t type = 1;  // SHT_PROGBITS
        uint64_t flags = 0;
        uint64_t vaddr = 0;
        std::vector<uint8_t> bytes;
        uint64_t nobits_size = 0;  // SHT_NOBITS
        uint32_t link = 0;
        uint64_t entsize = 0;
    };
    struct SymbolSpec {
        std::string name;
        uint64_t vaddr = 0;
        uint64_t size = 0;
        bool is_func = false;
        bool defined = true;
    };
    struct RelaSpec {
        uint64_t site = 0;
        uint32_t type = 0;  // R_X86_64_*
        std::string symbol; // empty for RELATIVE
        int64_t addend = 0;
    };

    void add_section(SectionSpec s) { sections_.push_back(std::move(s)); }
    void add_symbol(SymbolSpec s) { symbols_.push_back(std::move(s)); }
    void add_rela(RelaSpec r) { relas_.push_back(std::move(r)); }
    void set_entry(uint64_t e) { entry_ = e; }

    std::vector<uint8_t> build() const;

private:
    std::vector<SectionSpec> sections_;
    std::vector<SymbolSpec> symbols_;
    std::vector<RelaSpec> relas_;
    uint64_t entry_ = 0;
};

// Synthesized binaries with their ground-truth annotations (JSON text).
struct ElfFixture {
    std::string name;
    std::vector<uint8_t> bytes;
    std::string truth_json;
};

// Class-hierarchy layout with a base pair and a derived class carrying a
// base vtable and a sub-vtable; explicit constructors; one vcall through
// the sub-vtable.
ElfFixture elf_fixture_classes();
// Inlined constructor writing an abstract base's vtblptr and immediately
// overwriting it with the derived one.
ElfFixture elf_fixture_inlined_abstract();
// GOT-indirect references (local + import), metadata-offset reference, and
// a copy-relocated vtable chunk in bss.
ElfFixture elf_fixture_got_copyreloc();

std::vector<ElfFixture> all_elf_fixtures();

}  // namespace vps::testing
