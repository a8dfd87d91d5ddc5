#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace vps {

enum class SectionKind : uint8_t {
    rodata,
    data_rel_ro,
    bss,
    text,
    plt,
    extern_stub,
    got,
    data,
    other,
};

const char* section_kind_name(SectionKind k);

struct Section {
    std::string name;
    uint64_t vaddr = 0;
    uint64_t size = 0;
    bool read = true, write = false, execute = false;
    SectionKind kind = SectionKind::other;
    std::vector<uint8_t> bytes;  // empty for bss (uninitialized)

    bool contains(uint64_t addr) const { return addr >= vaddr && addr < vaddr + size; }
    bool has_contents() const { return !bytes.empty(); }
};

struct DynSymbol {
    std::string name;
    uint64_t vaddr = 0;
    uint64_t size = 0;
    bool is_copy_relocated = false;
    bool defined = false;  // st_shndx != SHN_UNDEF
    bool is_func = false;
};

struct Relocation {
    enum class Kind : uint8_t { copy, glob_dat, other };
    uint64_t site = 0;
    std::string target_symbol;
    Kind kind = Kind::other;
};

// Load-time target of a GOT slot: concrete for intra-image targets,
// symbolic (name only) for imports.
struct GotTarget {
    std::optional<uint64_t> addr;
    std::string symbol;

    bool is_symbolic() const { return !addr.has_value(); }
};

// Immutable after load; safe to share across analysis workers.
struct ElfImage {
    uint64_t entry_point = 0;
    std::vector<Section> sections;
    std::vector<DynSymbol> dyn_symbols;
    std::vector<Relocation> relocations;
    std::map<uint64_t, GotTarget> got_entries;
    std::set<uint64_t> reloc_sites;  // addresses covered by any relocation

    const Section* section_at(uint64_t addr) const;
    bool is_mapped(uint64_t addr) const { return section_at(addr) != nullptr; }
    bool points_to_kind(uint64_t addr, SectionKind k) const;
    bool is_code_target(uint64_t addr) const;  // text / plt / extern
    bool is_reloc_site(uint64_t addr) const { return reloc_sites.count(addr) != 0; }
};

// Parses an ELF64 x86-64 little-endian file. Throws MalformedElf on bad or
// truncated structures and UnsupportedClass on other ELF classes/machines.
ElfImage load_elf(const std::vector<uint8_t>& bytes);

// Little-endian 8-byte read; absent for bss and unmapped addresses.
std::optional<uint64_t> read_word(const ElfImage& img, uint64_t addr);

// Load-time target of a GOT slot. Throws NotAGotSlot if the address is not
// a GOT entry.
GotTarget resolve_got(const ElfImage& img, uint64_t got_slot);

// Classification fallback for nonstandard section names.
SectionKind classify_section(const std::string& name, bool write, bool execute, bool nobits);

}  // namespace vps
