#include "vps/elf_image.hpp"

#include <algorithm>
#include <cstring>

#include "vps/errors.hpp"

namespace vps {

namespace {

// Minimal ELF64 constants; we parse section headers, .dynsym and RELA tables.
constexpr uint16_t kMachineX86_64 = 62;
constexpr uint32_t kShtNobits = 8;
constexpr uint32_t kShtRela = 4;
constexpr uint32_t kShtDynsym = 11;
constexpr uint32_t kShtSymtab = 2;
constexpr uint64_t kShfWrite = 0x1;
constexpr uint64_t kShfAlloc = 0x2;
constexpr uint64_t kShfExec = 0x4;
constexpr uint32_t kRelaCopy = 5;      // R_X86_64_COPY
constexpr uint32_t kRelaGlobDat = 6;   // R_X86_64_GLOB_DAT
constexpr uint32_t kRelaRelative = 8;  // R_X86_64_RELATIVE

struct Reader {
    const std::vector<uint8_t>& b;

    uint64_t u64(size_t off) const {
        check(off, 8);
        uint64_t v;
        std::memcpy(&v, b.data() + off, 8);
        return v;
    }
    uint32_t u32(size_t off) const {
        check(off, 4);
        uint32_t v;
        std::memcpy(&v, b.data() + off, 4);
        return v;
    }
    uint16_t u16(size_t off) const {
        check(off, 2);
        uint16_t v;
        std::memcpy(&v, b.data() + off, 2);
        return v;
    }
    uint8_t u8(size_t off) const {
        check(off, 1);
        return b[off];
    }
    void check(size_t off, size_t n) const {
        if (off + n > b.size()) throw MalformedElf("truncated ELF structure");
    }
};

std::string read_cstr(const std::vector<uint8_t>& bytes, size_t off) {
    std::string s;
    while (off < bytes.size() && bytes[off] != 0) s += static_cast<char>(bytes[off++]);
    return s;
}

}  // namespace

const char* section_kind_name(SectionKind k) {
    switch (k) {
        case SectionKind::rodata: return "rodata";
        case SectionKind::data_rel_ro: return "data_rel_ro";
        case SectionKind::bss: return "bss";
        case SectionKind::text: return "text";
        case SectionKind::plt: return "plt";
        case SectionKind::extern_stub: return "extern";
        case SectionKind::got: return "got";
        case SectionKind::data: return "data";
        case SectionKind::other: return "other";
    }
    return "other";
}

SectionKind classify_section(const std::string& name, bool write, bool execute, bool nobits) {
    if (name == ".text" || name == "text") return SectionKind::text;
    if (name == ".plt" || name == ".plt.got" || name == ".plt.sec" || name == "plt")
        return SectionKind::plt;
    if (name == ".extern" || name == "extern") return SectionKind::extern_stub;
    if (name == ".got" || name == ".got.plt" || name == "got") return SectionKind::got;
    if (name == ".data.rel.ro" || name == "data.rel.ro") return SectionKind::data_rel_ro;
    if (name == ".rodata" || name == "rodata") return SectionKind::rodata;
    if (name == ".bss" || name == "bss") return SectionKind::bss;
    if (name == ".data" || name == "data") return SectionKind::data;
    // Stripped binaries may rename sections; fall back to permissions.
    if (execute) return SectionKind::text;
    if (nobits) return SectionKind::bss;
    if (!write) return SectionKind::rodata;
    return SectionKind::other;
}

const Section* ElfImage::section_at(uint64_t addr) const {
    for (const auto& s : sections)
        if (s.contains(addr)) return &s;
    return nullptr;
}

bool ElfImage::points_to_kind(uint64_t addr, SectionKind k) const {
    const Section* s = section_at(addr);
    return s && s->kind == k;
}

bool ElfImage::is_code_target(uint64_t addr) const {
    const Section* s = section_at(addr);
    return s && (s->kind == SectionKind::text || s->kind == SectionKind::plt ||
                 s->kind == SectionKind::extern_stub);
}

ElfImage load_elf(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 64) throw MalformedElf("file too small for ELF64 header");
    if (bytes[0] != 0x7f || bytes[1] != 'E' || bytes[2] != 'L' || bytes[3] != 'F')
        throw MalformedElf("bad ELF magic");
    if (bytes[4] != 2) throw UnsupportedClass("not ELF64");
    if (bytes[5] != 1) throw UnsupportedClass("not little-endian");

    Reader r{bytes};
    if (r.u16(18) != kMachineX86_64) throw UnsupportedClass("not x86-64");

    ElfImage img;
    img.entry_point = r.u64(24);
    uint64_t shoff = r.u64(40);
    uint16_t shentsize = r.u16(58);
    uint16_t shnum = r.u16(60);
    uint16_t shstrndx = r.u16(62);
    if (shnum == 0 || shentsize < 64) throw MalformedElf("missing section headers");
    if (shstrndx >= shnum) throw MalformedElf("bad section string table index");

    struct RawSection {
        std::string name;
        uint32_t type;
        uint64_t flags, vaddr, offset, size, link, entsize;
    };
    std::vector<RawSection> raw(shnum);

    auto sh = [&](uint16_t i) { return shoff + static_cast<uint64_t>(i) * shentsize; };
    r.check(sh(shnum - 1), 64);

    uint64_t stroff = r.u64(sh(shstrndx) + 24);
    uint64_t strsize = r.u64(sh(shstrndx) + 32);
    if (stroff + strsize > bytes.size()) throw MalformedElf("truncated shstrtab");

    for (uint16_t i = 0; i < shnum; ++i) {
        uint64_t base = sh(i);
        uint32_t name_off = r.u32(base);
        raw[i].type = r.u32(base + 4);
        raw[i].flags = r.u64(base + 8);
        raw[i].vaddr = r.u64(base + 16);
        raw[i].offset = r.u64(base + 24);
        raw[i].size = r.u64(base + 32);
        raw[i].link = r.u32(base + 40);
        raw[i].entsize = r.u64(base + 56);
        if (name_off < strsize) raw[i].name = read_cstr(bytes, stroff + name_off);
    }

    // Allocated sections become the address-space model.
    for (const auto& s : raw) {
        if (!(s.flags & kShfAlloc) || s.size == 0) continue;
        Section sec;
        sec.name = s.name;
        sec.vaddr = s.vaddr;
        sec.size = s.size;
        sec.write = (s.flags & kShfWrite) != 0;
        sec.execute = (s.flags & kShfExec) != 0;
        sec.kind = classify_section(s.name, sec.write, sec.execute, s.type == kShtNobits);
        // Keep kind consistent with permissions even for misleading names;
        // .data.rel.ro stays read-only-kind because the loader seals it.
        if (sec.kind == SectionKind::text && !sec.execute)
            sec.kind = classify_section("", sec.write, sec.execute, s.type == kShtNobits);
        if (sec.kind == SectionKind::rodata && sec.write) sec.kind = SectionKind::data;
        if (s.type != kShtNobits) {
            if (s.offset + s.size > bytes.size()) throw MalformedElf("section data out of range");
            sec.bytes.assign(bytes.begin() + s.offset, bytes.begin() + s.offset + s.size);
        }
        for (const auto& prev : img.sections) {
            bool overlap = sec.vaddr < prev.vaddr + prev.size && prev.vaddr < sec.vaddr + sec.size;
            if (overlap) throw MalformedElf("overlapping sections " + prev.name + "/" + sec.name);
        }
        img.sections.push_back(std::move(sec));
    }
    std::sort(img.sections.begin(), img.sections.end(),
              [](const Section& a, const Section& b) { return a.vaddr < b.vaddr; });

    // Symbol tables. Relocations index the dynamic table; a regular .symtab
    // additionally contributes function entries (it is where `main` lives
    // in ordinary binaries).
    size_t dynsym_count = 0;
    auto read_symbols = [&](const RawSection& tab) {
        if (tab.entsize != 24) throw MalformedElf("bad symbol entry size");
        if (tab.link >= shnum) throw MalformedElf("bad symtab link");
        const auto& strtab = raw[tab.link];
        size_t count = tab.size / 24;
        for (size_t k = 1; k < count; ++k) {
            uint64_t off = tab.offset + k * 24;
            uint32_t name_off = r.u32(off);
            uint8_t info = r.u8(off + 4);
            uint16_t shndx = r.u16(off + 6);
            DynSymbol sym;
            sym.name = read_cstr(bytes, strtab.offset + name_off);
            sym.vaddr = r.u64(off + 8);
            sym.size = r.u64(off + 16);
            sym.defined = shndx != 0;
            sym.is_func = (info & 0xf) == 2;  // STT_FUNC
            img.dyn_symbols.push_back(std::move(sym));
        }
    };
    for (uint16_t i = 0; i < shnum; ++i)
        if (raw[i].type == kShtDynsym) {
            read_symbols(raw[i]);
            dynsym_count = img.dyn_symbols.size();
            break;
        }
    for (uint16_t i = 0; i < shnum; ++i)
        if (raw[i].type == kShtSymtab) {
            read_symbols(raw[i]);
            break;
        }
    // Drop duplicates the second table re-introduces.
    {
        std::set<std::pair<std::string, uint64_t>> seen;
        std::vector<DynSymbol> merged;
        for (size_t k = 0; k < img.dyn_symbols.size(); ++k) {
            const auto& sym = img.dyn_symbols[k];
            if (k >= dynsym_count && !seen.insert({sym.name, sym.vaddr}).second) continue;
            if (k < dynsym_count) seen.insert({sym.name, sym.vaddr});
            merged.push_back(sym);
        }
        dynsym_count = std::min(dynsym_count, merged.size());
        img.dyn_symbols = std::move(merged);
    }

    // Relocations.
    for (uint16_t i = 0; i < shnum; ++i) {
        if (raw[i].type != kShtRela) continue;
        size_t count = raw[i].size / 24;
        for (size_t k = 0; k < count; ++k) {
            uint64_t off = raw[i].offset + k * 24;
            Relocation rel;
            rel.site = r.u64(off);
            uint64_t info = r.u64(off + 8);
            uint32_t type = static_cast<uint32_t>(info & 0xffffffff);
            uint32_t symidx = static_cast<uint32_t>(info >> 32);
            int64_t addend = static_cast<int64_t>(r.u64(off + 16));
            if (symidx != 0 && symidx - 1 < img.dyn_symbols.size())
                rel.target_symbol = img.dyn_symbols[symidx - 1].name;
            rel.kind = type == kRelaCopy      ? Relocation::Kind::copy
                       : type == kRelaGlobDat ? Relocation::Kind::glob_dat
                                              : Relocation::Kind::other;
            if (!img.is_mapped(rel.site))
                throw MalformedElf("relocation site outside the image address space");
            img.reloc_sites.insert(rel.site);

            // GOT slots get their load-time targets resolved statically:
            // concrete for intra-image definitions, symbolic for imports.
            if (img.points_to_kind(rel.site, SectionKind::got)) {
                GotTarget t;
                if (type == kRelaRelative) {
                    t.addr = static_cast<uint64_t>(addend);
                } else if (!rel.target_symbol.empty()) {
                    t.symbol = rel.target_symbol;
                    for (const auto& sym : img.dyn_symbols)
                        if (sym.name == rel.target_symbol && sym.defined) t.addr = sym.vaddr;
                }
                img.got_entries[rel.site] = std::move(t);
            }
            if (rel.kind == Relocation::Kind::copy) {
                for (auto& sym : img.dyn_symbols)
                    if (sym.name == rel.target_symbol) sym.is_copy_relocated = true;
            }
            img.relocations.push_back(std::move(rel));
        }
    }

    // Copy-relocated data normally lands in bss; linkers place read-only
    // copy targets in data.rel.ro instead, so both (and plain data) pass.
    auto is_copy_home = [&](uint64_t addr) {
        const Section* s = img.section_at(addr);
        return s && (s->kind == SectionKind::bss || s->kind == SectionKind::data_rel_ro ||
                     s->kind == SectionKind::data || s->kind == SectionKind::other);
    };
    for (const auto& sym : img.dyn_symbols) {
        if (!sym.is_copy_relocated) continue;
        uint64_t last = sym.size ? sym.vaddr + sym.size - 1 : sym.vaddr;
        if (!is_copy_home(sym.vaddr) || !is_copy_home(last))
            throw MalformedElf("copy-relocated symbol outside data sections: " + sym.name);
    }
    return img;
}

std::optional<uint64_t> read_word(const ElfImage& img, uint64_t addr) {
    const Section* s = img.section_at(addr);
    if (!s || !s->has_contents()) return std::nullopt;
    if (addr + 8 > s->vaddr + s->size) return std::nullopt;
    uint64_t v;
    std::memcpy(&v, s->bytes.data() + (addr - s->vaddr), 8);
    return v;
}

GotTarget resolve_got(const ElfImage& img, uint64_t got_slot) {
    auto it = img.got_entries.find(got_slot);
    if (it == img.got_entries.end()) throw NotAGotSlot("no GOT entry at this address");
    return it->second;
}

}  // namespace vps
