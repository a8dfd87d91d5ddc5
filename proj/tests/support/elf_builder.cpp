#include "support/elf_builder.hpp"

#include <cstring>
#include <map>

namespace vps::testing {

namespace {

void put_u16(std::vector<uint8_t>& v, size_t off, uint16_t x) { std::memcpy(v.data() + off, &x, 2); }
void put_u32(std::vector<uint8_t>& v, size_t off, uint32_t x) { std::memcpy(v.data() + off, &x, 4); }
void put_u64(std::vector<uint8_t>& v, size_t off, uint64_t x) { std::memcpy(v.data() + off, &x, 8); }

void append_u64(std::vector<uint8_t>& v, uint64_t x) {
    size_t off = v.size();
    v.resize(off + 8);
    put_u64(v, off, x);
}

struct StrTab {
    std::vector<uint8_t> bytes{0};
    std::map<std::string, uint32_t> offsets;

    uint32_t add(const std::string& s) {
        if (s.empty()) return 0;
        auto it = offsets.find(s);
        if (it != offsets.end()) return it->second;
        uint32_t off = static_cast<uint32_t>(bytes.size());
        for (char c : s) bytes.push_back(static_cast<uint8_t>(c));
        bytes.push_back(0);
        offsets[s] = off;
        return off;
    }
};

}  // namespace

std::vector<uint8_t> ElfBuilder::build() const {
    // Section list: NULL + user sections + .symtab + .strtab + .rela.dyn + .shstrtab
    StrTab shstr, str;

    struct Sh {
        std::string name;
        uint32_t type;
        uint64_t flags, vaddr, offset, size;
        uint32_t link;
        uint64_t entsize;
        std::vector<uint8_t> bytes;
    };
    std::vector<Sh> shs;
    shs.push_back({"", 0, 0, 0, 0, 0, 0, 0, {}});

    for (const auto& s : sections_) {
        Sh sh{s.name, s.type, s.flags, s.vaddr, 0,
              s.type == 8 ? s.nobits_size : s.bytes.size(), s.link, s.entsize, s.bytes};
        shs.push_back(std::move(sh));
    }

    // Symbol table (SHT_DYNSYM so the loader treats entries as dynamic
    // symbols); index 0 reserved.
    std::vector<uint8_t> symtab(24, 0);
    std::map<std::string, uint32_t> sym_index;
    uint32_t next_sym = 1;
    for (const auto& sym : symbols_) {
        std::vector<uint8_t> e(24, 0);
        put_u32(e, 0, str.add(sym.name));
        e[4] = sym.is_func ? 2 : 1;  // STT_FUNC : STT_OBJECT
        put_u16(e, 6, sym.defined ? 1 : 0);
        put_u64(e, 8, sym.vaddr);
        put_u64(e, 16, sym.size);
        symtab.insert(symtab.end(), e.begin(), e.end());
        sym_index[sym.name] = next_sym++;
    }

    std::vector<uint8_t> rela;
    for (const auto& r : relas_) {
        append_u64(rela, r.site);
        uint32_t idx = r.symbol.empty() ? 0 : sym_index.at(r.symbol);
        append_u64(rela, (static_cast<uint64_t>(idx) << 32) | r.type);
        append_u64(rela, static_cast<uint64_t>(r.addend));
    }

    uint32_t symtab_index = static_cast<uint32_t>(shs.size());
    shs.push_back({".dynsym", 11, 0, 0, 0, symtab.size(), symtab_index + 1, 24, symtab});
    shs.push_back({".dynstr", 3, 0, 0, 0, 0, 0, 0, str.bytes});
    shs.back().size = str.bytes.size();
    if (!rela.empty()) {
        shs.push_back({".rela.dyn", 4, 0, 0, 0, rela.size(), symtab_index, 24, rela});
    }
    shs.push_back({".shstrtab", 3, 0, 0, 0, 0, 0, 0, shstr.bytes});
    uint32_t shstr_index = static_cast<uint32_t>(shs.size() - 1);

    // Layout: ehdr, section data, section headers.
    std::vector<uint8_t> out(64, 0);
    out[0] = 0x7f;
    out[1] = 'E';
    out[2] = 'L';
    out[3] = 'F';
    out[4] = 2;  // ELF64
    out[5] = 1;  // little-endian
    out[6] = 1;
    put_u16(out, 16, 2);   // ET_EXEC
    put_u16(out, 18, 62);  // EM_X86_64
    put_u32(out, 20, 1);
    put_u64(out, 24, entry_);
    put_u16(out, 52, 64);  // ehsize
    put_u16(out, 58, 64);  // shentsize

    // Resolve shstrtab names first (so its own bytes are final).
    std::vector<uint32_t> name_offs;
    for (auto& sh : shs) name_offs.push_back(shstr.add(sh.name));
    shs[shstr_index].bytes = shstr.bytes;
    shs[shstr_index].size = shstr.bytes.size();

    for (auto& sh : shs) {
        if (sh.bytes.empty()) continue;
        sh.offset = out.size();
        out.insert(out.end(), sh.bytes.begin(), sh.bytes.end());
    }
    // Align section header table.
    while (out.size() % 8) out.push_back(0);
    uint64_t shoff = out.size();
    for (size_t i = 0; i < shs.size(); ++i) {
        std::vector<uint8_t> h(64, 0);
        put_u32(h, 0, name_offs[i]);
        put_u32(h, 4, shs[i].type);
        put_u64(h, 8, shs[i].flags);
        put_u64(h, 16, shs[i].vaddr);
        put_u64(h, 24, shs[i].offset);
        put_u64(h, 32, shs[i].size);
        put_u32(h, 40, shs[i].link);
        put_u64(h, 56, shs[i].entsize);
        out.insert(out.end(), h.begin(), h.end());
    }
    put_u64(out, 40, shoff);
    put_u16(out, 60, static_cast<uint16_t>(shs.size()));
    put_u16(out, 62, static_cast<uint16_t>(shstr_index));
    return out;
}

// ---------------------------------------------------------------------------
// Fixture binaries. Code bytes are hand-assembled; the listings in comments
// are the authoritative shapes, cross-checked against a disassembler.

namespace {

constexpr uint64_t kShfWrite = 1, kShfAlloc = 2, kShfExec = 4;

void emit(std::vector<uint8_t>& v, std::initializer_list<int> bytes) {
    for (int b : bytes) v.push_back(static_cast<uint8_t>(b));
}
void emit_movabs(std::vector<uint8_t>& v, int reg_code, uint64_t imm) {
    // 48 b8+r imm64 (rbx=3, rdi=7, rax=0)
    v.push_back(0x48);
    v.push_back(static_cast<uint8_t>(0xb8 + reg_code));
    for (int i = 0; i < 8; ++i) v.push_back(static_cast<uint8_t>(imm >> (8 * i)));
}
void emit_rel32(std::vector<uint8_t>& v, uint8_t opc, uint64_t from_end, uint64_t target) {
    v.push_back(opc);
    int32_t rel = static_cast<int32_t>(target - from_end);
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>(rel >> (8 * i)));
}

std::vector<uint8_t> words(std::initializer_list<uint64_t> ws) {
    std::vector<uint8_t> out;
    for (uint64_t w : ws) append_u64(out, w);
    return out;
}

}  // namespace

ElfFixture elf_fixture_classes() {
    // Models:
    //   struct A { virtual void a1(); virtual void a2(); };
    //   struct B { virtual void b1(); virtual void b2(); };
    //   struct C : A, B { void a1() override; void b2() override; };
    //   int main() { C c; static_cast<B*>(&c)->b2(); }
    // with explicit (non-inlined) constructors.
    const uint64_t text = 0x401000, ro = 0x601000, data = 0x700000;
    const uint64_t vtA = ro + 0x10, vtB = ro + 0x30, vtC = ro + 0x50, vtCsub = ro + 0x70;
    const uint64_t f_a1 = 0x401080, f_a2 = 0x401084, f_b1 = 0x401088, f_b2 = 0x40108c;
    const uint64_t f_ca1 = 0x401090, f_cb2 = 0x401094;
    const uint64_t ctor_a = 0x401030, ctor_b = 0x401040, ctor_c = 0x401050;

    std::vector<uint8_t> t;
    // main @0x401000
    emit(t, {0x55});                    // push rbp
    emit(t, {0x48, 0x89, 0xe5});        // mov rbp, rsp
    emit_movabs(t, 3, data);            // movabs rbx, obj
    emit(t, {0x48, 0x89, 0xdf});        // mov rdi, rbx
    emit_rel32(t, 0xe8, text + t.size() + 5, ctor_c);  // call ctor_c
    emit(t, {0x48, 0x8d, 0x7b, 0x10});  // lea rdi, [rbx+0x10]
    emit(t, {0x48, 0x8b, 0x43, 0x10});  // mov rax, [rbx+0x10]
    emit(t, {0xff, 0x50, 0x08});        // call [rax+8]
    emit(t, {0x5d, 0xc3});              // pop rbp; ret
    while (t.size() < 0x30) t.push_back(0x90);
    // ctor_a @0x401030: this->vtblptr = vtA
    uint64_t site_a = text + t.size() + 10;
    emit_movabs(t, 0, vtA);
    emit(t, {0x48, 0x89, 0x07});  // mov [rdi], rax
    emit(t, {0xc3});
    while (t.size() < 0x40) t.push_back(0x90);
    // ctor_b @0x401040
    uint64_t site_b = text + t.size() + 10;
    emit_movabs(t, 0, vtB);
    emit(t, {0x48, 0x89, 0x07});
    emit(t, {0xc3});
    while (t.size() < 0x50) t.push_back(0x90);
    // ctor_c @0x401050
    emit(t, {0x48, 0x89, 0xfb});  // mov rbx, rdi
    emit_rel32(t, 0xe8, text + t.size() + 5, ctor_a);
    emit(t, {0x48, 0x8d, 0x7b, 0x10});  // lea rdi, [rbx+0x10]
    emit_rel32(t, 0xe8, text + t.size() + 5, ctor_b);
    uint64_t site_c = text + t.size() + 10;
    emit_movabs(t, 0, vtC);
    emit(t, {0x48, 0x89, 0x03});  // mov [rbx], rax
    emit_movabs(t, 0, vtCsub);
    uint64_t site_csub = text + t.size();
    emit(t, {0x48, 0x89, 0x43, 0x10});  // mov [rbx+0x10], rax
    emit(t, {0xc3});
    while (t.size() < 0x80) t.push_back(0x90);
    // virtual functions: ret + pad to 4
    for (int i = 0; i < 6; ++i) emit(t, {0xc3, 0x90, 0x90, 0x90});
    uint64_t vcall_addr = 0x40101e;

    ElfBuilder b;
    b.set_entry(text);
    b.add_section({".text", 1, kShfAlloc | kShfExec, text, t, 0, 0, 0});
    b.add_section({".rodata", 1, kShfAlloc, ro,
                   words({0, 0, f_a1, f_a2,
                          0, 0, f_b1, f_b2,
                          0, 0, f_ca1, f_a2,
                          static_cast<uint64_t>(-0x10), 0, f_b1, f_cb2}),
                   0, 0, 0});
    b.add_section({".data", 1, kShfAlloc | kShfWrite, data, std::vector<uint8_t>(0x40, 0),
                   0, 0, 0});
    b.add_symbol({"main", text, 0x23, true, true});
    b.add_symbol({"ctor_a", ctor_a, 14, true, true});
    b.add_symbol({"ctor_b", ctor_b, 14, true, true});
    b.add_symbol({"ctor_c", ctor_c, 0x2d, true, true});
    b.add_symbol({"f_a1", f_a1, 4, true, true});
    b.add_symbol({"f_a2", f_a2, 4, true, true});
    b.add_symbol({"f_b1", f_b1, 4, true, true});
    b.add_symbol({"f_b2", f_b2, 4, true, true});
    b.add_symbol({"f_ca1", f_ca1, 4, true, true});
    b.add_symbol({"f_cb2", f_cb2, 4, true, true});

    char truth[1024];
    snprintf(truth, sizeof truth,
             R"({"vtables":["0x%llx","0x%llx","0x%llx","0x%llx"],
"object_sites":["0x%llx","0x%llx","0x%llx","0x%llx"],
"vcalls":[{"instr_addr":"0x%llx","label":"vcall","expect_static_verified":true}]})",
             (unsigned long long)vtA, (unsigned long long)vtB, (unsigned long long)vtC,
             (unsigned long long)vtCsub, (unsigned long long)site_a,
             (unsigned long long)site_b, (unsigned long long)site_c,
             (unsigned long long)site_csub, (unsigned long long)vcall_addr);
    return {"classes_fig1", b.build(), truth};
}

ElfFixture elf_fixture_inlined_abstract() {
    // Models:
    //   struct Abstract { virtual void f() = 0; virtual void g() = 0; };
    //   struct Impl : Abstract { void f() override; void g() override; };
    //   int main() { Impl i; Abstract* p = &i; p->f(); }
    // with the constructor fully inlined into main: the abstract vtblptr is
    // written first and immediately overwritten by the derived one.
    const uint64_t text = 0x401000, plt = 0x401100, ro = 0x601000, data = 0x700000;
    const uint64_t vt_abs = ro + 0x10, vt_impl = ro + 0x30;
    const uint64_t impl_f = 0x401030, impl_g = 0x401034, pure_stub = plt;

    std::vector<uint8_t> t;
    emit_movabs(t, 0, vt_abs);          // movabs rax, vt_abs
    emit_movabs(t, 7, data);            // movabs rdi, obj
    uint64_t site_abs = text + t.size();
    emit(t, {0x48, 0x89, 0x07});        // mov [rdi], rax
    emit_movabs(t, 0, vt_impl);
    uint64_t site_impl = text + t.size();
    emit(t, {0x48, 0x89, 0x07});
    emit(t, {0x48, 0x8b, 0x07});        // mov rax, [rdi]
    uint64_t vcall_addr = text + t.size();
    emit(t, {0xff, 0x10});              // call [rax]
    emit(t, {0xc3});
    while (t.size() < 0x30) t.push_back(0x90);
    emit(t, {0xc3, 0x90, 0x90, 0x90});  // impl_f
    emit(t, {0xc3, 0x90, 0x90, 0x90});  // impl_g

    ElfBuilder b;
    b.set_entry(text);
    b.add_section({".text", 1, kShfAlloc | kShfExec, text, t, 0, 0, 0});
    b.add_section({".plt", 1, kShfAlloc | kShfExec, plt,
                   std::vector<uint8_t>{0xc3, 0x90, 0x90, 0x90}, 0, 0, 0});
    b.add_section({".rodata", 1, kShfAlloc, ro,
                   words({0, 0, pure_stub, pure_stub, 0, 0, impl_f, impl_g}), 0, 0, 0});
    b.add_section({".data", 1, kShfAlloc | kShfWrite, data, std::vector<uint8_t>(0x20, 0),
                   0, 0, 0});
    b.add_symbol({"main", text, 0x2a, true, true});
    b.add_symbol({"impl_f", impl_f, 4, true, true});
    b.add_symbol({"impl_g", impl_g, 4, true, true});

    char truth[768];
    snprintf(truth, sizeof truth,
             R"({"vtables":["0x%llx","0x%llx"],
"object_sites":["0x%llx","0x%llx"],
"vcalls":[{"instr_addr":"0x%llx","label":"vcall","expect_static_verified":true}]})",
             (unsigned long long)vt_abs, (unsigned long long)vt_impl,
             (unsigned long long)site_abs, (unsigned long long)site_impl,
             (unsigned long long)vcall_addr);
    return {"inlined_abstract", b.build(), truth};
}

ElfFixture elf_fixture_got_copyreloc() {
    // Models position-independent references: a vtblptr loaded from the GOT
    // (local and imported), a metadata-start reference adjusted by +0x10,
    // and a base-class vtable copy-relocated into bss.
    const uint64_t text = 0x401000, ro = 0x601000, got = 0x680000;
    const uint64_t data = 0x700000, bss = 0x702000;
    const uint64_t vt_local = ro + 0x10;
    const uint64_t vf = 0x401060;
    const uint64_t copied_vt = bss + 0x10;  // first-entry address inside the chunk

    std::vector<uint8_t> t;
    auto rip_load = [&](int reg_code, uint64_t slot) {
        // 48 8b 05+reg*8 disp32  (mov reg, [rip+disp])
        t.push_back(0x48);
        t.push_back(0x8b);
        t.push_back(static_cast<uint8_t>(0x05 | (reg_code << 3)));
        uint64_t next = text + t.size() + 4;
        int32_t disp = static_cast<int32_t>(slot - next);
        for (int i = 0; i < 4; ++i) t.push_back(static_cast<uint8_t>(disp >> (8 * i)));
    };

    rip_load(0, got);                   // mov rax, [rip -> got+0] (local vtable)
    emit_movabs(t, 7, data);
    uint64_t site_got = text + t.size();
    emit(t, {0x48, 0x89, 0x07});        // mov [rdi], rax
    {                                   // lea rax, [rip -> ro] (metadata start)
        t.push_back(0x48);
        t.push_back(0x8d);
        t.push_back(0x05);
        uint64_t next = text + t.size() + 4;
        int32_t disp = static_cast<int32_t>(ro - next);
        for (int i = 0; i < 4; ++i) t.push_back(static_cast<uint8_t>(disp >> (8 * i)));
    }
    emit(t, {0x48, 0x83, 0xc0, 0x10});  // add rax, 0x10
    emit_movabs(t, 7, data + 0x20);
    uint64_t site_meta = text + t.size();
    emit(t, {0x48, 0x89, 0x07});
    emit_movabs(t, 0, copied_vt);       // copy-relocated vtable, direct
    emit_movabs(t, 7, data + 0x40);
    uint64_t site_copy = text + t.size();
    emit(t, {0x48, 0x89, 0x07});
    rip_load(1, got + 8);               // mov rcx, [rip -> got+8] (import)
    uint64_t site_import = text + t.size();
    emit(t, {0x48, 0x89, 0x0f});        // mov [rdi], rcx
    emit(t, {0xc3});
    while (t.size() < 0x60) t.push_back(0x90);
    emit(t, {0xc3, 0x90, 0x90, 0x90});  // vf

    ElfBuilder b;
    b.set_entry(text);
    b.add_section({".text", 1, kShfAlloc | kShfExec, text, t, 0, 0, 0});
    b.add_section({".rodata", 1, kShfAlloc, ro, words({0, 0, vf}), 0, 0, 0});
    b.add_section({".data", 1, kShfAlloc | kShfWrite, data, std::vector<uint8_t>(0x60, 0),
                   0, 0, 0});
    b.add_section({".bss", 8, kShfAlloc | kShfWrite, bss, {}, 0x40, 0, 0});
    b.add_section({".got", 1, kShfAlloc | kShfWrite, got, std::vector<uint8_t>(16, 0),
                   0, 0, 0});
    b.add_symbol({"main", text, 0x5a, true, true});
    b.add_symbol({"vf", vf, 4, true, true});
    b.add_symbol({"local_vtable", vt_local, 0x18, false, true});
    b.add_symbol({"_ZTV8Imported", 0, 0, false, false});
    b.add_symbol({"_ZTV1B", bss, 0x40, false, true});
    b.add_rela({got, 6, "local_vtable", 0});       // GLOB_DAT
    b.add_rela({got + 8, 6, "_ZTV8Imported", 0});  // GLOB_DAT import
    b.add_rela({bss, 5, "_ZTV1B", 0});             // COPY

    char truth[1024];
    snprintf(truth, sizeof truth,
             R"({"vtables":["0x%llx","0x%llx","0x%llx"],
"object_sites":["0x%llx","0x%llx","0x%llx","0x%llx"],
"vcalls":[]})",
             (unsigned long long)vt_local, (unsigned long long)copied_vt,
             (unsigned long long)(got + 8), (unsigned long long)site_got,
             (unsigned long long)site_meta, (unsigned long long)site_copy,
             (unsigned long long)site_import);
    return {"got_copyreloc", b.build(), truth};
}

std::vector<ElfFixture> all_elf_fixtures() {
    return {elf_fixture_classes(), elf_fixture_inlined_abstract(),
            elf_fixture_got_copyreloc()};
}

}  // namespace vps::testing
