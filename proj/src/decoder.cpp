#include "vps/decoder.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <set>

#include "vps/errors.hpp"

namespace vps {

namespace {

struct Input {
    const uint8_t* p;
    size_t n;
    size_t pos = 0;

    bool ok(size_t k = 1) const { return pos + k <= n; }
    uint8_t peek() const { return p[pos]; }
    uint8_t u8() { return p[pos++]; }
    int32_t i8() { return static_cast<int8_t>(p[pos++]); }
    int32_t i32() {
        int32_t v;
        std::memcpy(&v, p + pos, 4);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        std::memcpy(&v, p + pos, 8);
        pos += 8;
        return v;
    }
};

struct Rex {
    bool w = false, r = false, x = false, b = false;
};

Reg gpr(uint8_t code) { return static_cast<Reg>(code & 0xf); }

struct ModRm {
    uint8_t mod = 0, reg = 0, rm = 0;
    bool is_reg = false;       // mod == 11
    Reg reg_operand = Reg::rax;
    Reg rm_reg = Reg::rax;     // when is_reg
    AddrExpr mem;              // when !is_reg
    bool rip_relative = false;
    int32_t rip_disp = 0;
};

// Decodes ModRM + SIB + displacement. RIP-relative forms are resolved to an
// absolute address once the instruction end is known.
bool read_modrm(Input& in, const Rex& rex, ModRm& m) {
    if (!in.ok()) return false;
    uint8_t b = in.u8();
    m.mod = b >> 6;
    m.reg = ((b >> 3) & 7) | (rex.r ? 8 : 0);
    m.rm = (b & 7) | (rex.b ? 8 : 0);
    m.reg_operand = gpr(m.reg);
    if (m.mod == 3) {
        m.is_reg = true;
        m.rm_reg = gpr(m.rm);
        return true;
    }
    if ((b & 7) == 4) {  // SIB
        if (!in.ok()) return false;
        uint8_t sib = in.u8();
        uint8_t scale = sib >> 6;
        uint8_t index = ((sib >> 3) & 7) | (rex.x ? 8 : 0);
        uint8_t base = (sib & 7) | (rex.b ? 8 : 0);
        if (index != 4)  // rsp cannot be an index
            m.mem.index = gpr(index), m.mem.scale = static_cast<uint8_t>(1 << scale);
        if ((base & 7) == 5 && m.mod == 0) {
            if (!in.ok(4)) return false;
            m.mem.disp = in.i32();
        } else {
            m.mem.base = gpr(base);
        }
    } else if ((b & 7) == 5 && m.mod == 0) {
        if (!in.ok(4)) return false;
        m.rip_relative = true;
        m.rip_disp = in.i32();
    } else {
        m.mem.base = gpr(m.rm);
    }
    if (m.mod == 1) {
        if (!in.ok()) return false;
        m.mem.disp += in.i8();
    } else if (m.mod == 2) {
        if (!in.ok(4)) return false;
        m.mem.disp += in.i32();
    }
    return true;
}

void finish_rip(ModRm& m, uint64_t next_addr) {
    if (m.rip_relative) {
        m.mem = AddrExpr{};
        m.mem.disp = static_cast<int64_t>(next_addr) + m.rip_disp;
    }
}

}  // namespace

std::optional<MicroInstr> decode_one(const uint8_t* bytes, size_t size, uint64_t vaddr,
                                     uint32_t* len) {
    Input in{bytes, size};
    Rex rex;
    bool has_66 = false, has_f3 = false, has_f2 = false;

    // Legacy + REX prefixes.
    while (in.ok()) {
        uint8_t b = in.peek();
        if (b == 0x66) { has_66 = true; in.u8(); continue; }
        if (b == 0x67 || b == 0xf0 || b == 0x2e || b == 0x36 || b == 0x3e || b == 0x26 ||
            b == 0x64 || b == 0x65) { in.u8(); continue; }
        if (b == 0xf3) { has_f3 = true; in.u8(); continue; }
        if (b == 0xf2) { has_f2 = true; in.u8(); continue; }
        if (b >= 0x40 && b <= 0x4f) {
            rex = {(b & 8) != 0, (b & 4) != 0, (b & 2) != 0, (b & 1) != 0};
            in.u8();
            continue;
        }
        break;
    }
    (void)has_66;
    (void)has_f2;
    if (!in.ok()) return std::nullopt;

    MicroInstr ins;
    ins.addr = vaddr;
    auto done = [&]() {
        ins.size = static_cast<uint32_t>(in.pos);
        *len = ins.size;
        return std::optional<MicroInstr>(ins);
    };
    auto mem_or_reg_clobber = [&](const ModRm& m, bool writes_rm) {
        ins.op = Op::clobber;
        if (writes_rm && m.is_reg)
            ins.clobbers.push_back(m.rm_reg);
        else if (!writes_rm)
            ins.clobbers.push_back(m.reg_operand);
        if (writes_rm && !m.is_reg) ins.mem = m.mem;  // may write unknown memory
    };

    uint8_t op = in.u8();

    switch (op) {
        // mov r/m64, r64  (store or reg move)
        case 0x89: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            if (m.is_reg) {
                ins.op = Op::move;
                ins.dst = m.rm_reg;
                ins.srcs.push_back(Operand::make_reg(m.reg_operand));
            } else {
                ins.op = Op::store;
                ins.mem = m.mem;
                ins.srcs.push_back(Operand::make_reg(m.reg_operand));
            }
            return done();
        }
        // mov r64, r/m64  (load or reg move)
        case 0x8b: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            if (m.is_reg) {
                ins.op = Op::move;
                ins.dst = m.reg_operand;
                ins.srcs.push_back(Operand::make_reg(m.rm_reg));
            } else {
                ins.op = Op::load;
                ins.dst = m.reg_operand;
                ins.mem = m.mem;
            }
            return done();
        }
        // lea r64, m
        case 0x8d: {
            ModRm m;
            if (!read_modrm(in, rex, m) || m.is_reg) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            ins.op = Op::lea;
            ins.dst = m.reg_operand;
            ins.mem = m.mem;
            return done();
        }
        // mov r/m, imm32
        case 0xc7: {
            ModRm m;
            if (!read_modrm(in, rex, m) || m.reg % 8 != 0) return std::nullopt;
            finish_rip(m, vaddr + in.pos + 4);
            if (!in.ok(4)) return std::nullopt;
            uint64_t imm = static_cast<uint64_t>(static_cast<int64_t>(in.i32()));
            if (m.is_reg) {
                ins.op = Op::move;
                ins.dst = m.rm_reg;
                ins.srcs.push_back(Operand::make_imm(imm));
            } else {
                ins.op = Op::store;
                ins.mem = m.mem;
                ins.srcs.push_back(Operand::make_imm(imm));
            }
            return done();
        }
        // add/sub/cmp r/m64, imm
        case 0x81:
        case 0x83: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            int ext = m.reg % 8;
            int64_t imm;
            if (op == 0x83) {
                if (!in.ok()) return std::nullopt;
                imm = in.i8();
            } else {
                if (!in.ok(4)) return std::nullopt;
                imm = in.i32();
            }
            finish_rip(m, vaddr + in.pos);
            if (ext == 7) {  // cmp: flags only
                ins.op = Op::clobber;
                return done();
            }
            if ((ext == 0 || ext == 5) && m.is_reg) {
                ins.op = ext == 0 ? Op::add : Op::sub;
                ins.dst = m.rm_reg;
                ins.srcs.push_back(Operand::make_imm(static_cast<uint64_t>(imm)));
                return done();
            }
            // Other ALU immediates: result clobbered.
            mem_or_reg_clobber(m, true);
            return done();
        }
        // add/sub r/m, r and r, r/m
        case 0x01:
        case 0x29: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            if (m.is_reg) {
                ins.op = op == 0x01 ? Op::add : Op::sub;
                ins.dst = m.rm_reg;
                ins.srcs.push_back(Operand::make_reg(m.reg_operand));
            } else {
                ins.op = Op::clobber;  // read-modify-write on memory
                ins.mem = m.mem;
            }
            return done();
        }
        case 0x03:
        case 0x2b: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            if (m.is_reg) {
                ins.op = op == 0x03 ? Op::add : Op::sub;
                ins.dst = m.reg_operand;
                ins.srcs.push_back(Operand::make_reg(m.rm_reg));
            } else {
                ins.op = Op::clobber;  // operand from memory; value unmodeled
                ins.clobbers.push_back(m.reg_operand);
            }
            return done();
        }
        // xor r/m, r / r, r/m: self-xor is a zero move
        case 0x31:
        case 0x33: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            if (m.is_reg && m.rm_reg == m.reg_operand) {
                ins.op = Op::move;
                ins.dst = m.rm_reg;
                ins.srcs.push_back(Operand::make_imm(0));
            } else {
                mem_or_reg_clobber(m, op == 0x31);
            }
            return done();
        }
        // and/or
        case 0x09:
        case 0x21: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, true);
            return done();
        }
        case 0x0b:
        case 0x23: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, false);
            return done();
        }
        // test r/m, r
        case 0x85:
        case 0x84: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            ins.op = Op::clobber;  // flags only
            return done();
        }
        // cmp r/m,r / r,r/m
        case 0x39:
        case 0x3b:
        case 0x38:
        case 0x3a: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            ins.op = Op::clobber;
            return done();
        }
        case 0x3d:  // cmp rax, imm32
            if (!in.ok(4)) return std::nullopt;
            in.i32();
            ins.op = Op::clobber;
            return done();
        // push/pop r64
        case 0x50: case 0x51: case 0x52: case 0x53:
        case 0x54: case 0x55: case 0x56: case 0x57: {
            ins.op = Op::store;
            ins.mem = AddrExpr{Reg::rsp, std::nullopt, 1, 0};
            ins.srcs.push_back(Operand::make_reg(gpr((op - 0x50) | (rex.b ? 8 : 0))));
            ins.sp_adjust = -8;
            return done();
        }
        case 0x58: case 0x59: case 0x5a: case 0x5b:
        case 0x5c: case 0x5d: case 0x5e: case 0x5f: {
            ins.op = Op::load;
            ins.dst = gpr((op - 0x58) | (rex.b ? 8 : 0));
            ins.mem = AddrExpr{Reg::rsp, std::nullopt, 1, 0};
            ins.sp_adjust = 8;
            return done();
        }
        case 0x68: {  // push imm32
            if (!in.ok(4)) return std::nullopt;
            int32_t imm = in.i32();
            ins.op = Op::store;
            ins.mem = AddrExpr{Reg::rsp, std::nullopt, 1, 0};
            ins.srcs.push_back(Operand::make_imm(static_cast<uint64_t>(imm)));
            ins.sp_adjust = -8;
            return done();
        }
        case 0x6a: {  // push imm8
            if (!in.ok()) return std::nullopt;
            int32_t imm = in.i8();
            ins.op = Op::store;
            ins.mem = AddrExpr{Reg::rsp, std::nullopt, 1, 0};
            ins.srcs.push_back(Operand::make_imm(static_cast<uint64_t>(imm)));
            ins.sp_adjust = -8;
            return done();
        }
        // movabs r64, imm64 / mov r32, imm32
        case 0xb8: case 0xb9: case 0xba: case 0xbb:
        case 0xbc: case 0xbd: case 0xbe: case 0xbf: {
            uint64_t imm;
            if (rex.w) {
                if (!in.ok(8)) return std::nullopt;
                imm = in.u64();
            } else {
                if (!in.ok(4)) return std::nullopt;
                imm = static_cast<uint32_t>(in.i32());
            }
            ins.op = Op::move;
            ins.dst = gpr((op - 0xb8) | (rex.b ? 8 : 0));
            ins.srcs.push_back(Operand::make_imm(imm));
            return done();
        }
        case 0xe8: {  // call rel32
            if (!in.ok(4)) return std::nullopt;
            int32_t rel = in.i32();
            ins.op = Op::call_direct;
            ins.target = vaddr + in.pos + rel;
            return done();
        }
        case 0xe9: {  // jmp rel32
            if (!in.ok(4)) return std::nullopt;
            int32_t rel = in.i32();
            ins.op = Op::jump;
            ins.target = vaddr + in.pos + rel;
            return done();
        }
        case 0xeb: {  // jmp rel8
            if (!in.ok()) return std::nullopt;
            int32_t rel = in.i8();
            ins.op = Op::jump;
            ins.target = vaddr + in.pos + rel;
            return done();
        }
        case 0xc3:
            ins.op = Op::ret;
            return done();
        case 0xc2: {  // ret imm16
            if (!in.ok(2)) return std::nullopt;
            in.u8();
            in.u8();
            ins.op = Op::ret;
            return done();
        }
        case 0x90:
            ins.op = Op::clobber;
            return done();
        case 0xcc:
        case 0xf4:  // int3 / hlt
            ins.op = Op::clobber;
            return done();
        case 0xc9:  // leave
            ins.op = Op::clobber;
            ins.clobbers = {Reg::rsp, Reg::rbp};
            return done();
        case 0x98:  // cwde/cdqe
            ins.op = Op::clobber;
            ins.clobbers = {Reg::rax};
            return done();
        case 0x99:  // cdq/cqo
            ins.op = Op::clobber;
            ins.clobbers = {Reg::rdx};
            return done();
        // shifts and rotates
        case 0xc0:
        case 0xc1: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            if (!in.ok()) return std::nullopt;
            in.u8();  // shift count
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, true);
            return done();
        }
        case 0xd0:
        case 0xd1:
        case 0xd2:
        case 0xd3: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, true);
            return done();
        }
        // mov r/m8, imm8
        case 0xc6: {
            ModRm m;
            if (!read_modrm(in, rex, m) || m.reg % 8 != 0) return std::nullopt;
            if (!in.ok()) return std::nullopt;
            in.u8();
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, true);
            return done();
        }
        // 8-bit ALU, immediate and register forms
        case 0x80: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            if (!in.ok()) return std::nullopt;
            in.u8();
            finish_rip(m, vaddr + in.pos);
            if (m.reg % 8 == 7)
                ins.op = Op::clobber;  // cmp: flags only
            else
                mem_or_reg_clobber(m, true);
            return done();
        }
        case 0x00:
        case 0x08:
        case 0x18:
        case 0x20:
        case 0x28:
        case 0x30: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, true);
            return done();
        }
        case 0x02:
        case 0x0a:
        case 0x1a:
        case 0x22:
        case 0x2a:
        case 0x32: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, false);
            return done();
        }
        // unary group: test/not/neg/mul/div
        case 0xf6:
        case 0xf7: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            int ext = m.reg % 8;
            if (ext == 0 || ext == 1) {  // test imm
                int imm_len = op == 0xf6 ? 1 : 4;
                if (!in.ok(imm_len)) return std::nullopt;
                in.pos += imm_len;
                ins.op = Op::clobber;
                return done();
            }
            finish_rip(m, vaddr + in.pos);
            if (ext == 2 || ext == 3) {  // not/neg
                mem_or_reg_clobber(m, true);
            } else {  // mul/imul/div/idiv
                ins.op = Op::clobber;
                ins.clobbers = {Reg::rax, Reg::rdx};
            }
            return done();
        }
        case 0xff: {
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            int ext = m.reg % 8;
            if (ext == 2) {  // call r/m64
                ins.op = Op::call_indirect;
                if (m.is_reg)
                    ins.srcs.push_back(Operand::make_reg(m.rm_reg));
                else
                    ins.mem = m.mem;
                return done();
            }
            if (ext == 4) {  // jmp r/m64: an unresolved transfer; treat as ret
                ins.op = Op::ret;
                return done();
            }
            if (ext == 6 && !m.is_reg) {  // push m64
                ins.op = Op::clobber;
                ins.clobbers = {Reg::rsp};
                return done();
            }
            if (ext == 0 || ext == 1) {  // inc/dec
                mem_or_reg_clobber(m, true);
                return done();
            }
            return std::nullopt;
        }
        case 0xa8:  // test al, imm8
            if (!in.ok()) return std::nullopt;
            in.u8();
            ins.op = Op::clobber;
            return done();
        case 0xa9:  // test eax, imm32
            if (!in.ok(4)) return std::nullopt;
            in.i32();
            ins.op = Op::clobber;
            return done();
    }

    // jcc rel8
    if (op >= 0x70 && op <= 0x7f) {
        if (!in.ok()) return std::nullopt;
        int32_t rel = in.i8();
        ins.op = Op::branch_cond;
        ins.target = vaddr + in.pos + rel;
        return done();
    }

    // Two-byte opcodes.
    if (op == 0x0f) {
        if (!in.ok()) return std::nullopt;
        uint8_t op2 = in.u8();
        if (op2 >= 0x80 && op2 <= 0x8f) {  // jcc rel32
            if (!in.ok(4)) return std::nullopt;
            int32_t rel = in.i32();
            ins.op = Op::branch_cond;
            ins.target = vaddr + in.pos + rel;
            return done();
        }
        if (op2 == 0xb6 || op2 == 0xb7 || op2 == 0xbe || op2 == 0xbf) {  // movzx/movsx
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            if (m.is_reg) {
                ins.op = Op::move;
                ins.dst = m.reg_operand;
                ins.srcs.push_back(Operand::make_reg(m.rm_reg));
            } else {
                ins.op = Op::load;
                ins.dst = m.reg_operand;
                ins.mem = m.mem;
            }
            return done();
        }
        if (op2 == 0xaf) {  // imul r64, r/m64
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            ins.op = Op::clobber;
            ins.clobbers.push_back(m.reg_operand);
            return done();
        }
        if (op2 == 0x1f) {  // multi-byte nop
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            ins.op = Op::clobber;
            return done();
        }
        if (op2 == 0x1e && has_f3) {  // endbr64/endbr32
            if (!in.ok()) return std::nullopt;
            in.u8();
            ins.op = Op::clobber;
            return done();
        }
        if (op2 == 0xa2) {  // cpuid
            ins.op = Op::clobber;
            ins.clobbers = {Reg::rax, Reg::rbx, Reg::rcx, Reg::rdx};
            return done();
        }
        if (op2 >= 0x90 && op2 <= 0x9f) {  // setcc r/m8
            ModRm m;
            if (!read_modrm(in, rex, m)) return std::nullopt;
            finish_rip(m, vaddr + in.pos);
            mem_or_reg_clobber(m, true);
            return done();
        }
        if (op2 == 0x0b) {  // ud2
            ins.op = Op::clobber;
            return done();
        }
        return std::nullopt;
    }

    // movsxd r64, r/m32
    if (op == 0x63) {
        ModRm m;
        if (!read_modrm(in, rex, m)) return std::nullopt;
        finish_rip(m, vaddr + in.pos);
        if (m.is_reg) {
            ins.op = Op::move;
            ins.dst = m.reg_operand;
            ins.srcs.push_back(Operand::make_reg(m.rm_reg));
        } else {
            ins.op = Op::load;
            ins.dst = m.reg_operand;
            ins.mem = m.mem;
        }
        return done();
    }

    // mov r/m8, r8 and friends used in string init; treat as unknown store.
    if (op == 0x88) {
        ModRm m;
        if (!read_modrm(in, rex, m)) return std::nullopt;
        finish_rip(m, vaddr + in.pos);
        ins.op = Op::clobber;
        if (!m.is_reg) ins.mem = m.mem;
        return done();
    }

    return std::nullopt;
}

MicroProgram decode(const ElfImage& img) {
    MicroProgram prog;
    struct Decoded {
        std::vector<MicroInstr> instrs;
        const Section* sec;
    };
    std::vector<Decoded> per_section;
    bool any_exec = false;

    for (const auto& sec : img.sections) {
        if (!sec.execute) continue;
        any_exec = true;
        if (!sec.has_contents() || sec.size == 0) continue;
        Decoded d;
        d.sec = &sec;
        uint64_t off = 0;
        uint64_t gap_start = UINT64_MAX;
        while (off < sec.size) {
            uint32_t len = 0;
            auto ins = decode_one(sec.bytes.data() + off, sec.size - off, sec.vaddr + off, &len);
            if (ins) {
                if (gap_start != UINT64_MAX) {
                    prog.gaps.push_back({gap_start, sec.vaddr + off - gap_start});
                    gap_start = UINT64_MAX;
                }
                d.instrs.push_back(std::move(*ins));
                off += len;
            } else {
                if (gap_start == UINT64_MAX) gap_start = sec.vaddr + off;
                ++off;
            }
        }
        if (gap_start != UINT64_MAX)
            prog.gaps.push_back({gap_start, sec.vaddr + sec.size - gap_start});
        per_section.push_back(std::move(d));
    }
    if (!any_exec) throw NoExecutableCode("image has no executable section");
    bool any_instr = false;
    for (const auto& d : per_section) any_instr |= !d.instrs.empty();
    if (!any_instr) throw NoExecutableCode("executable sections are empty");

    // Function entries: defined function symbols, direct-call targets, and
    // the image entry point; instructions belong to the nearest entry below.
    std::set<uint64_t> entries;
    std::map<uint64_t, std::string> names;
    for (const auto& sym : img.dyn_symbols)
        if (sym.defined && sym.is_func && img.is_code_target(sym.vaddr)) {
            entries.insert(sym.vaddr);
            names[sym.vaddr] = sym.name;
        }
    for (const auto& d : per_section)
        for (const auto& ins : d.instrs)
            if (ins.op == Op::call_direct) entries.insert(ins.target);
    if (img.entry_point) entries.insert(img.entry_point);

    for (auto& d : per_section) {
        if (d.instrs.empty()) continue;
        std::vector<uint64_t> local{d.instrs.front().addr};
        for (uint64_t e : entries)
            if (e >= d.sec->vaddr && e < d.sec->vaddr + d.sec->size) local.push_back(e);
        std::sort(local.begin(), local.end());
        local.erase(std::unique(local.begin(), local.end()), local.end());

        size_t base = prog.functions.size();
        for (uint64_t e : local) {
            MirFunction f;
            f.entry = e;
            auto nit = names.find(e);
            char buf[32];
            snprintf(buf, sizeof buf, "sub_%llx", static_cast<unsigned long long>(e));
            f.name = nit != names.end() ? nit->second : buf;
            prog.functions.push_back(std::move(f));
        }
        for (auto& ins : d.instrs) {
            auto it = std::upper_bound(local.begin(), local.end(), ins.addr);
            size_t which = static_cast<size_t>(it - local.begin()) - 1;
            prog.functions[base + which].instrs.push_back(std::move(ins));
        }
    }
    std::erase_if(prog.functions, [](const MirFunction& f) { return f.instrs.empty(); });
    rebuild_call_graph(prog);
    return prog;
}

}  // namespace vps
