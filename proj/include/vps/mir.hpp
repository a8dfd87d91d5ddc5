#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vps {

// General-purpose registers, in hardware encoding order.
enum class Reg : uint8_t {
    rax = 0, rcx, rdx, rbx, rsp, rbp, rsi, rdi,
    r8, r9, r10, r11, r12, r13, r14, r15,
};
constexpr int kRegCount = 16;

// System V argument registers in order; rdi carries the first argument
// (the thisptr at a virtual callsite), rax the return value.
constexpr Reg kArgRegs[6] = {Reg::rdi, Reg::rsi, Reg::rdx, Reg::rcx, Reg::r8, Reg::r9};
constexpr Reg kRetReg = Reg::rax;

const char* reg_name(Reg r);
std::optional<Reg> reg_from_name(std::string_view name);

enum class Op : uint8_t {
    move,
    load,
    store,
    lea,
    add,
    sub,
    call_direct,
    call_indirect,
    ret,
    jump,
    branch_cond,
    clobber,
};

// base + index*scale + disp; absolute addresses have neither base nor index.
struct AddrExpr {
    std::optional<Reg> base;
    std::optional<Reg> index;
    uint8_t scale = 1;
    int64_t disp = 0;

    bool is_absolute() const { return !base && !index; }
    bool operator==(const AddrExpr&) const = default;
};

struct Operand {
    enum class Kind : uint8_t { reg, imm } kind = Kind::imm;
    Reg reg = Reg::rax;
    uint64_t imm = 0;

    static Operand make_reg(Reg r) { return {Kind::reg, r, 0}; }
    static Operand make_imm(uint64_t v) { return {Kind::imm, Reg::rax, v}; }
    bool is_reg() const { return kind == Kind::reg; }
    bool is_imm() const { return kind == Kind::imm; }
    bool operator==(const Operand&) const = default;
};

struct MicroInstr {
    uint64_t addr = 0;
    Op op = Op::clobber;
    std::optional<Reg> dst;           // move/load/lea/add/sub result register
    std::vector<Operand> srcs;        // move/store/add/sub source; register call target
    std::optional<AddrExpr> mem;      // load/store/lea/call_indirect address;
                                      // on clobber: instruction may write unknown memory
    uint64_t target = 0;              // call_direct / jump / branch_cond destination
    std::vector<Reg> clobbers;        // registers overwritten by an unmodeled instruction
    int8_t sp_adjust = 0;             // push/pop implicit rsp update (-8 / +8)
    uint32_t size = 1;                // encoded length in bytes

    bool operator==(const MicroInstr&) const = default;
};

struct MirFunction {
    uint64_t entry = 0;
    std::string name;
    std::vector<MicroInstr> instrs;  // sorted by address, disjoint ranges across functions

    bool operator==(const MirFunction&) const = default;
};

struct DataSection {
    std::string name;
    uint64_t vaddr = 0;
    bool writable = false;
    std::vector<uint64_t> words;

    bool operator==(const DataSection&) const = default;
};

// Byte range in an executable section that the decoder could not lift.
struct GapRecord {
    uint64_t addr = 0;
    uint64_t size = 0;

    bool operator==(const GapRecord&) const = default;
};

struct MicroProgram {
    std::vector<MirFunction> functions;
    std::vector<DataSection> data;
    std::set<std::pair<uint64_t, uint64_t>> call_graph_edges;  // (caller instr, callee entry)
    std::vector<GapRecord> gaps;

    const MirFunction* function_at(uint64_t entry) const;
    // (function index, instruction index) for an instruction address.
    std::optional<std::pair<uint32_t, uint32_t>> locate(uint64_t addr) const;

    bool operator==(const MicroProgram& o) const {
        return functions == o.functions && data == o.data &&
               call_graph_edges == o.call_graph_edges && gaps == o.gaps;
    }
};

// Textual fixture format. Throws MirSyntax on malformed input.
MicroProgram parse_mir_text(const std::string& text);

// Canonical form; re-parsing yields an equal program.
std::string serialize_mir(const MicroProgram& prog);

// Recomputes call_graph_edges from call_direct instructions.
void rebuild_call_graph(MicroProgram& prog);

}  // namespace vps
