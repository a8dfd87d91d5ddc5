#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "support/fixtures.hpp"
#include "vps/errors.hpp"
#include "vps/mir.hpp"

using namespace vps;

TEST_CASE("three-line vcall pattern parses to three instructions") {
    auto prog = parse_mir_text(
        "func f @0x400000\n"
        "  0x400000: mov rdi, rbx\n"
        "  0x400003: load rcx, [rbx]\n"
        "  0x400006: call [rcx + 0x8]\n");
    REQUIRE(prog.functions.size() == 1);
    const auto& f = prog.functions[0];
    REQUIRE(f.instrs.size() == 3);
    CHECK(f.instrs[0].op == Op::move);
    CHECK(*f.instrs[0].dst == Reg::rdi);
    CHECK(f.instrs[1].op == Op::load);
    CHECK(f.instrs[1].mem->base == Reg::rbx);
    CHECK(f.instrs[2].op == Op::call_indirect);
    CHECK(f.instrs[2].mem->disp == 8);
}

TEST_CASE("duplicate instruction address is a syntax error") {
    CHECK_THROWS_AS(parse_mir_text("func f @0x1\n"
                                   "  0x1: ret\n"
                                   "  0x1: ret\n"),
                    MirSyntax);
}

TEST_CASE("syntax errors carry line numbers") {
    try {
        parse_mir_text("func f @0x1\n  0x1: frob rax\n");
        FAIL("should have thrown");
    } catch (const MirSyntax& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("operand and address forms") {
    auto prog = parse_mir_text(
        "func f @0x10\n"
        "  0x10: lea rax, [0x601000]\n"
        "  0x14: lea rbx, [rax + 0x10]\n"
        "  0x18: load rcx, [rax + rbx*8 - 0x20]\n"
        "  0x1c: store [rbp - 0x8], 0x7\n"
        "  0x20: add rax, 0x10\n"
        "  0x24: sub rsp, 0x20\n"
        "  0x28: call @0x400\n"
        "  0x2d: call rax\n"
        "  0x30: bcc 0x10\n"
        "  0x34: clobber rax, rdx\n"
        "  0x38: ret\n"
        "data rodata @0x601000 ro : 0x0 0xfffffffffffffff0 0x400\n");
    const auto& f = prog.functions[0];
    CHECK(f.instrs[0].mem->is_absolute());
    CHECK(f.instrs[2].mem->index == Reg::rbx);
    CHECK(f.instrs[2].mem->scale == 8);
    CHECK(f.instrs[2].mem->disp == -0x20);
    CHECK(f.instrs[3].mem->disp == -8);
    CHECK(f.instrs[3].srcs[0].imm == 7);
    CHECK(prog.call_graph_edges.count({0x28, 0x400}) == 1);
    CHECK(prog.data[0].words[1] == 0xfffffffffffffff0ULL);
}

TEST_CASE("round-trip of every corpus fixture yields an equal program") {
    for (const auto& e : vps::testing::mir_corpus()) {
        CAPTURE(e.name);
        auto prog = parse_mir_text(vps::testing::read_file(e.mir_path));
        auto text = serialize_mir(prog);
        auto again = parse_mir_text(text);
        CHECK(prog == again);
        // Canonical form is a fixed point.
        CHECK(serialize_mir(again) == text);
    }
}

TEST_CASE("random programs round-trip through the canonical form") {
    std::mt19937_64 rng(0x5eed);
    for (int trial = 0; trial < 50; ++trial) {
        MicroProgram prog;
        MirFunction f;
        f.name = "gen";
        f.entry = 0x400000;
        uint64_t addr = f.entry;
        int len = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < len; ++i) {
            MicroInstr ins;
            ins.addr = addr;
            addr += 1 + rng() % 7;
            Reg r1 = static_cast<Reg>(rng() % kRegCount);
            Reg r2 = static_cast<Reg>(rng() % kRegCount);
            switch (rng() % 8) {
                case 0:
                    ins.op = Op::move;
                    ins.dst = r1;
                    ins.srcs.push_back(rng() % 2 ? Operand::make_reg(r2)
                                                 : Operand::make_imm(rng() % 0x10000));
                    break;
                case 1:
                    ins.op = Op::load;
                    ins.dst = r1;
                    ins.mem = AddrExpr{r2, std::nullopt, 1,
                                       static_cast<int64_t>(rng() % 64) - 32};
                    break;
                case 2:
                    ins.op = Op::store;
                    ins.mem = AddrExpr{r2, std::nullopt, 1, 0};
                    ins.srcs.push_back(Operand::make_reg(r1));
                    break;
                case 3:
                    ins.op = Op::lea;
                    ins.dst = r1;
                    ins.mem = AddrExpr{r2, static_cast<Reg>(rng() % kRegCount),
                                       static_cast<uint8_t>(1 << (rng() % 4)),
                                       static_cast<int64_t>(rng() % 256)};
                    break;
                case 4:
                    ins.op = Op::add;
                    ins.dst = r1;
                    ins.srcs.push_back(Operand::make_imm(rng() % 256));
                    break;
                case 5:
                    ins.op = Op::call_direct;
                    ins.target = 0x400000 + rng() % 0x100;
                    break;
                case 6:
                    ins.op = Op::clobber;
                    ins.clobbers.push_back(r1);
                    break;
                default:
                    ins.op = Op::ret;
                    break;
            }
            f.instrs.push_back(std::move(ins));
        }
        prog.functions.push_back(std::move(f));
        rebuild_call_graph(prog);
        auto text = serialize_mir(prog);
        CAPTURE(text);
        auto again = parse_mir_text(text);
        CHECK(prog == again);
    }
}

TEST_CASE("arbitrary input never crashes the parser") {
    std::mt19937_64 rng(0xfeed);
    const std::string alphabet = "func data mov load store call ret bcc jmp rax rdi [](),@:+-*0x123456789abcdef \n\t#";
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        size_t len = rng() % 200;
        for (size_t i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
        try {
            auto prog = parse_mir_text(text);
            // Whatever parsed must survive the canonical round trip.
            CHECK(parse_mir_text(serialize_mir(prog)) == prog);
        } catch (const MirSyntax&) {
            // rejected inputs are fine; crashes are not
        }
    }
}
