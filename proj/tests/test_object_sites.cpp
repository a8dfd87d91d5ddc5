#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/fixtures.hpp"
#include "vps/pipeline.hpp"

using namespace vps;
using vps::testing::analyze_fixture;
using vps::testing::mir_corpus;

namespace {

const vps::testing::CorpusEntry& corpus_entry(const std::string& name) {
    static auto corpus = mir_corpus();
    for (const auto& e : corpus)
        if (e.name == name) return e;
    throw std::runtime_error("missing fixture " + name);
}

}  // namespace

TEST_CASE("canonical constructor: one object-field site") {
    auto r = analyze_fixture(corpus_entry("f01_straightline"));
    REQUIRE(r->sites.size() == 1);
    CHECK(r->sites[0].instr_addr == 0x400008);
    CHECK(r->sites[0].vtable_addr == 0x601010);
    CHECK(r->sites[0].dest_kind == DestKind::object_field);
}

TEST_CASE("inlined constructor through a stack slot: three sites") {
    auto r = analyze_fixture(corpus_entry("f07_stack_temp"));
    REQUIRE(r->sites.size() == 3);
    CHECK(r->sites[0].instr_addr == 0x400004);
    CHECK(r->sites[0].dest_kind == DestKind::stack_temp_overapprox);
    CHECK(r->sites[1].instr_addr == 0x400014);
    CHECK(r->sites[1].dest_kind == DestKind::object_field);
    CHECK(r->sites[2].instr_addr == 0x40001c);
    CHECK(r->sites[2].dest_kind == DestKind::object_field);
}

TEST_CASE("base-then-derived writes preserve program order at one destination") {
    auto r = analyze_fixture(corpus_entry("f02_fig1_classes"));
    REQUIRE(r->sites.size() == 4);
    // ctor_a, ctor_b, then the derived class's two writes, program order.
    CHECK(r->sites[0].instr_addr == 0x400304);
    CHECK(r->sites[0].vtable_addr == 0x601010);
    CHECK(r->sites[1].instr_addr == 0x400314);
    CHECK(r->sites[1].vtable_addr == 0x601030);
    CHECK(r->sites[2].instr_addr == 0x400334);
    CHECK(r->sites[2].vtable_addr == 0x601050);
    CHECK(r->sites[3].instr_addr == 0x40033c);
    CHECK(r->sites[3].vtable_addr == 0x601070);
    // All are first-argument destinations, none stack-flagged.
    for (const auto& s : r->sites) CHECK(s.dest_kind == DestKind::object_field);
}

TEST_CASE("stores through clobbered base chains are skipped, not guessed") {
    auto r = vps::testing::analyze_mir_text(
        "func f @0x400000\n"
        "  0x400000: lea rax, [0x601010]\n"
        "  0x400004: clobber rbx\n"
        "  0x400008: store [rbx], rax\n"
        "  0x40000c: ret\n"
        "func vf @0x400100\n"
        "  0x400100: ret\n"
        "data rodata @0x601000 ro : 0x0 0x0 0x400100\n");
    CHECK(r->sites.empty());
}

TEST_CASE("stored-immediate reference is its own write site") {
    auto r = vps::testing::analyze_mir_text(
        "func f @0x400000\n"
        "  0x400000: store [rdi], 0x601010\n"
        "  0x400004: ret\n"
        "func vf @0x400100\n"
        "  0x400100: ret\n"
        "data rodata @0x601000 ro : 0x0 0x0 0x400100\n");
    REQUIRE(r->sites.size() == 1);
    CHECK(r->sites[0].instr_addr == 0x400000);
    CHECK(r->sites[0].vtable_addr == 0x601010);
}

TEST_CASE("every site's stored chain reaches a reference and a known table") {
    for (const auto& e : mir_corpus()) {
        CAPTURE(e.name);
        auto r = analyze_fixture(e);
        for (const auto& s : r->sites) {
            CHECK(r->vts.is_known(s.vtable_addr));
            CHECK(s.via_ref.vtable_addr == s.vtable_addr);
        }
        // Order preservation within each function.
        for (size_t i = 1; i < r->sites.size(); ++i)
            if (r->sites[i - 1].func == r->sites[i].func)
                CHECK(r->sites[i - 1].instr_index <= r->sites[i].instr_index);
    }
}

TEST_CASE("corpus object sites match annotations exactly, stack extras aside") {
    for (const auto& e : mir_corpus()) {
        CAPTURE(e.name);
        auto r = analyze_fixture(e);
        auto truth = load_ground_truth(e.truth_path);
        std::set<uint64_t> expect(truth.object_sites.begin(), truth.object_sites.end());
        std::set<uint64_t> got;
        for (const auto& s : r->sites) got.insert(s.instr_addr);
        for (uint64_t a : expect) CHECK(got.count(a) == 1);
        for (const auto& s : r->sites)
            if (!expect.count(s.instr_addr))
                CHECK(s.dest_kind == DestKind::stack_temp_overapprox);
    }
}

TEST_CASE("arithmetic other than the metadata adjustment is not a reference") {
    // The stored value equals a vtable address but is computed by +0x8,
    // which is not one of the recognized reference shapes.
    auto r = vps::testing::analyze_mir_text(
        "func f @0x400000\n"
        "  0x400000: lea rax, [0x601008]\n"
        "  0x400004: add rax, 0x8\n"
        "  0x400008: store [rdi], rax\n"
        "  0x40000c: ret\n"
        "func vf @0x400100\n"
        "  0x400100: ret\n"
        "data rodata @0x601000 ro : 0x0 0x0 0x400100\n");
    CHECK(r->refs.empty());
    CHECK(r->sites.empty());
}
