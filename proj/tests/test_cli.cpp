#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support/elf_builder.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using vps::testing::cli_path;
using vps::testing::fixture_dir;
using vps::testing::make_temp_dir;
using vps::testing::run_command;
using vps::testing::write_file;

namespace {

std::string q(const std::string& s) { return "'" + s + "'"; }

}  // namespace

TEST_CASE("analyze a fixture and emit the three artifacts") {
    auto out = make_temp_dir("cli_analyze");
    std::string log;
    int rc = run_command(q(cli_path()) + " analyze " +
                             q(fixture_dir() + "/f02_fig1_classes.mir") + " --out " + q(out),
                         &log);
    CAPTURE(log);
    CHECK(rc == 0);
    CHECK(fs::exists(out + "/vtables.json"));
    CHECK(fs::exists(out + "/object_sites.json"));
    CHECK(fs::exists(out + "/vcalls.json"));
}

TEST_CASE("analyze an empty fixture: empty artifacts, exit 0") {
    auto out = make_temp_dir("cli_empty");
    std::string log;
    int rc = run_command(q(cli_path()) + " analyze " + q(fixture_dir() + "/f21_empty.mir") +
                             " --out " + q(out),
                         &log);
    CHECK(rc == 0);
    CHECK(vps::testing::read_file(out + "/vcalls.json").find('{') == std::string::npos);
}

TEST_CASE("corrupt ELF input exits 2") {
    auto dir = make_temp_dir("cli_corrupt");
    write_file(dir + "/corrupt.elf", "this is not an elf");
    std::string log;
    int rc = run_command(q(cli_path()) + " analyze " + q(dir + "/corrupt.elf") +
                             " --format elf --out " + q(dir + "/out"),
                         &log);
    CHECK(rc == 2);
    CHECK(log.find("error") != std::string::npos);
}

TEST_CASE("profile requires analyze artifacts first") {
    auto out = make_temp_dir("cli_profile_missing");
    std::string log;
    int rc = run_command(q(cli_path()) + " profile " +
                             q(fixture_dir() + "/f10_cstyle_fp.mir") + " --entry main --out " +
                             q(out),
                         &log);
    CHECK(rc == 2);
    CHECK(log.find("vcalls.json") != std::string::npos);
}

TEST_CASE("profile promotes executed candidates and removes planted FPs") {
    auto out = make_temp_dir("cli_profile");
    std::string log;
    std::string fixture = q(fixture_dir() + "/f10_cstyle_fp.mir");
    REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) == 0);
    int rc = run_command(
        q(cli_path()) + " profile " + fixture + " --entry main --out " + q(out), &log);
    CAPTURE(log);
    CHECK(rc == 0);
    auto vcalls = vps::testing::read_file(out + "/vcalls.json");
    CHECK(vcalls.find("removed") != std::string::npos);
}

TEST_CASE("protect-sim: benign scenario is clean, trace written") {
    auto out = make_temp_dir("cli_protect");
    std::string fixture = q(fixture_dir() + "/f02_fig1_classes.mir");
    std::string log;
    REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) == 0);
    write_file(out + "/benign.json", R"({"entry": "main", "attack": []})");
    int rc = run_command(q(cli_path()) + " protect-sim " + fixture + " --scenario " +
                             q(out + "/benign.json") + " --out " + q(out),
                         &log);
    CAPTURE(log);
    CHECK(rc == 0);
    CHECK(log.find("verdict: clean") != std::string::npos);
    CHECK(fs::exists(out + "/trace.jsonl"));
}

TEST_CASE("protect-sim: hijack scenario reports the violating site") {
    auto out = make_temp_dir("cli_hijack");
    std::string fixture = q(fixture_dir() + "/f01_straightline.mir");
    std::string log;
    REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) == 0);
    write_file(out + "/hijack.json",
               R"({"entry": "main",
                   "attack": [{"step": 4, "action": "write",
                               "addr": "0x700000", "value": "0x123456"}]})");
    int rc = run_command(q(cli_path()) + " protect-sim " + fixture + " --scenario " +
                             q(out + "/hijack.json") + " --out " + q(out),
                         &log);
    CHECK(rc == 0);
    CHECK(log.find("verdict: violation site=0x400014") != std::string::npos);
}

TEST_CASE("protect-sim: bad scenario exits 2") {
    auto out = make_temp_dir("cli_badscenario");
    std::string fixture = q(fixture_dir() + "/f01_straightline.mir");
    std::string log;
    REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) == 0);
    write_file(out + "/bad.json", R"({"attack": []})");
    int rc = run_command(q(cli_path()) + " protect-sim " + fixture + " --scenario " +
                             q(out + "/bad.json") + " --out " + q(out),
                         &log);
    CHECK(rc == 2);
}

TEST_CASE("report compares against truth and writes metrics.json") {
    auto out = make_temp_dir("cli_report");
    std::string fixture = q(fixture_dir() + "/f02_fig1_classes.mir");
    std::string truth = q(fixture_dir() + "/f02_fig1_classes.truth.json");
    std::string log;
    REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) == 0);
    int rc = run_command(q(cli_path()) + " report " + fixture + " --truth " + truth +
                             " --out " + q(out),
                         &log);
    CAPTURE(log);
    CHECK(rc == 0);
    CHECK(log.find("100.0") != std::string::npos);
    CHECK(fs::exists(out + "/metrics.json"));
}

TEST_CASE("analyze an ELF binary end to end") {
    auto dir = make_temp_dir("cli_elf");
    auto fx = vps::testing::elf_fixture_classes();
    {
        std::ofstream f(dir + "/classes.so", std::ios::binary);
        f.write(reinterpret_cast<const char*>(fx.bytes.data()), fx.bytes.size());
    }
    write_file(dir + "/classes.so.truth.json", fx.truth_json);
    std::string log;
    int rc = run_command(q(cli_path()) + " analyze " + q(dir + "/classes.so") + " --out " +
                             q(dir + "/out"),
                         &log);
    CAPTURE(log);
    CHECK(rc == 0);
    rc = run_command(q(cli_path()) + " report " + q(dir + "/classes.so") + " --truth " +
                         q(dir + "/classes.so.truth.json") + " --out " + q(dir + "/out"),
                     &log);
    CAPTURE(log);
    CHECK(rc == 0);
    CHECK(log.find("n.a.") == std::string::npos);
}

TEST_CASE("protect-sim: probe scenario reports probing") {
    auto out = make_temp_dir("cli_probe");
    std::string fixture = q(fixture_dir() + "/f01_straightline.mir");
    std::string log;
    REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) == 0);
    write_file(out + "/probe.json",
               R"({"entry": "main",
                   "attack": [{"step": 1, "action": "safe_read",
                               "key": "0x700800", "secret": "correct"}]})");
    int rc = run_command(q(cli_path()) + " protect-sim " + fixture + " --scenario " +
                             q(out + "/probe.json") + " --out " + q(out),
                         &log);
    CAPTURE(log);
    CHECK(rc == 0);
    CHECK(log.find("verdict: probing") != std::string::npos);
}

TEST_CASE("profile leaves never-executed candidates untouched") {
    auto out = make_temp_dir("cli_profile_cold");
    std::string fixture = q(fixture_dir() + "/f20_cold_candidate.mir");
    std::string log;
    REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) == 0);
    REQUIRE(run_command(q(cli_path()) + " profile " + fixture + " --entry main --out " + q(out),
                        &log) == 0);
    auto vcalls = vps::testing::read_file(out + "/vcalls.json");
    CHECK(vcalls.find("\"candidate\"") != std::string::npos);       // cold site
    CHECK(vcalls.find("\"static_verified\"") != std::string::npos); // hot site
}

TEST_CASE("analyze-then-report round trips deterministically") {
    auto out1 = make_temp_dir("cli_det1");
    auto out2 = make_temp_dir("cli_det2");
    std::string fixture = q(fixture_dir() + "/f02_fig1_classes.mir");
    std::string truth = q(fixture_dir() + "/f02_fig1_classes.truth.json");
    std::string log;
    for (const auto& out : {out1, out2}) {
        REQUIRE(run_command(q(cli_path()) + " analyze " + fixture + " --out " + q(out), &log) ==
                0);
        REQUIRE(run_command(q(cli_path()) + " report " + fixture + " --truth " + truth +
                                " --out " + q(out),
                            &log) == 0);
    }
    CHECK(vps::testing::read_file(out1 + "/metrics.json") ==
          vps::testing::read_file(out2 + "/metrics.json"));
    CHECK(vps::testing::read_file(out1 + "/vtables.json") ==
          vps::testing::read_file(out2 + "/vtables.json"));
}
