#include "support/fixtures.hpp"

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace vps::testing {

std::string fixture_dir() { return VPS_FIXTURE_DIR; }
std::string cli_path() { return VPS_CLI_PATH; }

std::vector<CorpusEntry> mir_corpus() {
    std::vector<CorpusEntry> out;
    for (const auto& e : fs::directory_iterator(fixture_dir())) {
        if (e.path().extension() != ".mir") continue;
        CorpusEntry c;
        c.name = e.path().stem().string();
        c.mir_path = e.path().string();
        c.truth_path = (e.path().parent_path() / (c.name + ".truth.json")).string();
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(),
              [](const CorpusEntry& a, const CorpusEntry& b) { return a.name < b.name; });
    if (out.empty()) throw std::runtime_error("no fixtures found in " + fixture_dir());
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::string make_temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    fs::path dir = fs::temp_directory_path() /
                   ("vps_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir.string();
}

std::unique_ptr<vps::AnalysisResult> analyze_fixture(const CorpusEntry& e) {
    return vps::analyze_file(e.mir_path, "mir");
}

std::unique_ptr<vps::AnalysisResult> analyze_mir_text(const std::string& text) {
    vps::MicroProgram prog = vps::parse_mir_text(text);
    vps::ElfImage img = vps::image_from_mir(prog);
    return vps::analyze_program(std::move(img), std::move(prog));
}

int run_command(const std::string& cmd, std::string* output) {
    std::string full = cmd + " 2>&1";
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed");
    std::string out;
    std::array<char, 4096> buf;
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
    int rc = pclose(pipe);
    if (output) *output = out;
    return WEXITSTATUS(rc);
}

}  // namespace vps::testing
