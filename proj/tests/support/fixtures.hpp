#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vps/artifacts.hpp"
#include "vps/pipeline.hpp"

namespace vps::testing {

std::string fixture_dir();
std::string cli_path();

// MIR corpus entries: fixtures/<name>.mir with fixtures/<name>.truth.json.
struct CorpusEntry {
    std::string name;
    std::string mir_path;
    std::string truth_path;
};
std::vector<CorpusEntry> mir_corpus();

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

// Unique writable scratch directory under the build tree.
std::string make_temp_dir(const std::string& tag);

// Parses, builds the image, and runs the full static pipeline on a fixture.
std::unique_ptr<vps::AnalysisResult> analyze_fixture(const CorpusEntry& e);
std::unique_ptr<vps::AnalysisResult> analyze_mir_text(const std::string& text);

// Runs a command line, captures stdout+stderr, returns the exit code.
int run_command(const std::string& cmd, std::string* output);

}  // namespace vps::testing
