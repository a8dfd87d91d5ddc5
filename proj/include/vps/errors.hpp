#pragma once

#include <stdexcept>
#include <string>

namespace vps {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ELF loading
struct MalformedElf : Error {
    using Error::Error;
};
struct UnsupportedClass : Error {
    using Error::Error;
};
struct NotAGotSlot : Error {
    using Error::Error;
};

// Micro-IR
struct MirSyntax : Error {
    MirSyntax(int line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line(line) {}
    int line;
};
struct NoExecutableCode : Error {
    using Error::Error;
};

// Runtime / CLI
struct StepBudgetExceeded : Error {
    using Error::Error;
};
struct CacheHashMismatch : Error {
    using Error::Error;
};
struct MissingArtifacts : Error {
    using Error::Error;
};
struct BadScenario : Error {
    using Error::Error;
};
struct TruthMismatch : Error {
    using Error::Error;
};

}  // namespace vps
