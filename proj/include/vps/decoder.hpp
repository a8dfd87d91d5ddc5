#pragma once

#include <optional>

#include "vps/elf_image.hpp"
#include "vps/mir.hpp"

namespace vps {

// Lifts the analysis-relevant x86-64 subset from executable sections:
// mov/movzx/movsx, lea, add/sub, push/pop, call/jmp/jcc/ret, test/cmp
// (flags abstracted), xor-self as zero. Everything else decodable becomes a
// clobber of its written registers; undecodable bytes become gap records.
// Function boundaries come from defined function symbols, direct-call
// targets, and the image entry point. Throws NoExecutableCode when the
// image has no non-empty executable section.
MicroProgram decode(const ElfImage& img);

// Single-instruction lift at `vaddr`; nullopt when outside the decodable
// set. `len` receives the encoded length on success.
std::optional<MicroInstr> decode_one(const uint8_t* bytes, size_t size, uint64_t vaddr,
                                     uint32_t* len);

}  // namespace vps
