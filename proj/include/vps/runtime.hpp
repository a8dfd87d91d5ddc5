#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "vps/elf_image.hpp"
#include "vps/mir.hpp"
#include "vps/object_sites.hpp"
#include "vps/vcall.hpp"
#include "vps/vtable.hpp"

namespace vps {

// Safe-region addressing: object addresses translate down by a 64 TB
// displacement, then a register-held random offset is added for every
// access. Pages start inaccessible and are enabled on demand by the
// runtime's own write path; any other touch of an inaccessible page is a
// probing attempt.
struct SafeRegion {
    uint64_t displacement = 1ULL << 46;  // 64 TB
    uint64_t offset_secret = 0;
    uint64_t page_size = 4096;
    std::set<uint64_t> accessible_pages;
    uint64_t pages_flipped = 0;

    uint64_t translate(uint64_t obj_addr) const { return obj_addr - displacement; }
    uint64_t slot(uint64_t obj_addr) const { return translate(obj_addr) + offset_secret; }
    // Region membership for raw addresses (object keys below the
    // displacement wrap to the top of the address space).
    bool contains(uint64_t addr) const {
        return addr - offset_secret + displacement < displacement;
    }
    uint64_t page_of(uint64_t addr) const { return addr / page_size; }
};

enum class Hook : uint8_t { analysis_hook, security_hook, none };

const char* hook_name(Hook h);

struct InstrumentationTable {
    std::map<uint64_t, Hook> site_states;
    bool patched_from_cache = false;

    // analysis_hook -> {security_hook, none}; never reinstalled.
    void transition(uint64_t site, Hook to);
};

struct Event {
    uint64_t step = 0;
    std::string kind;  // vtblptr_write, vcall_check, profile_check, violation,
                       // probing, hotpatch
    uint64_t instr_addr = 0;
    uint64_t arg0 = 0, arg1 = 0;
    std::string note;
};

struct MachineState {
    std::array<uint64_t, kRegCount> regs{};
    std::unordered_map<uint64_t, uint8_t> memory;
    uint64_t pc = 0;
    std::vector<uint64_t> call_stack;
    std::vector<Event> event_log;
    uint64_t steps = 0;

    enum class Stop : uint8_t { running, finished, violation, probing, budget, error };
    Stop stop = Stop::running;
    std::string stop_detail;
    uint64_t stop_site = 0;
};

struct AttackAction {
    uint64_t step = 0;
    enum class Kind : uint8_t { write, safe_write, safe_read, realloc, call_through } kind;
    uint64_t addr = 0, value = 0, size = 0;   // write / realloc
    uint64_t key = 0;                         // safe_write / safe_read
    std::optional<uint64_t> secret;           // nullopt: attacker knows the real offset
    uint64_t vcall = 0, object = 0;           // call_through
};
using AttackScript = std::vector<AttackAction>;

// Parses the scenario's attack array. Throws BadScenario.
AttackScript parse_attack_script(const std::string& json_text);

struct RunConfig {
    uint64_t entry = 0;
    uint64_t step_budget = 10'000'000;
    uint64_t seed = 1;
    std::string branch_bits;  // '1' = branch taken, consumed in order
    const AttackScript* script = nullptr;
    bool profile_only = false;  // classification hooks only, no enforcement
    uint64_t stack_base = 0x7f0000, stack_size = 0x10000;
};

class Machine {
public:
    Machine(const MicroProgram& prog, const ElfImage& img, const VTableSet& vts,
            uint64_t seed);

    // Concrete execution with object-site and vcall instrumentation.
    // Terminates on ret from the entry function, violation, probing,
    // step-budget exhaustion, or an execution error.
    MachineState run(const std::vector<ObjectSite>& sites, std::vector<VCallSite>& vcalls,
                     InstrumentationTable& table, const RunConfig& cfg);

    // Dynamic-profiling classification: does the first argument point at an
    // object whose word 0 is a known vtable?
    bool profile_check_is_vcall(uint64_t thisptr) const;

    // Security instrumentation: safe-region value vs the object's word 0.
    enum class Check : uint8_t { allow, violation };
    Check security_check(uint64_t thisptr);

    enum class Actor : uint8_t { runtime, program, attacker };
    enum class Access : uint8_t { ok, ok_flipped, probing };
    Access safe_region_access(uint64_t region_addr, Actor actor, bool is_write,
                              uint64_t value = 0);

    uint64_t read_u64(uint64_t addr) const;
    void write_u64(uint64_t addr, uint64_t v);
    bool is_mapped(uint64_t addr) const;
    bool region_slot_present(uint64_t slot_addr) const;

    SafeRegion safe;
    MachineState st;

private:
    const MicroProgram& prog_;
    const ElfImage& img_;
    const VTableSet& vts_;
    std::map<uint64_t, std::pair<uint32_t, uint32_t>> instr_loc_;
    std::vector<std::pair<uint64_t, uint64_t>> mapped_;  // [start, end)

    void materialize_image();
    void log(std::string kind, uint64_t instr, uint64_t a0 = 0, uint64_t a1 = 0,
             std::string note = {});
};

// Adaptive result cache: {binary_hash, sites:[{addr, state}]}.
uint64_t program_hash(const MicroProgram& prog);
void save_cache(const std::string& path, const InstrumentationTable& table,
                uint64_t binary_hash);
// Pre-patches verified sites to security hooks and removed sites to none.
// Throws CacheHashMismatch when the hash differs.
void load_cache(const std::string& path, uint64_t binary_hash, InstrumentationTable& table);

}  // namespace vps
