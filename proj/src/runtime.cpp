#include "vps/runtime.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "vps/errors.hpp"

namespace vps {

using nlohmann::json;

const char* hook_name(Hook h) {
    switch (h) {
        case Hook::analysis_hook: return "analysis_hook";
        case Hook::security_hook: return "security_hook";
        case Hook::none: return "none";
    }
    return "none";
}

void InstrumentationTable::transition(uint64_t site, Hook to) {
    auto it = site_states.find(site);
    if (it == site_states.end()) throw std::logic_error("unknown instrumented site");
    bool ok = it->second == Hook::analysis_hook &&
              (to == Hook::security_hook || to == Hook::none);
    if (!ok)
        throw std::logic_error(std::string("illegal hook transition ") +
                               hook_name(it->second) + " -> " + hook_name(to));
    it->second = to;
}

// ---------------------------------------------------------------------------

Machine::Machine(const MicroProgram& prog, const ElfImage& img, const VTableSet& vts,
                 uint64_t seed)
    : prog_(prog), img_(img), vts_(vts) {
    for (uint32_t fi = 0; fi < prog.functions.size(); ++fi)
        for (uint32_t ii = 0; ii < prog.functions[fi].instrs.size(); ++ii)
            instr_loc_[prog.functions[fi].instrs[ii].addr] = {fi, ii};
    std::mt19937_64 rng(seed);
    // Page-aligned register-held offset; small enough that wrong guesses
    // stay inside the region band.
    safe.offset_secret = ((rng() % 0xff) + 1) * safe.page_size;
    materialize_image();
}

void Machine::materialize_image() {
    for (const auto& sec : img_.sections) {
        mapped_.push_back({sec.vaddr, sec.vaddr + sec.size});
        for (size_t i = 0; i < sec.bytes.size(); ++i)
            st.memory[sec.vaddr + i] = sec.bytes[i];
    }
    // GOT slots hold their load-time targets; import slots hold their own
    // address, which doubles as the symbolic vtable key.
    for (const auto& [slot, target] : img_.got_entries)
        write_u64(slot, target.is_symbolic() ? slot : *target.addr);
}

bool Machine::is_mapped(uint64_t addr) const {
    for (auto [lo, hi] : mapped_)
        if (addr >= lo && addr + 8 <= hi) return true;
    return false;
}

uint64_t Machine::read_u64(uint64_t addr) const {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v <<= 8;
        auto it = st.memory.find(addr + i);
        v |= it == st.memory.end() ? 0 : it->second;
    }
    return v;
}

void Machine::write_u64(uint64_t addr, uint64_t v) {
    for (int i = 0; i < 8; ++i) st.memory[addr + i] = static_cast<uint8_t>(v >> (8 * i));
}

bool Machine::region_slot_present(uint64_t slot_addr) const {
    return st.memory.count(slot_addr) != 0;
}

void Machine::log(std::string kind, uint64_t instr, uint64_t a0, uint64_t a1,
                  std::string note) {
    st.event_log.push_back({st.steps, std::move(kind), instr, a0, a1, std::move(note)});
}

bool Machine::profile_check_is_vcall(uint64_t thisptr) const {
    if (!is_mapped(thisptr)) return false;
    uint64_t word0 = read_u64(thisptr);
    return vts_.is_known(word0);
}

Machine::Check Machine::security_check(uint64_t thisptr) {
    uint64_t slot = safe.slot(thisptr);
    if (!safe.accessible_pages.count(safe.page_of(slot))) return Check::violation;
    if (!region_slot_present(slot)) return Check::violation;
    uint64_t stored = read_u64(slot);
    if (!is_mapped(thisptr)) return Check::violation;
    return stored == read_u64(thisptr) ? Check::allow : Check::violation;
}

Machine::Access Machine::safe_region_access(uint64_t region_addr, Actor actor,
                                            bool is_write, uint64_t value) {
    uint64_t page = safe.page_of(region_addr);
    bool accessible = safe.accessible_pages.count(page) != 0;
    if (!accessible) {
        if (actor == Actor::runtime && is_write) {
            safe.accessible_pages.insert(page);
            ++safe.pages_flipped;
            write_u64(region_addr, value);
            return Access::ok_flipped;
        }
        // Probing: detected and execution stops. The page state is left as
        // is; the cache on disk is untouched.
        return Access::probing;
    }
    if (is_write) write_u64(region_addr, value);
    return Access::ok;
}

// ---------------------------------------------------------------------------

namespace {

uint64_t eval_addr(const std::array<uint64_t, kRegCount>& regs, const AddrExpr& a) {
    uint64_t v = static_cast<uint64_t>(a.disp);
    if (a.base) v += regs[static_cast<int>(*a.base)];
    if (a.index) v += regs[static_cast<int>(*a.index)] * a.scale;
    return v;
}

}  // namespace

MachineState Machine::run(const std::vector<ObjectSite>& sites,
                          std::vector<VCallSite>& vcalls, InstrumentationTable& table,
                          const RunConfig& cfg) {
    std::map<uint64_t, const ObjectSite*> site_at;
    for (const auto& s : sites) site_at[s.instr_addr] = &s;
    std::map<uint64_t, VCallSite*> vcall_at;
    for (auto& v : vcalls) vcall_at[v.instr_addr] = &v;

    mapped_.push_back({cfg.stack_base, cfg.stack_base + cfg.stack_size});
    st.regs[static_cast<int>(Reg::rsp)] = cfg.stack_base + cfg.stack_size - 8;
    st.pc = cfg.entry;
    size_t branch_cursor = 0;
    size_t script_cursor = 0;

    auto stop = [&](MachineState::Stop why, uint64_t site, std::string detail) {
        st.stop = why;
        st.stop_site = site;
        st.stop_detail = std::move(detail);
    };

    auto attacker_write = [&](uint64_t addr, uint64_t value) {
        if (safe.contains(addr)) {
            if (safe_region_access(addr, Actor::attacker, true, value) == Access::probing) {
                log("probing", st.pc, addr);
                stop(MachineState::Stop::probing, st.pc, "attacker touched a guarded page");
            }
        } else {
            write_u64(addr, value);
        }
    };
    auto attacker_read = [&](uint64_t addr) {
        if (safe.contains(addr) &&
            safe_region_access(addr, Actor::attacker, false) == Access::probing) {
            log("probing", st.pc, addr);
            stop(MachineState::Stop::probing, st.pc, "attacker touched a guarded page");
        }
    };

    // Analysis or security hook at a candidate vcall; returns false when the
    // run must stop.
    auto dispatch_vcall_hooks = [&](const MicroInstr& ins) -> bool {
        auto vit = vcall_at.find(ins.addr);
        if (vit == vcall_at.end()) return true;
        auto hit = table.site_states.find(ins.addr);
        if (hit == table.site_states.end()) return true;
        VCallSite& vc = *vit->second;
        uint64_t thisptr = st.regs[static_cast<int>(kArgRegs[0])];

        if (hit->second == Hook::analysis_hook) {
            bool is_vcall = profile_check_is_vcall(thisptr);
            log("profile_check", ins.addr, thisptr, 0,
                is_vcall ? "is_vcall" : "is_false_positive");
            if (cfg.profile_only) {
                if (is_vcall) {
                    if (vc.state == VcState::candidate ||
                        vc.state == VcState::static_verified)
                        vc.set_state(VcState::dyn_verified);
                } else if (vc.state == VcState::candidate) {
                    vc.set_state(VcState::removed);
                }
                table.transition(ins.addr,
                                 is_vcall ? Hook::security_hook : Hook::none);
                return true;
            }
            if (!is_vcall) {
                // A C-style callsite: drop all instrumentation for good.
                table.transition(ins.addr, Hook::none);
                if (vc.state == VcState::candidate) vc.set_state(VcState::removed);
                log("hotpatch", ins.addr, 0, 0, "removed");
                return true;
            }
            table.transition(ins.addr, Hook::security_hook);
            if (vc.state == VcState::candidate) vc.set_state(VcState::dyn_verified);
            log("hotpatch", ins.addr, 0, 0, "security");
            // Fall through: run the security check immediately.
            hit->second = Hook::security_hook;
        }
        if (hit->second == Hook::security_hook && !cfg.profile_only) {
            Check c = security_check(thisptr);
            if (c == Check::allow) {
                log("vcall_check", ins.addr, thisptr, 0, "allow");
                return true;
            }
            log("violation", ins.addr, thisptr, 0, "vtblptr integrity check failed");
            stop(MachineState::Stop::violation, ins.addr, "vtblptr integrity check failed");
            return false;
        }
        return true;
    };

    auto run_script_actions = [&]() {
        while (cfg.script && script_cursor < cfg.script->size() &&
               (*cfg.script)[script_cursor].step <= st.steps) {
            const AttackAction& a = (*cfg.script)[script_cursor++];
            switch (a.kind) {
                case AttackAction::Kind::write:
                    attacker_write(a.addr, a.value);
                    break;
                case AttackAction::Kind::safe_write: {
                    uint64_t guess = a.secret.value_or(safe.offset_secret);
                    attacker_write(safe.translate(a.key) + guess, a.value);
                    break;
                }
                case AttackAction::Kind::safe_read: {
                    uint64_t guess = a.secret.value_or(safe.offset_secret);
                    attacker_read(safe.translate(a.key) + guess);
                    break;
                }
                case AttackAction::Kind::realloc:
                    for (uint64_t i = 0; i < a.size; ++i) st.memory[a.addr + i] = 0;
                    break;
                case AttackAction::Kind::call_through:
                    st.regs[static_cast<int>(kArgRegs[0])] = a.object;
                    st.call_stack.push_back(st.pc);
                    st.pc = a.vcall;
                    break;
            }
            if (st.stop != MachineState::Stop::running) return;
        }
    };

    while (st.stop == MachineState::Stop::running) {
        run_script_actions();
        if (st.stop != MachineState::Stop::running) break;
        if (st.steps >= cfg.step_budget) {
            stop(MachineState::Stop::budget, st.pc, "step budget exceeded");
            break;
        }
        auto loc = instr_loc_.find(st.pc);
        if (loc == instr_loc_.end()) {
            stop(MachineState::Stop::error, st.pc, "pc outside the program");
            break;
        }
        uint32_t fi = loc->second.first, ii = loc->second.second;
        const MirFunction& fn = prog_.functions[fi];
        const MicroInstr& ins = fn.instrs[ii];
        ++st.steps;

        auto fallthrough = [&]() -> bool {
            if (ii + 1 < fn.instrs.size()) {
                st.pc = fn.instrs[ii + 1].addr;
                return true;
            }
            stop(MachineState::Stop::error, ins.addr, "fell off the end of a function");
            return false;
        };
        auto reg = [&](Reg r) -> uint64_t& { return st.regs[static_cast<int>(r)]; };

        switch (ins.op) {
            case Op::move:
                reg(*ins.dst) = ins.srcs[0].is_reg() ? reg(ins.srcs[0].reg) : ins.srcs[0].imm;
                fallthrough();
                break;
            case Op::lea:
                reg(*ins.dst) = eval_addr(st.regs, *ins.mem);
                fallthrough();
                break;
            case Op::add:
            case Op::sub: {
                uint64_t rhs = ins.srcs[0].is_reg() ? reg(ins.srcs[0].reg) : ins.srcs[0].imm;
                if (ins.op == Op::add)
                    reg(*ins.dst) += rhs;
                else
                    reg(*ins.dst) -= rhs;
                fallthrough();
                break;
            }
            case Op::load: {
                if (ins.sp_adjust != 0) {  // pop
                    reg(*ins.dst) = read_u64(reg(Reg::rsp));
                    reg(Reg::rsp) += 8;
                } else {
                    uint64_t addr = eval_addr(st.regs, *ins.mem);
                    if (safe.contains(addr)) {
                        if (safe_region_access(addr, Actor::program, false) ==
                            Access::probing) {
                            log("probing", ins.addr, addr);
                            stop(MachineState::Stop::probing, ins.addr,
                                 "program touched a guarded page");
                            break;
                        }
                    }
                    reg(*ins.dst) = read_u64(addr);
                }
                fallthrough();
                break;
            }
            case Op::store: {
                uint64_t value =
                    ins.srcs[0].is_reg() ? reg(ins.srcs[0].reg) : ins.srcs[0].imm;
                uint64_t addr;
                if (ins.sp_adjust != 0) {  // push
                    reg(Reg::rsp) -= 8;
                    addr = reg(Reg::rsp);
                } else {
                    addr = eval_addr(st.regs, *ins.mem);
                }
                if (safe.contains(addr)) {
                    if (safe_region_access(addr, Actor::program, true, value) ==
                        Access::probing) {
                        log("probing", ins.addr, addr);
                        stop(MachineState::Stop::probing, ins.addr,
                             "program touched a guarded page");
                        break;
                    }
                } else {
                    write_u64(addr, value);
                }
                // Object initialization: mirror the vtblptr into the safe
                // region, last write wins.
                if (!cfg.profile_only) {
                    auto sit = site_at.find(ins.addr);
                    if (sit != site_at.end()) {
                        safe_region_access(safe.slot(addr), Actor::runtime, true, value);
                        log("vtblptr_write", ins.addr, addr, value);
                    }
                }
                fallthrough();
                break;
            }
            case Op::call_direct: {
                if (!instr_loc_.count(ins.target)) {
                    stop(MachineState::Stop::error, ins.addr, "call target outside program");
                    break;
                }
                if (ii + 1 < fn.instrs.size()) st.call_stack.push_back(fn.instrs[ii + 1].addr);
                st.pc = ins.target;
                break;
            }
            case Op::call_indirect: {
                if (!dispatch_vcall_hooks(ins)) break;
                uint64_t target;
                if (ins.mem) {
                    uint64_t addr = eval_addr(st.regs, *ins.mem);
                    target = read_u64(addr);
                } else {
                    target = reg(ins.srcs[0].reg);
                }
                if (!instr_loc_.count(target)) {
                    stop(MachineState::Stop::error, ins.addr,
                         "indirect call target outside program");
                    break;
                }
                if (ii + 1 < fn.instrs.size()) st.call_stack.push_back(fn.instrs[ii + 1].addr);
                st.pc = target;
                break;
            }
            case Op::ret:
                if (st.call_stack.empty()) {
                    stop(MachineState::Stop::finished, ins.addr, "returned from entry");
                } else {
                    st.pc = st.call_stack.back();
                    st.call_stack.pop_back();
                }
                break;
            case Op::jump:
                st.pc = ins.target;
                break;
            case Op::branch_cond: {
                bool taken = branch_cursor < cfg.branch_bits.size() &&
                             cfg.branch_bits[branch_cursor] == '1';
                ++branch_cursor;
                if (taken)
                    st.pc = ins.target;
                else
                    fallthrough();
                break;
            }
            case Op::clobber:
                for (Reg r : ins.clobbers) reg(r) = 0;
                fallthrough();
                break;
        }
    }
    return st;
}

// ---------------------------------------------------------------------------
// Attack scripts and the adaptive-result cache

AttackScript parse_attack_script(const std::string& json_text) {
    AttackScript script;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw BadScenario(std::string("attack script is not valid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw BadScenario("attack script must be an array");
    auto addr_of = [](const json& v) -> uint64_t {
        if (v.is_string()) return std::stoull(v.get<std::string>(), nullptr, 0);
        if (v.is_number_unsigned()) return v.get<uint64_t>();
        throw BadScenario("addresses must be hex strings or numbers");
    };
    for (const auto& e : doc) {
        AttackAction a;
        if (!e.contains("step") || !e.contains("action"))
            throw BadScenario("attack actions need step and action");
        a.step = e["step"].get<uint64_t>();
        std::string kind = e["action"].get<std::string>();
        if (kind == "write") {
            a.kind = AttackAction::Kind::write;
            a.addr = addr_of(e.at("addr"));
            a.value = addr_of(e.at("value"));
        } else if (kind == "safe_write") {
            a.kind = AttackAction::Kind::safe_write;
            a.key = addr_of(e.at("key"));
            a.value = addr_of(e.at("value"));
            if (e.contains("secret") && !e["secret"].is_null() &&
                !(e["secret"].is_string() && e["secret"] == "correct"))
                a.secret = addr_of(e["secret"]);
        } else if (kind == "safe_read") {
            a.kind = AttackAction::Kind::safe_read;
            a.key = addr_of(e.at("key"));
            if (e.contains("secret") && !e["secret"].is_null() &&
                !(e["secret"].is_string() && e["secret"] == "correct"))
                a.secret = addr_of(e["secret"]);
        } else if (kind == "realloc") {
            a.kind = AttackAction::Kind::realloc;
            a.addr = addr_of(e.at("addr"));
            a.size = addr_of(e.at("size"));
        } else if (kind == "call_through") {
            a.kind = AttackAction::Kind::call_through;
            a.vcall = addr_of(e.at("vcall"));
            a.object = addr_of(e.at("object"));
        } else {
            throw BadScenario("unknown attack action: " + kind);
        }
        script.push_back(a);
    }
    std::stable_sort(script.begin(), script.end(),
                     [](const AttackAction& a, const AttackAction& b) {
                         return a.step < b.step;
                     });
    return script;
}

uint64_t program_hash(const MicroProgram& prog) {
    std::string text = serialize_mir(prog);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save_cache(const std::string& path, const InstrumentationTable& table,
                uint64_t binary_hash) {
    json doc;
    char buf[20];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(binary_hash));
    doc["binary_hash"] = buf;
    doc["sites"] = json::array();
    for (const auto& [addr, hook] : table.site_states) {
        if (hook == Hook::analysis_hook) continue;  // still unclassified
        char a[20];
        snprintf(a, sizeof a, "0x%llx", static_cast<unsigned long long>(addr));
        doc["sites"].push_back(
            {{"addr", a}, {"state", hook == Hook::security_hook ? "verified" : "removed"}});
    }
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

void load_cache(const std::string& path, uint64_t binary_hash, InstrumentationTable& table) {
    std::ifstream in(path);
    if (!in) return;  // absent cache: every candidate keeps its analysis hook
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return;  // empty cache
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw CacheHashMismatch(std::string("unreadable cache: ") + e.what());
    }
    char buf[20];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(binary_hash));
    if (doc.value("binary_hash", "") != buf)
        throw CacheHashMismatch("cache belongs to a different binary");
    for (const auto& s : doc["sites"]) {
        uint64_t addr = std::stoull(s.at("addr").get<std::string>(), nullptr, 0);
        auto it = table.site_states.find(addr);
        if (it == table.site_states.end()) continue;
        if (it->second != Hook::analysis_hook) continue;
        it->second = s.at("state") == "verified" ? Hook::security_hook : Hook::none;
    }
    table.patched_from_cache = true;
}

}  // namespace vps
