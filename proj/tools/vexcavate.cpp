// vexcavate: vtable excavation and vtblptr-separation protection simulator
// for x86-64 ELF binaries and textual micro-IR fixtures.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vps/artifacts.hpp"
#include "vps/errors.hpp"
#include "vps/pipeline.hpp"
#include "vps/report.hpp"
#include "vps/runtime.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string infer_format(const std::string& input, const std::string& flag) {
    if (flag != "auto") return flag;
    if (input.size() >= 4 && input.substr(input.size() - 4) == ".mir") return "mir";
    return "elf";
}

struct ScenarioFile {
    std::string entry;
    std::string branch_bits;
    uint64_t seed = 1;
    bool has_seed = false;
    uint64_t budget_steps = 0;
    vps::AttackScript attack;
};

ScenarioFile load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw vps::BadScenario("cannot open scenario: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw vps::BadScenario(std::string("scenario is not valid JSON: ") + e.what());
    }
    ScenarioFile s;
    if (!doc.contains("entry")) throw vps::BadScenario("scenario needs an entry");
    s.entry = doc["entry"].is_string() ? doc["entry"].get<std::string>()
                                       : vps::hex_str(doc["entry"].get<uint64_t>());
    s.branch_bits = doc.value("branch_bits", "");
    if (doc.contains("seed")) {
        s.seed = doc["seed"].get<uint64_t>();
        s.has_seed = true;
    }
    s.budget_steps = doc.value("budget_steps", 0);
    if (doc.contains("attack")) s.attack = vps::parse_attack_script(doc["attack"].dump());
    return s;
}

uint64_t resolve_entry(const vps::AnalysisResult& r, const std::string& name_or_addr) {
    if (name_or_addr.rfind("0x", 0) == 0) return vps::parse_hex(name_or_addr);
    for (const auto& f : r.prog.functions)
        if (f.name == name_or_addr) return f.entry;
    throw vps::Error("no function named " + name_or_addr);
}

vps::InstrumentationTable make_table(const std::vector<vps::VCallSite>& vcalls) {
    vps::InstrumentationTable t;
    for (const auto& v : vcalls) {
        vps::Hook h = vps::Hook::analysis_hook;
        if (v.state == vps::VcState::static_verified || v.state == vps::VcState::dyn_verified)
            h = vps::Hook::security_hook;
        else if (v.state == vps::VcState::removed)
            h = vps::Hook::none;
        t.site_states[v.instr_addr] = h;
    }
    return t;
}

int cmd_analyze(const std::string& input, const std::string& format, const std::string& out,
                int depth_budget) {
    vps::AnalysisOptions opts;
    opts.depth_budget = depth_budget;
    auto r = vps::analyze_file(input, infer_format(input, format), opts);
    fs::create_directories(out);
    vps::write_vtables_json(out + "/vtables.json", r->vts);
    vps::write_object_sites_json(out + "/object_sites.json", r->sites);
    vps::write_vcalls_json(out + "/vcalls.json", r->vcalls);
    std::cout << "vtables: " << r->vts.tables.size() << " (overestimates included)\n"
              << "object sites: " << r->sites.size() << "\n"
              << "vcall candidates: " << r->vcalls.size() << "\n"
              << "fixed point rounds: " << r->fixed_point.rounds << "\n";
    return 0;
}

int cmd_profile(const std::string& input, const std::string& format, const std::string& out,
                const std::vector<std::string>& entries, const std::string& branch_bits,
                uint64_t seed, uint64_t budget_steps, int depth_budget) {
    vps::AnalysisOptions opts;
    opts.depth_budget = depth_budget;
    auto r = vps::analyze_file(input, infer_format(input, format), opts);
    vps::overlay_vcall_states(out + "/vcalls.json", r->vcalls);

    for (const std::string& entry_arg : entries) {
        vps::Machine m(r->prog, r->img, r->vts, seed);
        vps::InstrumentationTable table;
        for (const auto& v : r->vcalls)
            table.site_states[v.instr_addr] = v.state == vps::VcState::candidate
                                                  ? vps::Hook::analysis_hook
                                                  : vps::Hook::none;
        vps::RunConfig cfg;
        cfg.entry = resolve_entry(*r, entry_arg);
        cfg.branch_bits = branch_bits;
        cfg.seed = seed;
        cfg.profile_only = true;
        if (budget_steps) cfg.step_budget = budget_steps;
        std::vector<vps::ObjectSite> no_sites;
        m.run(no_sites, r->vcalls, table, cfg);
    }
    vps::write_vcalls_json(out + "/vcalls.json", r->vcalls);
    size_t dyn = 0, removed = 0;
    for (const auto& v : r->vcalls) {
        dyn += v.state == vps::VcState::dyn_verified;
        removed += v.state == vps::VcState::removed;
    }
    std::cout << "profiled entries: " << entries.size() << "\n"
              << "dyn verified: " << dyn << "\nremoved: " << removed << "\n";
    return 0;
}

int cmd_protect_sim(const std::string& input, const std::string& format,
                    const std::string& out, const std::string& scenario_path,
                    const std::string& cache_path, uint64_t seed_flag, bool seed_set,
                    uint64_t budget_steps, int depth_budget) {
    vps::AnalysisOptions opts;
    opts.depth_budget = depth_budget;
    auto r = vps::analyze_file(input, infer_format(input, format), opts);
    vps::overlay_vcall_states(out + "/vcalls.json", r->vcalls);

    ScenarioFile sc = load_scenario(scenario_path);
    uint64_t seed = seed_set ? seed_flag : sc.seed;

    vps::InstrumentationTable table = make_table(r->vcalls);
    uint64_t hash = vps::program_hash(r->prog);
    if (!cache_path.empty() && fs::exists(cache_path))
        vps::load_cache(cache_path, hash, table);

    vps::Machine m(r->prog, r->img, r->vts, seed);
    vps::RunConfig cfg;
    cfg.entry = resolve_entry(*r, sc.entry);
    cfg.branch_bits = sc.branch_bits;
    cfg.seed = seed;
    if (budget_steps)
        cfg.step_budget = budget_steps;
    else if (sc.budget_steps)
        cfg.step_budget = sc.budget_steps;
    cfg.script = &sc.attack;
    vps::MachineState st = m.run(r->sites, r->vcalls, table, cfg);

    fs::create_directories(out);
    vps::write_trace_jsonl(out + "/trace.jsonl", st.event_log);
    if (!cache_path.empty()) vps::save_cache(cache_path, table, hash);

    switch (st.stop) {
        case vps::MachineState::Stop::violation:
            std::cout << "verdict: violation site=" << vps::hex_str(st.stop_site) << "\n";
            break;
        case vps::MachineState::Stop::probing:
            std::cout << "verdict: probing site=" << vps::hex_str(st.stop_site) << "\n";
            break;
        case vps::MachineState::Stop::finished:
            std::cout << "verdict: clean\n";
            break;
        case vps::MachineState::Stop::budget:
            throw vps::StepBudgetExceeded("step budget exceeded at " +
                                          vps::hex_str(st.stop_site));
        default:
            throw vps::Error("execution error at " + vps::hex_str(st.stop_site) + ": " +
                             st.stop_detail);
    }
    return 0;
}

int cmd_report(const std::string& input, const std::string& format, const std::string& out,
               const std::string& truth_path, int depth_budget) {
    vps::AnalysisOptions opts;
    opts.depth_budget = depth_budget;
    auto r = vps::analyze_file(input, infer_format(input, format), opts);
    vps::overlay_vcall_states(out + "/vcalls.json", r->vcalls);
    vps::GroundTruth truth = vps::load_ground_truth(truth_path);

    std::set<uint64_t> indirect_universe, store_universe;
    for (const auto& f : r->prog.functions)
        for (const auto& i : f.instrs) {
            if (i.op == vps::Op::call_indirect) indirect_universe.insert(i.addr);
            if (i.op == vps::Op::store) store_universe.insert(i.addr);
        }
    vps::MetricsReport m = vps::compute_metrics(r->vts, r->sites, r->vcalls, truth,
                                                &indirect_universe, &store_universe);
    std::cout << vps::render_metrics(m);
    fs::create_directories(out);
    vps::write_metrics_json(out + "/metrics.json", m);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vtable excavation and vtblptr-separation protection simulator"};
    app.require_subcommand(1);

    std::string input, format = "auto", out = "./vps-out";
    std::string scenario, cache, truth;
    std::vector<std::string> entries;
    std::string branch_bits;
    uint64_t seed = 1, budget_steps = 0;
    bool seed_set = false;
    int budget_depth = 8;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("input", input, "ELF binary or .mir fixture")->required();
        cmd->add_option("--format", format, "elf|mir (default: by extension)");
        cmd->add_option("--out", out, "artifact directory");
        cmd->add_option("--budget-depth", budget_depth,
                        "interprocedural tracking depth budget");
    };

    CLI::App* analyze = app.add_subcommand("analyze", "run the static pipeline");
    add_common(analyze);

    CLI::App* profile = app.add_subcommand("profile", "dynamic candidate profiling");
    add_common(profile);
    profile->add_option("--entry", entries, "entry function (name or 0x address)")
        ->required();
    profile->add_option("--branch-bits", branch_bits, "branch decisions, '1' = taken");
    profile->add_option("--seed", seed, "simulator seed");
    profile->add_option("--budget-steps", budget_steps, "step budget");

    CLI::App* protect = app.add_subcommand("protect-sim", "protected execution simulation");
    add_common(protect);
    protect->add_option("--scenario", scenario, "scenario JSON")->required();
    protect->add_option("--cache", cache, "adaptive-instrumentation cache file");
    protect->add_option("--seed", seed, "simulator seed (overrides scenario)")
        ->each([&](const std::string&) { seed_set = true; });
    protect->add_option("--budget-steps", budget_steps, "step budget");

    CLI::App* report = app.add_subcommand("report", "compare against ground truth");
    add_common(report);
    report->add_option("--truth", truth, "ground-truth JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(analyze))
            return cmd_analyze(input, format, out, budget_depth);
        if (app.got_subcommand(profile))
            return cmd_profile(input, format, out, entries, branch_bits, seed, budget_steps,
                               budget_depth);
        if (app.got_subcommand(protect))
            return cmd_protect_sim(input, format, out, scenario, cache, seed, seed_set,
                                   budget_steps, budget_depth);
        if (app.got_subcommand(report))
            return cmd_report(input, format, out, truth, budget_depth);
    } catch (const vps::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
