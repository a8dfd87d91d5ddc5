#include "vps/artifacts.hpp"

#include <fstream>

#include <json.hpp>

#include "vps/errors.hpp"

namespace vps {

using nlohmann::json;

std::string hex_str(uint64_t v) {
    char buf[20];
    snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t parse_hex(const std::string& s) { return std::stoull(s, nullptr, 0); }

namespace {

void dump_to(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << doc.dump(2) << "\n";
}

json slurp(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw MissingArtifacts(std::string(what) + " not found: " + path);
    try {
        json doc;
        in >> doc;
        return doc;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed ") + what + ": " + e.what());
    }
}

}  // namespace

void write_vtables_json(const std::string& path, const VTableSet& vts) {
    json arr = json::array();
    for (const auto& [addr, v] : vts.tables) {
        json t;
        t["addr"] = hex_str(addr);
        t["offset_to_top"] = v.offset_to_top;
        t["rtti"] = hex_str(v.rtti);
        t["entries"] = json::array();
        for (uint64_t e : v.entries) t["entries"].push_back(hex_str(e));
        t["provenance"] = provenance_name(v.provenance);
        t["is_overestimate"] = v.is_overestimate;
        if (!v.symbol.empty()) t["symbol"] = v.symbol;
        arr.push_back(std::move(t));
    }
    dump_to(path, arr);
}

void write_object_sites_json(const std::string& path, const std::vector<ObjectSite>& sites) {
    json arr = json::array();
    for (const auto& s : sites) {
        arr.push_back({{"instr_addr", hex_str(s.instr_addr)},
                       {"vtable_addr", hex_str(s.vtable_addr)},
                       {"dest_kind", dest_kind_name(s.dest_kind)}});
    }
    dump_to(path, arr);
}

void write_vcalls_json(const std::string& path, const std::vector<VCallSite>& vcalls) {
    json arr = json::array();
    for (const auto& v : vcalls) {
        json e;
        e["instr_addr"] = hex_str(v.instr_addr);
        e["entry_offset"] = v.entry_offset;
        e["state"] = vc_state_name(v.state);
        if (v.evidence) {
            e["evidence"] = {{"source", hex_str(v.evidence->source_instr)},
                             {"ref", hex_str(v.evidence->ref_instr)},
                             {"path_blocks", v.evidence->path_blocks},
                             {"vtable", hex_str(v.evidence->vtable)}};
        }
        arr.push_back(std::move(e));
    }
    dump_to(path, arr);
}

void overlay_vcall_states(const std::string& path, std::vector<VCallSite>& vcalls) {
    json doc = slurp(path, "vcalls.json");
    std::map<uint64_t, std::string> states;
    for (const auto& e : doc) states[parse_hex(e.at("instr_addr"))] = e.at("state");
    for (auto& v : vcalls) {
        auto it = states.find(v.instr_addr);
        if (it == states.end()) continue;
        if (it->second == std::string(vc_state_name(v.state))) continue;
        if (it->second == "static_verified")
            v.set_state(VcState::static_verified);
        else if (it->second == "dyn_verified")
            v.set_state(VcState::dyn_verified);
        else if (it->second == "removed")
            v.set_state(VcState::removed);
    }
}

void write_trace_jsonl(const std::string& path, const std::vector<Event>& events) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (const Event& e : events) {
        json line;
        line["step"] = e.step;
        line["kind"] = e.kind;
        line["instr_addr"] = hex_str(e.instr_addr);
        json details;
        if (e.arg0) details["arg0"] = hex_str(e.arg0);
        if (e.arg1) details["arg1"] = hex_str(e.arg1);
        if (!e.note.empty()) details["note"] = e.note;
        line["details"] = std::move(details);
        out << line.dump() << "\n";
    }
}

GroundTruth load_ground_truth(const std::string& path) {
    json doc = slurp(path, "ground truth");
    GroundTruth gt;
    for (const auto& a : doc.value("vtables", json::array()))
        gt.vtables.push_back(parse_hex(a));
    for (const auto& a : doc.value("object_sites", json::array()))
        gt.object_sites.push_back(parse_hex(a));
    for (const auto& v : doc.value("vcalls", json::array())) {
        GroundTruth::Vcall e;
        e.instr_addr = parse_hex(v.at("instr_addr"));
        std::string label = v.at("label");
        if (label != "vcall" && label != "c_style")
            throw Error("ground truth labels must be vcall or c_style");
        e.is_vcall = label == "vcall";
        e.expect_static_verified = v.value("expect_static_verified", false);
        gt.vcalls.push_back(e);
    }
    return gt;
}

}  // namespace vps
