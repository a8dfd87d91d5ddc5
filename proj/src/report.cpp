#include "vps/report.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "vps/errors.hpp"

namespace vps {

using nlohmann::json;

std::optional<int64_t> percent_tenths(uint64_t num, uint64_t den) {
    if (den == 0) return std::nullopt;
    // round-half-up of 1000 * num / den, in exact integer arithmetic
    return static_cast<int64_t>((2000 * num + den) / (2 * den));
}

std::string format_pct(std::optional<int64_t> tenths) {
    if (!tenths) return "n.a.";
    char buf[32];
    snprintf(buf, sizeof buf, "%lld.%lld", static_cast<long long>(*tenths / 10),
             static_cast<long long>(*tenths % 10));
    return buf;
}

CategoryMetrics make_category(uint64_t gt, uint64_t tp, uint64_t fp) {
    CategoryMetrics c;
    c.gt = gt;
    c.tp = tp;
    c.fp = fp;
    c.fn = gt >= tp ? gt - tp : 0;
    c.recall_tenths = percent_tenths(tp, tp + c.fn);
    c.precision_tenths = percent_tenths(tp, tp + fp);
    return c;
}

MetricsReport compute_metrics(const VTableSet& vts, const std::vector<ObjectSite>& sites,
                              const std::vector<VCallSite>& vcalls, const GroundTruth& truth,
                              const std::set<uint64_t>* indirect_call_universe,
                              const std::set<uint64_t>* store_universe) {
    MetricsReport m;

    // Vtables: a truth table matched by any known address counts as found;
    // only validated (non-overestimate) extras count as false positives.
    std::set<uint64_t> validated, truth_tables(truth.vtables.begin(), truth.vtables.end());
    for (const auto& [addr, v] : vts.tables) {
        if (v.is_overestimate)
            ++m.overestimated_vtables;
        else
            validated.insert(addr);
    }
    uint64_t tp = 0;
    for (uint64_t a : truth_tables)
        if (vts.is_known(a)) ++tp;
    uint64_t fp = 0;
    for (uint64_t a : validated)
        if (!truth_tables.count(a)) ++fp;
    m.vtables = make_category(truth_tables.size(), tp, fp);

    // Object sites: stack-temporary stores are a declared overapproximation.
    std::set<uint64_t> found, truth_sites(truth.object_sites.begin(),
                                          truth.object_sites.end());
    for (const auto& s : sites) {
        found.insert(s.instr_addr);
        if (s.dest_kind == DestKind::stack_temp_overapprox) ++m.stack_overapprox_sites;
    }
    if (store_universe)
        for (uint64_t a : truth_sites)
            if (!store_universe->count(a))
                throw TruthMismatch("object-site truth address not present: " + hex_str(a));
    tp = 0;
    for (uint64_t a : truth_sites)
        if (found.count(a)) ++tp;
    fp = 0;
    for (const auto& s : sites)
        if (!truth_sites.count(s.instr_addr) &&
            s.dest_kind != DestKind::stack_temp_overapprox)
            ++fp;
    m.object_sites = make_category(truth_sites.size(), tp, fp);

    // Vcalls: identification over every candidate the analysis ever flagged;
    // later removal feeds the fp_removed column.
    std::map<uint64_t, bool> truth_vcalls;  // addr -> labeled vcall
    uint64_t gt_count = 0;
    for (const auto& v : truth.vcalls) {
        if (indirect_call_universe && !indirect_call_universe->count(v.instr_addr))
            throw TruthMismatch("vcall truth address not present: " + hex_str(v.instr_addr));
        truth_vcalls[v.instr_addr] = v.is_vcall;
        if (v.is_vcall) ++gt_count;
    }
    tp = 0;
    fp = 0;
    for (const auto& v : vcalls) {
        auto it = truth_vcalls.find(v.instr_addr);
        bool is_true = it != truth_vcalls.end() && it->second;
        if (is_true)
            ++tp;
        else
            ++fp;
        if (v.state == VcState::removed) ++m.fp_removed;
        if (v.state == VcState::static_verified) ++m.static_verified_count;
        if (v.state == VcState::dyn_verified) ++m.dyn_verified_count;
    }
    m.vcalls = make_category(gt_count, tp, fp);
    m.dyn_verified_count += m.static_verified_count;  // cumulative column
    m.static_pct = percent_tenths(m.static_verified_count, gt_count);
    m.dyn_pct = percent_tenths(m.dyn_verified_count, gt_count);
    return m;
}

std::string render_metrics(const MetricsReport& m) {
    std::string out;
    char line[256];
    auto row = [&](const char* name, const CategoryMetrics& c) {
        snprintf(line, sizeof line, "%-14s %6llu %6llu %6llu %6llu %9s %10s\n", name,
                 static_cast<unsigned long long>(c.gt), static_cast<unsigned long long>(c.tp),
                 static_cast<unsigned long long>(c.fp), static_cast<unsigned long long>(c.fn),
                 format_pct(c.recall_tenths).c_str(), format_pct(c.precision_tenths).c_str());
        out += line;
    };
    snprintf(line, sizeof line, "%-14s %6s %6s %6s %6s %9s %10s\n", "category", "GT", "TP",
             "FP", "FN", "recall", "precision");
    out += line;
    row("vtables", m.vtables);
    row("object_sites", m.object_sites);
    row("vcalls", m.vcalls);
    snprintf(line, sizeof line,
             "verified: static %llu (%s)  static+dyn %llu (%s)  fp_removed %llu\n",
             static_cast<unsigned long long>(m.static_verified_count),
             format_pct(m.static_pct).c_str(),
             static_cast<unsigned long long>(m.dyn_verified_count),
             format_pct(m.dyn_pct).c_str(),
             static_cast<unsigned long long>(m.fp_removed));
    out += line;
    snprintf(line, sizeof line, "overestimated vtables %llu, stack-temp sites %llu\n",
             static_cast<unsigned long long>(m.overestimated_vtables),
             static_cast<unsigned long long>(m.stack_overapprox_sites));
    out += line;
    return out;
}

void write_metrics_json(const std::string& path, const MetricsReport& m) {
    auto cat = [](const CategoryMetrics& c) {
        json j;
        j["gt"] = c.gt;
        j["tp"] = c.tp;
        j["fp"] = c.fp;
        j["fn"] = c.fn;
        j["recall"] = format_pct(c.recall_tenths);
        j["precision"] = format_pct(c.precision_tenths);
        return j;
    };
    json doc;
    doc["vtables"] = cat(m.vtables);
    doc["object_sites"] = cat(m.object_sites);
    doc["vcalls"] = cat(m.vcalls);
    doc["verification"] = {{"static_verified_count", m.static_verified_count},
                           {"static_pct", format_pct(m.static_pct)},
                           {"dyn_verified_count", m.dyn_verified_count},
                           {"dyn_pct", format_pct(m.dyn_pct)},
                           {"fp_removed", m.fp_removed}};
    doc["overestimated_vtables"] = m.overestimated_vtables;
    doc["stack_overapprox_sites"] = m.stack_overapprox_sites;
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << doc.dump(2) << "\n";
}

}  // namespace vps
