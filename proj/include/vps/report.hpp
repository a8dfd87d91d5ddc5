#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vps/artifacts.hpp"

namespace vps {

// Percentage in tenths (e.g. 911 = 91.1%), half-up rounding; nullopt when
// the denominator is zero ("n.a." in rendered tables).
std::optional<int64_t> percent_tenths(uint64_t num, uint64_t den);
std::string format_pct(std::optional<int64_t> tenths);

struct CategoryMetrics {
    uint64_t gt = 0, tp = 0, fp = 0, fn = 0;
    std::optional<int64_t> recall_tenths;     // TP / (TP + FN)
    std::optional<int64_t> precision_tenths;  // TP / (TP + FP)
};

CategoryMetrics make_category(uint64_t gt, uint64_t tp, uint64_t fp);

struct MetricsReport {
    CategoryMetrics vtables;
    CategoryMetrics object_sites;
    CategoryMetrics vcalls;
    uint64_t overestimated_vtables = 0;
    uint64_t stack_overapprox_sites = 0;
    uint64_t static_verified_count = 0;
    std::optional<int64_t> static_pct;  // of ground-truth vcalls
    uint64_t dyn_verified_count = 0;    // cumulative: static + dynamic
    std::optional<int64_t> dyn_pct;
    uint64_t fp_removed = 0;
};

// Compares analysis results against annotations. Overestimate-flagged
// vtables and stack_temp_overapprox sites are deliberate overapproximations
// and do not count as false positives. Throws TruthMismatch when the truth
// names addresses the artifacts' universe does not contain.
MetricsReport compute_metrics(const VTableSet& vts, const std::vector<ObjectSite>& sites,
                              const std::vector<VCallSite>& vcalls, const GroundTruth& truth,
                              const std::set<uint64_t>* indirect_call_universe = nullptr,
                              const std::set<uint64_t>* store_universe = nullptr);

// Fixed-width table, one decimal percentages, n.a. on empty denominators.
std::string render_metrics(const MetricsReport& m);
void write_metrics_json(const std::string& path, const MetricsReport& m);

}  // namespace vps
