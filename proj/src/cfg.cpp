#include "vps/cfg.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace vps {

namespace {

bool is_terminator(const MicroInstr& i) {
    switch (i.op) {
        case Op::jump:
        case Op::branch_cond:
        case Op::ret:
        case Op::call_direct:
        case Op::call_indirect:
            return true;
        default:
            return false;
    }
}

// Cooper/Harvey/Kennedy iterative dominator computation.
void compute_idom(Cfg& cfg) {
    size_t n = cfg.blocks.size();
    std::vector<uint32_t> rpo;
    std::vector<bool> seen(n, false);
    // Post-order DFS from entry, then reverse.
    std::vector<std::pair<uint32_t, size_t>> stack{{cfg.entry, 0}};
    seen[cfg.entry] = true;
    while (!stack.empty()) {
        auto& [b, i] = stack.back();
        if (i < cfg.blocks[b].succs.size()) {
            uint32_t s = cfg.blocks[b].succs[i++];
            if (!seen[s]) {
                seen[s] = true;
                stack.push_back({s, 0});
            }
        } else {
            rpo.push_back(b);
            stack.pop_back();
        }
    }
    std::reverse(rpo.begin(), rpo.end());
    std::vector<uint32_t> rpo_index(n, UINT32_MAX);
    for (uint32_t i = 0; i < rpo.size(); ++i) rpo_index[rpo[i]] = i;

    constexpr uint32_t kUndef = UINT32_MAX;
    cfg.idom.assign(n, kUndef);
    cfg.idom[cfg.entry] = cfg.entry;

    auto intersect = [&](uint32_t a, uint32_t b) {
        while (a != b) {
            while (rpo_index[a] > rpo_index[b]) a = cfg.idom[a];
            while (rpo_index[b] > rpo_index[a]) b = cfg.idom[b];
        }
        return a;
    };

    bool changed = true;
    while (changed) {
        changed = false;
        for (uint32_t b : rpo) {
            if (b == cfg.entry) continue;
            uint32_t new_idom = kUndef;
            for (uint32_t p : cfg.blocks[b].preds) {
                if (cfg.idom[p] == kUndef) continue;
                new_idom = new_idom == kUndef ? p : intersect(p, new_idom);
            }
            if (new_idom != kUndef && cfg.idom[b] != new_idom) {
                cfg.idom[b] = new_idom;
                changed = true;
            }
        }
    }
}

}  // namespace

bool Cfg::dominates(uint32_t a, uint32_t b) const {
    while (true) {
        if (a == b) return true;
        if (b == entry || idom[b] == UINT32_MAX) return false;
        uint32_t next = idom[b];
        if (next == b) return false;
        b = next;
    }
}

Cfg build_cfg(const MirFunction& fn) {
    const auto& ins = fn.instrs;
    size_t n = ins.size();

    std::map<uint64_t, uint32_t> addr_index;
    for (uint32_t i = 0; i < n; ++i) addr_index[ins[i].addr] = i;

    // Leaders: entry, branch/jump targets inside the function, and the
    // instruction after any terminator.
    std::set<uint32_t> leaders{0};
    for (uint32_t i = 0; i < n; ++i) {
        const auto& in = ins[i];
        if (in.op == Op::jump || in.op == Op::branch_cond) {
            auto it = addr_index.find(in.target);
            if (it != addr_index.end()) leaders.insert(it->second);
        }
        if (is_terminator(in) && i + 1 < n) leaders.insert(i + 1);
    }

    Cfg cfg;
    std::vector<uint32_t> leader_list(leaders.begin(), leaders.end());
    cfg.instr_block.assign(n, 0);
    for (uint32_t b = 0; b < leader_list.size(); ++b) {
        BasicBlock blk;
        blk.id = b;
        blk.first = leader_list[b];
        blk.last = (b + 1 < leader_list.size() ? leader_list[b + 1] : static_cast<uint32_t>(n)) - 1;
        for (uint32_t i = blk.first; i <= blk.last; ++i) cfg.instr_block[i] = b;
        cfg.blocks.push_back(blk);
    }
    cfg.entry = 0;

    auto add_edge = [&](uint32_t from, uint32_t to) {
        auto& s = cfg.blocks[from].succs;
        if (std::find(s.begin(), s.end(), to) == s.end()) {
            s.push_back(to);
            cfg.blocks[to].preds.push_back(from);
        }
    };

    for (auto& blk : cfg.blocks) {
        const auto& term = ins[blk.last];
        bool has_next = blk.last + 1 < n;
        switch (term.op) {
            case Op::jump: {
                auto it = addr_index.find(term.target);
                if (it != addr_index.end())
                    add_edge(blk.id, cfg.instr_block[it->second]);
                else
                    blk.exits_function = true;
                break;
            }
            case Op::branch_cond: {
                auto it = addr_index.find(term.target);
                if (it != addr_index.end())
                    add_edge(blk.id, cfg.instr_block[it->second]);
                else
                    blk.exits_function = true;
                if (has_next) add_edge(blk.id, blk.id + 1);
                break;
            }
            case Op::ret:
                break;
            case Op::call_direct:
            case Op::call_indirect:
                // Single return edge to the fallthrough block.
                if (has_next) add_edge(blk.id, blk.id + 1);
                break;
            default:
                if (has_next) add_edge(blk.id, blk.id + 1);
                break;
        }
    }

    compute_idom(cfg);
    return cfg;
}

}  // namespace vps
