#include "vps/mir.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

#include "vps/errors.hpp"

namespace vps {

namespace {

const char* kRegNames[kRegCount] = {
    "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
    "r8",  "r9",  "r10", "r11", "r12", "r13", "r14", "r15",
};

}  // namespace

const char* reg_name(Reg r) { return kRegNames[static_cast<int>(r)]; }

std::optional<Reg> reg_from_name(std::string_view name) {
    for (int i = 0; i < kRegCount; ++i)
        if (name == kRegNames[i]) return static_cast<Reg>(i);
    return std::nullopt;
}

const MirFunction* MicroProgram::function_at(uint64_t entry) const {
    for (const auto& f : functions)
        if (f.entry == entry) return &f;
    return nullptr;
}

std::optional<std::pair<uint32_t, uint32_t>> MicroProgram::locate(uint64_t addr) const {
    for (uint32_t fi = 0; fi < functions.size(); ++fi) {
        const auto& ins = functions[fi].instrs;
        for (uint32_t ii = 0; ii < ins.size(); ++ii)
            if (ins[ii].addr == addr) return std::make_pair(fi, ii);
    }
    return std::nullopt;
}

void rebuild_call_graph(MicroProgram& prog) {
    prog.call_graph_edges.clear();
    for (const auto& f : prog.functions)
        for (const auto& i : f.instrs)
            if (i.op == Op::call_direct) prog.call_graph_edges.insert({i.addr, i.target});
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Cursor {
    std::string_view s;
    size_t pos = 0;
    int line;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }
    bool done() {
        skip_ws();
        return pos >= s.size();
    }
    bool eat(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!eat(c)) fail(std::string("expected '") + c + "'");
    }
    bool eat_word(std::string_view w) {
        skip_ws();
        if (s.substr(pos, w.size()) == w) {
            size_t end = pos + w.size();
            if (end == s.size() || !std::isalnum(static_cast<unsigned char>(s[end]))) {
                pos = end;
                return true;
            }
        }
        return false;
    }
    std::string_view word() {
        skip_ws();
        size_t start = pos;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_' ||
                s[pos] == '.' || s[pos] == '$'))
            ++pos;
        if (start == pos) fail("expected identifier");
        return s.substr(start, pos - start);
    }
    uint64_t number() {
        skip_ws();
        bool neg = false;
        if (pos < s.size() && s[pos] == '-') {
            neg = true;
            ++pos;
        }
        skip_ws();
        int base = 10;
        if (s.substr(pos, 2) == "0x" || s.substr(pos, 2) == "0X") {
            base = 16;
            pos += 2;
        }
        uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), v, base);
        if (ec != std::errc() || p == s.data() + pos) fail("expected number");
        pos = p - s.data();
        return neg ? ~v + 1 : v;
    }
    [[noreturn]] void fail(const std::string& msg) { throw MirSyntax(line, msg); }
};

Reg parse_reg(Cursor& c) {
    auto w = c.word();
    auto r = reg_from_name(w);
    if (!r) c.fail("unknown register '" + std::string(w) + "'");
    return *r;
}

Operand parse_operand(Cursor& c) {
    c.skip_ws();
    if (c.pos < c.s.size() &&
        (std::isalpha(static_cast<unsigned char>(c.s[c.pos])) &&
         c.s.substr(c.pos, 2) != "0x")) {
        return Operand::make_reg(parse_reg(c));
    }
    return Operand::make_imm(c.number());
}

// [ base (+ index*scale)? ((+|-) disp)? ]  or  [ absolute ]
AddrExpr parse_addr(Cursor& c) {
    c.expect('[');
    AddrExpr a;
    c.skip_ws();
    bool leading_num = c.pos < c.s.size() &&
                       (std::isdigit(static_cast<unsigned char>(c.s[c.pos])) || c.s[c.pos] == '-');
    if (leading_num) {
        a.disp = static_cast<int64_t>(c.number());
    } else {
        a.base = parse_reg(c);
        if (c.eat('*')) {  // actually index-only form: reg*scale
            a.index = a.base;
            a.base.reset();
            a.scale = static_cast<uint8_t>(c.number());
        }
        while (true) {
            c.skip_ws();
            bool plus = false, minus = false;
            if (c.eat('+'))
                plus = true;
            else if (c.eat('-'))
                minus = true;
            if (!plus && !minus) break;
            c.skip_ws();
            if (!minus && c.pos < c.s.size() &&
                std::isalpha(static_cast<unsigned char>(c.s[c.pos])) &&
                c.s.substr(c.pos, 2) != "0x") {
                a.index = parse_reg(c);
                if (c.eat('*')) a.scale = static_cast<uint8_t>(c.number());
            } else {
                int64_t d = static_cast<int64_t>(c.number());
                a.disp += minus ? -d : d;
            }
        }
    }
    c.expect(']');
    if (a.scale != 1 && a.scale != 2 && a.scale != 4 && a.scale != 8)
        c.fail("bad scale");
    return a;
}

}  // namespace

MicroProgram parse_mir_text(const std::string& text) {
    MicroProgram prog;
    MirFunction* cur = nullptr;
    std::set<uint64_t> seen_addrs;

    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        Cursor c{raw, 0, lineno};
        if (c.done()) continue;

        if (c.eat_word("func")) {
            MirFunction f;
            f.name = std::string(c.word());
            c.expect('@');
            f.entry = c.number();
            if (!c.done()) c.fail("trailing tokens after func header");
            prog.functions.push_back(std::move(f));
            cur = &prog.functions.back();
            continue;
        }
        if (c.eat_word("data")) {
            DataSection d;
            d.name = std::string(c.word());
            c.expect('@');
            d.vaddr = c.number();
            if (c.eat_word("rw"))
                d.writable = true;
            else if (c.eat_word("ro"))
                d.writable = false;
            else
                c.fail("expected ro|rw");
            c.expect(':');
            while (!c.done()) d.words.push_back(c.number());
            prog.data.push_back(std::move(d));
            continue;
        }

        // instruction line: 0x<addr>: <op> ...
        if (!cur) c.fail("instruction outside function");
        MicroInstr ins;
        ins.addr = c.number();
        c.expect(':');
        if (!seen_addrs.insert(ins.addr).second)
            c.fail("duplicate instruction address");

        if (c.eat_word("mov")) {
            ins.op = Op::move;
            ins.dst = parse_reg(c);
            c.expect(',');
            ins.srcs.push_back(parse_operand(c));
        } else if (c.eat_word("lea")) {
            ins.op = Op::lea;
            ins.dst = parse_reg(c);
            c.expect(',');
            ins.mem = parse_addr(c);
        } else if (c.eat_word("load")) {
            ins.op = Op::load;
            ins.dst = parse_reg(c);
            c.expect(',');
            ins.mem = parse_addr(c);
        } else if (c.eat_word("store")) {
            ins.op = Op::store;
            ins.mem = parse_addr(c);
            c.expect(',');
            ins.srcs.push_back(parse_operand(c));
        } else if (c.eat_word("add")) {
            ins.op = Op::add;
            ins.dst = parse_reg(c);
            c.expect(',');
            ins.srcs.push_back(parse_operand(c));
        } else if (c.eat_word("sub")) {
            ins.op = Op::sub;
            ins.dst = parse_reg(c);
            c.expect(',');
            ins.srcs.push_back(parse_operand(c));
        } else if (c.eat_word("call")) {
            c.skip_ws();
            if (c.eat('@')) {
                ins.op = Op::call_direct;
                ins.target = c.number();
            } else if (c.pos < c.s.size() && c.s[c.pos] == '[') {
                ins.op = Op::call_indirect;
                ins.mem = parse_addr(c);
            } else {
                ins.op = Op::call_indirect;
                ins.srcs.push_back(Operand::make_reg(parse_reg(c)));
            }
        } else if (c.eat_word("jmp")) {
            ins.op = Op::jump;
            ins.target = c.number();
        } else if (c.eat_word("bcc")) {
            ins.op = Op::branch_cond;
            ins.target = c.number();
        } else if (c.eat_word("ret")) {
            ins.op = Op::ret;
        } else if (c.eat_word("clobber")) {
            ins.op = Op::clobber;
            while (!c.done()) {
                ins.clobbers.push_back(parse_reg(c));
                if (!c.eat(',')) break;
            }
        } else {
            c.fail("unknown mnemonic");
        }
        if (!c.done()) c.fail("trailing tokens");
        cur->instrs.push_back(std::move(ins));
    }

    for (auto& f : prog.functions)
        std::sort(f.instrs.begin(), f.instrs.end(),
                  [](const MicroInstr& a, const MicroInstr& b) { return a.addr < b.addr; });
    rebuild_call_graph(prog);
    return prog;
}

// ---------------------------------------------------------------------------
// Serializer

namespace {

void put_hex(std::string& out, uint64_t v) {
    char buf[20];
    snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    out += buf;
}

void put_addr_expr(std::string& out, const AddrExpr& a) {
    out += '[';
    bool any = false;
    if (a.base) {
        out += reg_name(*a.base);
        any = true;
    }
    if (a.index) {
        if (any) out += " + ";
        out += reg_name(*a.index);
        if (a.scale != 1) {
            out += '*';
            out += std::to_string(a.scale);
        }
        any = true;
    }
    if (!any) {
        put_hex(out, static_cast<uint64_t>(a.disp));
    } else if (a.disp != 0) {
        if (a.disp < 0) {
            out += " - ";
            put_hex(out, static_cast<uint64_t>(-a.disp));
        } else {
            out += " + ";
            put_hex(out, static_cast<uint64_t>(a.disp));
        }
    }
    out += ']';
}

void put_operand(std::string& out, const Operand& o) {
    if (o.is_reg())
        out += reg_name(o.reg);
    else
        put_hex(out, o.imm);
}

}  // namespace

std::string serialize_mir(const MicroProgram& prog) {
    std::string out;
    for (const auto& f : prog.functions) {
        out += "func " + f.name + " @";
        put_hex(out, f.entry);
        out += '\n';
        for (const auto& i : f.instrs) {
            out += "  ";
            put_hex(out, i.addr);
            out += ": ";
            switch (i.op) {
                case Op::move:
                    out += "mov ";
                    out += reg_name(*i.dst);
                    out += ", ";
                    put_operand(out, i.srcs[0]);
                    break;
                case Op::lea:
                    out += "lea ";
                    out += reg_name(*i.dst);
                    out += ", ";
                    put_addr_expr(out, *i.mem);
                    break;
                case Op::load:
                    out += "load ";
                    out += reg_name(*i.dst);
                    out += ", ";
                    put_addr_expr(out, *i.mem);
                    break;
                case Op::store:
                    out += "store ";
                    put_addr_expr(out, *i.mem);
                    out += ", ";
                    put_operand(out, i.srcs[0]);
                    break;
                case Op::add:
                case Op::sub:
                    out += i.op == Op::add ? "add " : "sub ";
                    out += reg_name(*i.dst);
                    out += ", ";
                    put_operand(out, i.srcs[0]);
                    break;
                case Op::call_direct:
                    out += "call @";
                    put_hex(out, i.target);
                    break;
                case Op::call_indirect:
                    out += "call ";
                    if (i.mem)
                        put_addr_expr(out, *i.mem);
                    else
                        out += reg_name(i.srcs[0].reg);
                    break;
                case Op::jump:
                    out += "jmp ";
                    put_hex(out, i.target);
                    break;
                case Op::branch_cond:
                    out += "bcc ";
                    put_hex(out, i.target);
                    break;
                case Op::ret:
                    out += "ret";
                    break;
                case Op::clobber:
                    out += "clobber";
                    for (size_t k = 0; k < i.clobbers.size(); ++k) {
                        out += k ? ", " : " ";
                        out += reg_name(i.clobbers[k]);
                    }
                    break;
            }
            out += '\n';
        }
    }
    for (const auto& d : prog.data) {
        out += "data " + d.name + " @";
        put_hex(out, d.vaddr);
        out += d.writable ? " rw :" : " ro :";
        for (uint64_t w : d.words) {
            out += ' ';
            put_hex(out, w);
        }
        out += '\n';
    }
    return out;
}

}  // namespace vps
