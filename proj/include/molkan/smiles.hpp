#pragma once

// SMILES subset parser producing MolecularGraph. Supported: organic-subset
// atoms B C N O P S F Cl Br I, aromatic lowercase b c n o p s, bracket atoms
// with isotope (discarded), charge, explicit H count and atom class
// (discarded), bonds - = # :, branches, ring closures 1-9 and %nn, '.'
// fragments (largest kept), stereo markers / \ @ parsed and discarded.
//
// Implicit hydrogens follow standard valences (B 3, C 4, N 3, O 2, P 3, S 2,
// halogens 1) adjusted by formal charge, with aromatic bonds counted as 1.5
// and the bond-order sum rounded down. Bracket atoms carry exactly the H
// count written in the brackets.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "molkan/molgraph.hpp"

namespace molkan {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& smiles, size_t pos, const std::string& what)
        : std::runtime_error("SMILES parse error at position " + std::to_string(pos) + " in \"" +
                             smiles + "\": " + what),
          position(pos) {}
    size_t position;
};

namespace detail {

inline int default_valence(Element e) {
    switch (e) {
        case Element::B: return 3;
        case Element::C: return 4;
        case Element::N: return 3;
        case Element::O: return 2;
        case Element::P: return 3;
        case Element::S: return 2;
        case Element::F:
        case Element::Cl:
        case Element::Br:
        case Element::I: return 1;
        case Element::Other: return 0;
    }
    return 0;
}

inline std::optional<Element> element_from_symbol(const std::string& sym) {
    if (sym == "B") return Element::B;
    if (sym == "C") return Element::C;
    if (sym == "N") return Element::N;
    if (sym == "O") return Element::O;
    if (sym == "P") return Element::P;
    if (sym == "S") return Element::S;
    if (sym == "F") return Element::F;
    if (sym == "Cl") return Element::Cl;
    if (sym == "Br") return Element::Br;
    if (sym == "I") return Element::I;
    // anything that still looks like an element symbol maps to Other
    if (!sym.empty() && sym[0] >= 'A' && sym[0] <= 'Z' &&
        (sym.size() == 1 || (sym.size() == 2 && sym[1] >= 'a' && sym[1] <= 'z')))
        return Element::Other;
    return std::nullopt;
}

struct PendingRing {
    int atom;
    std::optional<BondOrder> order;
};

}  // namespace detail

inline MolecularGraph parse_smiles(const std::string& s) {
    if (s.empty()) throw ParseError(s, 0, "empty string");

    MolecularGraph g;
    g.source_smiles = s;
    std::vector<char> from_bracket;

    int prev = -1;
    std::optional<BondOrder> pending_bond;
    std::vector<int> branch_stack;
    std::map<int, detail::PendingRing> ring_open;

    auto add_bond = [&](size_t pos, int a, int b, std::optional<BondOrder> order) {
        if (a == b) throw ParseError(s, pos, "bond from an atom to itself");
        for (const Bond& bd : g.bonds)
            if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
                throw ParseError(s, pos, "duplicate bond between atoms " + std::to_string(a) +
                                             " and " + std::to_string(b));
        BondOrder o;
        if (order) {
            o = *order;
        } else {
            bool both_arom = g.atoms[size_t(a)].aromatic && g.atoms[size_t(b)].aromatic;
            o = both_arom ? BondOrder::Aromatic : BondOrder::Single;
        }
        g.bonds.push_back(Bond{a, b, o});
    };

    auto add_atom = [&](size_t pos, Atom atom, bool bracket) {
        int idx = int(g.atoms.size());
        g.atoms.push_back(atom);
        from_bracket.push_back(bracket ? 1 : 0);
        if (prev >= 0) add_bond(pos, prev, idx, pending_bond);
        pending_bond.reset();
        prev = idx;
    };

    size_t i = 0;
    const size_t n = s.size();
    while (i < n) {
        char c = s[i];
        if (c == '(') {
            if (prev < 0) throw ParseError(s, i, "branch before any atom");
            branch_stack.push_back(prev);
            ++i;
        } else if (c == ')') {
            if (branch_stack.empty()) throw ParseError(s, i, "unmatched ')'");
            prev = branch_stack.back();
            branch_stack.pop_back();
            ++i;
        } else if (c == '-' || c == '/' || c == '\\') {
            pending_bond = BondOrder::Single;  // stereo slashes reduce to single
            ++i;
        } else if (c == '=') {
            pending_bond = BondOrder::Double;
            ++i;
        } else if (c == '#') {
            pending_bond = BondOrder::Triple;
            ++i;
        } else if (c == ':') {
            pending_bond = BondOrder::Aromatic;
            ++i;
        } else if (c == '.') {
            if (pending_bond) throw ParseError(s, i, "bond symbol before '.'");
            prev = -1;
            ++i;
        } else if ((c >= '1' && c <= '9') || c == '%') {
            if (prev < 0) throw ParseError(s, i, "ring closure before any atom");
            int rc;
            if (c == '%') {
                if (i + 2 >= n || !isdigit(s[i + 1]) || !isdigit(s[i + 2]))
                    throw ParseError(s, i, "'%' must be followed by two digits");
                rc = (s[i + 1] - '0') * 10 + (s[i + 2] - '0');
                i += 3;
            } else {
                rc = c - '0';
                ++i;
            }
            auto it = ring_open.find(rc);
            if (it == ring_open.end()) {
                ring_open[rc] = detail::PendingRing{prev, pending_bond};
                pending_bond.reset();
            } else {
                detail::PendingRing open = it->second;
                ring_open.erase(it);
                std::optional<BondOrder> order;
                if (open.order && pending_bond && *open.order != *pending_bond)
                    throw ParseError(s, i, "conflicting bond orders on ring closure " +
                                               std::to_string(rc));
                order = open.order ? open.order : pending_bond;
                pending_bond.reset();
                add_bond(i, open.atom, prev, order);
            }
        } else if (c == '[') {
            size_t start = i;
            ++i;
            Atom atom;
            // isotope (discarded)
            while (i < n && isdigit(s[i])) ++i;
            if (i >= n) throw ParseError(s, start, "unterminated bracket atom");
            // element symbol, aromatic lowercase allowed
            std::string sym;
            bool aromatic = false;
            if (s[i] >= 'a' && s[i] <= 'z') {
                aromatic = true;
                sym += char(toupper(s[i]));
                ++i;
                // two-letter aromatic symbols (se, as, te) map to Other
                if (i < n && s[i] >= 'a' && s[i] <= 'z' && s[i] != 'h' &&
                    (sym == "S" || sym == "A" || sym == "T")) {
                    sym += s[i];
                    ++i;
                }
            } else if (s[i] >= 'A' && s[i] <= 'Z') {
                sym += s[i];
                ++i;
                // greedy two-letter symbol; the H count is uppercase so it
                // cannot be swallowed here
                if (i < n && s[i] >= 'a' && s[i] <= 'z') {
                    sym += s[i];
                    ++i;
                }
            } else {
                throw ParseError(s, i, std::string("unknown atom symbol '") + s[i] + "'");
            }
            auto elem = detail::element_from_symbol(sym);
            if (!elem) throw ParseError(s, start, "unknown atom symbol '" + sym + "'");
            atom.element = *elem;
            atom.aromatic = aromatic;
            // chirality (discarded)
            while (i < n && s[i] == '@') ++i;
            // explicit hydrogens
            int hcount = 0;
            if (i < n && s[i] == 'H') {
                ++i;
                hcount = 1;
                if (i < n && isdigit(s[i])) {
                    hcount = s[i] - '0';
                    ++i;
                }
            }
            atom.explicit_h = hcount;
            // charge
            int charge = 0;
            if (i < n && (s[i] == '+' || s[i] == '-')) {
                int sign = s[i] == '+' ? 1 : -1;
                char sym_c = s[i];
                ++i;
                if (i < n && isdigit(s[i])) {
                    charge = sign * (s[i] - '0');
                    ++i;
                } else {
                    charge = sign;
                    while (i < n && s[i] == sym_c) {
                        charge += sign;
                        ++i;
                    }
                }
            }
            atom.formal_charge = std::clamp(charge, -2, 2);
            // atom class (discarded)
            if (i < n && s[i] == ':') {
                ++i;
                if (i >= n || !isdigit(s[i])) throw ParseError(s, i, "atom class expects digits");
                while (i < n && isdigit(s[i])) ++i;
            }
            if (i >= n || s[i] != ']') throw ParseError(s, start, "unterminated bracket atom");
            ++i;
            add_atom(start, atom, true);
        } else if (c >= 'A' && c <= 'Z') {
            std::string sym(1, c);
            if (c == 'C' && i + 1 < n && s[i + 1] == 'l') sym = "Cl";
            if (c == 'B' && i + 1 < n && s[i + 1] == 'r') sym = "Br";
            auto elem = detail::element_from_symbol(sym);
            if (!elem || *elem == Element::Other)
                throw ParseError(s, i, "unknown atom symbol '" + sym + "'");
            Atom atom;
            atom.element = *elem;
            add_atom(i, atom, false);
            i += sym.size();
        } else if (c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' || c == 's') {
            std::string sym(1, char(toupper(c)));
            Atom atom;
            atom.element = *detail::element_from_symbol(sym);
            atom.aromatic = true;
            add_atom(i, atom, false);
            ++i;
        } else {
            throw ParseError(s, i, std::string("unexpected character '") + c + "'");
        }
    }

    if (!branch_stack.empty()) throw ParseError(s, n, "unmatched '('");
    if (!ring_open.empty())
        throw ParseError(s, n, "unmatched ring closure " + std::to_string(ring_open.begin()->first));
    if (pending_bond) throw ParseError(s, n, "dangling bond symbol at end of string");

    // keep the largest connected component (ties: the earliest)
    {
        const int na = int(g.atoms.size());
        std::vector<int> comp(size_t(na), -1);
        int n_comp = 0;
        for (int v = 0; v < na; ++v) {
            if (comp[size_t(v)] >= 0) continue;
            std::vector<int> stack = {v};
            comp[size_t(v)] = n_comp;
            while (!stack.empty()) {
                int u = stack.back();
                stack.pop_back();
                for (const Bond& b : g.bonds) {
                    int w = b.a == u ? b.b : b.b == u ? b.a : -1;
                    if (w >= 0 && comp[size_t(w)] < 0) {
                        comp[size_t(w)] = n_comp;
                        stack.push_back(w);
                    }
                }
            }
            ++n_comp;
        }
        if (n_comp > 1) {
            std::vector<int> sizes(size_t(n_comp), 0);
            for (int v = 0; v < na; ++v) ++sizes[size_t(comp[size_t(v)])];
            int best = int(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            std::vector<int> remap(size_t(na), -1);
            std::vector<Atom> kept_atoms;
            std::vector<char> kept_bracket;
            for (int v = 0; v < na; ++v) {
                if (comp[size_t(v)] != best) continue;
                remap[size_t(v)] = int(kept_atoms.size());
                kept_atoms.push_back(g.atoms[size_t(v)]);
                kept_bracket.push_back(from_bracket[size_t(v)]);
            }
            std::vector<Bond> kept_bonds;
            for (const Bond& b : g.bonds)
                if (remap[size_t(b.a)] >= 0 && remap[size_t(b.b)] >= 0)
                    kept_bonds.push_back(Bond{remap[size_t(b.a)], remap[size_t(b.b)], b.order});
            g.atoms = std::move(kept_atoms);
            g.bonds = std::move(kept_bonds);
            from_bracket = std::move(kept_bracket);
        }
    }

    // degrees, implicit hydrogens, edge index
    for (auto& a : g.atoms) a.degree = 0;
    std::vector<double> order_sum(g.atoms.size(), 0.0);
    for (const Bond& b : g.bonds) {
        ++g.atoms[size_t(b.a)].degree;
        ++g.atoms[size_t(b.b)].degree;
        order_sum[size_t(b.a)] += bond_order_value(b.order);
        order_sum[size_t(b.b)] += bond_order_value(b.order);
    }
    for (size_t v = 0; v < g.atoms.size(); ++v) {
        Atom& a = g.atoms[v];
        if (from_bracket[v]) {
            a.implicit_h = a.explicit_h.value_or(0);
            continue;
        }
        int valence = detail::default_valence(a.element) + a.formal_charge;
        int used = int(std::floor(order_sum[v]));
        int h = valence - used;
        if (h < 0) {
            h = 0;
            g.valence_warning = true;
        }
        a.implicit_h = h;
    }
    g.rebuild_edge_index();
    return g;
}

}  // namespace molkan
