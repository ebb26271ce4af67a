#include <algorithm>
#include <cctype>
#include <map>
#include <queue>
#include <set>

#include "chem_internal.hpp"
#include "shapelinker/chem.hpp"
#include "shapelinker/errors.hpp"

namespace shapelinker::chem {

std::vector<std::vector<int>> MolGraph::adjacency() const {
  std::vector<std::vector<int>> adj(atoms.size());
  for (const ChemBond& b : bonds) {
    adj[static_cast<std::size_t>(b.i)].push_back(b.j);
    adj[static_cast<std::size_t>(b.j)].push_back(b.i);
  }
  return adj;
}

void MolGraph::recompute_rings() {
  // A bond lies on a cycle exactly when it is not a bridge.
  const int n = static_cast<int>(atoms.size());
  std::vector<std::vector<std::pair<int, int>>> adj(
      static_cast<std::size_t>(n));  // (neighbor, bond id)
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    adj[static_cast<std::size_t>(bonds[b].i)].emplace_back(
        bonds[b].j, static_cast<int>(b));
    adj[static_cast<std::size_t>(bonds[b].j)].emplace_back(
        bonds[b].i, static_cast<int>(b));
  }
  for (ChemBond& b : bonds) b.in_ring = true;

  std::vector<int> disc(static_cast<std::size_t>(n), -1);
  std::vector<int> low(static_cast<std::size_t>(n), 0);
  int timer = 0;

  // Iterative bridge-finding DFS.
  struct Frame {
    int v;
    int parent_bond;
    std::size_t next = 0;
  };
  for (int root = 0; root < n; ++root) {
    if (disc[static_cast<std::size_t>(root)] != -1) continue;
    std::vector<Frame> stack;
    stack.push_back({root, -1});
    disc[static_cast<std::size_t>(root)] =
        low[static_cast<std::size_t>(root)] = timer++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const auto& edges = adj[static_cast<std::size_t>(f.v)];
      if (f.next < edges.size()) {
        const auto [w, bid] = edges[f.next++];
        if (bid == f.parent_bond) continue;
        if (disc[static_cast<std::size_t>(w)] != -1) {
          low[static_cast<std::size_t>(f.v)] =
              std::min(low[static_cast<std::size_t>(f.v)],
                       disc[static_cast<std::size_t>(w)]);
        } else {
          disc[static_cast<std::size_t>(w)] =
              low[static_cast<std::size_t>(w)] = timer++;
          stack.push_back({w, bid});
        }
      } else {
        const int v = f.v;
        const int pb = f.parent_bond;
        stack.pop_back();
        if (pb >= 0) {
          const ChemBond& b = bonds[static_cast<std::size_t>(pb)];
          const int parent = stack.back().v;
          low[static_cast<std::size_t>(parent)] =
              std::min(low[static_cast<std::size_t>(parent)],
                       low[static_cast<std::size_t>(v)]);
          if (low[static_cast<std::size_t>(v)] >
              disc[static_cast<std::size_t>(parent)]) {
            bonds[static_cast<std::size_t>(pb)].in_ring = false;
          }
          (void)b;
        }
      }
    }
  }
}

void MolGraph::validate() const {
  const int n = static_cast<int>(atoms.size());
  if (n == 0) throw InvalidInputError("molecule: no atoms");
  std::set<std::pair<int, int>> seen;
  for (const ChemBond& b : bonds) {
    if (b.i < 0 || b.j < 0 || b.i >= n || b.j >= n) {
      throw InvalidInputError("molecule: bond endpoint out of range");
    }
    if (b.i == b.j) throw InvalidInputError("molecule: self bond");
    const auto key = std::minmax(b.i, b.j);
    if (!seen.insert(key).second) {
      throw InvalidInputError("molecule: duplicate bond");
    }
  }
  // Connectivity.
  std::vector<bool> visited(static_cast<std::size_t>(n), false);
  std::queue<int> q;
  q.push(0);
  visited[0] = true;
  const auto adj = adjacency();
  int count = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (const int w : adj[static_cast<std::size_t>(v)]) {
      if (!visited[static_cast<std::size_t>(w)]) {
        visited[static_cast<std::size_t>(w)] = true;
        ++count;
        q.push(w);
      }
    }
  }
  if (count != n) throw InvalidInputError("molecule: graph is disconnected");
}

bool atom_in_ring(const MolGraph& mol, int atom) {
  for (const ChemBond& b : mol.bonds) {
    if (b.in_ring && (b.i == atom || b.j == atom)) return true;
  }
  return false;
}

void LinkerAnnotation::validate(const MolGraph& mol) const {
  if (linker_atoms.empty()) {
    throw InvalidInputError("linker annotation: empty atom set");
  }
  const int n = static_cast<int>(mol.atoms.size());
  std::set<int> in_linker;
  for (const int a : linker_atoms) {
    if (a < 0 || a >= n) {
      throw InvalidInputError("linker annotation: atom index " +
                              std::to_string(a) + " out of range");
    }
    if (!in_linker.insert(a).second) {
      throw InvalidInputError("linker annotation: duplicate atom index " +
                              std::to_string(a));
    }
  }
  for (const int a : {attachments.first, attachments.second}) {
    if (!in_linker.count(a)) {
      throw InvalidInputError("linker annotation: attachment atom " +
                              std::to_string(a) +
                              " is not in the linker set");
    }
  }
  // Induced-subgraph connectivity.
  std::set<int> visited;
  std::queue<int> q;
  q.push(linker_atoms.front());
  visited.insert(linker_atoms.front());
  const auto adj = mol.adjacency();
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (const int w : adj[static_cast<std::size_t>(v)]) {
      if (in_linker.count(w) && !visited.count(w)) {
        visited.insert(w);
        q.push(w);
      }
    }
  }
  if (visited.size() != in_linker.size()) {
    throw InvalidInputError("linker annotation: linker subgraph is "
                            "disconnected");
  }
}

namespace detail {

const std::vector<int>* valence_list(const std::string& element) {
  static const std::map<std::string, std::vector<int>> table = {
      {"B", {3}},       {"C", {4}},      {"N", {3, 5}}, {"O", {2}},
      {"P", {3, 5}},    {"S", {2, 4, 6}}, {"F", {1}},    {"Cl", {1}},
      {"Br", {1}},      {"I", {1}},
  };
  const auto it = table.find(element);
  return it == table.end() ? nullptr : &it->second;
}

bool organic_subset(const std::string& element) {
  return valence_list(element) != nullptr;
}

int bond_order_sum(const MolGraph& mol, int atom) {
  int sum = 0;
  for (const ChemBond& b : mol.bonds) {
    if (b.i != atom && b.j != atom) continue;
    switch (b.order) {
      case BondOrder::Single:
      case BondOrder::Aromatic:
        sum += 1;
        break;
      case BondOrder::Double:
        sum += 2;
        break;
      case BondOrder::Triple:
        sum += 3;
        break;
    }
  }
  const ChemAtom& a = mol.atoms[static_cast<std::size_t>(atom)];
  if (a.aromatic && (a.element == "C" || a.element == "N" ||
                     a.element == "P" || a.element == "B")) {
    sum += 1;  // one valence consumed by the delocalized pi system
  }
  return sum;
}

int implicit_hydrogens(const MolGraph& mol, int atom) {
  const ChemAtom& a = mol.atoms[static_cast<std::size_t>(atom)];
  const std::vector<int>* valences = valence_list(a.element);
  if (!valences) return -1;
  const int sum = bond_order_sum(mol, atom);
  for (const int v : *valences) {
    if (sum <= v) return v - sum;
  }
  return -1;
}

void fill_implicit_hydrogens(MolGraph& mol, const std::vector<bool>& fill,
                             const std::vector<std::size_t>& offsets) {
  for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
    if (!fill[i]) continue;
    const int h = implicit_hydrogens(mol, static_cast<int>(i));
    if (h < 0) {
      throw ParseError(offsets[i], "valence violation on " +
                                       mol.atoms[i].element);
    }
    mol.atoms[i].h_count = h;
  }
}

}  // namespace detail

namespace {

struct RingOpen {
  int atom = -1;
  int order = 0;  // 0 = unspecified
  std::size_t offset = 0;
};

struct Parser {
  const std::string& text;
  std::size_t pos = 0;

  MolGraph mol;
  std::vector<bool> needs_h_fill;
  std::vector<std::size_t> atom_offsets;
  // Bonds written without an explicit symbol between two aromatic atoms;
  // they become aromatic only if they land on a ring.
  std::vector<bool> maybe_aromatic;
  std::vector<std::size_t> bond_offsets;

  int prev_atom = -1;
  int pending_order = 0;  // 0 = none, 1/2/3 = order, 4 = aromatic
  std::size_t pending_offset = 0;
  std::vector<std::pair<int, std::size_t>> branch_stack;  // (atom, offset)
  std::map<int, RingOpen> ring_open;

  explicit Parser(const std::string& t) : text(t) {}

  [[noreturn]] void fail(std::size_t at, const std::string& msg) const {
    throw ParseError(at, msg);
  }

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  void add_bond(int i, int j, int order, bool maybe_arom,
                std::size_t offset) {
    for (const ChemBond& b : mol.bonds) {
      if ((b.i == i && b.j == j) || (b.i == j && b.j == i)) {
        fail(offset, "duplicate bond between atoms " + std::to_string(i) +
                         " and " + std::to_string(j));
      }
    }
    ChemBond b;
    b.i = i;
    b.j = j;
    b.order = static_cast<BondOrder>(order);
    mol.bonds.push_back(b);
    maybe_aromatic.push_back(maybe_arom);
    bond_offsets.push_back(offset);
  }

  void connect(int atom, std::size_t offset) {
    if (prev_atom >= 0) {
      int order = pending_order;
      bool maybe = false;
      const bool both_aromatic =
          mol.atoms[static_cast<std::size_t>(prev_atom)].aromatic &&
          mol.atoms[static_cast<std::size_t>(atom)].aromatic;
      if (order == 0) {
        if (both_aromatic) {
          order = 4;
          maybe = true;  // demoted to single if it is not a ring bond
        } else {
          order = 1;
        }
      }
      add_bond(prev_atom, atom, order, maybe, offset);
    } else if (pending_order != 0) {
      fail(pending_offset, "bond symbol before any atom");
    }
    pending_order = 0;
    prev_atom = atom;
  }

  int add_atom(const std::string& element, bool aromatic, int charge,
               int h_count, bool fill, std::size_t offset) {
    ChemAtom a;
    a.element = element;
    a.aromatic = aromatic;
    a.charge = charge;
    a.h_count = h_count;
    mol.atoms.push_back(a);
    needs_h_fill.push_back(fill);
    atom_offsets.push_back(offset);
    return static_cast<int>(mol.atoms.size()) - 1;
  }

  void ring_closure(int digit, std::size_t offset) {
    if (prev_atom < 0) fail(offset, "ring closure before any atom");
    const auto it = ring_open.find(digit);
    if (it == ring_open.end()) {
      ring_open[digit] = {prev_atom, pending_order, offset};
      pending_order = 0;
      return;
    }
    const RingOpen open = it->second;
    ring_open.erase(it);
    if (open.atom == prev_atom) {
      fail(offset, "ring closure " + std::to_string(digit) +
                       " bonds an atom to itself");
    }
    int order = 0;
    if (open.order != 0 && pending_order != 0 &&
        open.order != pending_order) {
      fail(offset, "conflicting bond symbols on ring closure " +
                       std::to_string(digit));
    }
    order = open.order != 0 ? open.order : pending_order;
    bool maybe = false;
    if (order == 0) {
      const bool both_aromatic =
          mol.atoms[static_cast<std::size_t>(open.atom)].aromatic &&
          mol.atoms[static_cast<std::size_t>(prev_atom)].aromatic;
      if (both_aromatic) {
        order = 4;
        maybe = true;
      } else {
        order = 1;
      }
    }
    add_bond(open.atom, prev_atom, order, maybe, offset);
    pending_order = 0;
  }

  void parse_organic_atom() {
    const std::size_t at = pos;
    const char c = text[pos];
    std::string element;
    bool aromatic = false;
    if (c == 'C' && pos + 1 < text.size() && text[pos + 1] == 'l') {
      element = "Cl";
      pos += 2;
    } else if (c == 'B' && pos + 1 < text.size() && text[pos + 1] == 'r') {
      element = "Br";
      pos += 2;
    } else if (std::string("BCNOPSFI").find(c) != std::string::npos) {
      element = std::string(1, c);
      ++pos;
    } else if (std::string("bcnops").find(c) != std::string::npos) {
      element = std::string(1, static_cast<char>(std::toupper(c)));
      aromatic = true;
      ++pos;
    } else {
      fail(at, std::string("unexpected character '") + c + "'");
    }
    const int atom = add_atom(element, aromatic, 0, 0, true, at);
    connect(atom, at);
  }

  void parse_bracket_atom() {
    const std::size_t at = pos;
    ++pos;  // consume '['
    if (done()) fail(at, "unterminated bracket atom");
    if (std::isdigit(static_cast<unsigned char>(peek()))) {
      fail(pos, "isotopes are not supported");
    }

    std::string element;
    bool aromatic = false;
    char c = peek();
    if (std::islower(static_cast<unsigned char>(c))) {
      if (std::string("bcnops").find(c) == std::string::npos) {
        fail(pos, std::string("unknown aromatic element '") + c + "'");
      }
      element = std::string(1, static_cast<char>(std::toupper(c)));
      aromatic = true;
      ++pos;
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      element = std::string(1, c);
      ++pos;
      if (!done() && std::islower(static_cast<unsigned char>(peek())) &&
          peek() != 'h') {
        element += peek();
        ++pos;
      }
    } else {
      fail(pos, "expected an element symbol in brackets");
    }

    int h_count = 0;
    if (!done() && peek() == 'H') {
      ++pos;
      h_count = 1;
      if (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
        h_count = peek() - '0';
        ++pos;
      }
    }

    int charge = 0;
    if (!done() && (peek() == '+' || peek() == '-')) {
      const int sign = peek() == '+' ? 1 : -1;
      ++pos;
      if (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
        charge = sign * (peek() - '0');
        ++pos;
      } else {
        charge = sign;
        while (!done() && ((sign > 0 && peek() == '+') ||
                           (sign < 0 && peek() == '-'))) {
          charge += sign;
          ++pos;
        }
      }
    }

    if (done()) fail(at, "unterminated bracket atom");
    if (peek() == '@') fail(pos, "stereochemistry is not supported");
    if (peek() == ':') fail(pos, "atom maps are not supported");
    if (peek() != ']') {
      fail(pos, std::string("unexpected character '") + peek() +
                    "' in bracket atom");
    }
    ++pos;

    const int atom = add_atom(element, aromatic, charge, h_count, false, at);
    connect(atom, at);
  }

  MolGraph run() {
    if (text.empty()) fail(0, "empty SMILES");
    while (!done()) {
      const char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        // Allow trailing whitespace only.
        for (std::size_t k = pos; k < text.size(); ++k) {
          if (!std::isspace(static_cast<unsigned char>(text[k]))) {
            fail(pos, "whitespace inside SMILES");
          }
        }
        break;
      }
      if (c == '.') fail(pos, "multi-fragment SMILES is not supported");
      if (c == '(') {
        if (prev_atom < 0) fail(pos, "branch before any atom");
        branch_stack.emplace_back(prev_atom, pos);
        ++pos;
        continue;
      }
      if (c == ')') {
        if (branch_stack.empty()) fail(pos, "unmatched ')'");
        if (pending_order != 0) fail(pending_offset, "dangling bond symbol");
        prev_atom = branch_stack.back().first;
        branch_stack.pop_back();
        ++pos;
        continue;
      }
      if (c == '-' || c == '=' || c == '#' || c == ':') {
        if (pending_order != 0) fail(pos, "two bond symbols in a row");
        pending_order = c == '-' ? 1 : c == '=' ? 2 : c == '#' ? 3 : 4;
        pending_offset = pos;
        ++pos;
        continue;
      }
      if (c == '/' || c == '\\') {
        fail(pos, "stereo bonds are not supported");
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        ring_closure(c - '0', pos);
        ++pos;
        continue;
      }
      if (c == '%') {
        if (pos + 2 >= text.size() ||
            !std::isdigit(static_cast<unsigned char>(text[pos + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text[pos + 2]))) {
          fail(pos, "'%' needs two digits");
        }
        ring_closure((text[pos + 1] - '0') * 10 + (text[pos + 2] - '0'),
                     pos);
        pos += 3;
        continue;
      }
      if (c == '[') {
        parse_bracket_atom();
        continue;
      }
      parse_organic_atom();
    }

    if (!branch_stack.empty()) {
      fail(branch_stack.back().second, "unclosed branch");
    }
    if (pending_order != 0) fail(pending_offset, "dangling bond symbol");
    if (!ring_open.empty()) {
      const auto& [digit, open] = *ring_open.begin();
      fail(open.offset, "unclosed ring bond " + std::to_string(digit));
    }
    if (mol.atoms.empty()) fail(0, "empty SMILES");

    mol.recompute_rings();

    // Unsymboled bonds between two aromatic atoms default to aromatic only
    // on rings; off-ring (biphenyl-style) they are single bonds.
    for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
      if (maybe_aromatic[b] && !mol.bonds[b].in_ring) {
        mol.bonds[b].order = BondOrder::Single;
      }
      if (mol.bonds[b].order == BondOrder::Aromatic) {
        const ChemAtom& ai = mol.atoms[static_cast<std::size_t>(
            mol.bonds[b].i)];
        const ChemAtom& aj = mol.atoms[static_cast<std::size_t>(
            mol.bonds[b].j)];
        if (!ai.aromatic || !aj.aromatic) {
          fail(bond_offsets[b], "aromatic bond needs aromatic atoms");
        }
        if (!mol.bonds[b].in_ring) {
          fail(bond_offsets[b], "aromatic bond outside a ring");
        }
      }
    }

    // Every aromatic atom must sit in an aromatic ring.
    for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
      if (!mol.atoms[i].aromatic) continue;
      int aromatic_bonds = 0;
      for (const ChemBond& b : mol.bonds) {
        if ((b.i == static_cast<int>(i) || b.j == static_cast<int>(i)) &&
            b.order == BondOrder::Aromatic) {
          ++aromatic_bonds;
        }
      }
      if (aromatic_bonds < 2) {
        fail(atom_offsets[i], "aromatic atom outside an aromatic ring");
      }
    }

    detail::fill_implicit_hydrogens(mol, needs_h_fill, atom_offsets);
    return std::move(mol);
  }
};

}  // namespace

MolGraph parse_smiles(const std::string& text) {
  Parser parser(text);
  return parser.run();
}

MolGraph permute_atoms(const MolGraph& mol, const std::vector<int>& perm) {
  const int n = static_cast<int>(mol.atoms.size());
  if (static_cast<int>(perm.size()) != n) {
    throw InvalidInputError("permute_atoms: permutation size mismatch");
  }
  std::vector<int> inverse(perm.size());
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] < 0 || perm[i] >= n || seen[static_cast<std::size_t>(
                                           perm[i])]) {
      throw InvalidInputError("permute_atoms: not a permutation");
    }
    seen[static_cast<std::size_t>(perm[i])] = true;
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  MolGraph out;
  out.atoms.reserve(mol.atoms.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.atoms.push_back(mol.atoms[static_cast<std::size_t>(perm[i])]);
  }
  out.bonds = mol.bonds;
  for (ChemBond& b : out.bonds) {
    b.i = inverse[static_cast<std::size_t>(b.i)];
    b.j = inverse[static_cast<std::size_t>(b.j)];
  }
  return out;
}

}  // namespace shapelinker::chem
