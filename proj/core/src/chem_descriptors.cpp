#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <set>

#include "chem_internal.hpp"
#include "shapelinker/chem.hpp"
#include "shapelinker/errors.hpp"

namespace shapelinker::chem {

namespace {

int numeric_order(BondOrder o) {
  switch (o) {
    case BondOrder::Double:
      return 2;
    case BondOrder::Triple:
      return 3;
    case BondOrder::Single:
    case BondOrder::Aromatic:
      break;
  }
  return 1;
}

std::vector<int> heavy_degrees(const MolGraph& mol) {
  std::vector<int> deg(mol.atoms.size(), 0);
  for (const ChemBond& b : mol.bonds) {
    ++deg[static_cast<std::size_t>(b.i)];
    ++deg[static_cast<std::size_t>(b.j)];
  }
  return deg;
}

// Induced subgraph over `keep` (ascending, unique). A severed bond leaves
// hydrogens on the surviving endpoint so valences stay consistent.
MolGraph induced_subgraph(const MolGraph& mol, const std::vector<int>& keep,
                          std::map<int, int>* index_map = nullptr) {
  std::map<int, int> remap;
  MolGraph out;
  out.atoms.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    remap[keep[i]] = static_cast<int>(i);
    out.atoms.push_back(mol.atoms[static_cast<std::size_t>(keep[i])]);
  }
  for (const ChemBond& b : mol.bonds) {
    const auto it_i = remap.find(b.i);
    const auto it_j = remap.find(b.j);
    if (it_i != remap.end() && it_j != remap.end()) {
      ChemBond nb = b;
      nb.i = it_i->second;
      nb.j = it_j->second;
      out.bonds.push_back(nb);
    } else if (it_i != remap.end()) {
      out.atoms[static_cast<std::size_t>(it_i->second)].h_count +=
          numeric_order(b.order);
    } else if (it_j != remap.end()) {
      out.atoms[static_cast<std::size_t>(it_j->second)].h_count +=
          numeric_order(b.order);
    }
  }
  out.recompute_rings();
  if (index_map) *index_map = std::move(remap);
  return out;
}

std::vector<int> bfs_distances(const std::vector<std::vector<int>>& adj,
                               int start) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(start)] = 0;
  q.push(start);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (const int w : adj[static_cast<std::size_t>(v)]) {
      if (dist[static_cast<std::size_t>(w)] == -1) {
        dist[static_cast<std::size_t>(w)] =
            dist[static_cast<std::size_t>(v)] + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

}  // namespace

int rotatable_bond_count(const MolGraph& mol,
                         const std::optional<std::vector<int>>& scope) {
  MolGraph g = mol;
  g.recompute_rings();
  const std::vector<int> deg = heavy_degrees(g);
  std::vector<bool> in_scope(g.atoms.size(), true);
  if (scope) {
    std::fill(in_scope.begin(), in_scope.end(), false);
    for (const int a : *scope) {
      if (a < 0 || a >= static_cast<int>(g.atoms.size())) {
        throw InvalidInputError("rotatable bonds: scope atom out of range");
      }
      in_scope[static_cast<std::size_t>(a)] = true;
    }
  }
  int count = 0;
  for (const ChemBond& b : g.bonds) {
    if (b.order != BondOrder::Single || b.in_ring) continue;
    if (deg[static_cast<std::size_t>(b.i)] < 2 ||
        deg[static_cast<std::size_t>(b.j)] < 2) {
      continue;
    }
    if (!in_scope[static_cast<std::size_t>(b.i)] ||
        !in_scope[static_cast<std::size_t>(b.j)]) {
      continue;
    }
    ++count;
  }
  return count;
}

double rot_bond_ratio(const MolGraph& mol, const LinkerAnnotation& linker) {
  linker.validate(mol);
  const std::set<int> in(linker.linker_atoms.begin(),
                         linker.linker_atoms.end());
  int linker_bonds = 0;
  for (const ChemBond& b : mol.bonds) {
    if (in.count(b.i) && in.count(b.j)) ++linker_bonds;
  }
  if (linker_bonds == 0) return 0.0;
  const int rot = rotatable_bond_count(mol, linker.linker_atoms);
  return 100.0 * static_cast<double>(rot) /
         static_cast<double>(linker_bonds);
}

double linker_length_ratio(const MolGraph& mol,
                           const LinkerAnnotation& linker) {
  linker.validate(mol);
  if (linker.linker_atoms.size() == 1) return 100.0;

  std::vector<int> keep = linker.linker_atoms;
  std::sort(keep.begin(), keep.end());
  std::map<int, int> remap;
  const MolGraph sub = induced_subgraph(mol, keep, &remap);
  const auto adj = sub.adjacency();

  const std::vector<int> from_a =
      bfs_distances(adj, remap.at(linker.attachments.first));
  const int attach_path =
      from_a[static_cast<std::size_t>(remap.at(linker.attachments.second))];

  int diameter = 0;
  for (std::size_t v = 0; v < adj.size(); ++v) {
    const std::vector<int> dist = bfs_distances(adj, static_cast<int>(v));
    for (const int d : dist) diameter = std::max(diameter, d);
  }
  return 100.0 * static_cast<double>(attach_path) /
         static_cast<double>(diameter);
}

int ring_count(const MolGraph& mol) {
  const auto adj = mol.adjacency();
  std::vector<bool> visited(mol.atoms.size(), false);
  int components = 0;
  for (std::size_t s = 0; s < mol.atoms.size(); ++s) {
    if (visited[s]) continue;
    ++components;
    std::queue<int> q;
    q.push(static_cast<int>(s));
    visited[s] = true;
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      for (const int w : adj[static_cast<std::size_t>(v)]) {
        if (!visited[static_cast<std::size_t>(w)]) {
          visited[static_cast<std::size_t>(w)] = true;
          q.push(w);
        }
      }
    }
  }
  return static_cast<int>(mol.bonds.size()) -
         static_cast<int>(mol.atoms.size()) + components;
}

std::string murcko_scaffold(const MolGraph& mol) {
  if (ring_count(mol) == 0) return "";
  MolGraph g = mol;
  g.recompute_rings();
  std::vector<bool> ring_atom(g.atoms.size(), false);
  for (const ChemBond& b : g.bonds) {
    if (b.in_ring) {
      ring_atom[static_cast<std::size_t>(b.i)] = true;
      ring_atom[static_cast<std::size_t>(b.j)] = true;
    }
  }
  std::vector<bool> alive(g.atoms.size(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> deg(g.atoms.size(), 0);
    for (const ChemBond& b : g.bonds) {
      if (alive[static_cast<std::size_t>(b.i)] &&
          alive[static_cast<std::size_t>(b.j)]) {
        ++deg[static_cast<std::size_t>(b.i)];
        ++deg[static_cast<std::size_t>(b.j)];
      }
    }
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
      if (alive[i] && !ring_atom[i] && deg[i] == 1) {
        alive[i] = false;
        changed = true;
      }
    }
  }
  std::vector<int> keep;
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    if (alive[i]) keep.push_back(static_cast<int>(i));
  }
  return canonical_smiles(induced_subgraph(g, keep));
}

std::pair<MolGraph, LinkerAnnotation> extract_extended_linker(
    const MolGraph& mol, const LinkerAnnotation& linker, int hops) {
  linker.validate(mol);
  if (hops < 0) {
    throw InvalidInputError("extended linker: hops must be >= 0");
  }
  std::set<int> included(linker.linker_atoms.begin(),
                         linker.linker_atoms.end());

  if (hops > 0) {
    const auto adj = mol.adjacency();
    const std::set<int> linker_set = included;
    for (const int attachment :
         {linker.attachments.first, linker.attachments.second}) {
      std::map<int, int> depth;
      std::queue<int> q;
      depth[attachment] = 0;
      q.push(attachment);
      while (!q.empty()) {
        const int v = q.front();
        q.pop();
        if (depth[v] == hops) continue;
        for (const int w : adj[static_cast<std::size_t>(v)]) {
          if (linker_set.count(w) || depth.count(w)) continue;
          depth[w] = depth[v] + 1;
          included.insert(w);
          q.push(w);
        }
      }
    }

    // Never cut through a ring: a ring bond with one endpoint inside pulls
    // the other endpoint in, repeated to a fixpoint.
    MolGraph ringed = mol;
    ringed.recompute_rings();
    bool grew = true;
    while (grew) {
      grew = false;
      for (const ChemBond& b : ringed.bonds) {
        if (!b.in_ring) continue;
        const bool has_i = included.count(b.i) > 0;
        const bool has_j = included.count(b.j) > 0;
        if (has_i != has_j) {
          included.insert(has_i ? b.j : b.i);
          grew = true;
        }
      }
    }
  }

  const std::vector<int> keep(included.begin(), included.end());
  std::map<int, int> remap;
  MolGraph sub = induced_subgraph(mol, keep, &remap);

  LinkerAnnotation out;
  out.linker_atoms.reserve(linker.linker_atoms.size());
  for (const int a : linker.linker_atoms) {
    out.linker_atoms.push_back(remap.at(a));
  }
  out.attachments = {remap.at(linker.attachments.first),
                     remap.at(linker.attachments.second)};
  return {std::move(sub), out};
}

namespace {

std::string fp_atom_token(const ChemAtom& a) {
  std::string t = a.element;
  if (a.aromatic) t[0] = static_cast<char>(std::tolower(t[0]));
  if (a.charge > 0) {
    t += a.charge == 1 ? "+" : "+" + std::to_string(a.charge);
  } else if (a.charge < 0) {
    t += a.charge == -1 ? "-" : std::to_string(a.charge);
  }
  return t;
}

char fp_bond_char(BondOrder o) {
  switch (o) {
    case BondOrder::Double:
      return '=';
    case BondOrder::Triple:
      return '#';
    case BondOrder::Aromatic:
      return ':';
    case BondOrder::Single:
      break;
  }
  return '-';
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Fingerprint fingerprint(const MolGraph& mol) {
  constexpr int kMaxBonds = 7;
  const std::size_t n = mol.atoms.size();
  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, bond)
  for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
    adj[static_cast<std::size_t>(mol.bonds[b].i)].emplace_back(
        mol.bonds[b].j, static_cast<int>(b));
    adj[static_cast<std::size_t>(mol.bonds[b].j)].emplace_back(
        mol.bonds[b].i, static_cast<int>(b));
  }

  std::vector<std::string> atom_tokens(n);
  for (std::size_t i = 0; i < n; ++i) {
    atom_tokens[i] = fp_atom_token(mol.atoms[i]);
  }

  std::set<std::string> path_keys;
  std::vector<int> atom_path;
  std::vector<char> bond_path;
  std::vector<bool> on_path(n, false);

  const auto record = [&]() {
    std::string forward;
    std::string reverse;
    for (std::size_t k = 0; k < atom_path.size(); ++k) {
      if (k > 0) forward += bond_path[k - 1];
      forward += atom_tokens[static_cast<std::size_t>(atom_path[k])];
      const std::size_t rk = atom_path.size() - 1 - k;
      if (k > 0) reverse += bond_path[rk];
      reverse += atom_tokens[static_cast<std::size_t>(atom_path[rk])];
    }
    path_keys.insert(std::min(forward, reverse));
  };

  std::function<void(int)> grow = [&](int v) {
    record();
    if (static_cast<int>(bond_path.size()) == kMaxBonds) return;
    for (const auto& [w, b] : adj[static_cast<std::size_t>(v)]) {
      if (on_path[static_cast<std::size_t>(w)]) continue;
      on_path[static_cast<std::size_t>(w)] = true;
      atom_path.push_back(w);
      bond_path.push_back(
          fp_bond_char(mol.bonds[static_cast<std::size_t>(b)].order));
      grow(w);
      bond_path.pop_back();
      atom_path.pop_back();
      on_path[static_cast<std::size_t>(w)] = false;
    }
  };

  for (std::size_t start = 0; start < n; ++start) {
    on_path[start] = true;
    atom_path.push_back(static_cast<int>(start));
    grow(static_cast<int>(start));
    atom_path.pop_back();
    on_path[start] = false;
  }

  Fingerprint fp;
  for (const std::string& key : path_keys) {
    fp.bits.set(fnv1a64(key) % fp.bits.size());
  }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  const std::size_t both = (a.bits & b.bits).count();
  const std::size_t either = (a.bits | b.bits).count();
  if (either == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace shapelinker::chem
