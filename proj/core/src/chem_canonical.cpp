#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <tuple>

#include "chem_internal.hpp"
#include "shapelinker/chem.hpp"
#include "shapelinker/errors.hpp"

namespace shapelinker::chem {

namespace {

void densify(std::vector<int>& ranks) {
  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int& r : ranks) {
    r = static_cast<int>(
        std::lower_bound(sorted.begin(), sorted.end(), r) - sorted.begin());
  }
}

int distinct_count(const std::vector<int>& ranks) {
  return ranks.empty() ? 0 : *std::max_element(ranks.begin(), ranks.end()) + 1;
}

// Neighborhood refinement: split rank classes by the multiset of neighbor
// ranks until the partition is stable.
void refine(const std::vector<std::vector<int>>& adj,
            std::vector<int>& ranks) {
  densify(ranks);
  while (true) {
    using Key = std::pair<int, std::vector<int>>;
    std::vector<Key> keys(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      std::vector<int> neigh;
      neigh.reserve(adj[i].size());
      for (const int w : adj[i]) {
        neigh.push_back(ranks[static_cast<std::size_t>(w)]);
      }
      std::sort(neigh.begin(), neigh.end());
      keys[i] = {ranks[i], std::move(neigh)};
    }
    std::vector<Key> sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> next(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      next[i] = static_cast<int>(
          std::lower_bound(sorted.begin(), sorted.end(), keys[i]) -
          sorted.begin());
    }
    const bool stable = distinct_count(next) == distinct_count(ranks);
    ranks = std::move(next);
    if (stable) return;
  }
}

std::string charge_suffix(int charge) {
  if (charge == 0) return "";
  const char sign = charge > 0 ? '+' : '-';
  const int mag = charge > 0 ? charge : -charge;
  if (mag == 1) return std::string(1, sign);
  return std::string(1, sign) + std::to_string(mag);
}

std::string atom_token(const MolGraph& mol, int atom) {
  const ChemAtom& a = mol.atoms[static_cast<std::size_t>(atom)];
  std::string name = a.element;
  if (a.aromatic) name[0] = static_cast<char>(std::tolower(name[0]));
  const bool bare = detail::organic_subset(a.element) && a.charge == 0 &&
                    detail::implicit_hydrogens(mol, atom) == a.h_count;
  if (bare) return name;
  std::string token = "[" + name;
  if (a.h_count == 1) {
    token += "H";
  } else if (a.h_count > 1) {
    token += "H" + std::to_string(a.h_count);
  }
  token += charge_suffix(a.charge);
  token += "]";
  return token;
}

// The symbol written before a bond. Single bonds between two aromatic atoms
// need an explicit '-' so the reader does not promote them back to aromatic.
std::string bond_prefix(const MolGraph& mol, const ChemBond& b) {
  switch (b.order) {
    case BondOrder::Double:
      return "=";
    case BondOrder::Triple:
      return "#";
    case BondOrder::Aromatic:
      return "";
    case BondOrder::Single:
      break;
  }
  const bool both_aromatic =
      mol.atoms[static_cast<std::size_t>(b.i)].aromatic &&
      mol.atoms[static_cast<std::size_t>(b.j)].aromatic;
  return both_aromatic ? "-" : "";
}

std::string digit_token(int digit) {
  if (digit < 10) return std::to_string(digit);
  return "%" + (digit < 100 ? std::to_string(digit)
                            : throw InvalidInputError(
                                  "smiles writer: ring closure digits "
                                  "exhausted"));
}

struct BackEdge {
  int opener = -1;
  int closer = -1;
  int bond = -1;
  int digit = -1;
};

std::string emit(const MolGraph& mol, const std::vector<int>& ranks) {
  const std::size_t n = mol.atoms.size();
  // Neighbor lists carrying bond ids, ordered by canonical rank.
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
    adj[static_cast<std::size_t>(mol.bonds[b].i)].emplace_back(
        mol.bonds[b].j, static_cast<int>(b));
    adj[static_cast<std::size_t>(mol.bonds[b].j)].emplace_back(
        mol.bonds[b].i, static_cast<int>(b));
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end(),
              [&](const std::pair<int, int>& x, const std::pair<int, int>& y) {
                return ranks[static_cast<std::size_t>(x.first)] <
                       ranks[static_cast<std::size_t>(y.first)];
              });
  }

  int start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranks[i] == 0) start = static_cast<int>(i);
  }

  // First walk: spanning tree plus the list of ring-closure edges.
  std::vector<int> disc(n, -1);
  std::vector<int> parent_bond(n, -1);
  std::vector<std::vector<std::pair<int, int>>> children(n);  // (child, bond)
  std::vector<BackEdge> back_edges;
  std::vector<std::vector<int>> opens_at(n);
  std::vector<std::vector<int>> closes_at(n);
  int timer = 0;

  std::function<void(int)> walk = [&](int v) {
    disc[static_cast<std::size_t>(v)] = timer++;
    for (const auto& [w, b] : adj[static_cast<std::size_t>(v)]) {
      if (b == parent_bond[static_cast<std::size_t>(v)]) continue;
      if (disc[static_cast<std::size_t>(w)] == -1) {
        parent_bond[static_cast<std::size_t>(w)] = b;
        children[static_cast<std::size_t>(v)].emplace_back(w, b);
        walk(w);
      } else if (disc[static_cast<std::size_t>(w)] <
                 disc[static_cast<std::size_t>(v)]) {
        const int id = static_cast<int>(back_edges.size());
        back_edges.push_back({w, v, b, -1});
        opens_at[static_cast<std::size_t>(w)].push_back(id);
        closes_at[static_cast<std::size_t>(v)].push_back(id);
      }
    }
  };
  walk(start);

  std::set<int> digits_in_use;
  const auto alloc_digit = [&]() {
    int d = 1;
    while (digits_in_use.count(d)) ++d;
    digits_in_use.insert(d);
    return d;
  };

  std::string out;
  std::function<void(int)> render = [&](int v) {
    out += atom_token(mol, v);
    std::vector<int> closing = closes_at[static_cast<std::size_t>(v)];
    std::sort(closing.begin(), closing.end(), [&](int x, int y) {
      return back_edges[static_cast<std::size_t>(x)].digit <
             back_edges[static_cast<std::size_t>(y)].digit;
    });
    for (const int id : closing) {
      BackEdge& e = back_edges[static_cast<std::size_t>(id)];
      out += digit_token(e.digit);
      digits_in_use.erase(e.digit);
    }
    for (const int id : opens_at[static_cast<std::size_t>(v)]) {
      BackEdge& e = back_edges[static_cast<std::size_t>(id)];
      e.digit = alloc_digit();
      out += bond_prefix(mol, mol.bonds[static_cast<std::size_t>(e.bond)]);
      out += digit_token(e.digit);
    }
    const auto& kids = children[static_cast<std::size_t>(v)];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const auto& [w, b] = kids[k];
      const std::string prefix =
          bond_prefix(mol, mol.bonds[static_cast<std::size_t>(b)]);
      if (k + 1 < kids.size()) {
        out += "(" + prefix;
        render(w);
        out += ")";
      } else {
        out += prefix;
        render(w);
      }
    }
  };
  render(start);
  return out;
}

// Resolve remaining symmetry by trying each member of the smallest tied
// class as the class representative and keeping the smallest string.
std::string search(const MolGraph& mol,
                   const std::vector<std::vector<int>>& adj,
                   std::vector<int> ranks) {
  refine(adj, ranks);
  const int classes = distinct_count(ranks);
  if (classes == static_cast<int>(ranks.size())) return emit(mol, ranks);

  int tied_rank = -1;
  std::vector<int> hist(static_cast<std::size_t>(classes), 0);
  for (const int r : ranks) ++hist[static_cast<std::size_t>(r)];
  for (int r = 0; r < classes; ++r) {
    if (hist[static_cast<std::size_t>(r)] >= 2) {
      tied_rank = r;
      break;
    }
  }

  std::string best;
  for (std::size_t a = 0; a < ranks.size(); ++a) {
    if (ranks[a] != tied_rank) continue;
    std::vector<int> branched(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) branched[i] = ranks[i] * 2;
    branched[a] -= 1;
    const std::string s = search(mol, adj, std::move(branched));
    if (best.empty() || s < best) best = s;
  }
  return best;
}

}  // namespace

std::string canonical_smiles(const MolGraph& mol) {
  mol.validate();
  const auto adj = mol.adjacency();
  std::vector<std::tuple<std::string, int, int, bool, std::size_t>> keys;
  keys.reserve(mol.atoms.size());
  for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
    const ChemAtom& a = mol.atoms[i];
    keys.emplace_back(a.element, a.charge, a.h_count, a.aromatic,
                      adj[i].size());
  }
  auto sorted = keys;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> ranks(mol.atoms.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    ranks[i] = static_cast<int>(
        std::lower_bound(sorted.begin(), sorted.end(), keys[i]) -
        sorted.begin());
  }
  return search(mol, adj, std::move(ranks));
}

}  // namespace shapelinker::chem
