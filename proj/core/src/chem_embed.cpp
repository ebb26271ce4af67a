#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shapelinker/chem.hpp"
#include "shapelinker/errors.hpp"
#include "shapelinker/rng.hpp"
#include "shapelinker/surface.hpp"

namespace shapelinker::chem {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kClashDistance = 1.0;
constexpr int kMaxResamples = 20;

double bond_length(BondOrder o) {
  switch (o) {
    case BondOrder::Single:
      return 1.54;
    case BondOrder::Double:
      return 1.34;
    case BondOrder::Triple:
      return 1.20;
    case BondOrder::Aromatic:
      return 1.39;
  }
  return 1.54;
}

// Ideal bond angle at an atom, picked from its highest bond order.
double center_angle(const MolGraph& mol, int atom) {
  bool has_triple = false;
  bool has_planar = false;
  for (const ChemBond& b : mol.bonds) {
    if (b.i != atom && b.j != atom) continue;
    if (b.order == BondOrder::Triple) has_triple = true;
    if (b.order == BondOrder::Double || b.order == BondOrder::Aromatic) {
      has_planar = true;
    }
  }
  if (has_triple) return kPi;
  if (has_planar) return 120.0 * kPi / 180.0;
  return 109.5 * kPi / 180.0;
}

void orthonormal_pair(const Eigen::Vector3d& g, Eigen::Vector3d& e2,
                      Eigen::Vector3d& e3) {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  if (std::abs(g.x()) >= std::abs(g.y()) &&
      std::abs(g.x()) >= std::abs(g.z())) {
    axis = std::abs(g.y()) <= std::abs(g.z()) ? Eigen::Vector3d::UnitY()
                                              : Eigen::Vector3d::UnitZ();
  } else if (std::abs(g.y()) >= std::abs(g.z())) {
    axis = std::abs(g.x()) <= std::abs(g.z()) ? Eigen::Vector3d::UnitX()
                                              : Eigen::Vector3d::UnitZ();
  }
  e2 = g.cross(axis).normalized();
  e3 = g.cross(e2).normalized();
}

struct RingSystems {
  std::vector<int> component;       // per atom, -1 when acyclic
  std::vector<bool> simple;         // per component: a single plain cycle
  std::vector<std::vector<int>> ring_adj;  // neighbors via ring bonds
};

RingSystems find_ring_systems(const MolGraph& mol) {
  const std::size_t n = mol.atoms.size();
  RingSystems rs;
  rs.component.assign(n, -1);
  rs.ring_adj.assign(n, {});
  for (const ChemBond& b : mol.bonds) {
    if (!b.in_ring) continue;
    rs.ring_adj[static_cast<std::size_t>(b.i)].push_back(b.j);
    rs.ring_adj[static_cast<std::size_t>(b.j)].push_back(b.i);
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (rs.ring_adj[s].empty() || rs.component[s] != -1) continue;
    const int id = static_cast<int>(rs.simple.size());
    bool simple = true;
    std::queue<int> q;
    q.push(static_cast<int>(s));
    rs.component[s] = id;
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      if (rs.ring_adj[static_cast<std::size_t>(v)].size() != 2) {
        simple = false;
      }
      for (const int w : rs.ring_adj[static_cast<std::size_t>(v)]) {
        if (rs.component[static_cast<std::size_t>(w)] == -1) {
          rs.component[static_cast<std::size_t>(w)] = id;
          q.push(w);
        }
      }
    }
    rs.simple.push_back(simple);
  }
  return rs;
}

std::vector<int> walk_cycle(const RingSystems& rs, int start) {
  std::vector<int> order{start};
  int prev = start;
  const auto& first = rs.ring_adj[static_cast<std::size_t>(start)];
  int cur = std::min(first[0], first[1]);
  while (cur != start) {
    order.push_back(cur);
    const auto& next = rs.ring_adj[static_cast<std::size_t>(cur)];
    const int step = next[0] == prev ? next[1] : next[0];
    prev = cur;
    cur = step;
  }
  return order;
}

int bond_between(const MolGraph& mol, int i, int j) {
  for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
    if ((mol.bonds[b].i == i && mol.bonds[b].j == j) ||
        (mol.bonds[b].i == j && mol.bonds[b].j == i)) {
      return static_cast<int>(b);
    }
  }
  return -1;
}

struct Placement {
  std::vector<Eigen::Vector3d> coords;
  std::vector<bool> placed;
  std::vector<Eigen::Vector3d> incoming;  // unit direction used to reach atom
};

// Puts a whole plain ring down as a planar regular polygon whose first
// vertex is `entry`, centered one circumradius past the entry direction.
void place_polygon(const MolGraph& mol, const RingSystems& rs, int entry,
                   Rng& rng, Placement& p, std::queue<int>& frontier) {
  const std::vector<int> cycle = walk_cycle(rs, entry);
  const int k = static_cast<int>(cycle.size());
  double side = 0.0;
  for (int m = 0; m < k; ++m) {
    const int b = bond_between(mol, cycle[static_cast<std::size_t>(m)],
                               cycle[static_cast<std::size_t>((m + 1) % k)]);
    side += bond_length(mol.bonds[static_cast<std::size_t>(b)].order);
  }
  side /= k;
  const double radius = side / (2.0 * std::sin(kPi / k));

  const Eigen::Vector3d g = p.incoming[static_cast<std::size_t>(entry)];
  Eigen::Vector3d e2, e3;
  orthonormal_pair(g, e2, e3);
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const Eigen::Vector3d normal = std::cos(phi) * e2 + std::sin(phi) * e3;

  const Eigen::Vector3d center =
      p.coords[static_cast<std::size_t>(entry)] + radius * g;
  const Eigen::Vector3d u = -g;
  const Eigen::Vector3d w = normal.cross(u).normalized();
  for (int m = 0; m < k; ++m) {
    const double t = 2.0 * kPi * m / k;
    const int atom = cycle[static_cast<std::size_t>(m)];
    p.coords[static_cast<std::size_t>(atom)] =
        center + radius * (std::cos(t) * u + std::sin(t) * w);
    p.incoming[static_cast<std::size_t>(atom)] =
        (p.coords[static_cast<std::size_t>(atom)] - center).normalized();
    if (!p.placed[static_cast<std::size_t>(atom)]) {
      p.placed[static_cast<std::size_t>(atom)] = true;
      frontier.push(atom);
    }
  }
}

std::vector<Eigen::Vector3d> place_once(const MolGraph& mol,
                                        const RingSystems& rs, Rng& rng) {
  const std::size_t n = mol.atoms.size();
  const auto adj = mol.adjacency();
  Placement p;
  p.coords.assign(n, Eigen::Vector3d::Zero());
  p.placed.assign(n, false);
  p.incoming.assign(n, Eigen::Vector3d::UnitX());
  std::vector<bool> component_done(rs.simple.size(), false);

  std::queue<int> frontier;
  const int root = 0;
  p.placed[static_cast<std::size_t>(root)] = true;
  const int root_comp = rs.component[static_cast<std::size_t>(root)];
  if (root_comp >= 0 && rs.simple[static_cast<std::size_t>(root_comp)]) {
    component_done[static_cast<std::size_t>(root_comp)] = true;
    place_polygon(mol, rs, root, rng, p, frontier);
  } else {
    frontier.push(root);
  }

  bool first_child_done = false;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    const double theta = center_angle(mol, v);
    const double alpha = kPi - theta;
    for (const int w : adj[static_cast<std::size_t>(v)]) {
      if (p.placed[static_cast<std::size_t>(w)]) continue;
      const int b = bond_between(mol, v, w);
      const double len = bond_length(mol.bonds[static_cast<std::size_t>(b)].order);

      Eigen::Vector3d dir;
      if (v == root && !first_child_done) {
        dir = Eigen::Vector3d::UnitX();
        first_child_done = true;
        p.incoming[static_cast<std::size_t>(root)] = -dir;
      } else {
        const Eigen::Vector3d g = p.incoming[static_cast<std::size_t>(v)];
        Eigen::Vector3d e2, e3;
        orthonormal_pair(g, e2, e3);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        dir = std::cos(alpha) * g +
              std::sin(alpha) * (std::cos(phi) * e2 + std::sin(phi) * e3);
        dir.normalize();
      }

      p.coords[static_cast<std::size_t>(w)] =
          p.coords[static_cast<std::size_t>(v)] + len * dir;
      p.placed[static_cast<std::size_t>(w)] = true;
      p.incoming[static_cast<std::size_t>(w)] = dir;

      const int comp = rs.component[static_cast<std::size_t>(w)];
      if (comp >= 0 && rs.simple[static_cast<std::size_t>(comp)] &&
          !component_done[static_cast<std::size_t>(comp)]) {
        component_done[static_cast<std::size_t>(comp)] = true;
        place_polygon(mol, rs, w, rng, p, frontier);
      } else {
        frontier.push(w);
      }
    }
  }
  return p.coords;
}

bool has_clash(const MolGraph& mol,
               const std::vector<Eigen::Vector3d>& coords) {
  const std::size_t n = coords.size();
  std::vector<std::vector<bool>> bonded(n, std::vector<bool>(n, false));
  for (const ChemBond& b : mol.bonds) {
    bonded[static_cast<std::size_t>(b.i)][static_cast<std::size_t>(b.j)] =
        true;
    bonded[static_cast<std::size_t>(b.j)][static_cast<std::size_t>(b.i)] =
        true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (bonded[i][j]) continue;
      if ((coords[i] - coords[j]).norm() < kClashDistance) return true;
    }
  }
  return false;
}

}  // namespace

std::vector<EmbedResult> embed_3d(const MolGraph& mol, int n_conformers,
                                  std::uint64_t rng_seed) {
  mol.validate();
  if (mol.atoms.size() > 64) {
    throw InvalidInputError("embed: more than 64 heavy atoms");
  }
  if (n_conformers < 1) {
    throw InvalidInputError("embed: conformer count must be positive");
  }
  MolGraph g = mol;
  g.recompute_rings();
  const RingSystems rs = find_ring_systems(g);

  std::vector<EmbedResult> results;
  results.reserve(static_cast<std::size_t>(n_conformers));
  for (int conf = 0; conf < n_conformers; ++conf) {
    Rng rng(substream_seed(rng_seed, "chem/embed/" + std::to_string(conf)));
    std::vector<Eigen::Vector3d> coords;
    bool clean = false;
    for (int attempt = 0; attempt <= kMaxResamples && !clean; ++attempt) {
      coords = place_once(g, rs, rng);
      clean = !has_clash(g, coords);
    }
    EmbedResult res;
    res.strained = !clean;
    res.atoms.label = "conformer-" + std::to_string(conf);
    res.atoms.atoms.reserve(g.atoms.size());
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
      surface::Atom a;
      a.element = surface::element_from_symbol(g.atoms[i].element);
      a.position = coords[i];
      res.atoms.atoms.push_back(a);
    }
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace shapelinker::chem
