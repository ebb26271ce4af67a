#include "shapelinker/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <tuple>

#include "shapelinker/errors.hpp"
#include "shapelinker/rng.hpp"

namespace shapelinker::surface {

Element element_from_symbol(const std::string& symbol) {
  if (symbol == "C") return Element::C;
  if (symbol == "H") return Element::H;
  if (symbol == "O") return Element::O;
  if (symbol == "N") return Element::N;
  if (symbol == "S") return Element::S;
  if (symbol == "Se") return Element::Se;
  return Element::Other;
}

const char* element_symbol(Element e) {
  switch (e) {
    case Element::C: return "C";
    case Element::H: return "H";
    case Element::O: return "O";
    case Element::N: return "N";
    case Element::S: return "S";
    case Element::Se: return "Se";
    case Element::Other: return "X";
  }
  return "X";
}

double atom_radius(Element e) {
  switch (e) {
    case Element::C: return 1.70;
    case Element::H: return 1.10;
    case Element::O: return 1.52;
    case Element::N: return 1.55;
    case Element::S: return 1.80;
    case Element::Se: return 1.90;
    case Element::Other: return 1.70;  // carbon radius
  }
  return 1.70;
}

double atom_radius(const std::string& symbol) {
  return atom_radius(element_from_symbol(symbol));
}

AtomSet atomset_from_xyz(const geom::XyzRecord& record) {
  AtomSet out;
  out.label = record.comment;
  out.atoms.reserve(record.cloud.size());
  for (std::size_t i = 0; i < record.cloud.size(); ++i) {
    out.atoms.push_back(
        {element_from_symbol(record.elements[i]), record.cloud.points[i]});
  }
  return out;
}

geom::XyzRecord atomset_to_xyz(const AtomSet& atoms,
                               const std::string& comment) {
  geom::XyzRecord rec;
  rec.comment = comment;
  for (const Atom& a : atoms.atoms) {
    rec.elements.push_back(element_symbol(a.element));
    rec.cloud.points.push_back(a.position);
  }
  return rec;
}

void SurfaceParams::validate() const {
  if (level <= 0.0) throw InvalidInputError("surface: level must be > 0");
  if (resolution <= 0.0) {
    throw InvalidInputError("surface: resolution must be > 0");
  }
  if (sigma <= 0.0) throw InvalidInputError("surface: sigma must be > 0");
  if (descent_steps < 1) {
    throw InvalidInputError("surface: descent_steps must be >= 1");
  }
  if (seeds_per_atom < 1) {
    throw InvalidInputError("surface: seeds_per_atom must be >= 1");
  }
}

namespace {

void require_atoms(const AtomSet& atoms) {
  if (atoms.empty()) throw InvalidInputError("no atoms");
  for (const Atom& a : atoms.atoms) {
    if (!a.position.allFinite()) {
      throw InvalidInputError("atom with non-finite position");
    }
  }
}

// Shifted log-sum-exp of -(d_i - r_i)/sigma; the shift keeps the exponent
// range bounded for far-away points.
double soft_min(const geom::Vec3& x, const AtomSet& atoms, double sigma) {
  double lo = std::numeric_limits<double>::infinity();
  for (const Atom& a : atoms.atoms) {
    lo = std::min(lo, (x - a.position).norm() - atom_radius(a.element));
  }
  double acc = 0.0;
  for (const Atom& a : atoms.atoms) {
    const double s = (x - a.position).norm() - atom_radius(a.element);
    acc += std::exp(-(s - lo) / sigma);
  }
  return lo - sigma * std::log(acc);
}

}  // namespace

double smooth_distance(const geom::Vec3& x, const AtomSet& atoms,
                       double sigma) {
  require_atoms(atoms);
  return soft_min(x, atoms, sigma);
}

geom::Vec3 smooth_distance_gradient(const geom::Vec3& x, const AtomSet& atoms,
                                    double sigma) {
  require_atoms(atoms);
  double lo = std::numeric_limits<double>::infinity();
  for (const Atom& a : atoms.atoms) {
    lo = std::min(lo, (x - a.position).norm() - atom_radius(a.element));
  }
  geom::Vec3 grad = geom::Vec3::Zero();
  double norm = 0.0;
  for (const Atom& a : atoms.atoms) {
    const geom::Vec3 diff = x - a.position;
    const double dist = diff.norm();
    const double s = dist - atom_radius(a.element);
    const double w = std::exp(-(s - lo) / sigma);
    norm += w;
    if (dist > 1e-12) grad += (w / dist) * diff;
  }
  return grad / norm;
}

geom::PointCloud sample_surface(const AtomSet& atoms,
                                const SurfaceParams& params) {
  require_atoms(atoms);
  params.validate();

  Rng rng(params.rng_seed);
  const double level = params.level;

  geom::Vec3 anchor = geom::Vec3::Zero();
  for (const Atom& a : atoms.atoms) anchor += a.position;
  anchor /= static_cast<double>(atoms.size());

  // Converge one seed to the level set: fixed-step descent on the squared
  // residual, then Newton corrections along the gradient.
  const auto converge = [&](geom::Vec3 x, geom::Vec3& out) {
    for (int step = 0; step < params.descent_steps; ++step) {
      const double sd = soft_min(x, atoms, params.sigma);
      const geom::Vec3 g = smooth_distance_gradient(x, atoms, params.sigma);
      x -= 0.2 * 2.0 * (sd - level) * g;
    }
    for (int k = 0; k < 4; ++k) {
      const double sd = soft_min(x, atoms, params.sigma);
      if (std::abs(sd - level) < 1e-9) break;
      const geom::Vec3 g = smooth_distance_gradient(x, atoms, params.sigma);
      const double g2 = g.squaredNorm();
      if (g2 < 1e-12) return false;  // stuck at an interior critical point
      x -= (sd - level) / g2 * g;
    }
    if (!x.allFinite()) return false;
    if (std::abs(soft_min(x, atoms, params.sigma) - level) >=
        kLevelTolerance) {
      return false;
    }
    out = x;
    return true;
  };

  std::vector<geom::Vec3> converged;
  std::size_t seed_count = 0;
  std::size_t failures = 0;
  for (const Atom& a : atoms.atoms) {
    const double r = atom_radius(a.element);
    for (int s = 0; s < params.seeds_per_atom; ++s) {
      ++seed_count;
      // Uniform direction via normalized gaussian, radius in the shell
      // [r, r + 2*level] around the atom.
      geom::Vec3 dir(rng.normal(), rng.normal(), rng.normal());
      double norm = dir.norm();
      while (norm < 1e-9) {
        dir = geom::Vec3(rng.normal(), rng.normal(), rng.normal());
        norm = dir.norm();
      }
      dir /= norm;
      const double radius = rng.uniform(r, r + 2.0 * level);
      geom::Vec3 x = a.position + radius * dir;
      geom::Vec3 y;
      if (converge(x, y)) {
        converged.push_back(y);
      } else {
        ++failures;
      }
    }
  }

  if (failures * 2 > seed_count) {
    throw SamplingError("surface sampling failed to converge", seed_count,
                        failures);
  }

  // Drop interior points (below the level set beyond tolerance). Converged
  // points already satisfy the residual bound, so this only removes seeds
  // trapped in pockets whose Newton step still landed low.
  std::vector<geom::Vec3> kept;
  kept.reserve(converged.size());
  for (const geom::Vec3& p : converged) {
    if (soft_min(p, atoms, params.sigma) >= level - kLevelTolerance) {
      kept.push_back(p);
    }
  }

  // Equalize density: average within cubic bins anchored at the atom
  // centroid, then re-project the averages onto the level set.
  const auto bin_of = [&](const geom::Vec3& p) {
    return std::tuple<long, long, long>(
        static_cast<long>(std::floor((p.x() - anchor.x()) / params.resolution)),
        static_cast<long>(std::floor((p.y() - anchor.y()) / params.resolution)),
        static_cast<long>(std::floor((p.z() - anchor.z()) / params.resolution)));
  };

  struct BinAccum {
    geom::Vec3 sum = geom::Vec3::Zero();
    int count = 0;
  };
  std::map<std::tuple<long, long, long>, BinAccum> bins;
  for (const geom::Vec3& p : kept) {
    auto& slot = bins[bin_of(p)];
    slot.sum += p;
    slot.count += 1;
  }

  std::vector<geom::Vec3> averaged;
  averaged.reserve(bins.size());
  for (const auto& [key, slot] : bins) {
    geom::Vec3 mean = slot.sum / static_cast<double>(slot.count);
    geom::Vec3 projected;
    if (converge(mean, projected)) {
      averaged.push_back(projected);
    }
  }

  // Projection can push two averages into the same bin; keep the one
  // closest to its bin center so the uniqueness invariant holds.
  std::map<std::tuple<long, long, long>, geom::Vec3> final_bins;
  for (const geom::Vec3& p : averaged) {
    const auto key = bin_of(p);
    const geom::Vec3 center =
        anchor + params.resolution *
                     geom::Vec3(static_cast<double>(std::get<0>(key)) + 0.5,
                                static_cast<double>(std::get<1>(key)) + 0.5,
                                static_cast<double>(std::get<2>(key)) + 0.5);
    const auto it = final_bins.find(key);
    if (it == final_bins.end() ||
        (p - center).squaredNorm() < (it->second - center).squaredNorm()) {
      final_bins.insert_or_assign(key, p);
    }
  }

  geom::PointCloud cloud;
  cloud.label = atoms.label;
  cloud.points.reserve(final_bins.size());
  for (const auto& [key, p] : final_bins) cloud.points.push_back(p);
  std::sort(cloud.points.begin(), cloud.points.end(),
            [](const geom::Vec3& a, const geom::Vec3& b) {
              return std::tuple(a.x(), a.y(), a.z()) <
                     std::tuple(b.x(), b.y(), b.z());
            });
  return cloud;
}

}  // namespace shapelinker::surface
