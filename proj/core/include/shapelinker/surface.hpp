#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shapelinker/geom.hpp"

namespace shapelinker::surface {

// Element vocabulary for surface generation; anything else maps to Other,
// which borrows the carbon radius.
enum class Element : std::uint8_t { C, H, O, N, S, Se, Other };

Element element_from_symbol(const std::string& symbol);
const char* element_symbol(Element e);

// Van der Waals radius in angstrom.
double atom_radius(Element e);
double atom_radius(const std::string& symbol);

struct Atom {
  Element element = Element::Other;
  geom::Vec3 position = geom::Vec3::Zero();
};

struct AtomSet {
  std::vector<Atom> atoms;
  std::string label;

  std::size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }
};

AtomSet atomset_from_xyz(const geom::XyzRecord& record);
geom::XyzRecord atomset_to_xyz(const AtomSet& atoms,
                               const std::string& comment);

struct SurfaceParams {
  double level = 0.9;        // probe offset above the vdW radius, angstrom
  double resolution = 0.9;   // cubic bin side for density equalization
  double sigma = 0.1;        // soft-min temperature
  int descent_steps = 40;
  int seeds_per_atom = 256;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Soft-min over atoms of (|x - a_i| - r_i):
//   -sigma * ln sum_i exp(-(|x - a_i| - r_i) / sigma)
// Converges to the hard minimum as sigma -> 0 and is differentiable in x
// away from atom centers.
double smooth_distance(const geom::Vec3& x, const AtomSet& atoms,
                       double sigma);

// Gradient of smooth_distance with respect to x.
geom::Vec3 smooth_distance_gradient(const geom::Vec3& x, const AtomSet& atoms,
                                    double sigma);

// Samples a dense point cloud on the level set smooth_distance = level.
// Seeds are scattered in shells around the atoms, converged by fixed-step
// gradient descent plus a 1D Newton correction, interior points removed,
// density equalized by averaging within cubic bins anchored at the atom
// centroid, and the result re-projected and sorted lexicographically.
// Deterministic in (atoms, params). Throws SamplingError if more than half
// of the seeds fail to converge.
geom::PointCloud sample_surface(const AtomSet& atoms,
                                const SurfaceParams& params);

// Residual tolerance used both for the post-condition check and interior
// removal (a point with smooth_distance < level - kLevelTolerance is
// inside).
inline constexpr double kLevelTolerance = 0.05;

}  // namespace shapelinker::surface
