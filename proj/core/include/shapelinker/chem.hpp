#pragma once

#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shapelinker/surface.hpp"

namespace shapelinker::chem {

enum class BondOrder { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct ChemAtom {
  std::string element;
  int charge = 0;
  bool aromatic = false;
  int h_count = 0;
};

struct ChemBond {
  int i = 0;
  int j = 0;
  BondOrder order = BondOrder::Single;
  bool in_ring = false;
};

// Molecular graph over heavy atoms; hydrogens are implicit counts. Ring
// flags are filled in by parse/read and kept consistent with the cycle
// structure by recompute_rings.
struct MolGraph {
  std::vector<ChemAtom> atoms;
  std::vector<ChemBond> bonds;

  std::size_t atom_count() const { return atoms.size(); }
  std::size_t bond_count() const { return bonds.size(); }

  // Heavy-atom neighbor lists, index-aligned with atoms.
  std::vector<std::vector<int>> adjacency() const;

  // Marks every bond that lies on a cycle (a non-bridge edge).
  void recompute_rings();

  // Endpoint sanity, duplicate bonds, connectivity.
  void validate() const;
};

bool atom_in_ring(const MolGraph& mol, int atom);

// The linker subgraph of a molecule plus its two attachment atoms (the
// linker-side ends of the bonds into the anchor and warhead fragments).
struct LinkerAnnotation {
  std::vector<int> linker_atoms;
  std::pair<int, int> attachments{0, 0};

  // Attachments inside the linker set, indices in range, induced linker
  // subgraph connected.
  void validate(const MolGraph& mol) const;
};

struct Fingerprint {
  std::bitset<2048> bits;

  std::size_t count() const { return bits.count(); }
};

// --- parsing and canonical form ----------------------------------------

// Organic-subset SMILES parser: B C N O P S F Cl Br I plus aromatic
// lowercase, brackets with explicit H count and charge, branches, ring
// closures (%nn included), and bond symbols - = # :. Implicit hydrogens
// follow standard valences; multi-fragment input ('.') is rejected.
MolGraph parse_smiles(const std::string& text);

// Morgan-refined canonical ranking with deterministic tie branching, then
// DFS emission. Stereochemistry is out of scope by construction.
std::string canonical_smiles(const MolGraph& mol);

// Rebuilds the graph with atom i of the result = atom perm[i] of the
// input; test helper for order-invariance properties.
MolGraph permute_atoms(const MolGraph& mol, const std::vector<int>& perm);

// --- descriptors ---------------------------------------------------------

// Single-order acyclic non-aromatic bonds whose endpoints both have heavy
// degree >= 2. With a scope, only bonds with both endpoints in the subset
// count.
int rotatable_bond_count(const MolGraph& mol,
                         const std::optional<std::vector<int>>& scope =
                             std::nullopt);

// 100 x rotatable bonds / total bonds of the linker subgraph; 0 when the
// linker has no internal bonds.
double rot_bond_ratio(const MolGraph& mol, const LinkerAnnotation& linker);

// 100 x (attachment-to-attachment bond path) / (linker graph diameter);
// 100 for a single-atom linker.
double linker_length_ratio(const MolGraph& mol,
                           const LinkerAnnotation& linker);

// Iteratively prunes acyclic degree-1 atoms (restoring their hydrogens on
// the surviving neighbor) and canonicalizes what is left. Acyclic
// molecules give "".
std::string murcko_scaffold(const MolGraph& mol);

// Cycle rank: bonds - atoms + connected components.
int ring_count(const MolGraph& mol);

// Linker plus everything within `hops` bonds beyond each attachment atom,
// closed over rings so no cycle is cut. Returns the induced subgraph and
// the annotation re-indexed into it.
std::pair<MolGraph, LinkerAnnotation> extract_extended_linker(
    const MolGraph& mol, const LinkerAnnotation& linker, int hops = 2);

// Path-based fingerprint: every linear atom/bond path of 0..7 bonds,
// read in its lexicographically smaller direction, FNV-1a hashed into
// 2048 bits.
Fingerprint fingerprint(const MolGraph& mol);

// |a AND b| / |a OR b|; 1.0 when both fingerprints are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

// --- 3D embedding --------------------------------------------------------

struct EmbedResult {
  surface::AtomSet atoms;
  // Set when 20 torsion resamples still leave non-bonded atoms closer
  // than 1 angstrom.
  bool strained = false;
};

// Naive deterministic embedder: BFS placement with bond lengths fixed by
// order (1.54 / 1.34 / 1.20 / 1.39 angstrom), angles by the highest bond
// order at the center (109.5 / 120 / 180 degrees), uniform random
// torsions per conformer, and simple rings as planar regular polygons.
std::vector<EmbedResult> embed_3d(const MolGraph& mol, int n_conformers,
                                  std::uint64_t rng_seed);

// --- file formats ----------------------------------------------------------

// One SMILES per line; '#' starts a comment; blank lines skipped.
std::vector<std::string> read_smiles_list(const std::string& path);

// SDF V2000 subset: counts line, atom block (coordinates + element), bond
// block, records separated by $$$$. Aromatic bonds are type 4.
struct SdfRecord {
  std::string name;
  surface::AtomSet atoms;
  MolGraph mol;
};

std::vector<SdfRecord> read_sdf_file(const std::string& path);

// JSON annotations: {"linker_atoms": [...], "attachments": [i, j]} or a
// list of such objects.
std::vector<LinkerAnnotation> load_annotations(const std::string& path);

}  // namespace shapelinker::chem
