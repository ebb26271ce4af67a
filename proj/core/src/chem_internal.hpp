#pragma once

#include <string>
#include <vector>

#include "shapelinker/chem.hpp"

namespace shapelinker::chem::detail {

// Standard valence lists for the organic subset, smallest first.
const std::vector<int>* valence_list(const std::string& element);

// Bond-order sum used for implicit hydrogen fill: aromatic bonds count 1,
// and pi-contributing aromatic atoms (B, C, N, P) carry one extra unit.
int bond_order_sum(const MolGraph& mol, int atom);

// Smallest standard valence covering the atom's bond sum, or -1 when the
// element has no list (bracket-only elements).
int implicit_hydrogens(const MolGraph& mol, int atom);

// Fills h_count for the flagged atoms; throws ParseError(offset) on
// valence violations using the per-atom byte offsets.
void fill_implicit_hydrogens(MolGraph& mol, const std::vector<bool>& fill,
                             const std::vector<std::size_t>& offsets);

bool organic_subset(const std::string& element);

}  // namespace shapelinker::chem::detail
