#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "shapelinker/chem.hpp"
#include "shapelinker/errors.hpp"
#include "shapelinker/rng.hpp"

using namespace shapelinker;
using chem::BondOrder;
using chem::ChemBond;
using chem::LinkerAnnotation;
using chem::MolGraph;

namespace {

// The permutation-stability corpus. Covers aromatics, fused and plain rings,
// heteroaromatics, charges, halogens, triple bonds, and %nn ring closures.
const std::vector<std::string> kFixture = {
    "CCO",
    "c1ccccc1",
    "Cc1ccccc1",
    "c1ccc2ccccc2c1",
    "CC(=O)Nc1ccccc1",
    "O=C(O)CN1CCOCC1",
    "FC(F)(F)c1ccc(Cl)cc1",
    "N#CCCOC",
    "C1CC1CC=O",
    "c1ccncc1",
    "c1ccoc1",
    "[nH]1cccc1",
    "c1ccccc1-c1ccccc1",
    "ClCCBr",
    "[NH3+]CCC([O-])=O",
    "S1C=CC=C1",
    "CC(C)(C)OC(=O)N",
    "C%11CCCCC%11",
    "N1CCOCC1",
    "O=S(=O)(N)c1ccc(N)cc1",
};

std::size_t parse_offset(const std::string& smi) {
  try {
    chem::parse_smiles(smi);
  } catch (const ParseError& e) {
    return e.offset();
  }
  return static_cast<std::size_t>(-1);
}

std::vector<int> hydrogens(const MolGraph& m) {
  std::vector<int> h;
  for (const auto& a : m.atoms) h.push_back(a.h_count);
  return h;
}

const ChemBond* find_bond(const MolGraph& m, int i, int j) {
  for (const ChemBond& b : m.bonds) {
    if ((b.i == i && b.j == j) || (b.i == j && b.j == i)) return &b;
  }
  return nullptr;
}

std::vector<int> identity_perm(std::size_t n) {
  std::vector<int> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
  return perm;
}

std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  return inv;
}

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("shapelinker_chem_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& leaf) const {
    return (path / leaf).string();
  }
  std::string write(const std::string& leaf, const std::string& text) const {
    const std::string p = file(leaf);
    std::ofstream out(p);
    out << text;
    return p;
  }
};

}  // namespace

TEST_CASE("parser fills implicit hydrogens from the valence model") {
  const MolGraph eth = chem::parse_smiles("CCO");
  CHECK(eth.atom_count() == 3);
  CHECK(eth.bond_count() == 2);
  CHECK(hydrogens(eth) == std::vector<int>{3, 2, 1});
  CHECK(eth.atoms[0].element == "C");
  CHECK(eth.atoms[2].element == "O");
  for (const ChemBond& b : eth.bonds) CHECK(b.order == BondOrder::Single);

  CHECK(hydrogens(chem::parse_smiles("CC(=O)N")) ==
        std::vector<int>{3, 0, 0, 2});
  CHECK(hydrogens(chem::parse_smiles("C#N")) == std::vector<int>{1, 0});
  CHECK(hydrogens(chem::parse_smiles("N(=O)O")) == std::vector<int>{0, 0, 1});
  CHECK(hydrogens(chem::parse_smiles("S(=O)(=O)(O)O")) ==
        std::vector<int>{0, 0, 0, 1, 1});
  CHECK(hydrogens(chem::parse_smiles("ClCCBr")) ==
        std::vector<int>{0, 2, 2, 0});
  CHECK(chem::parse_smiles("ClCCBr").atoms[0].element == "Cl");
  CHECK(chem::parse_smiles("ClCCBr").atoms[3].element == "Br");
}

TEST_CASE("bracket atoms carry explicit hydrogens and charges") {
  const MolGraph amm = chem::parse_smiles("[NH3+]CC");
  CHECK(amm.atoms[0].charge == 1);
  CHECK(amm.atoms[0].h_count == 3);

  const MolGraph carb = chem::parse_smiles("[O-]C(=O)C");
  CHECK(carb.atoms[0].charge == -1);
  CHECK(carb.atoms[0].h_count == 0);

  // No valence enforcement inside brackets.
  const MolGraph quat = chem::parse_smiles("[N+](C)(C)(C)C");
  CHECK(quat.atoms[0].charge == 1);
  CHECK(quat.atoms[0].h_count == 0);

  const MolGraph mg2 = chem::parse_smiles("[N+2](C)C");
  CHECK(mg2.atoms[0].charge == 2);
  const MolGraph mm = chem::parse_smiles("[N--]");
  CHECK(mm.atoms[0].charge == -2);
}

TEST_CASE("aromatic rings parse with aromatic ring bonds") {
  const MolGraph benz = chem::parse_smiles("c1ccccc1");
  CHECK(benz.atom_count() == 6);
  CHECK(benz.bond_count() == 6);
  for (const auto& a : benz.atoms) {
    CHECK(a.aromatic);
    CHECK(a.h_count == 1);
  }
  for (const ChemBond& b : benz.bonds) {
    CHECK(b.order == BondOrder::Aromatic);
    CHECK(b.in_ring);
  }
  for (int i = 0; i < 6; ++i) CHECK(chem::atom_in_ring(benz, i));

  const MolGraph pyr = chem::parse_smiles("c1ccncc1");
  CHECK(pyr.atoms[3].element == "N");
  CHECK(pyr.atoms[3].h_count == 0);

  const MolGraph furan = chem::parse_smiles("c1ccoc1");
  CHECK(furan.atoms[3].element == "O");
  CHECK(furan.atoms[3].h_count == 0);

  const MolGraph pyrrole = chem::parse_smiles("[nH]1cccc1");
  CHECK(pyrrole.atoms[0].element == "N");
  CHECK(pyrrole.atoms[0].aromatic);
  CHECK(pyrrole.atoms[0].h_count == 1);

  const MolGraph thio = chem::parse_smiles("s1cccc1");
  CHECK(thio.atoms[0].element == "S");
  CHECK(thio.atoms[0].h_count == 0);

  const MolGraph tol = chem::parse_smiles("Cc1ccccc1");
  CHECK_FALSE(chem::atom_in_ring(tol, 0));
  CHECK(chem::atom_in_ring(tol, 1));
  const ChemBond* methyl = find_bond(tol, 0, 1);
  REQUIRE(methyl != nullptr);
  CHECK(methyl->order == BondOrder::Single);
  CHECK_FALSE(methyl->in_ring);
}

TEST_CASE("bonds between aromatic systems stay single off-ring") {
  const MolGraph biph = chem::parse_smiles("c1ccccc1c1ccccc1");
  CHECK(biph.atom_count() == 12);
  const ChemBond* central = find_bond(biph, 5, 6);
  REQUIRE(central != nullptr);
  CHECK(central->order == BondOrder::Single);
  CHECK_FALSE(central->in_ring);
  CHECK(chem::canonical_smiles(biph) ==
        chem::canonical_smiles(chem::parse_smiles("c1ccccc1-c1ccccc1")));
}

TEST_CASE("kekule and aromatic benzene are distinct graphs") {
  // Aromaticity comes from the input notation only; no perception pass.
  const MolGraph kek = chem::parse_smiles("C1=CC=CC=C1");
  CHECK(hydrogens(kek) == std::vector<int>{1, 1, 1, 1, 1, 1});
  CHECK_FALSE(kek.atoms[0].aromatic);
  CHECK(chem::canonical_smiles(kek) !=
        chem::canonical_smiles(chem::parse_smiles("c1ccccc1")));
}

TEST_CASE("parser rejects malformed input with byte offsets") {
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C1CC"),
                       doctest::Contains("unclosed ring"), ParseError);
  CHECK(parse_offset("C1CC") == 1);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("CC("),
                       doctest::Contains("unclosed branch"), ParseError);
  CHECK(parse_offset("CC(") == 2);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C.C"),
                       doctest::Contains("multi-fragment"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C/C=C/C"),
                       doctest::Contains("stereo"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("[13C]"),
                       doctest::Contains("isotopes"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("[C@H](F)Cl"),
                       doctest::Contains("stereochemistry"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("[CH3:1]"),
                       doctest::Contains("atom maps"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("cc"),
                       doctest::Contains("aromatic atom outside"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("c1ccccc1:c1ccccc1"),
                       doctest::Contains("aromatic bond outside a ring"),
                       ParseError);
  CHECK(parse_offset("c1ccccc1:c1ccccc1") == 9);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C(C)(C)(C)(C)C"),
                       doctest::Contains("valence violation"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("O=C=O=O"),
                       doctest::Contains("valence violation"), ParseError);
  CHECK(parse_offset("O=C=O=O") == 4);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C C"),
                       doctest::Contains("whitespace"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("CC)"),
                       doctest::Contains("unmatched"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C==C"),
                       doctest::Contains("two bond symbols"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("[CH3"),
                       doctest::Contains("unterminated bracket"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles(""), doctest::Contains("empty"),
                       ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("1CC1"),
                       doctest::Contains("ring closure before"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("=CC"),
                       doctest::Contains("bond symbol before"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C11"),
                       doctest::Contains("bonds an atom to itself"),
                       ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C%1A"),
                       doctest::Contains("two digits"), ParseError);
  CHECK_THROWS_WITH_AS(chem::parse_smiles("C=1CC#1"),
                       doctest::Contains("conflicting bond symbols"),
                       ParseError);
  // An explicit symbol on only one side is fine; the other side inherits it.
  CHECK(find_bond(chem::parse_smiles("C1CC=1"), 2, 0)->order ==
        BondOrder::Double);
}

TEST_CASE("graph validation catches structural defects") {
  MolGraph m;
  m.atoms.resize(2);
  m.atoms[0].element = "C";
  m.atoms[1].element = "C";
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("disconnected"),
                       InvalidInputError);

  m.bonds.push_back({0, 1, BondOrder::Single, false});
  CHECK_NOTHROW(m.validate());

  MolGraph dup = m;
  dup.bonds.push_back({1, 0, BondOrder::Single, false});
  CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("duplicate"),
                       InvalidInputError);

  MolGraph self = m;
  self.bonds.push_back({1, 1, BondOrder::Single, false});
  CHECK_THROWS_WITH_AS(self.validate(), doctest::Contains("self"),
                       InvalidInputError);

  MolGraph range = m;
  range.bonds.push_back({1, 7, BondOrder::Single, false});
  CHECK_THROWS_WITH_AS(range.validate(), doctest::Contains("out of range"),
                       InvalidInputError);

  MolGraph empty;
  CHECK_THROWS_AS(empty.validate(), InvalidInputError);
}

TEST_CASE("linker annotations validate against the molecule") {
  const MolGraph m = chem::parse_smiles("CCCC");
  LinkerAnnotation good;
  good.linker_atoms = {1, 2};
  good.attachments = {1, 2};
  CHECK_NOTHROW(good.validate(m));

  LinkerAnnotation empty;
  CHECK_THROWS_WITH_AS(empty.validate(m), doctest::Contains("empty"),
                       InvalidInputError);

  LinkerAnnotation range = good;
  range.linker_atoms = {1, 9};
  CHECK_THROWS_WITH_AS(range.validate(m), doctest::Contains("out of range"),
                       InvalidInputError);

  LinkerAnnotation dup = good;
  dup.linker_atoms = {1, 1};
  CHECK_THROWS_WITH_AS(dup.validate(m), doctest::Contains("duplicate"),
                       InvalidInputError);

  LinkerAnnotation outside = good;
  outside.attachments = {0, 2};
  CHECK_THROWS_WITH_AS(outside.validate(m),
                       doctest::Contains("not in the linker"),
                       InvalidInputError);

  LinkerAnnotation split;
  split.linker_atoms = {0, 2};
  split.attachments = {0, 2};
  CHECK_THROWS_WITH_AS(split.validate(m), doctest::Contains("disconnected"),
                       InvalidInputError);
}

TEST_CASE("canonical strings agree for equivalent inputs") {
  CHECK(chem::canonical_smiles(chem::parse_smiles("OCC")) ==
        chem::canonical_smiles(chem::parse_smiles("CCO")));
  CHECK(chem::canonical_smiles(chem::parse_smiles("c1ccccc1C")) ==
        chem::canonical_smiles(chem::parse_smiles("Cc1ccccc1")));
  CHECK(chem::canonical_smiles(chem::parse_smiles("c1ccccc1")) ==
        "c1ccccc1");
}

TEST_CASE("canonical form is stable under atom permutations") {
  Rng rng(99);
  for (const std::string& smi : kFixture) {
    CAPTURE(smi);
    const MolGraph m = chem::parse_smiles(smi);
    const std::string ref = chem::canonical_smiles(m);

    // Round trip through the emitter and back.
    const MolGraph re = chem::parse_smiles(ref);
    CHECK(re.atom_count() == m.atom_count());
    CHECK(re.bond_count() == m.bond_count());
    CHECK(chem::canonical_smiles(re) == ref);

    for (int trial = 0; trial < 100; ++trial) {
      std::vector<int> perm = identity_perm(m.atom_count());
      rng.shuffle(perm);
      const MolGraph pm = chem::permute_atoms(m, perm);
      const std::string got = chem::canonical_smiles(pm);
      if (got != ref) {
        CAPTURE(trial);
        CHECK(got == ref);
        break;
      }
      const MolGraph back = chem::parse_smiles(got);
      if (back.atom_count() != m.atom_count() ||
          back.bond_count() != m.bond_count()) {
        CHECK(back.atom_count() == m.atom_count());
        break;
      }
    }
  }
}

TEST_CASE("permute_atoms rejects non-permutations") {
  const MolGraph m = chem::parse_smiles("CCO");
  CHECK_THROWS_AS(chem::permute_atoms(m, {0, 1}), InvalidInputError);
  CHECK_THROWS_AS(chem::permute_atoms(m, {0, 1, 1}), InvalidInputError);
  CHECK_THROWS_AS(chem::permute_atoms(m, {0, 1, 5}), InvalidInputError);
}

TEST_CASE("rotatable bond counting") {
  CHECK(chem::rotatable_bond_count(chem::parse_smiles("CCCC")) == 1);
  CHECK(chem::rotatable_bond_count(chem::parse_smiles("c1ccccc1")) == 0);
  CHECK(chem::rotatable_bond_count(chem::parse_smiles("CCOCC")) == 2);
  CHECK(chem::rotatable_bond_count(chem::parse_smiles("C1CCCCC1")) == 0);
  CHECK(chem::rotatable_bond_count(chem::parse_smiles("CC=CC")) == 0);

  const MolGraph m = chem::parse_smiles("CCOCC");
  CHECK(chem::rotatable_bond_count(m, std::vector<int>{0, 1, 2}) == 1);
  CHECK_THROWS_AS(chem::rotatable_bond_count(m, std::vector<int>{0, 99}),
                  InvalidInputError);
}

TEST_CASE("rotatable ratio over linker bonds") {
  const MolGraph chain = chem::parse_smiles("CCCC");
  LinkerAnnotation whole;
  whole.linker_atoms = {0, 1, 2, 3};
  whole.attachments = {0, 3};
  CHECK(chem::rot_bond_ratio(chain, whole) ==
        doctest::Approx(100.0 / 3.0).epsilon(1e-12));

  const MolGraph benz = chem::parse_smiles("c1ccccc1");
  LinkerAnnotation ring;
  ring.linker_atoms = {0, 1, 2, 3, 4, 5};
  ring.attachments = {0, 3};
  CHECK(chem::rot_bond_ratio(benz, ring) == 0.0);

  LinkerAnnotation lone;
  lone.linker_atoms = {1};
  lone.attachments = {1, 1};
  CHECK(chem::rot_bond_ratio(chain, lone) == 0.0);
}

TEST_CASE("linker length ratio compares attachment path to diameter") {
  const MolGraph chain = chem::parse_smiles("CCCC");
  LinkerAnnotation whole;
  whole.linker_atoms = {0, 1, 2, 3};
  whole.attachments = {0, 3};
  CHECK(chem::linker_length_ratio(chain, whole) == 100.0);

  // 4-bond main chain, 2-bond branch hanging off the midpoint.
  const MolGraph mid = chem::parse_smiles("CCC(CC)CC");
  LinkerAnnotation mid_ann;
  mid_ann.linker_atoms = {0, 1, 2, 3, 4, 5, 6};
  mid_ann.attachments = {0, 6};
  CHECK(chem::linker_length_ratio(mid, mid_ann) == 100.0);

  // Attachment path 3 against a diameter of 5 through the long branch.
  const MolGraph lb = chem::parse_smiles("CCC(CCC)C");
  LinkerAnnotation lb_ann;
  lb_ann.linker_atoms = {0, 1, 2, 3, 4, 5, 6};
  lb_ann.attachments = {0, 6};
  CHECK(chem::linker_length_ratio(lb, lb_ann) == 60.0);

  LinkerAnnotation lone;
  lone.linker_atoms = {2};
  lone.attachments = {2, 2};
  CHECK(chem::linker_length_ratio(chain, lone) == 100.0);
}

TEST_CASE("linker length ratio matches brute-force distances") {
  for (const std::string& smi : kFixture) {
    const MolGraph m = chem::parse_smiles(smi);
    const int n = static_cast<int>(m.atom_count());
    if (n < 2 || n > 20) continue;
    CAPTURE(smi);

    // Floyd-Warshall over the whole molecule as its own linker.
    const int inf = 1 << 20;
    std::vector<std::vector<int>> d(
        static_cast<std::size_t>(n),
        std::vector<int>(static_cast<std::size_t>(n), inf));
    for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0;
    for (const ChemBond& b : m.bonds) {
      d[static_cast<std::size_t>(b.i)][static_cast<std::size_t>(b.j)] = 1;
      d[static_cast<std::size_t>(b.j)][static_cast<std::size_t>(b.i)] = 1;
    }
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::min(
              d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
              d[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                  d[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
        }
      }
    }
    int diameter = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        diameter = std::max(diameter,
                            d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
      }
    }

    LinkerAnnotation ann;
    ann.linker_atoms = identity_perm(static_cast<std::size_t>(n));
    ann.attachments = {0, n - 1};
    const double expected =
        100.0 *
        static_cast<double>(d[0][static_cast<std::size_t>(n - 1)]) /
        static_cast<double>(diameter);
    CHECK(chem::linker_length_ratio(m, ann) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("murcko scaffolds prune to ring systems") {
  CHECK(chem::murcko_scaffold(chem::parse_smiles("CCCC")) == "");
  CHECK(chem::murcko_scaffold(chem::parse_smiles("C")) == "");

  const std::string benzene =
      chem::canonical_smiles(chem::parse_smiles("c1ccccc1"));
  CHECK(chem::murcko_scaffold(chem::parse_smiles("Cc1ccccc1")) == benzene);
  CHECK(chem::murcko_scaffold(chem::parse_smiles("CCc1ccccc1")) == benzene);
  CHECK(chem::murcko_scaffold(chem::parse_smiles("c1ccccc1")) == benzene);

  const std::string biphenyl =
      chem::canonical_smiles(chem::parse_smiles("c1ccccc1-c1ccccc1"));
  CHECK(chem::murcko_scaffold(chem::parse_smiles("CCCc1ccc(-c2ccccc2)cc1")) ==
        biphenyl);

  // A carbonyl pruned from the ring leaves hydrogens behind, so the scaffold
  // stays a valid graph.
  CHECK(chem::murcko_scaffold(chem::parse_smiles("O=CC1CC1")) ==
        chem::canonical_smiles(chem::parse_smiles("C1CC1")));
}

TEST_CASE("ring count is the cycle rank") {
  CHECK(chem::ring_count(chem::parse_smiles("CCCC")) == 0);
  CHECK(chem::ring_count(chem::parse_smiles("c1ccccc1")) == 1);
  CHECK(chem::ring_count(chem::parse_smiles("c1ccc2ccccc2c1")) == 2);
  CHECK(chem::ring_count(chem::parse_smiles("C1CCC2(CC1)CCCC2")) == 2);
}

TEST_CASE("extended linker grows by hops and never cuts rings") {
  const MolGraph chain = chem::parse_smiles("CCCNCCNCCC");
  LinkerAnnotation ann;
  ann.linker_atoms = {3, 4, 5, 6};
  ann.attachments = {3, 6};

  SUBCASE("two chain atoms beyond each attachment") {
    const auto [sub, sann] = chem::extract_extended_linker(chain, ann, 2);
    CHECK(sub.atom_count() == 8);
    CHECK(sub.bond_count() == 7);
    CHECK_NOTHROW(sann.validate(sub));
    CHECK(sann.linker_atoms.size() == 4);
    CHECK(sub.atoms[static_cast<std::size_t>(sann.attachments.first)]
              .element == "N");
    CHECK(sub.atoms[static_cast<std::size_t>(sann.attachments.second)]
              .element == "N");
  }

  SUBCASE("zero hops returns the linker subgraph unchanged") {
    const auto [sub, sann] = chem::extract_extended_linker(chain, ann, 0);
    CHECK(sub.atom_count() == 4);
    CHECK(sub.bond_count() == 3);
    CHECK(sann.linker_atoms == std::vector<int>{0, 1, 2, 3});
    CHECK(sann.attachments == std::pair<int, int>{0, 3});
    CHECK(sub.atoms[0].element == "N");
    CHECK(sub.atoms[3].element == "N");
  }

  SUBCASE("a ring reached within the hop budget is included whole") {
    const MolGraph m = chem::parse_smiles("c1ccccc1CNCCNCc1ccccc1");
    LinkerAnnotation ring_ann;
    ring_ann.linker_atoms = {7, 8, 9, 10};
    ring_ann.attachments = {7, 10};
    const auto [sub, sann] = chem::extract_extended_linker(m, ring_ann, 2);
    CHECK(sub.atom_count() == 18);
    CHECK_NOTHROW(sann.validate(sub));
    int aromatic_atoms = 0;
    for (const auto& a : sub.atoms) aromatic_atoms += a.aromatic ? 1 : 0;
    CHECK(aromatic_atoms == 12);
  }

  SUBCASE("negative hop counts are rejected") {
    CHECK_THROWS_AS(chem::extract_extended_linker(chain, ann, -1),
                    InvalidInputError);
  }
}

TEST_CASE("fingerprint tanimoto behaves like a similarity") {
  const chem::Fingerprint butane = chem::fingerprint(chem::parse_smiles("CCCC"));
  const chem::Fingerprint tetrazane =
      chem::fingerprint(chem::parse_smiles("NNNN"));

  CHECK(chem::tanimoto(butane, butane) == 1.0);
  // Element-disjoint chains share no path keys; measured once and frozen.
  CHECK(chem::tanimoto(butane, tetrazane) == 0.0);
  CHECK(butane.count() == 4);
  CHECK(tetrazane.count() == 4);

  const chem::Fingerprint empty_a;
  const chem::Fingerprint empty_b;
  CHECK(chem::tanimoto(empty_a, empty_b) == 1.0);

  std::vector<chem::Fingerprint> fps;
  for (const std::string& smi : kFixture) {
    fps.push_back(chem::fingerprint(chem::parse_smiles(smi)));
  }
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const std::size_t i = rng.uniform_index(fps.size());
    const std::size_t j = rng.uniform_index(fps.size());
    const double ab = chem::tanimoto(fps[i], fps[j]);
    const double ba = chem::tanimoto(fps[j], fps[i]);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("descriptors are invariant under atom permutations") {
  Rng rng(31);
  for (const std::string& smi :
       {std::string("CC(=O)Nc1ccccc1"), std::string("O=C(O)CN1CCOCC1"),
        std::string("c1ccc2ccccc2c1")}) {
    CAPTURE(smi);
    const MolGraph m = chem::parse_smiles(smi);
    const int rot = chem::rotatable_bond_count(m);
    const int rings = chem::ring_count(m);
    const std::string scaffold = chem::murcko_scaffold(m);
    const chem::Fingerprint fp = chem::fingerprint(m);

    LinkerAnnotation ann;
    ann.linker_atoms = identity_perm(m.atom_count());
    ann.attachments = {0, static_cast<int>(m.atom_count()) - 1};
    const double ratio = chem::linker_length_ratio(m, ann);

    for (int t = 0; t < 10; ++t) {
      std::vector<int> perm = identity_perm(m.atom_count());
      rng.shuffle(perm);
      const MolGraph pm = chem::permute_atoms(m, perm);
      CHECK(chem::rotatable_bond_count(pm) == rot);
      CHECK(chem::ring_count(pm) == rings);
      CHECK(chem::murcko_scaffold(pm) == scaffold);
      CHECK(chem::fingerprint(pm).bits == fp.bits);

      const std::vector<int> inv = inverse_perm(perm);
      LinkerAnnotation pann;
      for (const int a : ann.linker_atoms) {
        pann.linker_atoms.push_back(inv[static_cast<std::size_t>(a)]);
      }
      pann.attachments = {
          inv[static_cast<std::size_t>(ann.attachments.first)],
          inv[static_cast<std::size_t>(ann.attachments.second)]};
      CHECK(chem::linker_length_ratio(pm, pann) ==
            doctest::Approx(ratio).epsilon(1e-12));
    }
  }
}

TEST_CASE("embedding places ideal local geometry") {
  SUBCASE("ethane bond length is exact and conformers coincide") {
    const auto confs = chem::embed_3d(chem::parse_smiles("CC"), 4, 7);
    REQUIRE(confs.size() == 4);
    for (const auto& c : confs) {
      CHECK_FALSE(c.strained);
      REQUIRE(c.atoms.size() == 2);
      const double d =
          (c.atoms.atoms[0].position - c.atoms.atoms[1].position).norm();
      CHECK(d == doctest::Approx(1.54).epsilon(1e-12));
      for (std::size_t i = 0; i < 2; ++i) {
        CHECK((c.atoms.atoms[i].position - confs[0].atoms.atoms[i].position)
                  .norm() == 0.0);
      }
    }
  }

  SUBCASE("propane angle hits the tetrahedral value") {
    const auto confs = chem::embed_3d(chem::parse_smiles("CCC"), 6, 9);
    for (const auto& c : confs) {
      const auto& p = c.atoms.atoms;
      const Eigen::Vector3d u = (p[0].position - p[1].position).normalized();
      const Eigen::Vector3d v = (p[2].position - p[1].position).normalized();
      const double angle =
          std::acos(u.dot(v)) * 180.0 / 3.14159265358979323846;
      CHECK(std::abs(angle - 109.5) < 0.1);
    }
  }

  SUBCASE("aromatic rings come out as planar regular hexagons") {
    const auto confs = chem::embed_3d(chem::parse_smiles("c1ccccc1"), 2, 3);
    const auto& p = confs[0].atoms.atoms;
    for (std::size_t i = 0; i < 6; ++i) {
      const double side =
          (p[i].position - p[(i + 1) % 6].position).norm();
      CHECK(side == doctest::Approx(1.39).epsilon(1e-9));
    }
    const Eigen::Vector3d normal = (p[1].position - p[0].position)
                                       .cross(p[2].position - p[0].position)
                                       .normalized();
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::abs(normal.dot(p[i].position - p[0].position)) < 1e-9);
    }
    bool differ = false;
    for (std::size_t i = 0; i < 6; ++i) {
      if ((confs[0].atoms.atoms[i].position -
           confs[1].atoms.atoms[i].position)
              .norm() > 1e-9) {
        differ = true;
      }
    }
    CHECK(differ);
  }

  SUBCASE("clean conformers keep non-bonded atoms apart") {
    const MolGraph m = chem::parse_smiles("CC(C)CC(=O)NCCc1ccccc1");
    const auto confs = chem::embed_3d(m, 16, 4);
    REQUIRE(confs.size() == 16);
    for (const auto& c : confs) {
      if (c.strained) continue;
      for (std::size_t i = 0; i < c.atoms.size(); ++i) {
        for (std::size_t j = i + 1; j < c.atoms.size(); ++j) {
          if (find_bond(m, static_cast<int>(i), static_cast<int>(j))) {
            continue;
          }
          CHECK((c.atoms.atoms[i].position - c.atoms.atoms[j].position)
                    .norm() >= 1.0);
        }
      }
    }
  }

  SUBCASE("same seed reproduces coordinates exactly") {
    const MolGraph m = chem::parse_smiles("CCCNCCOC");
    const auto a = chem::embed_3d(m, 5, 123);
    const auto b = chem::embed_3d(m, 5, 123);
    for (std::size_t c = 0; c < a.size(); ++c) {
      for (std::size_t i = 0; i < a[c].atoms.size(); ++i) {
        CHECK((a[c].atoms.atoms[i].position - b[c].atoms.atoms[i].position)
                  .norm() == 0.0);
      }
    }
    const auto other = chem::embed_3d(m, 5, 124);
    double diff = 0.0;
    for (std::size_t i = 0; i < a[0].atoms.size(); ++i) {
      diff += (a[0].atoms.atoms[i].position - other[0].atoms.atoms[i].position)
                  .norm();
    }
    CHECK(diff > 1e-6);
  }

  SUBCASE("input limits are enforced") {
    CHECK_THROWS_AS(chem::embed_3d(chem::parse_smiles("CC"), 0, 0),
                    InvalidInputError);
    const std::string c65(65, 'C');
    CHECK_THROWS_AS(chem::embed_3d(chem::parse_smiles(c65), 1, 0),
                    InvalidInputError);
  }
}

TEST_CASE("smiles list files skip comments and name columns") {
  TempDir tmp;
  const std::string path = tmp.write("list.smi",
                                     "# corpus header\n"
                                     "CCO ethanol\n"
                                     "\n"
                                     "  c1ccccc1\tbenzene note\n"
                                     "   # indented comment\n"
                                     "C#N\n");
  const std::vector<std::string> got = chem::read_smiles_list(path);
  CHECK(got == std::vector<std::string>{"CCO", "c1ccccc1", "C#N"});
  CHECK_THROWS_AS(chem::read_smiles_list(tmp.file("missing.smi")),
                  InvalidInputError);
}

TEST_CASE("sdf reader handles the V2000 subset") {
  TempDir tmp;
  const std::string sdf =
      "ethanol\n"
      "  editor\n"
      "\n"
      "  3  2  0  0  0  0  0  0  0  0999 V2000\n"
      "    0.0000    0.0000    0.0000 C   0  0\n"
      "    1.5400    0.0000    0.0000 C   0  0\n"
      "    2.1000    1.2000    0.0000 O   0  0\n"
      "  1  2  1  0\n"
      "  2  3  1  0\n"
      "M  END\n"
      "$$$$\n"
      "benzene\n"
      "  editor\n"
      "\n"
      "  6  6  0  0  0  0  0  0  0  0999 V2000\n"
      "    1.3900    0.0000    0.0000 C   0  0\n"
      "    0.6950    1.2038    0.0000 C   0  0\n"
      "   -0.6950    1.2038    0.0000 C   0  0\n"
      "   -1.3900    0.0000    0.0000 C   0  0\n"
      "   -0.6950   -1.2038    0.0000 C   0  0\n"
      "    0.6950   -1.2038    0.0000 C   0  0\n"
      "  1  2  4  0\n"
      "  2  3  4  0\n"
      "  3  4  4  0\n"
      "  4  5  4  0\n"
      "  5  6  4  0\n"
      "  6  1  4  0\n"
      "M  END\n"
      "$$$$\n";
  const std::string path = tmp.write("two.sdf", sdf);
  const auto records = chem::read_sdf_file(path);
  REQUIRE(records.size() == 2);

  CHECK(records[0].name == "ethanol");
  CHECK(records[0].atoms.size() == 3);
  CHECK(records[0].atoms.atoms[1].position.x() ==
        doctest::Approx(1.54).epsilon(1e-12));
  CHECK(records[0].atoms.atoms[2].position.y() ==
        doctest::Approx(1.2).epsilon(1e-12));
  CHECK(records[0].mol.atom_count() == 3);
  CHECK(records[0].mol.atoms[2].element == "O");
  CHECK(hydrogens(records[0].mol) == std::vector<int>{3, 2, 1});

  CHECK(records[1].name == "benzene");
  CHECK(records[1].mol.bond_count() == 6);
  for (const ChemBond& b : records[1].mol.bonds) {
    CHECK(b.order == BondOrder::Aromatic);
    CHECK(b.in_ring);
  }
  for (const auto& a : records[1].mol.atoms) {
    CHECK(a.aromatic);
    CHECK(a.h_count == 1);
  }
  CHECK(chem::canonical_smiles(records[1].mol) == "c1ccccc1");

  SUBCASE("counts line must be V2000") {
    const std::string bad = tmp.write("bad.sdf",
                                      "x\n\n\n"
                                      "  1  0  0  0 V3000\n");
    CHECK_THROWS_WITH_AS(chem::read_sdf_file(bad),
                         doctest::Contains("V2000"), ParseError);
  }
  SUBCASE("truncated atom block is reported") {
    const std::string bad = tmp.write("short.sdf",
                                      "x\n\n\n"
                                      "  2  1  0  0  0  0  0  0  0  0999 "
                                      "V2000\n"
                                      "    0.0000    0.0000    0.0000 C   0\n");
    CHECK_THROWS_WITH_AS(chem::read_sdf_file(bad),
                         doctest::Contains("truncated"), ParseError);
  }
  SUBCASE("unknown bond types are rejected") {
    const std::string bad = tmp.write("bond.sdf",
                                      "x\n\n\n"
                                      "  2  1  0  0  0  0  0  0  0  0999 "
                                      "V2000\n"
                                      "    0.0000    0.0000    0.0000 C   0\n"
                                      "    1.0000    0.0000    0.0000 C   0\n"
                                      "  1  2  8  0\n"
                                      "M  END\n");
    CHECK_THROWS_WITH_AS(chem::read_sdf_file(bad),
                         doctest::Contains("unsupported bond type"),
                         ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(chem::read_sdf_file(tmp.file("nope.sdf")),
                    InvalidInputError);
  }
}

TEST_CASE("annotation files accept an object or a list") {
  TempDir tmp;
  const std::string list = tmp.write(
      "anns.json",
      R"([{"linker_atoms": [3,4,5,6], "attachments": [3,6]},
          {"linker_atoms": [0], "attachments": [0,0]}])");
  const auto got = chem::load_annotations(list);
  REQUIRE(got.size() == 2);
  CHECK(got[0].linker_atoms == std::vector<int>{3, 4, 5, 6});
  CHECK(got[0].attachments == std::pair<int, int>{3, 6});
  CHECK(got[1].linker_atoms == std::vector<int>{0});

  const std::string single = tmp.write(
      "one.json", R"({"linker_atoms": [1,2], "attachments": [1,2]})");
  CHECK(chem::load_annotations(single).size() == 1);

  const std::string broken = tmp.write("broken.json", "{not json");
  CHECK_THROWS_AS(chem::load_annotations(broken), ParseError);

  const std::string missing_key =
      tmp.write("missing.json", R"({"linker_atoms": [1,2]})");
  CHECK_THROWS_WITH_AS(chem::load_annotations(missing_key),
                       doctest::Contains("attachments"), InvalidInputError);

  const std::string bad_pair = tmp.write(
      "pair.json", R"({"linker_atoms": [1,2], "attachments": [1,2,3]})");
  CHECK_THROWS_AS(chem::load_annotations(bad_pair), InvalidInputError);

  const std::string scalar = tmp.write("scalar.json", "42");
  CHECK_THROWS_AS(chem::load_annotations(scalar), InvalidInputError);

  CHECK_THROWS_AS(chem::load_annotations(tmp.file("absent.json")),
                  InvalidInputError);
}
