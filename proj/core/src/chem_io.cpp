#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "chem_internal.hpp"
#include "shapelinker/chem.hpp"
#include "shapelinker/errors.hpp"
#include "shapelinker/surface.hpp"

namespace shapelinker::chem {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int parse_int_field(const std::string& line, std::size_t start,
                    std::size_t width, std::size_t line_offset,
                    const std::string& what) {
  if (line.size() < start) {
    throw ParseError(line_offset, "sdf: line too short for " + what);
  }
  const std::string field = trim(line.substr(start, width));
  try {
    return std::stoi(field);
  } catch (const std::exception&) {
    throw ParseError(line_offset, "sdf: bad " + what + " '" + field + "'");
  }
}

double parse_coord_field(const std::string& line, std::size_t start,
                         std::size_t line_offset, const std::string& what) {
  if (line.size() < start + 10) {
    throw ParseError(line_offset, "sdf: line too short for " + what);
  }
  const std::string field = trim(line.substr(start, 10));
  try {
    return std::stod(field);
  } catch (const std::exception&) {
    throw ParseError(line_offset, "sdf: bad " + what + " '" + field + "'");
  }
}

struct LineReader {
  std::istream& in;
  std::size_t offset = 0;       // byte offset of the last line returned
  std::size_t next_offset = 0;  // running byte position

  explicit LineReader(std::istream& s) : in(s) {}

  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    offset = next_offset;
    next_offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }
};

LinkerAnnotation annotation_from_json(const json& node) {
  if (!node.is_object() || !node.contains("linker_atoms") ||
      !node.contains("attachments")) {
    throw InvalidInputError(
        "annotations: each entry needs linker_atoms and attachments");
  }
  const json& atoms = node.at("linker_atoms");
  const json& attach = node.at("attachments");
  if (!atoms.is_array() || !attach.is_array() || attach.size() != 2) {
    throw InvalidInputError(
        "annotations: linker_atoms must be a list and attachments a pair");
  }
  LinkerAnnotation ann;
  for (const json& v : atoms) {
    if (!v.is_number_integer()) {
      throw InvalidInputError("annotations: linker_atoms must be integers");
    }
    ann.linker_atoms.push_back(v.get<int>());
  }
  if (!attach[0].is_number_integer() || !attach[1].is_number_integer()) {
    throw InvalidInputError("annotations: attachments must be integers");
  }
  ann.attachments = {attach[0].get<int>(), attach[1].get<int>()};
  return ann;
}

}  // namespace

std::vector<std::string> read_smiles_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInputError("cannot open SMILES list: " + path);
  }
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    // .smi convention: the SMILES is the first token, the rest is a name.
    const std::size_t space = t.find_first_of(" \t");
    out.push_back(space == std::string::npos ? t : t.substr(0, space));
  }
  return out;
}

std::vector<SdfRecord> read_sdf_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInputError("cannot open SDF file: " + path);
  }
  LineReader reader(in);
  std::vector<SdfRecord> records;
  std::string line;

  while (true) {
    // Header block: name, two ignored lines, then the counts line.
    if (!reader.next(line)) break;
    SdfRecord rec;
    rec.name = trim(line);
    std::string skip;
    if (!reader.next(skip) || !reader.next(skip)) {
      throw ParseError(reader.next_offset, "sdf: truncated header");
    }
    if (!reader.next(line)) {
      throw ParseError(reader.next_offset, "sdf: missing counts line");
    }
    const std::size_t counts_at = reader.offset;
    if (line.find("V2000") == std::string::npos) {
      throw ParseError(counts_at, "sdf: counts line is not V2000");
    }
    const int n_atoms = parse_int_field(line, 0, 3, counts_at, "atom count");
    const int n_bonds = parse_int_field(line, 3, 3, counts_at, "bond count");
    if (n_atoms < 1) {
      throw ParseError(counts_at, "sdf: record has no atoms");
    }

    rec.atoms.label = rec.name;
    for (int a = 0; a < n_atoms; ++a) {
      if (!reader.next(line)) {
        throw ParseError(reader.next_offset, "sdf: truncated atom block");
      }
      surface::Atom atom;
      atom.position.x() = parse_coord_field(line, 0, reader.offset, "x");
      atom.position.y() = parse_coord_field(line, 10, reader.offset, "y");
      atom.position.z() = parse_coord_field(line, 20, reader.offset, "z");
      if (line.size() < 32) {
        throw ParseError(reader.offset, "sdf: atom line missing element");
      }
      const std::string symbol =
          trim(line.substr(31, std::min<std::size_t>(3, line.size() - 31)));
      if (symbol.empty()) {
        throw ParseError(reader.offset, "sdf: empty element symbol");
      }
      atom.element = surface::element_from_symbol(symbol);
      rec.atoms.atoms.push_back(atom);

      ChemAtom ca;
      ca.element = symbol;
      rec.mol.atoms.push_back(ca);
    }

    for (int b = 0; b < n_bonds; ++b) {
      if (!reader.next(line)) {
        throw ParseError(reader.next_offset, "sdf: truncated bond block");
      }
      const int i = parse_int_field(line, 0, 3, reader.offset, "bond atom");
      const int j = parse_int_field(line, 3, 3, reader.offset, "bond atom");
      const int type = parse_int_field(line, 6, 3, reader.offset,
                                       "bond type");
      if (i < 1 || j < 1 || i > n_atoms || j > n_atoms || i == j) {
        throw ParseError(reader.offset, "sdf: bond endpoints out of range");
      }
      ChemBond bond;
      bond.i = i - 1;
      bond.j = j - 1;
      switch (type) {
        case 1:
          bond.order = BondOrder::Single;
          break;
        case 2:
          bond.order = BondOrder::Double;
          break;
        case 3:
          bond.order = BondOrder::Triple;
          break;
        case 4:
          bond.order = BondOrder::Aromatic;
          rec.mol.atoms[static_cast<std::size_t>(bond.i)].aromatic = true;
          rec.mol.atoms[static_cast<std::size_t>(bond.j)].aromatic = true;
          break;
        default:
          throw ParseError(reader.offset, "sdf: unsupported bond type " +
                                              std::to_string(type));
      }
      rec.mol.bonds.push_back(bond);
    }

    bool saw_end = false;
    while (reader.next(line)) {
      if (trim(line) == "M  END" || trim(line) == "M END") {
        saw_end = true;
        break;
      }
    }
    if (!saw_end) {
      throw ParseError(reader.next_offset, "sdf: missing M  END");
    }

    rec.mol.recompute_rings();
    // Hydrogens from the shared valence model; atoms outside it keep zero.
    for (std::size_t a = 0; a < rec.mol.atoms.size(); ++a) {
      const int h = detail::implicit_hydrogens(rec.mol, static_cast<int>(a));
      rec.mol.atoms[a].h_count = h > 0 ? h : 0;
    }
    records.push_back(std::move(rec));

    // Skip data items until the record separator or end of file.
    bool more = false;
    while (reader.next(line)) {
      if (trim(line) == "$$$$") {
        more = true;
        break;
      }
    }
    if (!more) break;
  }
  return records;
}

std::vector<LinkerAnnotation> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInputError("cannot open annotations file: " + path);
  }
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(e.byte, std::string("annotations: ") + e.what());
  }
  std::vector<LinkerAnnotation> out;
  if (root.is_object()) {
    out.push_back(annotation_from_json(root));
  } else if (root.is_array()) {
    for (const json& node : root) {
      out.push_back(annotation_from_json(node));
    }
  } else {
    throw InvalidInputError(
        "annotations: top level must be an object or a list");
  }
  return out;
}

}  // namespace shapelinker::chem
