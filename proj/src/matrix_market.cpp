#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "spcomm3d/error.hpp"
#include "spcomm3d/sparse.hpp"

namespace spc3d {

namespace {

enum class Field { real, integer, pattern };

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

template <typename T>
bool parse_number(std::istringstream& in, T& out) {
  std::string tok;
  if (!(in >> tok)) return false;
  if constexpr (std::is_integral_v<T>) {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc{} && p == tok.data() + tok.size();
  } else {
    try {
      std::size_t used = 0;
      out = std::stod(tok, &used);
      return used == tok.size();
    } catch (const std::exception&) {
      return false;
    }
  }
}

}  // namespace

SparseMatrix parse_matrix_market(std::string_view text) {
  std::istringstream stream{std::string(text)};
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(stream, line)) throw ParseError("empty input", 0);
  ++lineno;
  std::istringstream header(line);
  std::string banner, object, format, field_s, symmetry_s;
  header >> banner >> object >> format >> field_s >> symmetry_s;
  if (banner != "%%MatrixMarket") throw ParseError("missing %%MatrixMarket banner", lineno);
  if (lower(object) != "matrix") throw ParseError("unsupported object '" + object + "'", lineno);
  if (lower(format) != "coordinate") throw ParseError("only coordinate format is supported", lineno);

  Field field;
  field_s = lower(field_s);
  if (field_s == "real" || field_s == "double") field = Field::real;
  else if (field_s == "integer") field = Field::integer;
  else if (field_s == "pattern") field = Field::pattern;
  else throw ParseError("unsupported field '" + field_s + "'", lineno);

  symmetry_s = lower(symmetry_s);
  bool symmetric;
  if (symmetry_s == "general") symmetric = false;
  else if (symmetry_s == "symmetric") symmetric = true;
  else throw ParseError("unsupported symmetry '" + symmetry_s + "'", lineno);

  // Size line, skipping comments.
  Index nrows = 0, ncols = 0, nentries = 0;
  bool have_size = false;
  while (std::getline(stream, line)) {
    ++lineno;
    if (blank(line) || line[0] == '%') continue;
    std::istringstream in(line);
    if (!parse_number(in, nrows) || !parse_number(in, ncols) || !parse_number(in, nentries) || nrows < 0 ||
        ncols < 0 || nentries < 0)
      throw ParseError("malformed size line", lineno);
    have_size = true;
    break;
  }
  if (!have_size) throw ParseError("missing size line", lineno);
  if (symmetric && nrows != ncols) throw ParseError("symmetric matrix must be square", lineno);

  std::vector<Entry> raw;
  raw.reserve(static_cast<std::size_t>(symmetric ? 2 * nentries : nentries));
  Index read = 0;
  while (read < nentries && std::getline(stream, line)) {
    ++lineno;
    if (blank(line) || line[0] == '%') continue;
    std::istringstream in(line);
    Index r = 0, c = 0;
    double v = 1.0;
    if (!parse_number(in, r) || !parse_number(in, c)) throw ParseError("malformed entry", lineno);
    if (field == Field::integer) {
      long long iv = 0;
      if (!parse_number(in, iv)) throw ParseError("malformed integer value", lineno);
      v = static_cast<double>(iv);
    } else if (field == Field::real) {
      if (!parse_number(in, v)) throw ParseError("malformed real value", lineno);
    }
    if (r < 1 || r > nrows || c < 1 || c > ncols) throw ParseError("index out of range", lineno);
    raw.push_back({r - 1, c - 1, v});
    if (symmetric && r != c) raw.push_back({c - 1, r - 1, v});
    ++read;
  }
  if (read != nentries)
    throw ParseError("expected " + std::to_string(nentries) + " entries, found " + std::to_string(read), lineno);

  std::stable_sort(raw.begin(), raw.end(),
                   [](const Entry& a, const Entry& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  std::vector<Entry> merged;
  merged.reserve(raw.size());
  for (const auto& e : raw) {
    if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col)
      merged.back().value += e.value;
    else
      merged.push_back(e);
  }
  return SparseMatrix(nrows, ncols, std::move(merged));
}

SparseMatrix load_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_matrix_market(buf.str());
}

}  // namespace spc3d
