#pragma once

// Matrix Market coordinate format: real / integer / pattern fields with
// general or symmetric (also skew-symmetric) storage, 1-based indices.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bspai/error.hpp"
#include "bspai/sparse_matrix.hpp"

namespace bspai {

namespace mm_detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace mm_detail

inline SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(1, "empty input");
  ++lineno;

  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket") throw ParseError(lineno, "missing %%MatrixMarket banner");
  object = mm_detail::lower(object);
  format = mm_detail::lower(format);
  field = mm_detail::lower(field);
  symmetry = mm_detail::lower(symmetry);
  if (object != "matrix") throw ParseError(lineno, "unsupported object '" + object + "'");
  if (format != "coordinate") throw ParseError(lineno, "only coordinate format is supported, got '" + format + "'");
  if (field != "real" && field != "integer" && field != "pattern" && field != "double") {
    throw ParseError(lineno, "unsupported field '" + field + "'");
  }
  if (symmetry != "general" && symmetry != "symmetric" && symmetry != "skew-symmetric") {
    throw ParseError(lineno, "unsupported symmetry '" + symmetry + "'");
  }
  const bool pattern = field == "pattern";

  // Size line, after comments.
  std::size_t n_rows = 0, n_cols = 0, n_entries = 0;
  for (;;) {
    if (!std::getline(in, line)) throw ParseError(lineno + 1, "missing size line");
    ++lineno;
    if (line.empty() || line[0] == '%' || mm_detail::blank(line)) continue;
    std::istringstream ss(line);
    long long r = -1, c = -1, e = -1;
    if (!(ss >> r >> c >> e) || r < 0 || c < 0 || e < 0) throw ParseError(lineno, "malformed size line");
    n_rows = static_cast<std::size_t>(r);
    n_cols = static_cast<std::size_t>(c);
    n_entries = static_cast<std::size_t>(e);
    break;
  }
  if (symmetry != "general" && n_rows != n_cols) throw ParseError(lineno, "symmetric matrix must be square");

  std::vector<Triplet> t;
  t.reserve(symmetry == "general" ? n_entries : 2 * n_entries);
  std::vector<std::size_t> source_line;
  source_line.reserve(n_entries);
  std::size_t read = 0;
  while (read < n_entries) {
    if (!std::getline(in, line)) throw ParseError(lineno + 1, "expected " + std::to_string(n_entries) + " entries, found " + std::to_string(read));
    ++lineno;
    if (line.empty() || line[0] == '%' || mm_detail::blank(line)) continue;
    std::istringstream ss(line);
    long long r = 0, c = 0;
    double v = 1.0;
    if (!(ss >> r >> c)) throw ParseError(lineno, "malformed entry");
    if (!pattern && !(ss >> v)) throw ParseError(lineno, "missing value");
    if (r < 1 || c < 1 || static_cast<std::size_t>(r) > n_rows || static_cast<std::size_t>(c) > n_cols) {
      throw ParseError(lineno, "index (" + std::to_string(r) + "," + std::to_string(c) + ") out of range");
    }
    const std::size_t i = static_cast<std::size_t>(r - 1), j = static_cast<std::size_t>(c - 1);
    if (symmetry != "general" && j > i) throw ParseError(lineno, "entry above the diagonal in symmetric storage");
    t.push_back({i, j, v});
    source_line.push_back(lineno);
    ++read;
  }

  // Duplicate detection (before unfolding symmetry, so the line is exact).
  std::vector<std::size_t> order(t.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return t[a].row != t[b].row ? t[a].row < t[b].row : (t[a].col != t[b].col ? t[a].col < t[b].col : a < b);
  });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const Triplet& a = t[order[k - 1]];
    const Triplet& b = t[order[k]];
    if (a.row == b.row && a.col == b.col) {
      throw ParseError(source_line[order[k]], "duplicate entry (" + std::to_string(b.row + 1) + "," + std::to_string(b.col + 1) + ")");
    }
  }

  if (symmetry != "general") {
    const double sign = symmetry == "skew-symmetric" ? -1.0 : 1.0;
    const std::size_t base = t.size();
    for (std::size_t k = 0; k < base; ++k) {
      if (t[k].row != t[k].col) t.push_back({t[k].col, t[k].row, sign * t[k].value});
    }
  }
  return SparseMatrix::from_triplets(n_rows, n_cols, std::move(t));
}

inline SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_matrix_market(in);
}

/// Writes general real coordinate format with round-trip exact values.
inline void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
  char buf[64];
  for (const Triplet& t : a.triplets()) {
    auto res = std::to_chars(buf, buf + sizeof(buf), t.value);
    out << t.row + 1 << ' ' << t.col + 1 << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
  }
}

}  // namespace bspai
