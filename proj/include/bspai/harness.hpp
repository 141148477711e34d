#pragma once

// Experiment runner: reads a key-value experiment description, runs the
// uniform SPAI-GMRES-IR baseline and one bucketed variant per eps_b on each
// matrix, and renders the results as markdown, CSV or JSON tables.
//
// Config layout:
//
//   [experiment]
//   precisions = ddq            # ddq | sdq | ssd | hsd
//   bucket_eps = 2^-53, 2^-37
//   ladder     = double, single, half, drop   # optional; default follows u
//   norm       = max-abs        # or inf
//   alpha      = unlimited      # growth steps per column, or a count
//   beta       = 8
//   matrix_dir = data/matrices  # relative to the config file
//   format     = md
//
//   [matrices]
//   steam1 = 0.1                # SPAI eps; file found under matrix_dir
//   mine   = 0.3 path/to/a.mtx

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bspai/bucketed.hpp"
#include "bspai/error.hpp"
#include "bspai/matrix_market.hpp"
#include "bspai/precision.hpp"
#include "bspai/refine.hpp"
#include "bspai/spai.hpp"
#include "bspai/sparse_matrix.hpp"

namespace bspai {

struct MatrixEntry {
  std::string name;
  double spai_eps = 0.1;
  std::string path;                    // empty: resolved from matrix_dir
  std::optional<SparseMatrix> matrix;  // preloaded; takes precedence over path
};

enum class TableFormat { markdown, csv, json };

inline TableFormat table_format_from_name(std::string_view s) {
  if (s == "md" || s == "markdown") return TableFormat::markdown;
  if (s == "csv") return TableFormat::csv;
  if (s == "json") return TableFormat::json;
  throw Error("unknown table format '" + std::string(s) + "' (expected md, csv or json)");
}

struct ExperimentSpec {
  std::vector<MatrixEntry> matrices;
  std::string precisions = "ddq";
  std::vector<double> bucket_eps;
  std::vector<FpFormat> ladder;  // empty: BucketScheme::ladder_for(u)
  BucketNorm norm = BucketNorm::max_abs;
  std::size_t alpha = std::numeric_limits<std::size_t>::max();
  std::size_t beta = 8;
  std::size_t i_max = 10;
  unsigned threads = 1;
  std::string matrix_dir;
  TableFormat format = TableFormat::markdown;
  bool compute_kappa = true;

  IrConfig base_config() const {
    IrConfig c = IrConfig::preset(precisions);
    c.i_max = i_max;
    c.spai.alpha = alpha;
    c.spai.beta = beta;
    c.spai.threads = threads;
    return c;
  }

  BucketScheme scheme_for(double eps_b) const {
    const IrConfig c = IrConfig::preset(precisions);
    if (ladder.empty()) return BucketScheme::ladder_for(c.fmt_w, eps_b, norm);
    return BucketScheme{ladder, eps_b, norm};
  }

  void validate() const {
    (void)IrConfig::preset(precisions);
    for (const MatrixEntry& m : matrices) {
      if (!(m.spai_eps > 0.0 && m.spai_eps < 1.0)) throw Error("SPAI eps for '" + m.name + "' must lie in (0, 1)");
    }
    for (double e : bucket_eps) {
      if (!(e > 0.0 && e < 1.0)) throw Error("bucket eps must lie in (0, 1)");
      scheme_for(e).validate();
    }
    if (beta == 0) throw Error("beta must be positive");
  }
};

struct ResultRow {
  std::string matrix;
  std::string preconditioner;
  std::optional<double> kappa_inf_ma;
  Index nnz = 0;
  std::vector<Index> occupancy;
  double storage_percent = 100.0;
  std::size_t total_iterations = 0;
  std::vector<std::size_t> iterations_per_step;
  bool converged = false;
  std::string error;

  bool operator==(const ResultRow&) const = default;
};

// ---------------------------------------------------------------------------
// Value formatting

namespace harness_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

inline std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace harness_detail

/// Parses "0.25", "1e-3" or "2^-53".
inline double parse_number(std::string_view text) {
  const std::string s = harness_detail::trim(text);
  if (s.starts_with("2^")) {
    try {
      std::size_t used = 0;
      const int e = std::stoi(s.substr(2), &used);
      if (used + 2 == s.size()) return std::ldexp(1.0, e);
    } catch (const std::exception&) {
    }
    throw Error("malformed power of two '" + s + "'");
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("malformed number '" + s + "'");
}

/// "2^-53" for exact powers of two, "%g" otherwise.
inline std::string format_eps(double v) {
  int e = 0;
  if (v > 0.0 && std::frexp(v, &e) == 0.5) return "2^" + std::to_string(e - 1);
  return harness_detail::format_double("%g", v);
}

inline std::string bspai_label(double eps_b) { return "BSPAI(eps_b=" + format_eps(eps_b) + ")"; }
// SPAI tolerances are decimal settings, so 0.5 stays "0.5".
inline std::string spai_label(double eps) { return "SPAI(eps=" + harness_detail::format_double("%g", eps) + ")"; }

/// "1105(556, 537, 12, 0)".
template <class T>
std::string format_tuple(std::size_t total, const std::vector<T>& parts) {
  std::string s = std::to_string(total) + "(";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(parts[i]);
  }
  return s + ")";
}

inline std::string format_percent(double p) { return harness_detail::format_double("%.1f", p) + "%"; }

inline std::string format_kappa(const std::optional<double>& k) {
  return k ? harness_detail::format_double("%.1e", *k) : std::string("-");
}

// ---------------------------------------------------------------------------
// Config parsing

/// Parses the key-value experiment description. Relative matrix_dir and
/// matrix paths are resolved against `base_dir`.
inline ExperimentSpec parse_experiment(std::istream& in, const std::filesystem::path& base_dir = {}) {
  using harness_detail::split;
  using harness_detail::trim;
  ExperimentSpec spec;
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<std::size_t, MatrixEntry>> pending;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(lineno, "unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (section != "experiment" && section != "matrices") throw ParseError(lineno, "unknown section '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, "empty key");
    try {
      if (section == "matrices") {
        MatrixEntry m;
        m.name = key;
        std::istringstream vs(value);
        std::string eps, path;
        vs >> eps;
        std::getline(vs, path);
        m.spai_eps = parse_number(eps);
        m.path = trim(path);
        pending.emplace_back(lineno, std::move(m));
      } else if (section == "experiment") {
        if (key == "precisions") {
          spec.precisions = value;
          (void)IrConfig::preset(value);
        } else if (key == "bucket_eps") {
          spec.bucket_eps.clear();
          for (const std::string& v : split(value, ',')) spec.bucket_eps.push_back(parse_number(v));
        } else if (key == "ladder") {
          spec.ladder.clear();
          for (const std::string& v : split(value, ',')) spec.ladder.push_back(format_from_name(v));
          BucketScheme{spec.ladder, 0.5}.validate();
        } else if (key == "norm") {
          spec.norm = bucket_norm_from_name(value);
        } else if (key == "alpha") {
          spec.alpha = value == "unlimited" ? std::numeric_limits<std::size_t>::max()
                                            : static_cast<std::size_t>(parse_number(value));
        } else if (key == "beta") {
          spec.beta = static_cast<std::size_t>(parse_number(value));
        } else if (key == "i_max") {
          spec.i_max = static_cast<std::size_t>(parse_number(value));
        } else if (key == "threads") {
          spec.threads = static_cast<unsigned>(parse_number(value));
        } else if (key == "matrix_dir") {
          spec.matrix_dir = value;
        } else if (key == "format") {
          spec.format = table_format_from_name(value);
        } else if (key == "kappa") {
          if (value != "true" && value != "false") throw Error("kappa must be true or false");
          spec.compute_kappa = value == "true";
        } else {
          throw Error("unknown key '" + key + "'");
        }
      } else {
        throw Error("key outside of a section");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  std::filesystem::path dir = spec.matrix_dir;
  if (!dir.empty() && dir.is_relative() && !base_dir.empty()) dir = base_dir / dir;
  spec.matrix_dir = dir.string();
  for (auto& [ln, m] : pending) {
    if (!m.path.empty()) {
      std::filesystem::path p = m.path;
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      m.path = p.string();
    }
    spec.matrices.push_back(std::move(m));
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ParseError(lineno, e.what());
  }
  return spec;
}

inline ExperimentSpec load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open experiment file '" + path + "'");
  return parse_experiment(in, std::filesystem::path(path).parent_path());
}

/// matrix_dir/name.mtx, or matrix_dir/name/name.mtx as unpacked from the
/// SuiteSparse archives.
inline std::string resolve_matrix_path(const MatrixEntry& m, const std::string& matrix_dir) {
  if (!m.path.empty()) return m.path;
  const std::filesystem::path dir = matrix_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(matrix_dir);
  const std::filesystem::path flat = dir / (m.name + ".mtx");
  if (std::filesystem::exists(flat)) return flat.string();
  const std::filesystem::path nested = dir / m.name / (m.name + ".mtx");
  if (std::filesystem::exists(nested)) return nested.string();
  return flat.string();
}

// ---------------------------------------------------------------------------
// Running

inline ResultRow row_from_report(const std::string& matrix, const std::string& label, const IrReport& rep) {
  ResultRow r;
  r.matrix = matrix;
  r.preconditioner = label;
  r.kappa_inf_ma = rep.kappa_inf_ma;
  r.nnz = rep.preconditioner_nnz;
  r.occupancy = rep.occupancy;
  r.storage_percent = 100.0 * rep.storage_ratio;
  r.total_iterations = rep.total_gmres_iterations;
  r.iterations_per_step = rep.iterations_per_step();
  r.converged = rep.converged;
  return r;
}

/// Rows for one matrix: one BSPAI row per eps_b (in spec order), then the
/// uniform-precision SPAI baseline.
inline std::vector<ResultRow> run_matrix(const ExperimentSpec& spec, const MatrixEntry& entry) {
  std::vector<std::string> labels;
  for (double e : spec.bucket_eps) labels.push_back(bspai_label(e));
  labels.push_back(spai_label(entry.spai_eps));
  auto failed = [&](const std::string& what) {
    std::vector<ResultRow> rows;
    for (const std::string& l : labels) {
      ResultRow r;
      r.matrix = entry.name;
      r.preconditioner = l;
      r.error = what;
      rows.push_back(std::move(r));
    }
    return rows;
  };
  try {
    const SparseMatrix a = entry.matrix ? *entry.matrix : read_matrix_market(resolve_matrix_path(entry, spec.matrix_dir));
    if (a.rows() != a.cols()) throw DimensionError("matrix is not square");
    IrConfig cfg = spec.base_config();
    cfg.spai.eps_tol = entry.spai_eps;
    cfg.spai.build_fmt = cfg.fmt_f;
    const SpaiResult spai = spai_right_preconditioner(a, cfg.spai);
    const Vector b = unit_rhs(a.rows(), cfg.fmt_w);
    const std::vector<DoubleDouble> x_ref = reference_solution(a, b);
    const IrOptions opts{spec.compute_kappa};

    std::vector<ResultRow> rows;
    for (std::size_t k = 0; k < spec.bucket_eps.size(); ++k) {
      IrConfig c = cfg;
      c.bucket = spec.scheme_for(spec.bucket_eps[k]);
      rows.push_back(row_from_report(entry.name, labels[k], gmres_ir_bucketed(a, b, spai.m, c, x_ref, opts)));
    }
    IrConfig c = cfg;
    c.bucket = spec.bucket_eps.empty() ? spec.scheme_for(cfg.fmt_w.unit_roundoff) : spec.scheme_for(spec.bucket_eps.front());
    rows.push_back(row_from_report(entry.name, labels.back(), gmres_ir_uniform(a, b, spai.m, c, x_ref, opts)));
    return rows;
  } catch (const std::exception& e) {
    return failed(e.what());
  }
}

/// Runs every matrix in spec order. Failures are recorded in the rows of the
/// affected matrix; the remaining matrices still run.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<ResultRow> rows;
  for (const MatrixEntry& m : spec.matrices) {
    std::vector<ResultRow> part = run_matrix(spec, m);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Emission

inline std::string row_status(const ResultRow& r) {
  if (!r.error.empty()) return "error: " + r.error;
  return r.converged ? "converged" : "not converged";
}

inline nlohmann::json rows_to_json(const std::vector<ResultRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ResultRow& r : rows) {
    nlohmann::json j;
    j["matrix"] = r.matrix;
    j["preconditioner"] = r.preconditioner;
    j["kappa_inf_ma"] = r.kappa_inf_ma ? nlohmann::json(*r.kappa_inf_ma) : nlohmann::json(nullptr);
    j["nnz"] = r.nnz;
    j["occupancy"] = r.occupancy;
    j["storage_percent"] = r.storage_percent;
    j["total_iterations"] = r.total_iterations;
    j["iterations_per_step"] = r.iterations_per_step;
    j["converged"] = r.converged;
    j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<ResultRow> rows_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw Error("result table must be a JSON array");
  std::vector<ResultRow> rows;
  for (const auto& j : arr) {
    ResultRow r;
    r.matrix = j.at("matrix").get<std::string>();
    r.preconditioner = j.at("preconditioner").get<std::string>();
    if (!j.at("kappa_inf_ma").is_null()) r.kappa_inf_ma = j.at("kappa_inf_ma").get<double>();
    r.nnz = j.at("nnz").get<Index>();
    r.occupancy = j.at("occupancy").get<std::vector<Index>>();
    r.storage_percent = j.at("storage_percent").get<double>();
    r.total_iterations = j.at("total_iterations").get<std::size_t>();
    r.iterations_per_step = j.at("iterations_per_step").get<std::vector<std::size_t>>();
    r.converged = j.at("converged").get<bool>();
    r.error = j.at("error").get<std::string>();
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ResultRow> rows_from_json(std::string_view text) {
  try {
    return rows_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed result table: ") + e.what());
  }
}

inline std::vector<ResultRow> rows_from_json(const std::string& text) { return rows_from_json(std::string_view(text)); }
inline std::vector<ResultRow> rows_from_json(const char* text) { return rows_from_json(std::string_view(text)); }

namespace harness_detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace harness_detail

/// Column order: matrix, preconditioner, kappa_inf(MA), precond. nnz with
/// occupancy, storage, GMRES its/step, status.
inline std::string emit_table(const std::vector<ResultRow>& rows, TableFormat format) {
  using harness_detail::csv_field;
  std::ostringstream out;
  switch (format) {
    case TableFormat::json:
      out << rows_to_json(rows).dump(2) << '\n';
      break;
    case TableFormat::csv:
      out << "matrix,preconditioner,kappa_inf_ma,precond_nnz,storage,gmres_its_per_step,status\n";
      for (const ResultRow& r : rows) {
        out << csv_field(r.matrix) << ',' << csv_field(r.preconditioner) << ',' << format_kappa(r.kappa_inf_ma) << ','
            << csv_field(format_tuple(r.nnz, r.occupancy)) << ',' << format_percent(r.storage_percent) << ','
            << csv_field(format_tuple(r.total_iterations, r.iterations_per_step)) << ',' << csv_field(row_status(r))
            << '\n';
      }
      break;
    case TableFormat::markdown:
      out << "| Matrix | Preconditioner | kappa_inf(MA) | Precond. nnz | str. | GMRES its/step | Status |\n";
      out << "|---|---|---|---|---|---|---|\n";
      for (const ResultRow& r : rows) {
        out << "| " << r.matrix << " | " << r.preconditioner << " | " << format_kappa(r.kappa_inf_ma) << " | "
            << format_tuple(r.nnz, r.occupancy) << " | " << format_percent(r.storage_percent) << " | "
            << format_tuple(r.total_iterations, r.iterations_per_step) << " | " << row_status(r) << " |\n";
      }
      break;
  }
  return out.str();
}

}  // namespace bspai
