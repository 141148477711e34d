// bspai: run preconditioner experiments, check error bounds, inspect matrices.
//
//   bspai run --spec configs/suitesparse_ddq.conf --format csv --out ddq.csv
//   bspai verify --bounds --trials 1000
//   bspai info data/matrices/cage5.mtx
//   bspai precondition a.mtx --eps 0.3 --eps-b 2^-37 --out m

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "bspai/bspai.hpp"

using namespace bspai;

namespace {

struct RunOptions {
  std::string spec;
  std::string out;
  std::string format;
  std::string matrix_dir;
  std::vector<std::string> eps_overrides;  // name=value
  unsigned threads = 0;
};

int cmd_run(const RunOptions& o) {
  ExperimentSpec spec = load_experiment(o.spec);
  if (!o.format.empty()) spec.format = table_format_from_name(o.format);
  if (!o.matrix_dir.empty()) spec.matrix_dir = o.matrix_dir;
  if (o.threads != 0) spec.threads = o.threads;
  for (const std::string& kv : o.eps_overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--eps expects name=value, got '" + kv + "'");
    const std::string name = kv.substr(0, eq);
    bool found = false;
    for (MatrixEntry& m : spec.matrices) {
      if (m.name == name) {
        m.spai_eps = parse_number(kv.substr(eq + 1));
        found = true;
      }
    }
    if (!found) throw Error("--eps names unknown matrix '" + name + "'");
  }
  spec.validate();

  const std::vector<ResultRow> rows = run_experiment(spec);
  const std::string table = emit_table(rows, spec.format);
  if (o.out.empty()) {
    std::cout << table;
  } else {
    std::ofstream f(o.out);
    if (!f) throw Error("cannot write '" + o.out + "'");
    f << table;
  }
  std::size_t failed = 0;
  for (const ResultRow& r : rows) {
    if (!r.error.empty()) {
      std::cerr << r.matrix << " / " << r.preconditioner << ": " << r.error << '\n';
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}

struct VerifyOptions {
  bool bounds = false;
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  std::vector<std::string> matrices;
};

int cmd_verify(const VerifyOptions& o) {
  if (!o.bounds) {
    std::cerr << "nothing to verify; pass --bounds\n";
    return 2;
  }
  std::vector<synthetic::NamedMatrix> cases;
  if (o.matrices.empty()) {
    cases = synthetic::standard_suite();
  } else {
    for (const std::string& p : o.matrices) cases.push_back({p, read_matrix_market(p)});
  }
  int failures = 0;
  auto print = [&](const std::string& label, const BoundCheck& c) {
    std::printf("%-4s %-40s %s\n", c.ok() ? "ok" : "FAIL", label.c_str(), describe(c).c_str());
    if (!c.ok()) ++failures;
  };
  std::uint64_t seed = o.seed;
  for (const auto& nm : cases) {
    for (const char* preset : {"ddq", "ssd"}) {
      const IrConfig cfg = IrConfig::preset(preset);
      SpaiConfig sc;
      sc.eps_tol = 0.3;
      sc.build_fmt = cfg.fmt_f;
      sc.threads = std::max(1u, std::thread::hardware_concurrency());
      const SparseMatrix m = spai_right_preconditioner(nm.a, sc).m;
      const std::vector<double> eps_list =
          cfg.fmt_w == kDouble ? std::vector<double>{0x1p-53, 0x1p-37} : std::vector<double>{0x1p-24, 0x1p-18};
      for (double eps_b : eps_list) {
        print(nm.name + " " + preset + " eps_b=" + format_eps(eps_b),
              check_bspmv_bound(m, BucketScheme::ladder_for(cfg.fmt_w, eps_b), o.trials, seed++));
      }
    }
  }
  for (const FpFormat* f : {&kHalf, &kSingle, &kDouble}) {
    print("uniform spmv " + std::string(f->name), check_uniform_spmv_bound(*f, o.trials, seed++));
  }
  return failures == 0 ? 0 : 1;
}

int cmd_info(const std::string& path, bool cond2) {
  const SparseMatrix a = read_matrix_market(path);
  std::printf("rows       %zu\ncols       %zu\nnnz        %zu\n", a.rows(), a.cols(), a.nnz());
  std::printf("norm_inf   %.6e\nnorm_frob  %.6e\n", norm_inf(a), norm_frob(a));
  if (a.rows() == a.cols()) {
    std::printf("kappa_inf  %.3e\n", kappa_inf(a));
    if (cond2) std::printf("cond2(A^T) %.3e\n", cond2_transpose(a));
  }
  return 0;
}

struct PreconditionOptions {
  std::string matrix;
  std::string out;
  std::string precisions = "ddq";
  double eps = 0.1;
  std::string eps_b = "2^-53";
  std::size_t beta = 8;
};

int cmd_precondition(const PreconditionOptions& o) {
  const SparseMatrix a = read_matrix_market(o.matrix);
  const IrConfig cfg = IrConfig::preset(o.precisions);
  SpaiConfig sc;
  sc.eps_tol = o.eps;
  sc.beta = o.beta;
  sc.build_fmt = cfg.fmt_f;
  sc.threads = std::max(1u, std::thread::hardware_concurrency());
  const SpaiResult spai = spai_right_preconditioner(a, sc);
  const BucketedMatrix mb = build_buckets(spai.m, BucketScheme::ladder_for(cfg.fmt_w, parse_number(o.eps_b)));

  std::printf("nnz %s  storage %s  c %.3f  tolerance misses %zu\n",
              format_tuple(spai.m.nnz(), mb.occupancy()).c_str(), format_percent(100.0 * storage_ratio(mb)).c_str(),
              c_constant(mb), spai.report.capped_columns);
  if (!o.out.empty()) {
    std::ofstream mm(o.out + ".mtx");
    if (!mm) throw Error("cannot write '" + o.out + ".mtx'");
    write_matrix_market(mm, spai.m);
    save_bucketed(mb, o.out + ".json", o.out + ".bin");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bucketed sparse approximate inverse preconditioning for mixed-precision GMRES-IR"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run an experiment config and print the results table");
  run_cmd->add_option("--spec", run.spec, "experiment config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out, "write the table here instead of stdout");
  run_cmd->add_option("--format", run.format, "md, csv or json (overrides the config)");
  run_cmd->add_option("--matrix-dir", run.matrix_dir, "directory holding <name>.mtx files");
  run_cmd->add_option("--eps", run.eps_overrides, "per-matrix SPAI tolerance, name=value");
  run_cmd->add_option("--threads", run.threads, "SPAI worker threads");

  VerifyOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "randomized checks of the SpMV error bounds");
  verify_cmd->add_flag("--bounds", verify.bounds, "check bucketed and uniform SpMV bounds");
  verify_cmd->add_option("--trials", verify.trials, "random vectors or matrices per check");
  verify_cmd->add_option("--seed", verify.seed, "first RNG seed");
  verify_cmd->add_option("--matrix", verify.matrices, "Matrix Market files (default: built-in synthetic suite)");

  std::string info_path;
  bool info_cond2 = false;
  auto* info_cmd = app.add_subcommand("info", "print size, norms and condition numbers of a matrix");
  info_cmd->add_option("matrix", info_path, "Matrix Market file")->required()->check(CLI::ExistingFile);
  info_cmd->add_flag("--cond2", info_cond2, "also estimate the 2-norm condition number of A^T");

  PreconditionOptions pre;
  auto* pre_cmd = app.add_subcommand("precondition", "build a SPAI preconditioner and bucket it");
  pre_cmd->add_option("matrix", pre.matrix, "Matrix Market file")->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--precisions", pre.precisions, "ddq, sdq, ssd or hsd");
  pre_cmd->add_option("--eps", pre.eps, "SPAI column tolerance");
  pre_cmd->add_option("--eps-b", pre.eps_b, "bucketing target, e.g. 2^-37");
  pre_cmd->add_option("--beta", pre.beta, "candidates added per refinement step");
  pre_cmd->add_option("--out", pre.out, "write <out>.mtx, <out>.json and <out>.bin");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run);
    if (*verify_cmd) return cmd_verify(verify);
    if (*info_cmd) return cmd_info(info_path, info_cond2);
    if (*pre_cmd) return cmd_precondition(pre);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
