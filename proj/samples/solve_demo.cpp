// Solves a convection-diffusion system with BSPAI-preconditioned GMRES-IR and
// compares it with the uniform-precision SPAI baseline.
//
//   solve_demo [matrix.mtx] [spai_eps]

#include <cstdio>
#include <string>

#include "bspai/bspai.hpp"

namespace {

double final_error(const bspai::IrReport& r) {
  return r.steps.empty() ? r.initial_forward_error : r.steps.back().forward_error;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bspai;
  const SparseMatrix a = argc > 1 ? read_matrix_market(std::string(argv[1])) : synthetic::convection_diffusion(16, 16, 20.0);
  const double eps = argc > 2 ? std::stod(argv[2]) : 0.3;

  IrConfig cfg = IrConfig::preset("ddq");
  cfg.spai.eps_tol = eps;
  const Vector b = unit_rhs(a.rows(), cfg.fmt_w);

  std::printf("n = %zu, nnz = %zu, SPAI eps = %g\n\n", a.rows(), a.nnz(), eps);
  std::printf("%-22s %-26s %-8s %-22s %s\n", "preconditioner", "nnz(occupancy)", "storage", "GMRES its(per step)",
              "forward error");
  for (double eps_b : {0x1p-53, 0x1p-37, 0x1p-24}) {
    cfg.bucket = BucketScheme::ladder_for(kDouble, eps_b);
    const IrReport r = bspai_gmres_ir(a, b, cfg);
    std::printf("%-22s %-26s %-8s %-22s %.2e%s\n", bspai_label(eps_b).c_str(),
                format_tuple(r.preconditioner_nnz, r.occupancy).c_str(), format_percent(100.0 * r.storage_ratio).c_str(),
                format_tuple(r.total_gmres_iterations, r.iterations_per_step()).c_str(), final_error(r),
                r.converged ? "" : "  (not converged)");
  }
  const IrReport base = spai_gmres_ir(a, b, cfg);
  std::printf("%-22s %-26s %-8s %-22s %.2e\n", spai_label(eps).c_str(), std::to_string(base.preconditioner_nnz).c_str(),
              "100.0%", format_tuple(base.total_gmres_iterations, base.iterations_per_step()).c_str(), final_error(base));
  return 0;
}
