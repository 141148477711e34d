#include <gtest/gtest.h>

#include <sstream>

#include "bspai/harness.hpp"
#include "bspai/synthetic.hpp"

using namespace bspai;

namespace {

ExperimentSpec synthetic_spec() {
  ExperimentSpec spec;
  spec.precisions = "ddq";
  spec.bucket_eps = {0x1p-53, 0x1p-37};
  spec.matrices.push_back({"cd_8x8", 0.3, "", synthetic::convection_diffusion(8, 8, 10.0)});
  spec.matrices.push_back({"graded_60", 0.3, "", synthetic::graded_random(60, 6, 8.0, 1.5, 7)});
  return spec;
}

ResultRow steam1_row() {
  ResultRow r;
  r.matrix = "steam1";
  r.preconditioner = bspai_label(0x1p-53);
  r.kappa_inf_ma = 1.5;
  r.nnz = 1105;
  r.occupancy = {556, 537, 12, 0};
  r.storage_percent = 100.0 * storage_ratio(std::vector<Index>{556, 537, 12, 0},
                                            std::vector<FpFormat>{kDouble, kSingle, kHalf, kDrop});
  r.total_iterations = 21;
  r.iterations_per_step = {7, 7, 7};
  r.converged = true;
  return r;
}

}  // namespace

TEST(ParseNumber, PowersOfTwoAndDecimals) {
  EXPECT_EQ(parse_number("2^-53"), 0x1p-53);
  EXPECT_EQ(parse_number(" 0.25 "), 0.25);
  EXPECT_EQ(parse_number("1e-3"), 1e-3);
  EXPECT_THROW(parse_number("2^x"), Error);
  EXPECT_THROW(parse_number("0.1abc"), Error);
  EXPECT_EQ(format_eps(0x1p-37), "2^-37");
  EXPECT_EQ(format_eps(0.1), "0.1");
  EXPECT_EQ(spai_label(0.5), "SPAI(eps=0.5)");
}

TEST(ParseExperiment, ReadsAllKeys) {
  std::istringstream in(
      "# comment\n"
      "[experiment]\n"
      "precisions = ssd\n"
      "bucket_eps = 2^-24, 2^-18   # two variants\n"
      "norm = inf\n"
      "alpha = 5\n"
      "beta = 4\n"
      "matrix_dir = mats\n"
      "format = csv\n"
      "kappa = false\n"
      "\n"
      "[matrices]\n"
      "cage5 = 0.1\n"
      "mine = 0.4 other/mine.mtx\n");
  const ExperimentSpec s = parse_experiment(in, "/base");
  EXPECT_EQ(s.precisions, "ssd");
  EXPECT_EQ(s.bucket_eps, (std::vector<double>{0x1p-24, 0x1p-18}));
  EXPECT_EQ(s.norm, BucketNorm::inf);
  EXPECT_EQ(s.alpha, 5u);
  EXPECT_EQ(s.beta, 4u);
  EXPECT_EQ(s.matrix_dir, "/base/mats");
  EXPECT_EQ(s.format, TableFormat::csv);
  EXPECT_FALSE(s.compute_kappa);
  ASSERT_EQ(s.matrices.size(), 2u);
  EXPECT_EQ(s.matrices[0].name, "cage5");
  EXPECT_EQ(s.matrices[0].spai_eps, 0.1);
  EXPECT_EQ(s.matrices[1].path, "/base/other/mine.mtx");
  EXPECT_EQ(resolve_matrix_path(s.matrices[0], s.matrix_dir), "/base/mats/cage5.mtx");
  EXPECT_EQ(s.scheme_for(0x1p-24).q(), 3u);
}

TEST(ParseExperiment, ErrorsReportLine) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_experiment(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("[experiment]\nprecisions = xyz\n"), 2u);
  EXPECT_EQ(line_of("[experiment]\nbogus = 1\n"), 2u);
  EXPECT_EQ(line_of("[nothing]\n"), 1u);
  EXPECT_EQ(line_of("[experiment]\nno equals sign\n"), 2u);
  EXPECT_EQ(line_of("[matrices]\na = 0.1\nb = nope\n"), 3u);
  EXPECT_EQ(line_of("key = 1\n"), 1u);
  EXPECT_EQ(line_of("[experiment]\nladder = double, half, single\n"), 2u);
  EXPECT_NE(line_of("[matrices]\na = 1.5\n"), 0u);  // SPAI eps outside (0, 1)
}

TEST(RunExperiment, EmptyMatrixListGivesEmptyReport) {
  ExperimentSpec spec;
  spec.bucket_eps = {0x1p-53};
  EXPECT_TRUE(run_experiment(spec).empty());
}

TEST(RunExperiment, RowsFollowSpecOrderAndInvariants) {
  const ExperimentSpec spec = synthetic_spec();
  const std::vector<ResultRow> rows = run_experiment(spec);
  ASSERT_EQ(rows.size(), 6u);
  const std::vector<std::string> labels{"BSPAI(eps_b=2^-53)", "BSPAI(eps_b=2^-37)", "SPAI(eps=0.3)"};
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t k = 0; k < 3; ++k) {
      const ResultRow& r = rows[3 * m + k];
      EXPECT_EQ(r.matrix, spec.matrices[m].name);
      EXPECT_EQ(r.preconditioner, labels[k]);
      EXPECT_TRUE(r.error.empty()) << r.error;
      EXPECT_TRUE(r.converged);
      Index total = 0;
      for (Index o : r.occupancy) total += o;
      EXPECT_EQ(total, r.nnz);
      EXPECT_GT(r.storage_percent, 0.0);
      EXPECT_LE(r.storage_percent, 100.0);
    }
    const ResultRow& base = rows[3 * m + 2];
    EXPECT_EQ(base.storage_percent, 100.0);
    EXPECT_EQ(base.occupancy.front(), base.nnz);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_NEAR(*rows[3 * m + k].kappa_inf_ma, *base.kappa_inf_ma, 0.01 * *base.kappa_inf_ma);
    }
  }
}

TEST(RunExperiment, OutputIsDeterministic) {
  const ExperimentSpec spec = synthetic_spec();
  const std::string a = emit_table(run_experiment(spec), TableFormat::json);
  const std::string b = emit_table(run_experiment(spec), TableFormat::json);
  EXPECT_EQ(a, b);
}

TEST(RunExperiment, EpsEqualToUnitRoundoffIsAdmitted) {
  ExperimentSpec spec;
  spec.bucket_eps = {0x1p-53};
  spec.matrices.push_back({"cd", 0.3, "", synthetic::convection_diffusion(5, 5, 1.0)});
  const auto rows = run_experiment(spec);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].error.empty());
  EXPECT_TRUE(rows[0].converged);
}

TEST(RunExperiment, FailuresStayInTheirRows) {
  ExperimentSpec spec;
  spec.bucket_eps = {0x1p-53};
  spec.matrices.push_back({"missing", 0.3, "/nonexistent/missing.mtx", std::nullopt});
  spec.matrices.push_back({"singular", 0.3, "", SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 1, 1.0}})});
  spec.matrices.push_back({"cd", 0.3, "", synthetic::convection_diffusion(4, 4, 1.0)});
  const auto rows = run_experiment(spec);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_FALSE(rows[0].error.empty());
  EXPECT_FALSE(rows[1].error.empty());
  EXPECT_FALSE(rows[2].error.empty());
  EXPECT_TRUE(rows[4].error.empty());
  EXPECT_TRUE(rows[5].converged);
}

TEST(EmitTable, CsvHasHeaderAndOneLinePerRow) {
  const std::string csv = emit_table({steam1_row()}, TableFormat::csv);
  std::istringstream in(csv);
  std::string header, line, extra;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(header, "matrix,preconditioner,kappa_inf_ma,precond_nnz,storage,gmres_its_per_step,status");
  EXPECT_EQ(line, "steam1,BSPAI(eps_b=2^-53),1.5e+00,\"1105(556, 537, 12, 0)\",74.9%,\"21(7, 7, 7)\",converged");
}

TEST(EmitTable, MarkdownRendersTuplesAndPercent) {
  const std::string md = emit_table({steam1_row()}, TableFormat::markdown);
  EXPECT_NE(md.find("| steam1 | BSPAI(eps_b=2^-53) | 1.5e+00 | 1105(556, 537, 12, 0) | 74.9% | 21(7, 7, 7) |"),
            std::string::npos);
  EXPECT_EQ(md.rfind("| Matrix | Preconditioner | kappa_inf(MA) | Precond. nnz | str. | GMRES its/step", 0), 0u);
}

TEST(EmitTable, JsonRoundTrips) {
  ResultRow failed;
  failed.matrix = "x";
  failed.preconditioner = "SPAI(eps=0.5)";
  failed.error = "cannot open 'x.mtx'";
  const std::vector<ResultRow> rows{steam1_row(), failed};
  EXPECT_EQ(rows_from_json(emit_table(rows, TableFormat::json)), rows);
  EXPECT_THROW(rows_from_json(std::string_view("{")), Error);
  EXPECT_EQ(table_format_from_name("md"), TableFormat::markdown);
  EXPECT_THROW(table_format_from_name("xml"), Error);
}
