#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "pnp/bench.hpp"
#include "pnp/config.hpp"
#include "support/oracles.hpp"

using namespace pnp;
namespace fs = std::filesystem;

namespace {

const IdentityDenoiser kIdentity;
const MedianDenoiser kMedian;

BenchMethod method(std::string name, const Denoiser* d, int iterations = 75) {
  BenchMethod m;
  m.name = std::move(name);
  m.denoiser = d;
  m.iterations = iterations;
  return m;
}

bool close(double a, double b) { return a == b || std::abs(a - b) < 1e-9; }

class BenchFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pnp_bench_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    oracle::Gen g(300);
    for (int i = 0; i < 2; ++i) {
      Image img = g.image(24, 24);
      for (double& v : img.pixels()) v = std::round(v);
      images_.push_back(dir_ / ("img" + std::to_string(i) + ".pgm"));
      write_pgm(images_.back(), img);
    }
    kernels_.push_back(dir_ / "k0.txt");
    std::ofstream(kernels_.back()) << "1 1\n1\n";
    kernels_.push_back(dir_ / "k1.txt");
    std::ofstream f(kernels_.back());
    write_kernel(f, g.kernel(3, 3));
  }
  void TearDown() override { fs::remove_all(dir_); }

  BenchmarkSpec spec(const Denoiser& d) const {
    BenchmarkSpec s;
    s.images = images_;
    s.kernels = kernels_;
    s.sigmas = {0.0, 2.55};
    s.methods = {method("m", &d, 6)};
    s.seed = 11;
    s.record_timing = false;
    return s;
  }

  fs::path dir_;
  std::vector<fs::path> images_, kernels_;
};

}  // namespace

TEST(SigmaLabel, KeepsThreeSignificantDigits) {
  EXPECT_EQ(sigma_label(2.55), "2.55");
  EXPECT_EQ(sigma_label(5.10), "5.10");
  EXPECT_EQ(sigma_label(7.65), "7.65");
  EXPECT_EQ(sigma_label(10.2), "10.2");
}

TEST(TupleSeed, DependsOnEveryField) {
  const auto base = tuple_seed("a", "b", 2.55, 1);
  EXPECT_EQ(base, tuple_seed("a", "b", 2.55, 1));
  EXPECT_NE(base, tuple_seed("a", "c", 2.55, 1));
  EXPECT_NE(base, tuple_seed("ab", "", 2.55, 1));
  EXPECT_NE(base, tuple_seed("a", "b", 2.550000001, 1));
  EXPECT_NE(base, tuple_seed("a", "b", 2.55, 2));
}

TEST_F(BenchFixture, PerfectRestorationGivesInfinitePsnr) {
  BenchmarkSpec s = spec(kIdentity);
  s.kernels = {kernels_[0]};
  s.sigmas = {0.0};
  const auto t = run_benchmark(s);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_TRUE(t.rows[0].valid());
  EXPECT_EQ(t.rows[0].mean_psnr, std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(t.rows[0].mean_ssim, 1.0);
}

TEST_F(BenchFixture, RerunIsDeterministicAndWorkersAgree) {
  BenchmarkSpec s = spec(kMedian);
  const auto a = run_benchmark(s);
  const auto b = run_benchmark(s);
  s.workers = 3;
  const auto c = run_benchmark(s);
  ASSERT_EQ(a.items.size(), 8u);
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    EXPECT_TRUE(close(a.items[i].psnr, b.items[i].psnr));
    EXPECT_TRUE(close(a.items[i].psnr, c.items[i].psnr));
    EXPECT_TRUE(close(a.items[i].ssim, c.items[i].ssim));
  }
  EXPECT_EQ(a.to_csv(), c.to_csv());
  EXPECT_EQ(a.to_text(), b.to_text());
}

TEST_F(BenchFixture, FailedItemInvalidatesOnlyItsCells) {
  BenchmarkSpec s = spec(kMedian);
  s.images.push_back(dir_ / "missing.pgm");
  const auto t = run_benchmark(s);
  for (const auto& r : t.rows) {
    EXPECT_FALSE(r.valid());
    EXPECT_EQ(r.failures, 2);
    EXPECT_EQ(r.items, 4);
  }
  EXPECT_NE(t.to_text().find("invalid"), std::string::npos);
  EXPECT_NE(t.to_csv().find(",0\n"), std::string::npos);

  s.images.pop_back();
  s.methods.push_back(method("second", &kIdentity, 3));
  const auto ok = run_benchmark(s);
  EXPECT_EQ(ok.rows.size(), 4u);
  for (const auto& r : ok.rows) EXPECT_TRUE(r.valid());
  EXPECT_EQ(ok.to_text().find("invalid"), std::string::npos);
}

TEST_F(BenchFixture, InpaintingTaskScoresAgainstMedianFill) {
  BenchmarkSpec s = spec(kMedian);
  s.task = BenchTask::inpaint;
  s.kernels.clear();
  s.sigmas = {5.0};
  const auto t = run_benchmark(s);
  ASSERT_EQ(t.items.size(), 2u);
  for (const auto& it : t.items) {
    EXPECT_TRUE(it.ok) << it.error;
    EXPECT_EQ(it.kernel, "-");
    EXPECT_TRUE(std::isfinite(it.input_psnr));
  }
}

TEST(BenchmarkSpec, Validation) {
  BenchmarkSpec s;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.images = {"a.pgm"};
  s.kernels = {"k.txt"};
  s.methods = {method("m", &kIdentity)};
  EXPECT_NO_THROW(s.validate());
  s.sigmas = {-1.0};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.sigmas = {1.0};
  s.workers = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Convergence, SingleMethodCsvIsTheTraceCsv) {
  oracle::Gen g(301);
  const Image truth = g.image(20, 20);
  const BlurKernel k = g.kernel(3, 3);
  const std::vector<ConvergenceMethod> methods{{"admm", ConvergenceMethod::Kind::admm, &kMedian, 5, 7.0, std::nullopt, 0.1}};
  const auto traces = compare_convergence(truth, k, 2.55, methods, RngSeed{3}, false);
  ASSERT_EQ(traces.size(), 1u);
  EXPECT_EQ(convergence_csv(traces), export_trace(traces[0].trace));
  for (const auto& r : traces[0].trace) EXPECT_EQ(r.wall_ms, 0.0);
}

TEST(Convergence, ScoreGdTraceAndMultiMethodCsv) {
  oracle::Gen g(302);
  const Image truth = g.image(20, 20);
  const BlurKernel k = g.kernel(3, 3);
  const std::vector<ConvergenceMethod> methods{
      {"admm", ConvergenceMethod::Kind::admm, &kMedian, 4, 7.0, std::nullopt, 0.1},
      {"gd", ConvergenceMethod::Kind::score_gd, &kIdentity, 6, 7.0, std::nullopt, 0.1}};
  const auto traces = compare_convergence(truth, k, 2.55, methods, RngSeed{3}, false);
  ASSERT_EQ(traces.size(), 2u);
  EXPECT_EQ(traces[1].trace.size(), 6u);
  const std::string csv = convergence_csv(traces);
  EXPECT_EQ(csv.rfind("method,iter,primal_residual,psnr,wall_ms\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
  const auto again = compare_convergence(truth, k, 2.55, methods, RngSeed{3}, false);
  EXPECT_EQ(convergence_csv(again), csv);
}

TEST(Convergence, IterationsToReach) {
  Trace t{{1, 0, 20.0, 0}, {2, 0, 24.0, 0}, {3, 0, 25.0, 0}};
  EXPECT_EQ(iterations_to_reach(t, 23.0), 2);
  EXPECT_EQ(iterations_to_reach(t, 25.0), 3);
  EXPECT_FALSE(iterations_to_reach(t, 26.0));
}

TEST(Config, ParsesFlatKeyValueLines) {
  const auto e = parse_config("# comment\n  sigma = 2.55  \n\nout=a b.pgm # trailing\nexact = true\n");
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0], (std::pair<std::string, std::string>{"sigma", "2.55"}));
  EXPECT_EQ(e[1], (std::pair<std::string, std::string>{"out", "a b.pgm"}));
  EXPECT_EQ(e[2].second, "true");
}

TEST(Config, RejectsMalformedLines) {
  EXPECT_THROW(parse_config("sigma\n"), InvalidArgument);
  EXPECT_THROW(parse_config(" = 3\n"), InvalidArgument);
  EXPECT_THROW(parse_config("a = 1\na = 2\n"), InvalidArgument);
  try {
    parse_config("a = 1\n\nbroken\n");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
  EXPECT_THROW(read_config("/nonexistent/dir/x.cfg"), IoError);
}
