#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/prognosis.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace tenreg;
namespace fs = std::filesystem;

namespace {

DenseTensor gaussian_tensor(const Dims& dims, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  DenseTensor t(dims);
  for (Index k = 0; k < t.size(); ++k) t.data()[k] = z(rng);
  return t;
}

// ttf = 30 + <B, S> + noise, B rank one over (4, 3, frames) with ||B|| = 3.
Dataset synthetic(Index n, Index frames, double noise, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const Dims dims{4, 3, frames};
  Vector a(4), b(3), c(frames);
  for (auto* v : {&a, &b, &c})
    for (Index k = 0; k < v->size(); ++k) (*v)[k] = z(rng);
  DenseTensor coef = cp_reconstruct(std::vector<Matrix>{a, b, c});
  coef = coef * (3.0 / frobenius_norm(coef));
  Dataset d;
  for (Index i = 0; i < n; ++i) {
    System s{"s" + std::to_string(i), gaussian_tensor(dims, rng), 0.0};
    s.ttf = 30.0 + inner(coef, s.stream) + noise * z(rng);
    d.systems.push_back(std::move(s));
  }
  return d;
}

LibraryOptions cp_fixed() {
  LibraryOptions o;
  o.method = Method::Cp;
  o.rank_mode = RankMode::Fixed;
  o.ranks = {1};
  o.families = {DistributionFamily::parse("normal")};
  o.mpca_fve = 1.0;
  o.fit.restarts = 2;
  o.fit.tol = 1e-9;
  return o;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tenreg_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Prognosis, TruncationEnumeration) {
  std::mt19937_64 rng(1);
  Dataset d;
  for (int ttf : {5, 7, 9}) d.systems.push_back({std::to_string(ttf), gaussian_tensor({2, 2, ttf}, rng), double(ttf)});
  const auto cut = build_truncated_dataset(d, 6);
  ASSERT_EQ(cut.size(), 2);
  EXPECT_EQ(cut.systems[0].id, "7");
  EXPECT_EQ(cut.systems[1].id, "9");
  for (const auto& s : cut.systems) EXPECT_EQ(s.stream.dims(), (Dims{2, 2, 6}));
  EXPECT_EQ(build_truncated_dataset(d, 2).size(), 3);
  EXPECT_THROW(build_truncated_dataset(d, 9), DataError);  // nobody outlives t = 9
  Index prev = d.size();
  for (Index n = 2; n <= 6; ++n) {
    const Index k = build_truncated_dataset(d, n).size();
    EXPECT_LE(k, prev);
    prev = k;
  }
}

TEST(Prognosis, TruncatedStreamKeepsLeadingFrames) {
  std::mt19937_64 rng(2);
  const auto s = gaussian_tensor({3, 2, 5}, rng);
  const auto t = truncate_stream(s, 3);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j)
      for (Index f = 0; f < 3; ++f) EXPECT_EQ(t({i, j, f}), s({i, j, f}));
  EXPECT_THROW(truncate_stream(s, 6), DimensionError);
}

TEST(Prognosis, DatasetValidation) {
  std::mt19937_64 rng(3);
  Dataset d;
  d.systems.push_back({"a", gaussian_tensor({2, 2, 4}, rng), 3.0});  // dies before its last frame
  EXPECT_THROW(d.validate(), DataError);
  d.systems[0].ttf = 4.0;
  d.systems.push_back({"a", gaussian_tensor({2, 2, 4}, rng), 5.0});
  EXPECT_THROW(d.validate(), DataError);
  d.systems[1].id = "b";
  d.systems.push_back({"c", gaussian_tensor({2, 3, 4}, rng), 5.0});
  EXPECT_THROW(d.validate(), DimensionError);
}

TEST(Prognosis, ScalarRules) {
  EXPECT_NEAR(relative_error(110, 100), 0.10, 1e-15);
  EXPECT_EQ(ttf_from_location(DistributionFamily::parse("weibull"), 0.0), 1.0);
  EXPECT_EQ(ttf_from_location(DistributionFamily::parse("sev"), 4.5), 4.5);
  EXPECT_EQ(percentile_bin(0.15), 10);
  EXPECT_EQ(percentile_bin(0.151), 20);
  EXPECT_EQ(percentile_bin(0.05), 0);
  EXPECT_EQ(percentile_bin(0.0501), 10);
  EXPECT_EQ(percentile_bin(0.25), 20);
  EXPECT_EQ(percentile_bin(0.95), 90);
  for (int k = 1; k <= 9; ++k) {
    const double edge = (10.0 * k + 5.0) / 100.0;
    EXPECT_EQ(percentile_bin(edge), 10 * k);
    EXPECT_EQ(percentile_bin(edge + 1e-6), 10 * (k + 1));
  }
}

TEST(Prognosis, PerfectPredictorSummary) {
  std::vector<PredictionRecord> rs;
  for (double p : {0.1, 0.12, 0.3}) {
    PredictionRecord r;
    r.rel_error = 0.0;
    r.percentile = p;
    rs.push_back(r);
  }
  const auto bins = summarize_bins(rs);
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0].bin, 10);
  EXPECT_EQ(bins[0].count, 2);
  for (const auto& b : bins) {
    EXPECT_EQ(b.mean, 0.0);
    EXPECT_EQ(b.variance, 0.0);
  }
}

TEST(Prognosis, LibraryHasOneModelPerEpoch) {
  const auto d = synthetic(60, 5, 0.01, 4);
  const auto lib = build_model_library(d, cp_fixed());
  ASSERT_EQ(lib.models.size(), 4u);
  EXPECT_TRUE(lib.skipped.empty());
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& m = lib.models[k];
    EXPECT_EQ(m.epoch, static_cast<Index>(k) + 2);
    EXPECT_EQ(m.training_dims, (Dims{4, 3, m.epoch}));
    EXPECT_EQ(m.subspace->input_dims, m.training_dims);
    EXPECT_EQ(m.ids.size(), 60u);
  }
}

TEST(Prognosis, InSampleSanityAtFinalEpoch) {
  const auto d = synthetic(60, 5, 1e-3, 5);
  const auto lib = build_model_library(d, cp_fixed());
  for (const auto& s : d.systems) {
    const auto r = predict_rul(lib, s.stream, s.ttf, s.id);
    EXPECT_EQ(r.epoch, 5);
    EXPECT_LT(*r.rel_error, 0.05);
    EXPECT_NEAR(r.rul, r.pred_ttf - 5.0, 1e-12);
    EXPECT_NEAR(*r.percentile, 5.0 / s.ttf, 1e-15);
  }
}

TEST(Prognosis, PredictionGuards) {
  const auto d = synthetic(30, 4, 0.01, 6);
  auto o = cp_fixed();
  o.first_epoch = 3;
  const auto lib = build_model_library(d, o);
  std::mt19937_64 rng(6);
  EXPECT_THROW(predict_rul(lib, gaussian_tensor({4, 3, 2}, rng)), DataError);
  EXPECT_THROW(predict_rul(lib, gaussian_tensor({4, 4, 3}, rng)), DimensionError);
  EXPECT_NO_THROW(predict_rul(lib, gaussian_tensor({4, 3, 3}, rng)));
}

TEST(Prognosis, LibraryIsDeterministicAndRoundTrips) {
  const auto d = synthetic(40, 4, 0.05, 7);
  auto o = cp_fixed();
  o.mpca_fve = 0.9;
  o.families = {DistributionFamily::parse("weibull")};
  auto a = build_model_library(d, o, 1);
  auto b = build_model_library(d, o, 3);
  a.config_hash = b.config_hash = "0123456789abcdef";
  const auto da = temp_dir("lib_a"), db = temp_dir("lib_b");
  save_library(da, a);
  save_library(db, b);
  for (const auto& e : fs::directory_iterator(da))
    EXPECT_EQ(read_file(e.path()), read_file(db / e.path().filename())) << e.path().filename();
  EXPECT_TRUE(fs::exists(da / "epoch_2.mpca"));
  EXPECT_TRUE(fs::exists(da / "epoch_4.cpm"));
  EXPECT_TRUE(fs::exists(da / "manifest.json"));

  const auto back = load_library(da);
  EXPECT_EQ(back.config_hash, a.config_hash);
  ASSERT_EQ(back.models.size(), a.models.size());
  for (const auto& s : d.systems) {
    const auto p = truncate_stream(s.stream, 3);
    EXPECT_EQ(predict_rul(back, p).pred_ttf, predict_rul(a, p).pred_ttf);
  }
  const auto ea = evaluate(a, d), eb = evaluate(back, d, 2);
  std::stringstream ca, cb;
  write_evaluation_csv(ca, ea.records);
  write_evaluation_csv(cb, eb.records);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(ca.str().substr(0, ca.str().find('\r')), "system,epoch,percentile_bin,pred_ttf,rul,rel_error");
  fs::remove_all(da);
  fs::remove_all(db);
}

TEST(Prognosis, EvaluateCoversReachedEpochs) {
  const auto d = synthetic(30, 4, 0.05, 8);
  const auto lib = build_model_library(d, cp_fixed());
  Dataset test;
  std::mt19937_64 rng(8);
  test.systems.push_back({"long", gaussian_tensor({4, 3, 4}, rng), 40.0});
  test.systems.push_back({"short", gaussian_tensor({4, 3, 2}, rng), 2.5});
  const auto ev = evaluate(lib, test);
  ASSERT_EQ(ev.records.size(), 4u);  // epochs 2..4, then epoch 2 only
  EXPECT_EQ(ev.records[3].id, "short");
  Index total = 0;
  for (const auto& b : ev.bins) total += b.count;
  EXPECT_EQ(total, 4);
  EXPECT_THROW(evaluate(lib, Dataset{}), DataError);
}

TEST(Prognosis, LeaveOneOutNeverLeaks) {
  const auto d = synthetic(12, 3, 0.05, 9);
  auto o = cp_fixed();
  o.fit.restarts = 1;
  const auto loo = leave_one_out(d, o, 2);
  EXPECT_EQ(loo.models_audited, 12 * 2);
  EXPECT_EQ(loo.leaks, 0);
  EXPECT_EQ(loo.evaluation.records.size(), 24u);
  for (const auto& r : loo.evaluation.records) EXPECT_TRUE(r.rel_error.has_value());
}

TEST(Prognosis, TuckerAndFpcaLibraries) {
  const auto d = synthetic(50, 4, 0.05, 10);
  LibraryOptions t;
  t.method = Method::Tucker;
  t.rank_mode = RankMode::Auto;
  t.families = {DistributionFamily::parse("sev")};
  t.fit.restarts = 2;
  const auto lt = build_model_library(d, t);
  EXPECT_EQ(lt.models.size(), 3u);
  for (const auto& m : lt.models) EXPECT_TRUE(m.tucker.has_value());

  t.rank_mode = RankMode::Fixed;
  t.ranks = {1, 1, 3};  // mode 3 has 2 frames at epoch 2: capped there
  const auto lf = build_model_library(d, t);
  EXPECT_EQ(lf.models.front().tucker->ranks(), (Dims{1, 1, 2}));
  EXPECT_FALSE(lf.warnings.empty());

  LibraryOptions f;
  f.method = Method::Fpca;
  const auto lp = build_model_library(d, f);
  EXPECT_EQ(lp.models.size(), 3u);
  const auto dir = temp_dir("lib_fpca");
  save_library(dir, lp);
  EXPECT_TRUE(fs::exists(dir / "epoch_3.fpca"));
  EXPECT_FALSE(fs::exists(dir / "epoch_3.mpca"));
  const auto back = load_library(dir);
  EXPECT_EQ(evaluate(back, d).mean_error, evaluate(lp, d).mean_error);
  fs::remove_all(dir);
}

TEST(Prognosis, LoadDatasetFromDirectory) {
  const auto dir = temp_dir("dataset");
  fs::create_directories(dir);
  std::mt19937_64 rng(11);
  std::ofstream csv(dir / "responses.csv", std::ios::binary);
  csv << "id,ttf,location,sigma\r\n";
  for (int i = 0; i < 3; ++i) {
    save_tensor(dir / ("system_" + std::to_string(i) + ".dten"), gaussian_tensor({2, 2, 3}, rng));
    csv << i << ',' << 10 + i << ",0,0\r\n";
  }
  csv.close();
  const auto d = load_dataset(dir);
  ASSERT_EQ(d.size(), 3);
  EXPECT_EQ(d.systems[2].id, "2");
  EXPECT_EQ(d.systems[2].ttf, 12.0);
  EXPECT_EQ(d.frames(), 3);
  std::ofstream bad(dir / "responses.csv", std::ios::binary);
  bad << "id,ttf\r\n0,abc\r\n";
  bad.close();
  EXPECT_THROW(load_dataset(dir), FormatError);
  fs::remove_all(dir);
}
