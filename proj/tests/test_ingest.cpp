#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "ignite/ingest.hpp"
#include "ignite/missingness.hpp"
#include "support.hpp"

namespace ignite {
namespace {

RawRecord parse(const std::string& text) {
  std::istringstream in(text);
  return parse_physionet_record(in);
}

Index col(const std::string& name) {
  const auto& f = physionet_features();
  return static_cast<Index>(std::find(f.begin(), f.end(), name) - f.begin());
}

TEST(Parse, SingleEvent) {
  const RawRecord r = parse("Time,Parameter,Value\n00:07,HR,85\n");
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0], (Event{7, "HR", 85.0}));
}

TEST(Parse, DescriptorRowsAreNotEvents) {
  const RawRecord r = parse("Time,Parameter,Value\n00:00,RecordID,132539\n00:00,Age,54\n");
  EXPECT_EQ(r.record_id, 132539);
  EXPECT_DOUBLE_EQ(r.descriptors.age, 54.0);
  EXPECT_TRUE(r.events.empty());
}

TEST(Parse, UnknownGender) {
  const RawRecord r = parse("Time,Parameter,Value\n00:00,Gender,-1\n");
  EXPECT_EQ(r.descriptors.gender, -1);
}

TEST(Parse, SortsEventsAndConvertsHours) {
  const RawRecord r = parse("Time,Parameter,Value\n02:10,HR,70\n00:30,Na,140\r\n01:00,HR,72\n");
  ASSERT_EQ(r.events.size(), 3u);
  EXPECT_EQ(r.events[0].minute, 30);
  EXPECT_EQ(r.events[1].minute, 60);
  EXPECT_EQ(r.events[2].minute, 130);
}

TEST(Parse, UnknownParameterIsIgnoredNotFatal) {
  const RawRecord r = parse("Time,Parameter,Value\n00:05,Foo,1\n00:06,HR,80\n");
  ASSERT_EQ(r.ignored.size(), 1u);
  EXPECT_EQ(r.ignored[0], "Foo");
  EXPECT_EQ(r.events.size(), 1u);
}

TEST(Parse, MalformedLineNamesLineNumber) {
  try {
    parse("Time,Parameter,Value\n00:05,HR,80\n00:06,HR\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("Time,Parameter,Value\nab:cd,HR,1\n"), ParseError);
  EXPECT_THROW(parse("Time,Parameter,Value\n00:01,HR,x\n"), ParseError);
  EXPECT_THROW(parse("Wrong,Header\n"), ParseError);
  EXPECT_THROW(parse(""), ParseError);
}

TEST(Aggregate, MeanWithinHour) {
  const RawRecord r = parse("Time,Parameter,Value\n00:05,HR,80\n00:30,HR,90\n");
  const PatientRecord p = hourly_aggregate(r);
  EXPECT_DOUBLE_EQ(p.X(0, col("HR")), 85.0);
  EXPECT_EQ(p.M(0, col("HR")), 1.0);
  EXPECT_EQ(p.steps(), 48);
  EXPECT_EQ(p.features(), 35);
}

TEST(Aggregate, AbsentFeatureAllMissing) {
  const PatientRecord p = hourly_aggregate(parse("Time,Parameter,Value\n00:05,HR,80\n"));
  EXPECT_EQ(p.M.col(col("Cholesterol")).sum(), 0.0);
  for (Index t = 0; t < p.steps(); ++t) EXPECT_TRUE(is_missing(p.X(t, col("Cholesterol"))));
}

TEST(Aggregate, HorizonBoundaryExcluded) {
  const PatientRecord p = hourly_aggregate(parse("Time,Parameter,Value\n48:00,HR,80\n47:59,Na,140\n"));
  EXPECT_EQ(p.M.col(col("HR")).sum(), 0.0);
  EXPECT_EQ(p.M(47, col("Na")), 1.0);
}

TEST(Aggregate, EmptyRecordIsAllMissing) {
  const PatientRecord p = hourly_aggregate(parse("Time,Parameter,Value\n"));
  EXPECT_EQ(p.M.sum(), 0.0);
  EXPECT_EQ(p.A.sum(), 0.0);
  EXPECT_THROW(hourly_aggregate(RawRecord{}, 0), InvalidArgument);
}

TEST(Aggregate, TreatmentRoutedToA) {
  const PatientRecord p = hourly_aggregate(parse("Time,Parameter,Value\n03:20,MechVent,1\n"));
  ASSERT_EQ(p.A.cols(), 1);
  EXPECT_EQ(p.A(3, 0), 1.0);
  EXPECT_EQ(p.A.sum(), 1.0);
  EXPECT_EQ(p.M.sum(), 0.0);
}

TEST(Aggregate, InvalidValuesAreMissing) {
  const PatientRecord p =
      hourly_aggregate(parse("Time,Parameter,Value\n00:10,HR,0\n00:20,Na,-1\n00:30,Urine,0\n"));
  EXPECT_EQ(p.M(0, col("HR")), 0.0);
  EXPECT_EQ(p.M(0, col("Na")), 0.0);
  EXPECT_EQ(p.M(0, col("Urine")), 1.0);
}

TEST(Aggregate, PartitionOfInHorizonEvents) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> minute(0, 60 * 60);
  std::uniform_int_distribution<std::size_t> feat(0, 4);
  const std::vector<std::string> names = {"a", "b", "c", "d", "e"};
  for (int rep = 0; rep < 20; ++rep) {
    RawRecord raw;
    int in_horizon = 0;
    std::map<std::pair<int, std::string>, int> per_bucket;
    for (int e = 0; e < 200; ++e) {
      const int m = minute(rng);
      const std::string& p = names[feat(rng)];
      raw.events.push_back({m, p, 1.0 + e});
      if (m < 48 * 60) {
        ++in_horizon;
        ++per_bucket[{m / 60, p}];
      }
    }
    const PatientRecord r = hourly_aggregate(raw, 48, names, {});
    EXPECT_EQ(static_cast<std::size_t>(r.M.sum()), per_bucket.size());
    int total = 0;
    for (const auto& [key, n] : per_bucket) {
      total += n;
      EXPECT_EQ(r.M(key.first, std::find(names.begin(), names.end(), key.second) - names.begin()), 1.0);
    }
    EXPECT_EQ(total, in_horizon);
  }
}

TEST(Demographics, OneHotPerDemographic) {
  const Vector d = encode_demographics(54.0, 1);
  EXPECT_DOUBLE_EQ(d.sum(), 2.0);
  EXPECT_EQ(d(2), 1.0);  // [49, 66)
  EXPECT_EQ(d(kAgeBins + 1), 1.0);
  EXPECT_EQ(encode_demographics(15.0, 0)(0), 1.0);
  EXPECT_EQ(encode_demographics(99.9, 0)(kAgeBins - 1), 1.0);
  EXPECT_EQ(encode_demographics(120.0, 0)(kAgeBins - 1), 1.0);
  EXPECT_EQ(encode_demographics(-1.0, -1)(kAgeBins + 2), 1.0);
}

class CohortDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("ignite_cohort_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_ / "set");
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  void write(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
  }
  void record(std::int64_t id, const std::string& body = "") {
    write(dir_ / "set" / (std::to_string(id) + ".txt"),
          "Time,Parameter,Value\n00:00,RecordID," + std::to_string(id) + "\n00:00,Age,60\n00:00,Gender,1\n" + body);
  }

  std::filesystem::path dir_;
};

TEST_F(CohortDir, JoinsOutcomesAndDropsUnlabelled) {
  record(1, "00:10,HR,80\n");
  record(2, "01:10,HR,90\n");
  record(3);
  write(dir_ / "outcomes.txt", "RecordID,SAPS-I,In-hospital_death\n1,10,1\n2,12,0\n");
  CohortLoadSummary summary;
  const Dataset d = load_physionet_cohort(dir_ / "set", dir_ / "outcomes.txt", &summary);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(summary.files, 3u);
  EXPECT_EQ(summary.without_outcome, 1u);
  EXPECT_DOUBLE_EQ(d.prevalence(), 0.5);
  for (const auto& r : d.records) EXPECT_DOUBLE_EQ(r.d.sum(), 2.0);
  EXPECT_NO_THROW(d.validate());
}

TEST_F(CohortDir, MissingOutcomesFileIsFatal) {
  record(1);
  EXPECT_THROW(load_physionet_cohort(dir_ / "set", dir_ / "nope.txt"), NotFoundError);
}

TEST_F(CohortDir, DuplicateRecordIdIsFatal) {
  record(1);
  write(dir_ / "set" / "copy.txt", "Time,Parameter,Value\n00:00,RecordID,1\n");
  write(dir_ / "outcomes.txt", "RecordID,In-hospital_death\n1,0\n");
  EXPECT_THROW(load_physionet_cohort(dir_ / "set", dir_ / "outcomes.txt"), InvalidArgument);
}

TEST_F(CohortDir, EmptyDirectoryGivesEmptyDataset) {
  write(dir_ / "outcomes.txt", "RecordID,In-hospital_death\n");
  const Dataset d = load_physionet_cohort(dir_ / "set", dir_ / "outcomes.txt");
  EXPECT_EQ(d.size(), 0u);
  EXPECT_EQ(d.features(), 35);
}

bool bit_identical(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

TEST(Synthetic, Deterministic) {
  SyntheticSpec spec{50, 4, 2, 12, 17};
  const Dataset a = generate_synthetic_cohort(spec);
  const Dataset b = generate_synthetic_cohort(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(bit_identical(a.records[i].X, b.records[i].X));
    EXPECT_TRUE(bit_identical(a.records[i].M, b.records[i].M));
    EXPECT_TRUE(bit_identical(a.records[i].A, b.records[i].A));
    EXPECT_TRUE(bit_identical(a.records[i].d, b.records[i].d));
    EXPECT_EQ(a.records[i].y, b.records[i].y);
  }
  spec.seed = 18;
  const Dataset c = generate_synthetic_cohort(spec);
  EXPECT_FALSE(bit_identical(a.records[0].M, c.records[0].M) && bit_identical(a.records[1].M, c.records[1].M));
}

TEST(Synthetic, ShapesAndConsistency) {
  const Dataset d = generate_synthetic_cohort({30, 5, 3, 10, 1});
  EXPECT_EQ(d.features(), 5);
  EXPECT_EQ(d.treatments(), 3);
  EXPECT_EQ(d.steps(), 10);
  EXPECT_NO_THROW(d.validate());
  EXPECT_THROW(generate_synthetic_cohort({1, 5, 1, 10, 1}), InvalidArgument);
  EXPECT_THROW(generate_synthetic_cohort({10, 1, 1, 10, 1}), InvalidArgument);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(Synthetic, SeverityReducesMissingness) {
  SyntheticTruth truth;
  const Dataset d = generate_synthetic_cohort({1000, 10, 2, 24, 5}, &truth);
  ASSERT_EQ(truth.severity.size(), d.size());
  std::vector<double> missing;
  for (const auto& r : d.records) {
    missing.push_back(1.0 - r.M.sum() / static_cast<double>(r.M.size()));
  }
  EXPECT_LT(pearson(truth.severity, missing), 0.0);
}

TEST(Synthetic, CompleteSignalsAgreeWithObserved) {
  SyntheticTruth truth;
  const Dataset d = generate_synthetic_cohort({20, 4, 1, 8, 9}, &truth);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (Index k = 0; k < d.records[i].X.size(); ++k) {
      if (d.records[i].M(k) == 1.0) {
        EXPECT_DOUBLE_EQ(d.records[i].X(k), truth.complete[i](k));
      }
    }
  }
}

TEST(Synthetic, PrevalenceNearFifteenPercent) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset d = generate_synthetic_cohort({1000, 3, 1, 4, seed});
    EXPECT_GE(d.prevalence(), 0.10) << "seed " << seed;
    EXPECT_LE(d.prevalence(), 0.20) << "seed " << seed;
  }
}

TEST(Split, DisjointExhaustiveAndSeeded) {
  const Split s = train_test_split(101, 0.8, 4);
  EXPECT_EQ(s.train.size(), 81u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto i : s.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 101u);
  EXPECT_EQ(train_test_split(101, 0.8, 4).train, s.train);
  EXPECT_THROW(train_test_split(10, 1.0, 0), InvalidArgument);
}

Dataset one_feature(std::vector<double> values) {
  Dataset d;
  d.feature_names = {"v"};
  PatientRecord r;
  r.X = Matrix(static_cast<Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) r.X(static_cast<Index>(i), 0) = values[i];
  r.M = binary_mask(r.X);
  r.A = Matrix(r.X.rows(), 0);
  r.d = encode_demographics(50, 0);
  d.records.push_back(r);
  return d;
}

TEST(Normalize, MinMaxAndClip) {
  const Dataset train = one_feature({40.0, 140.0, kMissing});
  const NormalizationStats stats = fit_normalization(train);
  EXPECT_DOUBLE_EQ(stats.min(0), 40.0);
  EXPECT_DOUBLE_EQ(stats.max(0), 140.0);
  const Dataset test = normalize(one_feature({90.0, 200.0, kMissing}), stats);
  EXPECT_DOUBLE_EQ(test.records[0].X(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(test.records[0].X(1, 0), 1.0);
  EXPECT_TRUE(is_missing(test.records[0].X(2, 0)));
  EXPECT_TRUE(test.normalization.has_value());
}

TEST(Normalize, DegenerateAndUnobservedFeatures) {
  EXPECT_DOUBLE_EQ(normalize(one_feature({7.0, 7.0}), fit_normalization(one_feature({7.0}))).records[0].X(1, 0), 0.5);
  const NormalizationStats s = fit_normalization(one_feature({kMissing, kMissing}));
  EXPECT_EQ(s.min(0), 0.0);
  EXPECT_EQ(s.max(0), 1.0);
}

TEST(Normalize, RoundTripOnUnclippedValues) {
  const Dataset data = testing::random_dataset(30, 6, 4, 1, 0.6, 2);
  Dataset scaled = data;
  for (auto& r : scaled.records) {
    for (Index k = 0; k < r.X.size(); ++k) {
      if (r.M(k) == 1.0) r.X(k) = 50.0 + 300.0 * r.X(k);
    }
  }
  const NormalizationStats stats = fit_normalization(scaled);
  for (const auto& r : scaled.records) {
    const Matrix back = denormalize_matrix(normalize_matrix(r.X, stats), stats);
    for (Index k = 0; k < r.X.size(); ++k) {
      if (r.M(k) == 1.0) {
        EXPECT_NEAR(back(k), r.X(k), 1e-9);
      } else {
        EXPECT_TRUE(is_missing(back(k)));
      }
    }
    EXPECT_EQ(binary_mask(normalize_matrix(r.X, stats)), r.M);
  }
}

}  // namespace
}  // namespace ignite
