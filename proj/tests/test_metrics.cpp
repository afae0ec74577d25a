#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "cemt/metrics.hpp"
#include "cemt/rng.hpp"
#include "test_support.hpp"

using cemt::Volume;
using cemt::VolumeKind;
using test_support::mask2d;

TEST_CASE("metrics: dice and jaccard on hand cases") {
  const Volume a = mask2d({"1100"});
  const Volume b = mask2d({"1000"});

  CHECK(cemt::dice(a, a) == 1.0);
  CHECK(cemt::jaccard(a, a) == 1.0);

  // |A|=2, |B|=1, overlap 1
  CHECK(cemt::dice(a, b) == doctest::Approx(2.0 / 3.0));
  CHECK(cemt::jaccard(a, b) == doctest::Approx(0.5));

  const Volume c = mask2d({"0011"});
  CHECK(cemt::dice(a, c) == 0.0);
  CHECK(cemt::jaccard(a, c) == 0.0);

  const Volume e1 = mask2d({"0000"});
  const Volume e2 = mask2d({"0000"});
  CHECK(cemt::dice(e1, e2) == 1.0);
  CHECK(cemt::jaccard(e1, e2) == 1.0);

  Volume wrong(2, {5, 1, 1}, VolumeKind::BinaryMask);
  CHECK_THROWS_AS(cemt::dice(a, wrong), cemt::ShapeError);
}

TEST_CASE("metrics: dice-jaccard identity holds to 1e-12 on random masks") {
  cemt::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Volume a(2, {8, 8, 1}, VolumeKind::BinaryMask);
    Volume b(2, {8, 8, 1}, VolumeKind::BinaryMask);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.data()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
      b.data()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    }
    const double d = cemt::dice(a, b);
    const double j = cemt::jaccard(a, b);
    CHECK(std::abs(d - 2.0 * j / (1.0 + j)) < 1e-12);
    CHECK(j <= d + 1e-15);
  }
}

TEST_CASE("metrics: surface distances on identical masks are zero") {
  const Volume a = mask2d({
      "00000",
      "01110",
      "01110",
      "00000",
  });
  CHECK(cemt::asd(a, a) == 0.0);
  CHECK(cemt::hd95(a, a) == 0.0);
}

TEST_CASE("metrics: parallel segments offset by 3 voxels") {
  const Volume a = mask2d({
      "11111",
      "00000",
      "00000",
      "00000",
  });
  const Volume b = mask2d({
      "00000",
      "00000",
      "00000",
      "11111",
  });
  // Every surface voxel of one segment is exactly 3 away from the other.
  CHECK(cemt::asd(a, b) == doctest::Approx(3.0));
  CHECK(cemt::hd95(a, b) == doctest::Approx(3.0));
  CHECK(cemt::asd(a, b) == cemt::asd(b, a));
  CHECK(cemt::hd95(a, b) == cemt::hd95(b, a));
}

TEST_CASE("metrics: asd and hd95 match the all-pairs oracle exactly at unit spacing") {
  cemt::Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const Volume a = test_support::random_blob_mask(rng, 2, {16, 16, 1});
    const Volume b = test_support::random_blob_mask(rng, 2, {16, 16, 1});
    CHECK(cemt::asd(a, b) == test_support::oracle_asd(a, b));
    CHECK(cemt::hd95(a, b) == test_support::oracle_hd95(a, b));
  }
  for (int trial = 0; trial < 4; ++trial) {
    const Volume a = test_support::random_blob_mask(rng, 3, {10, 10, 8});
    const Volume b = test_support::random_blob_mask(rng, 3, {10, 10, 8});
    CHECK(cemt::asd(a, b) == test_support::oracle_asd(a, b));
    CHECK(cemt::hd95(a, b) == test_support::oracle_hd95(a, b));
  }
}

TEST_CASE("metrics: anisotropic spacing agrees with the oracle") {
  cemt::Rng rng(32);
  for (int trial = 0; trial < 4; ++trial) {
    const Volume a = test_support::random_blob_mask(rng, 3, {8, 10, 6}, {0.625, 0.625, 2.0});
    const Volume b = test_support::random_blob_mask(rng, 3, {8, 10, 6}, {0.625, 0.625, 2.0});
    CHECK(cemt::asd(a, b) == doctest::Approx(test_support::oracle_asd(a, b)).epsilon(1e-10));
    CHECK(cemt::hd95(a, b) == doctest::Approx(test_support::oracle_hd95(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("metrics: hd95 never exceeds the maximum pooled distance") {
  cemt::Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const Volume a = test_support::random_blob_mask(rng, 2, {12, 12, 1});
    const Volume b = test_support::random_blob_mask(rng, 2, {12, 12, 1});
    std::vector<double> pooled = test_support::oracle_directed_distances(a, b);
    const auto ba = test_support::oracle_directed_distances(b, a);
    pooled.insert(pooled.end(), ba.begin(), ba.end());
    const double maxd = *std::max_element(pooled.begin(), pooled.end());
    CHECK(cemt::hd95(a, b) <= maxd + 1e-12);
  }
}

TEST_CASE("metrics: degenerate masks get the finite diagonal penalty") {
  const Volume gt = mask2d({
      "0110",
      "0110",
      "0000",
  });
  Volume empty(2, {4, 3, 1}, VolumeKind::BinaryMask);

  const cemt::CaseMetrics m = cemt::evaluate_case(empty, gt);
  CHECK(m.degenerate_flag);
  CHECK(m.dice == 0.0);
  const double diag = std::sqrt(4.0 * 4.0 + 3.0 * 3.0 + 1.0);
  CHECK(m.asd == doctest::Approx(diag));
  CHECK(m.hd95 == doctest::Approx(diag));

  CHECK(cemt::asd(empty, gt) == doctest::Approx(diag));
  CHECK(cemt::hd95(empty, gt) == doctest::Approx(diag));
}

TEST_CASE("metrics: evaluate_case is consistent with the scalar entry points") {
  cemt::Rng rng(41);
  const Volume a = test_support::random_blob_mask(rng, 2, {12, 12, 1});
  const Volume b = test_support::random_blob_mask(rng, 2, {12, 12, 1});
  const cemt::CaseMetrics m = cemt::evaluate_case(a, b);
  CHECK(m.dice == cemt::dice(a, b));
  CHECK(m.jaccard == cemt::jaccard(a, b));
  CHECK(m.asd == cemt::asd(a, b));
  CHECK(m.hd95 == cemt::hd95(a, b));
  CHECK_FALSE(m.degenerate_flag);
}

TEST_CASE("metrics: aggregation means, stds, and degenerate counting") {
  cemt::CaseMetrics c1;
  c1.dice = 0.8;
  cemt::CaseMetrics c2;
  c2.dice = 0.9;
  c2.degenerate_flag = true;

  SUBCASE("single case") {
    const cemt::MetricsTable t = cemt::aggregate({c1});
    CHECK(t.dice.mean == 0.8);
    CHECK(t.dice.std_dev == 0.0);
    CHECK(t.dice.n == 1);
    CHECK(t.dice.degenerate_count == 0);
  }
  SUBCASE("two identical cases have zero spread") {
    const cemt::MetricsTable t = cemt::aggregate({c1, c1});
    CHECK(t.dice.mean == doctest::Approx(0.8));
    CHECK(t.dice.std_dev == doctest::Approx(0.0));
  }
  SUBCASE("mean of 0.8 and 0.9, nothing excluded") {
    const cemt::MetricsTable t = cemt::aggregate({c1, c2});
    CHECK(t.dice.mean == doctest::Approx(0.85));
    CHECK(t.dice.n == 2);
    CHECK(t.dice.degenerate_count == 1);
    CHECK(t.dice.std_dev == doctest::Approx(0.05));  // population std
  }
}

TEST_CASE("metrics: csv and json reports") {
  cemt::CaseMetrics c1;
  c1.dice = 0.75;  // exactly representable, so the text round-trips verbatim
  c1.jaccard = 0.5;
  c1.asd = 1.25;
  c1.hd95 = 2.5;
  const cemt::MetricsTable t = cemt::aggregate({c1, c1});

  const std::string csv = cemt::metrics_csv(t);
  CHECK(csv.find("case,dice,jaccard,asd,hd95,degenerate") == 0);
  CHECK(csv.find("0,0.75,0.5,1.25,2.5,0") != std::string::npos);

  const nlohmann::json j = nlohmann::json::parse(cemt::metrics_json(t));
  CHECK(j.at("dice").at("mean").get<double>() == doctest::Approx(0.75));
  CHECK(j.at("dice").at("std").get<double>() == 0.0);
  CHECK(j.at("dice").at("n").get<int>() == 2);
  CHECK(j.at("hd95").at("mean").get<double>() == doctest::Approx(2.5));
  CHECK(j.at("jaccard").at("degenerate_count").get<int>() == 0);
}
