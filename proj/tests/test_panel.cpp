#include "oracles.hpp"

#include "swtte/csv.hpp"
#include "swtte/error.hpp"
#include "swtte/panel.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <zlib.h>

using namespace swtte;

TEST_CASE("ingest with a column map") {
  std::istringstream in("state,week,pct\nOH,15,3.1\nOH,16,2.9\n");
  const auto p = ingest_panel_csv(in, {"state", "week", "pct"});
  CHECK(p.size() == 2);
  CHECK(p.outcome("OH", 16) == doctest::Approx(2.9));
  CHECK_FALSE(p.outcome("OH", 17));
}

TEST_CASE("ingest errors name row and column") {
  std::istringstream dup("state,week,pct\nOH,15,3.1\nOH,15,2.9\n");
  try {
    ingest_panel_csv(dup, {"state", "week", "pct"});
    FAIL("expected duplicate error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  std::istringstream bad("cluster,period,outcome\nOH,15,abc\n");
  try {
    ingest_panel_csv(bad);
    FAIL("expected parse error");
  } catch (const Error& e) {
    const std::string m = e.what();
    CHECK(m.find("row 2") != std::string::npos);
    CHECK(m.find("outcome") != std::string::npos);
  }
  std::istringstream missing("cluster,week,outcome\nOH,15,1\n");
  CHECK_THROWS_AS(ingest_panel_csv(missing), Error);
  std::istringstream range("cluster,period,outcome\nOH,15,101\n");
  CHECK_THROWS_AS(ingest_panel_csv(range), Error);
}

TEST_CASE("panel csv round-trip") {
  PanelDataset p({{"OH", 15, 3.25}, {"OH", 16, 0.1 + 0.2}, {"IL", 15, 1.0 / 3.0}});
  std::ostringstream out;
  write_panel_csv(out, p);
  std::istringstream in(out.str());
  CHECK(ingest_panel_csv(in).records() == p.records());
}

TEST_CASE("gzip-transparent reads") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto plain = (dir / "swtte_plain.csv").string();
  const auto gz = (dir / "swtte_gz.csv.gz").string();
  const std::string content = "cluster,period,outcome\nOH,15,3\n";
  write_text_file_atomic(plain, content);
  gzFile f = gzopen(gz.c_str(), "wb");
  gzwrite(f, content.data(), static_cast<unsigned>(content.size()));
  gzclose(f);
  CHECK(read_text_file(plain) == content);
  CHECK(read_text_file(gz) == content);
  std::filesystem::remove(plain);
  std::filesystem::remove(gz);
}

TEST_CASE("covariates") {
  std::istringstream ok("cluster,already_vaccinated_pct,excluded_pct,persuadable_pct\nA,40,55,30\n");
  const auto v = ingest_covariates_csv(ok);
  REQUIRE(v.size() == 1);
  CHECK(v[0].excluded_pct == 55);
  std::istringstream bad("cluster,already_vaccinated_pct,excluded_pct,persuadable_pct\nA,40,35,30\n");
  CHECK_THROWS_AS(ingest_covariates_csv(bad), Error);
  std::istringstream alias("state,W18_First_18Pop_Pct,W18_Excl_Perc,W18_Persu_Perc\nA,40,55,30\n");
  CHECK(ingest_covariates_csv(alias)[0].persuadable_pct == 30);
}

TEST_CASE("eligibility threshold is strict") {
  PanelDataset p({}, {{"A", 69.9, 80, 5, 18}, {"B", 70.0, 80, 5, 18}, {"C", 50, 60, 5, 18}});
  EligibilityRule rule;
  CHECK(apply_eligibility(p, rule) == std::vector<std::string>{"A", "C"});
  rule.exclusions = {"C"};
  CHECK(apply_eligibility(p, rule) == std::vector<std::string>{"A"});
  rule.as_of = 19;
  CHECK_THROWS_AS(apply_eligibility(p, rule), Error);
  PanelDataset missing({{"Z", 15, 1.0}}, {});
  CHECK_THROWS_AS(apply_eligibility(missing, EligibilityRule{}), Error);
}

TEST_CASE("matching") {
  std::vector<CovariateProfile> cov{{"A", 40, 50, 10}, {"B", 43, 50, 14}, {"C", 41, 51, 10}, {"D", 40, 50, 10}};
  const std::vector<std::string> t{"A"};
  const std::vector<std::string> pool{"B", "C"};
  auto r = match_controls(t, pool, cov);
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].control == "C");
  CHECK(r.pairs[0].distance == doctest::Approx(2.0));

  // exact copy wins with distance 0
  const std::vector<std::string> pool2{"B", "C", "D"};
  CHECK(match_controls(t, pool2, cov).pairs[0].control == "D");

  // brute force agrees
  std::vector<CovariateProfile> pool_prof{cov[1], cov[2], cov[3]};
  CHECK(pool2[oracle::brute_force_nearest(cov[0], pool_prof)] == "D");

  // without replacement: no control twice
  const std::vector<std::string> t2{"A", "D"};
  const std::vector<std::string> pool3{"B", "C"};
  const auto r2 = match_controls(t2, pool3, cov);
  CHECK(r2.pairs[0].control != r2.pairs[1].control);

  CHECK_THROWS_AS(match_controls(t2, std::vector<std::string>{"B"}, cov), Error);
  CHECK_THROWS_AS(match_controls(t, std::vector<std::string>{"A"}, cov), Error);
}

TEST_CASE("matching ties warn and keep pool order") {
  std::vector<CovariateProfile> cov{{"A", 40, 50, 10}, {"B", 41, 50, 10}, {"C", 39, 50, 10}};
  const auto r = match_controls(std::vector<std::string>{"A"}, std::vector<std::string>{"B", "C"}, cov);
  CHECK(r.pairs[0].control == "B");
  CHECK(r.warnings.size() == 1);
}

TEST_CASE("matching is shift invariant and agrees with brute force") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 30);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<CovariateProfile> prof;
    std::vector<std::string> pool;
    for (int i = 0; i < 6; ++i) {
      const double a = u(rng);
      prof.push_back({"p" + std::to_string(i), a, a + u(rng), u(rng)});
      if (i > 0) pool.push_back(prof.back().cluster);
    }
    const std::vector<std::string> t{"p0"};
    const auto base = match_controls(t, pool, prof);
    std::vector<CovariateProfile> pool_prof(prof.begin() + 1, prof.end());
    CHECK(base.pairs[0].control == pool[oracle::brute_force_nearest(prof[0], pool_prof)]);
    auto shifted = prof;
    for (auto& p : shifted) {
      p.already_vaccinated_pct += 5;
      p.excluded_pct += 5;
      p.persuadable_pct += 5;
    }
    CHECK(match_controls(t, pool, shifted).pairs[0].control == base.pairs[0].control);
  }
}
