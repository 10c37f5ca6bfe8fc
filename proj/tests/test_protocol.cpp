#include "fixtures.hpp"

#include "swtte/csv.hpp"
#include "swtte/protocol.hpp"
#include "swtte/rng.hpp"
#include "swtte/sim.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace swtte;
using namespace swtte::protocol;

namespace {

std::string fixture_text() { return read_text_file(SWTTE_DATA_DIR "/vaccine_lottery.protocol"); }

std::string replace_line(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  const auto end = text.find('\n', pos);
  return text.replace(pos, end - pos, to);
}

std::string drop_section(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line, out;
  bool skip = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '[') skip = line == "[" + name + "]";
    if (!skip) out += line + "\n";
  }
  return out;
}

bool has(const std::vector<Diagnostic>& d, const std::string& text, Severity s = Severity::Error) {
  for (const auto& x : d)
    if (x.severity == s && x.message.find(text) != std::string::npos) return true;
  return false;
}

PanelDataset panel_for(const DesignSchematic& d) {
  std::vector<double> means(d.n_periods(), 2.0);
  std::vector<std::string> ids;
  for (const auto& r : d.rows()) ids.push_back(r.id);
  return generate_panel(d, fixture::vc_design1(), means, EffectProfile::constant(0.33), 1)
      .with_covariates(fixture::synthetic_profiles(ids));
}

}  // namespace

TEST_CASE("fixture parses") {
  const auto r = parse_protocol(fixture_text());
  for (const auto& d : r.diagnostics) MESSAGE(d.message);
  REQUIRE(r.doc.has_value());
  const auto& doc = *r.doc;
  CHECK(doc.emulation.causal_contrast.estimand == Estimand::ATT);
  CHECK(doc.target.causal_contrast.estimand == Estimand::ATE);
  CHECK(doc.emulation.causal_contrast.horizon == 3);
  REQUIRE(doc.emulation.follow_up.study_range.has_value());
  CHECK(doc.emulation.follow_up.study_range->first == 15);
  CHECK(doc.emulation.follow_up.study_range->last == 30);
  CHECK(doc.emulation.analysis_plan.estimator == "did_doubly_robust");
  CHECK(doc.target.analysis_plan.inference == std::vector<std::string>{"permutation", "model_based"});
}

TEST_CASE("missing component") {
  const auto r = parse_protocol(drop_section(fixture_text(), "follow_up"));
  CHECK_FALSE(r.doc);
  CHECK(has(r.diagnostics, "missing: follow_up"));
}

TEST_CASE("unresolvable analysis id") {
  const auto r = parse_protocol(
      replace_line(fixture_text(), "emulation.estimator", "emulation.estimator = synthetic_control"));
  CHECK_FALSE(r.doc);
  CHECK(has(r.diagnostics, "synthetic_control"));
}

TEST_CASE("malformed and ill-ordered ranges") {
  auto r = parse_protocol(replace_line(fixture_text(), "target.study_range", "target.study_range = 15..30"));
  CHECK(has(r.diagnostics, "malformed range"));
  r = parse_protocol(replace_line(fixture_text(), "target.study_range", "target.study_range = 30-15"));
  CHECK(has(r.diagnostics, "well-ordered"));
}

TEST_CASE("unknown keys carry a line and all problems are collected") {
  auto text = replace_line(fixture_text(), "target.units", "target.unit = state");
  text = replace_line(text, "emulation.estimand", "emulation.estimand = CATE");
  const auto r = parse_protocol(text);
  CHECK_FALSE(r.doc);
  int unknown_line = 0;
  for (const auto& d : r.diagnostics)
    if (d.message.find("unknown key 'target.unit'") != std::string::npos) unknown_line = d.line.value_or(0);
  CHECK(unknown_line > 0);
  CHECK(has(r.diagnostics, "CATE"));
  for (std::size_t k = 1; k < r.diagnostics.size(); ++k)
    CHECK(r.diagnostics[k - 1].component <= r.diagnostics[k].component);
}

TEST_CASE("comparison table") {
  const auto doc = *parse_protocol(fixture_text()).doc;
  const auto table = emit_comparison(doc);
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  CHECK(line.find("Hypothetical Target Trial") != std::string::npos);
  CHECK(line.find("Observational Study Analog/Emulation") != std::string::npos);
  int rows = 0;
  std::getline(in, line);
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 8);
  CHECK(emit_comparison(doc) == table);
}

TEST_CASE("minimal doc renders verbatim") {
  std::string src = "[protocol]\nversion = 1\n";
  for (auto k : kComponentKeys) src += "[" + std::string(k) + "]\ntarget.text = yes\nemulation.text = no\n";
  const auto r = parse_protocol(src);
  REQUIRE(r.doc);
  const auto t = emit_comparison(*r.doc);
  for (auto title : kComponentTitles) CHECK(t.find("| " + std::string(title) + " | yes | no |") != std::string::npos);
}

TEST_CASE("source round-trip") {
  const auto doc = *parse_protocol(fixture_text()).doc;
  const auto again = parse_protocol(to_source(doc));
  REQUIRE(again.doc);
  CHECK(*again.doc == doc);
  CHECK(to_json(doc).find("\"did_doubly_robust\"") != std::string::npos);
}

TEST_CASE("parsing is total on arbitrary bytes") {
  Rng rng(derive_seed(99, 0));
  std::uniform_int_distribution<int> byte(0, 255), len(0, 400);
  const auto base = fixture_text();
  for (int rep = 0; rep < 500; ++rep) {
    std::string s;
    if (rep % 2) {
      const int n = len(rng);
      for (int i = 0; i < n; ++i) s.push_back(static_cast<char>(byte(rng)));
    } else {
      s = base;
      for (int i = 0; i < 20; ++i) s[static_cast<std::size_t>(len(rng)) % s.size()] = static_cast<char>(byte(rng));
    }
    const auto r = parse_protocol(s);
    CHECK((r.doc.has_value() || !r.diagnostics.empty()));
  }
  CHECK_FALSE(parse_protocol("").doc);
}

TEST_CASE("consistency against design A") {
  const auto doc = *parse_protocol(fixture_text()).doc;
  const auto a = fixture::design_a();
  const auto diags = check_consistency(doc, a, panel_for(a));
  CHECK(count(diags, Severity::Error) == 0);
  int horizon = 0;
  for (const auto& d : diags)
    if (d.component == 6 && d.severity == Severity::Warning) {
      ++horizon;
      CHECK(d.message.find("MO") != std::string::npos);
    }
  CHECK(horizon == 1);
}

TEST_CASE("consistency failures") {
  const auto doc = *parse_protocol(fixture_text()).doc;
  SUBCASE("range mismatch on component 4") {
    const auto seqs = fixture::midwest_sequences();
    const auto short_design = build_schematic(seqs, {15, 29}, 1);
    const auto diags = check_consistency(doc, short_design, panel_for(short_design));
    bool found = false;
    for (const auto& d : diags) found = found || (d.component == 4 && d.severity == Severity::Error);
    CHECK(found);
  }
  SUBCASE("ineligible cluster on component 1") {
    const auto a = fixture::design_a();
    auto panel = panel_for(a);
    auto cov = panel.covariates();
    cov[3].already_vaccinated_pct = 72.0;
    cov[3].excluded_pct = 80.0;
    const auto diags = check_consistency(doc, a, panel.with_covariates(cov));
    bool found = false;
    for (const auto& d : diags) found = found || (d.component == 1 && d.severity == Severity::Error);
    CHECK(found);
  }
  SUBCASE("excluded-period rule mismatch") {
    const auto seqs = fixture::midwest_sequences();
    const auto two = build_schematic(seqs, {15, 30}, 2);
    const auto diags = check_consistency(doc, two, panel_for(two));
    CHECK(has(diags, "excluded_periods = 1"));
  }
  SUBCASE("missing outcomes") {
    const auto a = fixture::design_a();
    auto panel = panel_for(a);
    auto recs = panel.records();
    recs.pop_back();
    const auto diags = check_consistency(doc, a, PanelDataset(recs, panel.covariates(), false));
    CHECK(has(diags, "no outcome record"));
  }
}
