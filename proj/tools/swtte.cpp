// swtte: command-line front end over the design / estimation / power /
// analysis / protocol modules. JSON is the primary output; text and csv are
// views of the same document.

#include "swtte/cell_panel.hpp"
#include "swtte/csv.hpp"
#include "swtte/design.hpp"
#include "swtte/did.hpp"
#include "swtte/error.hpp"
#include "swtte/estimation.hpp"
#include "swtte/panel.hpp"
#include "swtte/power.hpp"
#include "swtte/protocol.hpp"
#include "swtte/replicate.hpp"
#include "swtte/trial.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#ifndef SWTTE_VERSION
#define SWTTE_VERSION "0.0.0"
#endif

using namespace swtte;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

// Thrown for bad flag combinations detected after CLI11 has parsed.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string config;
  std::string panel, covariates, protocol, design, announcements;
  std::string range = "15-30";
  int excluded = 1;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string format = "json";
  bool serial = false;
};

RunConfig cfg;
std::string command_name;  // "power simulate" etc.

std::string resolve(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
  if (const char* dir = std::getenv("SWTTE_DATA_DIR")) {
    const auto p = fs::path(dir) / path;
    if (fs::exists(p) || fs::exists(p.string() + ".gz")) return p.string();
  }
  return path;
}

std::string need(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
  return resolve(value);
}

std::uint64_t need_seed() {
  if (!cfg.seed) throw UsageError("--seed is required for stochastic subcommands");
  return *cfg.seed;
}

std::istringstream open_text(const std::string& path) {
  if (!fs::exists(path) && !fs::exists(path + ".gz")) throw Error("cli", "cannot open '" + path + "'");
  return std::istringstream(read_text_file(fs::exists(path) ? path : path + ".gz"));
}

PeriodRange parse_range(const std::string& s) {
  const auto dash = s.find('-', 1);
  if (dash == std::string::npos) throw UsageError("range must look like 15-30");
  try {
    return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
  } catch (const std::exception&) {
    throw UsageError("range must look like 15-30");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

DesignSchematic load_design() {
  if (!cfg.design.empty()) {
    auto in = open_text(resolve(cfg.design));
    return read_design_csv(in);
  }
  if (!cfg.announcements.empty()) {
    auto in = open_text(resolve(cfg.announcements));
    const auto seqs = read_announcements_csv(in);
    return build_schematic(seqs, parse_range(cfg.range), cfg.excluded);
  }
  throw UsageError("a design is required: --design FILE or --announcements FILE");
}

std::vector<CovariateProfile> load_covariates() {
  auto in = open_text(need(cfg.covariates, "--covariates"));
  return ingest_covariates_csv(in);
}

PanelDataset load_panel(bool with_covariates) {
  auto in = open_text(need(cfg.panel, "--panel"));
  auto p = ingest_panel_csv(in);
  if (with_covariates && !cfg.covariates.empty()) p = p.with_covariates(load_covariates());
  return p;
}

json metadata(bool stochastic) {
  json m;
  m["command"] = command_name;
  m["version"] = SWTTE_VERSION;
  if (stochastic) m["seed"] = *cfg.seed;
  return m;
}

json inference_json(const InferenceResult& r) {
  json j;
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  j["estimate"] = num(r.estimate);
  j["se"] = num(r.se);
  j["ci_low"] = num(r.ci_low);
  j["ci_high"] = num(r.ci_high);
  j["p_value"] = num(r.p_value);
  j["method"] = to_string(r.method);
  j["replicates"] = r.replicates;
  if (r.seed) j["seed"] = *r.seed;
  if (r.redraws) j["redraws"] = r.redraws;
  j["warnings"] = r.warnings;
  return j;
}

json design_json(const DesignSchematic& d) {
  json j;
  j["periods"] = d.periods();
  json rows = json::array();
  for (std::size_t r = 0; r < d.n_clusters(); ++r) {
    std::string statuses;
    for (std::size_t c = 0; c < d.n_periods(); ++c) statuses += glyph(d.at(r, c));
    json row{{"cluster", d.rows()[r].id}, {"statuses", statuses}};
    if (auto f = d.first_exposed(r)) row["first_exposed"] = *f;
    rows.push_back(row);
  }
  j["rows"] = rows;
  const auto c = d.counts();
  j["counts"] = {{"control", c.control}, {"exposed", c.exposed}, {"excluded", c.excluded}, {"absent", c.absent}};
  return j;
}

json grid_json(const AttGrid& g) {
  json rows = json::array();
  for (const auto& e : g.entries)
    rows.push_back({{"group", e.group},
                    {"period", e.period},
                    {"att", e.att},
                    {"n_treated", e.n_treated},
                    {"n_control", e.n_control},
                    {"placebo", e.placebo}});
  json anchors;
  for (const auto& [grp, a] : g.anchors) anchors[std::to_string(grp)] = a;
  return {{"rows", rows}, {"anchors", anchors}, {"anticipation", g.anticipation}, {"warnings", g.warnings}};
}

// ---------------------------------------------------------------------------
// Output views

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void text_view(const json& j, const std::string& prefix, std::ostream& out) {
  for (const auto& [k, v] : j.items()) {
    const auto key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      text_view(v, key, out);
    else if (v.is_array() && !v.empty() && v.front().is_object())
      for (std::size_t i = 0; i < v.size(); ++i) text_view(v[i], key + "[" + std::to_string(i) + "]", out);
    else
      out << key << ": " << scalar_text(v) << "\n";
  }
}

std::string csv_view(const json& j) {
  if (!j.contains("rows") || !j["rows"].is_array()) throw UsageError("csv output is not available for " + command_name);
  std::ostringstream out;
  std::vector<std::string> cols;
  for (const auto& row : j["rows"])
    for (const auto& [k, v] : row.items())
      if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << csv::escape(cols[i]);
  out << "\n";
  for (const auto& row : j["rows"]) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out << ",";
      if (row.contains(cols[i]) && !row[cols[i]].is_null()) out << csv::escape(scalar_text(row[cols[i]]));
    }
    out << "\n";
  }
  return out.str();
}

/// Overrides replace the generic text / csv views when given.
void emit(const json& doc, const std::string& text_override = {}, const std::string& csv_override = {}) {
  std::string body, ext = cfg.format;
  if (cfg.format == "json") {
    body = doc.dump(2) + "\n";
  } else if (cfg.format == "text") {
    if (!text_override.empty()) {
      body = text_override;
    } else {
      std::ostringstream out;
      text_view(doc, "", out);
      body = out.str();
    }
    ext = "txt";
  } else if (cfg.format == "csv") {
    body = csv_override.empty() ? csv_view(doc) : csv_override;
  } else {
    throw UsageError("--format must be json, text or csv");
  }
  if (cfg.out_dir.empty()) {
    std::cout << body;
    return;
  }
  auto name = command_name;
  std::replace(name.begin(), name.end(), ' ', '_');
  fs::create_directories(cfg.out_dir);
  const auto path = (fs::path(cfg.out_dir) / (name + "." + ext)).string();
  write_text_file_atomic(path, body);
  std::cerr << "wrote " << path << "\n";
}

// ---------------------------------------------------------------------------
// Config file: same sectioned key-value layout as protocol files; the [run]
// section supplies defaults that flags override.

std::map<std::string, std::string> read_config(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(read_text_file(path));
  std::string line, section;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error("cli", "config line " + std::to_string(n) + ": bad section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("cli", "config line " + std::to_string(n) + ": expected key = value");
    auto key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (section == "run") kv[key] = value;
  }
  return kv;
}

void apply_config(CLI::App& app) {
  if (cfg.config.empty()) return;
  const auto kv = read_config(resolve(cfg.config));
  auto unset = [&](const char* flag) { return app.get_option(flag)->count() == 0; };
  for (const auto& [k, v] : kv) {
    if (k == "panel" && unset("--panel")) cfg.panel = v;
    else if (k == "covariates" && unset("--covariates")) cfg.covariates = v;
    else if (k == "protocol" && unset("--protocol")) cfg.protocol = v;
    else if (k == "design" && unset("--design")) cfg.design = v;
    else if (k == "announcements" && unset("--announcements")) cfg.announcements = v;
    else if (k == "range" && unset("--range")) cfg.range = v;
    else if (k == "excluded" && unset("--excluded")) cfg.excluded = std::stoi(v);
    else if (k == "seed" && unset("--seed")) cfg.seed = std::stoull(v);
    else if (k == "out_dir" && unset("--out-dir")) cfg.out_dir = v;
    else if (k == "format" && unset("--format")) cfg.format = v;
    else if (k == "serial" && unset("--serial")) cfg.serial = v == "true";
    else if (!std::set<std::string>{"panel", "covariates", "protocol", "design", "announcements", "range", "excluded",
                                    "seed", "out_dir", "format", "serial"}
                  .contains(k))
      throw Error("cli", "unknown config key '" + k + "'");
  }
}

// ---------------------------------------------------------------------------
// Subcommand options

struct AnalysisFlags {
  std::string mode = "doubly_robust";
  std::string covariate = "excluded_pct";
  int anticipation = 1;
  bool skip_inadmissible = false;
  int horizon = 3;
  std::string weighting = "equal";
  std::size_t replicates = 1000;

  AttOptions att() const {
    AttOptions o;
    o.mode = parse_adjustment_mode(mode);
    if (o.mode == AdjustmentMode::Unadjusted)
      o.covariate.reset();
    else
      o.covariate = parse_covariate(covariate);
    o.anticipation = anticipation;
    o.skip_inadmissible = skip_inadmissible;
    return o;
  }
  DidSpec spec() const {
    DidSpec s;
    s.att = att();
    s.horizon = horizon;
    if (weighting == "equal")
      s.weighting = GroupWeighting::Equal;
    else if (weighting == "size")
      s.weighting = GroupWeighting::Size;
    else
      throw UsageError("--weighting must be equal or size");
    return s;
  }
};

void add_att_flags(CLI::App* sub, AnalysisFlags& f) {
  sub->add_option("--mode", f.mode, "unadjusted|outcome_regression|ipw|doubly_robust")->capture_default_str();
  sub->add_option("--covariate", f.covariate, "adjustment covariate")->capture_default_str();
  sub->add_option("--anticipation", f.anticipation)->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_flag("--skip-inadmissible", f.skip_inadmissible, "drop cells without admissible controls");
}

struct PowerFlags {
  double sigma2 = 0, icc = 0, delta = 0, alpha = 0.05;
  std::string policy = "as_exposed";
  bool exact = false;
  std::size_t sims = 1000;
  bool known_vc = false;
  double baseline = 3.39, slope_pre = 0.0, slope_change = 0.0;
  int changepoint = 20;

  PowerSpec spec() const {
    PowerSpec s{delta, VarianceComponents::from_marginal(sigma2, icc), alpha};
    s.validate();
    return s;
  }
};

void add_power_flags(CLI::App* sub, PowerFlags& f) {
  sub->add_option("--sigma2", f.sigma2, "marginal outcome variance")->required();
  sub->add_option("--icc", f.icc, "intracluster correlation")->required();
  sub->add_option("--delta", f.delta, "effect size")->required();
  sub->add_option("--alpha", f.alpha)->capture_default_str();
  sub->add_option("--policy", f.policy, "drop|as_control|as_exposed")->capture_default_str();
}

json power_json(const PowerResult& r) {
  json j{{"power", r.power}, {"variance", r.variance}, {"se", r.se}, {"method", to_string(r.method)},
         {"excluded_policy", to_string(r.policy)}};
  if (r.n_sims) {
    j["n_sims"] = *r.n_sims;
    j["mc_se"] = r.mc_se;
    j["failures"] = r.failures;
    j["mean_estimate"] = r.mean_estimate;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Reproduction tables

struct ReproFlags {
  std::vector<double> targets{0.78, 0.61, 0.38};
  double delta = 0.33, alpha = 0.05;
  std::string design2;              // cluster ids, used when no covariates are given
  std::vector<std::string> vc;      // SIGMA2:ICC per design, used when no panel is given
};

json repro_tables(const ReproFlags& f) {
  const auto& targets = f.targets;
  const double delta = f.delta, alpha = f.alpha;
  if (cfg.announcements.empty() && cfg.design.empty()) cfg.announcements = "midwest_announcements.csv";
  const auto a = load_design();
  const auto tg = timing_groups(a);
  std::vector<std::string> treated;
  for (const auto& [g, ids] : tg.groups) treated.insert(treated.end(), ids.begin(), ids.end());

  json doc;
  doc["metadata"] = metadata(false);
  std::optional<std::vector<std::string>> design2;
  json notes = json::array();

  if (!cfg.covariates.empty()) {
    const auto covs = load_covariates();
    const auto m = match_controls(treated, tg.never_exposed, covs);
    json rows = json::array();
    std::vector<std::string> ids;
    for (const auto& p : m.pairs) {
      rows.push_back({{"treated", p.treated}, {"control", p.control}, {"distance", p.distance}});
      ids.push_back(p.treated);
      ids.push_back(p.control);
    }
    doc["matches"] = {{"rows", rows}, {"warnings", m.warnings}};
    design2 = ids;
  } else {
    notes.push_back("no covariates supplied: matching skipped");
    if (!f.design2.empty()) design2 = split_list(f.design2);
  }

  struct Design {
    std::string name;
    DesignSchematic schematic;
    std::optional<VarianceComponents> vc;
  };
  std::vector<Design> designs{{"design 1", a, {}}};
  if (design2) {
    designs.push_back({"design 2", restrict_clusters(a, *design2), {}});
    designs.push_back({"design 3", restrict_clusters(a, treated), {}});
  }

  if (!cfg.panel.empty()) {
    const auto panel = load_panel(false);
    json rows = json::array();
    for (auto& d : designs) {
      const auto obs = control_observations(panel, d.schematic);
      const auto trend = fit_interrupted_trend(obs, 20);
      json row{{"design", d.name},
               {"clusters", d.schematic.n_clusters()},
               {"observations", d.schematic.n_clusters() * d.schematic.n_periods()},
               {"mean_start", trend.mean(d.schematic.periods().front())},
               {"mean_end", trend.mean(d.schematic.periods().back())}};
      if (d.name != "design 3") {
        d.vc = fit_variance_components(obs).vc;
        row["vc_source"] = "fitted";
      } else {
        d.vc = designs[1].vc;  // treated-only design borrows design 2 components
        row["vc_source"] = "design 2";
      }
      row["sigma2"] = d.vc->marginal();
      row["icc"] = d.vc->icc();
      rows.push_back(row);
    }
    doc["design_parameters"] = {{"rows", rows}};
  } else {
    notes.push_back("no panel supplied: design parameters not estimated; power uses --vc");
    for (std::size_t i = 0; i < designs.size() && i < f.vc.size(); ++i) {
      const auto colon = f.vc[i].find(':');
      if (colon == std::string::npos) throw UsageError("--vc expects SIGMA2:ICC");
      designs[i].vc = VarianceComponents::from_marginal(std::stod(f.vc[i].substr(0, colon)),
                                                        std::stod(f.vc[i].substr(colon + 1)));
    }
  }

  json rows = json::array();
  std::vector<CalibrationTarget> cal_targets;
  for (std::size_t i = 0; i < designs.size(); ++i) {
    if (!designs[i].vc) continue;
    PowerSpec spec{delta, *designs[i].vc, alpha};
    json row{{"design", designs[i].name}};
    for (auto p : kAllExcludedPolicies) row[std::string(to_string(p))] = analytic_power(designs[i].schematic, spec, p).power;
    if (i < targets.size()) {
      row["target"] = targets[i];
      cal_targets.push_back({designs[i].name, designs[i].schematic, spec, targets[i]});
    }
    rows.push_back(row);
  }
  json power{{"rows", rows}, {"delta", delta}, {"alpha", alpha}};
  if (!cal_targets.empty()) {
    const auto cal = calibrate_excluded(cal_targets);
    power["selected_policy"] = cal.selected ? json(to_string(*cal.selected)) : json(nullptr);
  }
  doc["power"] = power;
  doc["notes"] = notes;
  return doc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stepped-wedge target-trial emulation toolkit"};
  app.set_version_flag("--version", SWTTE_VERSION);
  app.require_subcommand(1);

  app.add_option("--config", cfg.config, "run configuration file ([run] section)");
  app.add_option("--panel", cfg.panel, "panel CSV (cluster,period,outcome)");
  app.add_option("--covariates", cfg.covariates, "covariate profile CSV");
  app.add_option("--protocol", cfg.protocol, "protocol file");
  app.add_option("--design", cfg.design, "design CSV (cluster,period,status)");
  app.add_option("--announcements", cfg.announcements, "announcement CSV (cluster,announce_week)");
  app.add_option("--range", cfg.range, "study period range, e.g. 15-30")->capture_default_str();
  app.add_option("--excluded", cfg.excluded, "periods excluded from the announcement on")->capture_default_str();
  app.add_option("--seed", cfg.seed, "seed for stochastic subcommands");
  app.add_option("--out-dir", cfg.out_dir, "write output here instead of stdout");
  app.add_option("--format", cfg.format, "json|text|csv")->capture_default_str();
  app.add_flag("--serial", cfg.serial, "run replicate loops on one thread");

  std::function<int()> action;
  auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& desc) {
    auto* s = parent->add_subcommand(name, desc);
    s->fallthrough();
    s->final_callback([&, s, parent] { command_name = parent->get_name() + " " + s->get_name(); });
    return s;
  };
  auto group = [&](const std::string& name, const std::string& desc) {
    auto* g = app.add_subcommand(name, desc);
    g->fallthrough();
    g->require_subcommand(1);
    return g;
  };

  // design
  auto* design = group("design", "design schematics");
  std::string keep;
  auto* d_build = leaf(design, "build", "schematic from announcement weeks");
  auto* d_restrict = leaf(design, "restrict", "keep a subset of clusters");
  d_restrict->add_option("--keep", keep, "comma-separated cluster ids")->required();
  auto* d_render = leaf(design, "render", "fixed-glyph grid");
  auto* d_groups = leaf(design, "groups", "timing groups");

  // match
  std::string treated_ids, pool_ids;
  MatchOptions match_opts;
  auto* match = app.add_subcommand("match", "nearest-neighbour control matching");
  match->fallthrough();
  match->add_option("--treated", treated_ids)->required();
  match->add_option("--pool", pool_ids)->required();
  match->add_flag("--with-replacement", match_opts.with_replacement);
  match->add_flag("--standardize", match_opts.standardize);

  // estimate
  auto* estimate = group("estimate", "design parameters from control observations");
  int changepoint = 20;
  std::string trend_mode = "hinge";
  auto* e_trend = leaf(estimate, "trend", "interrupted linear trend");
  e_trend->add_option("--changepoint", changepoint)->capture_default_str();
  e_trend->add_option("--mode", trend_mode, "hinge|segmented")->capture_default_str();
  auto* e_vc = leaf(estimate, "vc", "REML variance components");

  // power
  PowerFlags pf;
  auto* power = group("power", "analytic and simulated power");
  auto* p_analytic = leaf(power, "analytic", "GLS Wald power");
  add_power_flags(p_analytic, pf);
  p_analytic->add_flag("--exact", pf.exact, "include the opposite rejection tail");
  auto* p_sim = leaf(power, "simulate", "Monte Carlo power");
  add_power_flags(p_sim, pf);
  p_sim->add_option("--sims", pf.sims)->capture_default_str();
  p_sim->add_flag("--known-vc", pf.known_vc, "treat generating components as known");
  p_sim->add_option("--baseline", pf.baseline, "trend level at the first period")->capture_default_str();
  p_sim->add_option("--slope-pre", pf.slope_pre)->capture_default_str();
  p_sim->add_option("--slope-change", pf.slope_change)->capture_default_str();
  p_sim->add_option("--changepoint", pf.changepoint)->capture_default_str();
  std::vector<std::string> cal_specs;
  double cal_delta = 0.33, cal_alpha = 0.05, cal_tol = 0.02;
  auto* p_cal = leaf(power, "calibrate-excluded", "compare excluded-cell policies against target powers");
  p_cal->add_option("--target", cal_specs, "NAME:DESIGN_CSV:SIGMA2:ICC:POWER (repeatable)")->required();
  p_cal->add_option("--delta", cal_delta)->capture_default_str();
  p_cal->add_option("--alpha", cal_alpha)->capture_default_str();
  p_cal->add_option("--tolerance", cal_tol)->capture_default_str();

  // did
  AnalysisFlags af;
  auto* did = group("did", "group-time difference in differences");
  auto* did_attgt = leaf(did, "attgt", "ATT(g,t) grid");
  add_att_flags(did_attgt, af);
  auto* did_agg = leaf(did, "aggregate", "aggregated ATT");
  add_att_flags(did_agg, af);
  auto* did_boot = leaf(did, "bootstrap", "cluster bootstrap interval");
  add_att_flags(did_boot, af);
  auto* did_placebo = leaf(did, "placebo", "pre-period placebo contrasts");
  add_att_flags(did_placebo, af);
  for (auto* s : {did_agg, did_boot}) {
    s->add_option("--horizon", af.horizon)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--weighting", af.weighting, "equal|size")->capture_default_str();
  }
  for (auto* s : {did_boot, did_placebo}) s->add_option("--replicates", af.replicates)->capture_default_str();

  // trial
  int trial_horizon = 3;
  std::optional<double> trial_sigma2, trial_icc;
  std::string perm_estimator = "trial_mixed_model";
  std::size_t n_perms = 1000;
  bool exhaustive = false;
  auto* trial = group("trial", "stepped-wedge trial analysis");
  auto* t_fit = leaf(trial, "fit", "mixed model with exposure-time effects");
  auto* t_perm = leaf(trial, "permute", "randomization test over adoption sequences");
  for (auto* s : {t_fit, t_perm}) {
    s->add_option("--horizon", trial_horizon)->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--sigma2", trial_sigma2, "known marginal variance (with --icc)");
    s->add_option("--icc", trial_icc, "known intracluster correlation");
  }
  add_att_flags(t_perm, af);
  t_perm->add_option("--estimator", perm_estimator, "registered estimator id")->capture_default_str();
  t_perm->add_option("--perms", n_perms)->capture_default_str();
  t_perm->add_flag("--exhaustive", exhaustive, "enumerate all assignments when feasible");

  // protocol
  auto* proto = group("protocol", "target-trial protocol files");
  auto* pr_validate = leaf(proto, "validate", "parse and cross-check a protocol");
  auto* pr_report = leaf(proto, "report", "two-column comparison table");

  // repro
  ReproFlags rf;
  auto* repro = group("repro", "reproduction outputs");
  auto* r_tables = leaf(repro, "tables", "matching, design-parameter and power tables");
  r_tables->add_option("--targets", rf.targets, "target powers per design")->delimiter(',');
  r_tables->add_option("--delta", rf.delta)->capture_default_str();
  r_tables->add_option("--alpha", rf.alpha)->capture_default_str();
  r_tables->add_option("--design2", rf.design2, "design 2 cluster ids when no covariates are given");
  r_tables->add_option("--vc", rf.vc, "SIGMA2:ICC per design when no panel is given")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto trial_options = [&] {
    TrialOptions o;
    o.horizon = trial_horizon;
    if (trial_sigma2.has_value() != trial_icc.has_value()) throw UsageError("--sigma2 and --icc go together");
    if (trial_sigma2) o.vc = VarianceComponents::from_marginal(*trial_sigma2, *trial_icc);
    return o;
  };

  try {
    apply_config(app);
    const bool parallel = !cfg.serial;

    if (d_build->parsed()) {
      if (cfg.announcements.empty()) throw UsageError("design build needs --announcements");
      const auto d = load_design();
      json doc{{"metadata", metadata(false)}, {"design", design_json(d)}};
      std::ostringstream out;
      write_design_csv(out, d);
      emit(doc, render_schematic(d), out.str());
    } else if (d_restrict->parsed()) {
      const auto d = restrict_clusters(load_design(), split_list(keep));
      json doc{{"metadata", metadata(false)}, {"design", design_json(d)}};
      std::ostringstream out;
      write_design_csv(out, d);
      emit(doc, render_schematic(d), out.str());
    } else if (d_render->parsed()) {
      const auto d = load_design();
      const auto grid = render_schematic(d);
      if (cfg.format == "json") {
        json lines = json::array();
        std::istringstream in(grid);
        for (std::string l; std::getline(in, l);) lines.push_back(l);
        emit({{"metadata", metadata(false)}, {"grid", lines}});
      } else {
        cfg.format = "text";
        emit({}, grid);
      }
    } else if (d_groups->parsed()) {
      const auto g = timing_groups(load_design());
      json rows = json::array();
      for (const auto& [first, ids] : g.groups) rows.push_back({{"first_exposed", first}, {"clusters", ids}});
      emit({{"metadata", metadata(false)}, {"rows", rows}, {"never_exposed", g.never_exposed}});
    } else if (match->parsed()) {
      const auto covs = load_covariates();
      const auto m = match_controls(split_list(treated_ids), split_list(pool_ids), covs, match_opts);
      json rows = json::array();
      for (const auto& p : m.pairs) rows.push_back({{"treated", p.treated}, {"control", p.control}, {"distance", p.distance}});
      emit({{"metadata", metadata(false)}, {"rows", rows}, {"warnings", m.warnings}});
    } else if (e_trend->parsed()) {
      TrendMode mode;
      if (trend_mode == "hinge")
        mode = TrendMode::Hinge;
      else if (trend_mode == "segmented")
        mode = TrendMode::Segmented;
      else
        throw UsageError("--mode must be hinge or segmented");
      const auto d = load_design();
      const auto t = fit_interrupted_trend(control_observations(load_panel(false), d), changepoint, mode);
      json means = json::array();
      for (int p : d.periods()) means.push_back({{"period", p}, {"mean", t.mean(p)}});
      emit({{"metadata", metadata(false)},
            {"trend",
             {{"mode", trend_mode}, {"origin", t.origin}, {"changepoint", t.changepoint}, {"intercept", t.intercept},
              {"slope_pre", t.slope_pre}, {"slope_change", t.slope_change}, {"level_change", t.level_change},
              {"n_obs", t.n_obs}}},
            {"rows", means}});
    } else if (e_vc->parsed()) {
      const auto d = load_design();
      const auto f = fit_variance_components(control_observations(load_panel(false), d));
      emit({{"metadata", metadata(false)},
            {"variance_components",
             {{"tau2", f.vc.tau2}, {"sigma2_resid", f.vc.sigma2_resid}, {"sigma2", f.vc.marginal()},
              {"icc", f.vc.icc()}, {"converged", f.converged}, {"boundary", f.boundary},
              {"degenerate", f.degenerate}, {"iterations", f.iterations}}}});
    } else if (p_analytic->parsed()) {
      const auto r = analytic_power(load_design(), pf.spec(), parse_excluded_policy(pf.policy), pf.exact);
      emit({{"metadata", metadata(false)}, {"result", power_json(r)}});
    } else if (p_sim->parsed()) {
      SimulationOptions o{pf.sims, need_seed(), !pf.known_vc, parallel};
      const auto d = load_design();
      TrendFit trend;
      trend.origin = d.periods().front();
      trend.changepoint = pf.changepoint;
      trend.intercept = pf.baseline;
      trend.slope_pre = pf.slope_pre;
      trend.slope_change = pf.slope_change;
      const auto r = simulated_power(d, pf.spec(), trend, parse_excluded_policy(pf.policy), o);
      emit({{"metadata", metadata(true)}, {"result", power_json(r)}});
    } else if (p_cal->parsed()) {
      std::vector<CalibrationTarget> targets;
      for (const auto& s : cal_specs) {
        std::vector<std::string> parts;
        std::stringstream ss(s);
        for (std::string x; std::getline(ss, x, ':');) parts.push_back(x);
        if (parts.size() != 5) throw UsageError("--target expects NAME:DESIGN_CSV:SIGMA2:ICC:POWER");
        auto in = open_text(resolve(parts[1]));
        PowerSpec spec{cal_delta, VarianceComponents::from_marginal(std::stod(parts[2]), std::stod(parts[3])), cal_alpha};
        targets.push_back({parts[0], read_design_csv(in), spec, std::stod(parts[4])});
      }
      const auto cal = calibrate_excluded(targets, cal_tol);
      json rows = json::array();
      for (const auto& r : cal.rows) {
        json row{{"policy", to_string(r.policy)}};
        for (std::size_t i = 0; i < targets.size(); ++i)
          row[targets[i].design_id] = std::isfinite(r.powers[i]) ? json(r.powers[i]) : json(nullptr);
        row["max_abs_error"] = r.max_abs_error;
        row["within_tolerance"] = r.within_tolerance;
        rows.push_back(row);
      }
      emit({{"metadata", metadata(false)},
            {"rows", rows},
            {"tolerance", cal.tolerance},
            {"selected_policy", cal.selected ? json(to_string(*cal.selected)) : json(nullptr)}});
    } else if (did_attgt->parsed()) {
      const auto g = estimate_att_gt(load_panel(true), load_design(), af.att());
      json doc = grid_json(g);
      doc["metadata"] = metadata(false);
      emit(doc);
    } else if (did_agg->parsed()) {
      const auto spec = af.spec();
      const auto g = estimate_att_gt(load_panel(true), load_design(), spec.att);
      const auto r = aggregate_att(g, spec.horizon, spec.weighting);
      emit({{"metadata", metadata(false)}, {"result", inference_json(r)}});
    } else if (did_boot->parsed()) {
      const auto r = cluster_bootstrap(load_panel(true), load_design(), af.spec(), {af.replicates, need_seed(), parallel});
      emit({{"metadata", metadata(true)}, {"result", inference_json(r)}});
    } else if (did_placebo->parsed()) {
      const auto r = placebo_pretrends(load_panel(true), load_design(), af.att(), {af.replicates, need_seed(), parallel});
      json doc = grid_json(r.grid);
      for (std::size_t i = 0; i < r.ci_low.size(); ++i) {
        doc["rows"][i]["ci_low"] = r.ci_low[i];
        doc["rows"][i]["ci_high"] = r.ci_high[i];
      }
      doc["summary"] = inference_json(r.summary);
      doc["pass"] = r.pass;
      doc["metadata"] = metadata(true);
      emit(doc);
    } else if (t_fit->parsed()) {
      const auto f = fit_trial_mixed_model(load_panel(false), load_design(), trial_options());
      json rows = json::array();
      for (const auto& e : f.effects)
        rows.push_back({{"exposure_time", e.exposure_time}, {"estimate", e.estimate}, {"se", e.se}, {"n_cells", e.n_cells}});
      emit({{"metadata", metadata(false)},
            {"result", inference_json(f.result)},
            {"rows", rows},
            {"variance_components", {{"tau2", f.variance.vc.tau2}, {"sigma2_resid", f.variance.vc.sigma2_resid}}},
            {"notes", f.notes}});
    } else if (t_perm->parsed()) {
      EstimatorSpec spec;
      if (perm_estimator == "trial_mixed_model") {
        spec = trial_options();
      } else {
        static const std::map<std::string, std::string> modes{{"did_unadjusted", "unadjusted"},
                                                              {"did_outcome_regression", "outcome_regression"},
                                                              {"did_ipw", "ipw"},
                                                              {"did_doubly_robust", "doubly_robust"}};
        const auto it = modes.find(perm_estimator);
        if (it == modes.end()) throw UsageError("unknown estimator '" + perm_estimator + "'");
        af.mode = it->second;
        af.horizon = trial_horizon;
        spec = af.spec();
      }
      PermutationOptions o{n_perms, need_seed(), exhaustive ? PermutationMode::Exhaustive : PermutationMode::Sampled,
                           parallel};
      const auto r = permutation_test(load_panel(true), load_design(), spec, o);
      auto j = inference_json(r);
      j["estimator"] = describe(spec);
      emit({{"metadata", metadata(true)}, {"result", j}});
    } else if (pr_validate->parsed() || pr_report->parsed()) {
      const auto parsed = protocol::parse_protocol(read_text_file(need(cfg.protocol, "--protocol")));
      auto diags = parsed.diagnostics;
      if (parsed.doc && pr_validate->parsed() && (!cfg.design.empty() || !cfg.announcements.empty())) {
        const auto extra = protocol::check_consistency(*parsed.doc, load_design(), load_panel(true));
        diags.insert(diags.end(), extra.begin(), extra.end());
      }
      json list = json::array();
      std::string text;
      for (const auto& d : diags) {
        json j{{"severity", protocol::to_string(d.severity)}, {"component", d.component}, {"message", d.message}};
        if (d.line) j["line"] = *d.line;
        list.push_back(j);
        text += std::string(protocol::to_string(d.severity)) + " [" + std::to_string(d.component) + "]" +
                (d.line ? " line " + std::to_string(*d.line) : "") + ": " + d.message + "\n";
      }
      const auto errors = protocol::count(diags, protocol::Severity::Error);
      if (pr_validate->parsed()) {
        json doc{{"metadata", metadata(false)}, {"valid", errors == 0}, {"rows", list}};
        emit(doc, text.empty() ? "ok\n" : text);
      } else {
        if (!parsed.doc) {
          std::cerr << text;
          return 1;
        }
        json doc{{"metadata", metadata(false)},
                 {"protocol", json::parse(protocol::to_json(*parsed.doc))},
                 {"table", protocol::emit_comparison(*parsed.doc)}};
        emit(doc, protocol::emit_comparison(*parsed.doc));
      }
      return errors == 0 ? 0 : 1;
    } else if (r_tables->parsed()) {
      auto doc = repro_tables(rf);
      if (cfg.format == "csv") throw UsageError("repro tables supports json and text");
      emit(doc);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
