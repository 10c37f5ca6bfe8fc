#include "swtte/protocol.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace swtte::protocol {
namespace {

constexpr std::array<std::string_view, 5> kEstimators = {"trial_mixed_model", "did_unadjusted",
                                                         "did_outcome_regression", "did_ipw", "did_doubly_robust"};
constexpr std::array<std::string_view, 4> kInference = {"model_based", "permutation", "cluster_bootstrap", "placebo"};
constexpr std::array<std::string_view, 2> kPower = {"analytic_power", "simulated_power"};

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto c = s.find(',');
    auto item = trim(s.substr(0, c));
    if (!item.empty()) out.emplace_back(item);
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

std::string join(const std::vector<std::string>& v, std::string_view sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

// A setter returns an error message, or empty on success.
using Setter = std::function<std::string(ProtocolColumn&, std::string_view)>;
// A getter returns the canonical text, or nullopt when the field is unset.
using Getter = std::function<std::optional<std::string>(const ProtocolColumn&)>;

struct Field {
  std::string_view name;
  Setter set;
  Getter get;
};

template <class M>
Field text_field(std::string_view name, M member) {
  return {name,
          [member](ProtocolColumn& c, std::string_view v) {
            std::invoke(member, c) = std::string(v);
            return std::string();
          },
          [member](const ProtocolColumn& c) -> std::optional<std::string> {
            const auto& s = std::invoke(member, c);
            if (s.empty()) return std::nullopt;
            return s;
          }};
}

template <class M>
Field list_field(std::string_view name, M member) {
  return {name,
          [member](ProtocolColumn& c, std::string_view v) {
            std::invoke(member, c) = split_list(v);
            return std::string();
          },
          [member](const ProtocolColumn& c) -> std::optional<std::string> {
            const auto& l = std::invoke(member, c);
            if (l.empty()) return std::nullopt;
            return join(l);
          }};
}

template <class M>
Field int_field(std::string_view name, M member, int min_value) {
  return {name,
          [member, min_value, name](ProtocolColumn& c, std::string_view v) -> std::string {
            auto i = to_int(v);
            if (!i) return "'" + std::string(v) + "' is not an integer";
            if (*i < min_value)
              return std::string(name) + " must be at least " + std::to_string(min_value);
            std::invoke(member, c) = *i;
            return {};
          },
          [member](const ProtocolColumn& c) -> std::optional<std::string> {
            const auto& o = std::invoke(member, c);
            if (!o) return std::nullopt;
            return std::to_string(*o);
          }};
}

template <class M>
Field bool_field(std::string_view name, M member) {
  return {name,
          [member](ProtocolColumn& c, std::string_view v) -> std::string {
            if (v == "true") std::invoke(member, c) = true;
            else if (v == "false") std::invoke(member, c) = false;
            else return "'" + std::string(v) + "' is not true/false";
            return {};
          },
          [member](const ProtocolColumn& c) -> std::optional<std::string> {
            const auto& o = std::invoke(member, c);
            if (!o) return std::nullopt;
            return *o ? "true" : "false";
          }};
}

const std::array<std::vector<Field>, 8>& field_table() {
  using C = ProtocolColumn;
  static const std::array<std::vector<Field>, 8> table = [] {
    std::array<std::vector<Field>, 8> t;
    t[0] = {text_field("text", [](auto& c) -> auto& { return c.eligibility.text; }),
            text_field("units", [](auto& c) -> auto& { return c.eligibility.units; }),
            {"threshold_pct",
             [](C& c, std::string_view v) -> std::string {
               auto d = to_double(v);
               if (!d) return "'" + std::string(v) + "' is not a number";
               if (*d < 0.0 || *d > 100.0) return "threshold_pct must lie in [0, 100]";
               c.eligibility.threshold_pct = *d;
               return {};
             },
             [](const C& c) -> std::optional<std::string> {
               if (!c.eligibility.threshold_pct) return std::nullopt;
               return fmt_double(*c.eligibility.threshold_pct);
             }},
            int_field("as_of", [](auto& c) -> auto& { return c.eligibility.as_of; }, std::numeric_limits<int>::min()),
            list_field("exclusions", [](auto& c) -> auto& { return c.eligibility.exclusions; })};
    t[1] = {text_field("text", [](auto& c) -> auto& { return c.treatment_strategies.text; }),
            text_field("exposed", [](auto& c) -> auto& { return c.treatment_strategies.exposed; }),
            text_field("control", [](auto& c) -> auto& { return c.treatment_strategies.control; }),
            text_field("min_features", [](auto& c) -> auto& { return c.treatment_strategies.min_features; })};
    t[2] = {text_field("text", [](auto& c) -> auto& { return c.assignment.text; }),
            text_field("design_type", [](auto& c) -> auto& { return c.assignment.design_type; }),
            text_field("exchangeability", [](auto& c) -> auto& { return c.assignment.exchangeability; })};
    t[3] = {text_field("text", [](auto& c) -> auto& { return c.follow_up.text; }),
            {"study_range",
             [](C& c, std::string_view v) -> std::string {
               // "a-b"; a leading '-' belongs to the first number
               const auto dash = v.find('-', 1);
               if (dash == std::string_view::npos) return "malformed range '" + std::string(v) + "' (expected first-last)";
               auto a = to_int(trim(v.substr(0, dash)));
               auto b = to_int(trim(v.substr(dash + 1)));
               if (!a || !b) return "malformed range '" + std::string(v) + "' (expected first-last)";
               if (*a > *b) return "range '" + std::string(v) + "' is not well-ordered";
               c.follow_up.study_range = PeriodRange{*a, *b};
               return {};
             },
             [](const C& c) -> std::optional<std::string> {
               if (!c.follow_up.study_range) return std::nullopt;
               return std::to_string(c.follow_up.study_range->first) + "-" +
                      std::to_string(c.follow_up.study_range->last);
             }},
            text_field("time_zero", [](auto& c) -> auto& { return c.follow_up.time_zero; }),
            int_field("excluded_periods", [](auto& c) -> auto& { return c.follow_up.excluded_periods; }, 0)};
    t[4] = {text_field("text", [](auto& c) -> auto& { return c.outcomes.text; }),
            text_field("measure", [](auto& c) -> auto& { return c.outcomes.measure; }),
            text_field("aggregation", [](auto& c) -> auto& { return c.outcomes.aggregation; })};
    t[5] = {text_field("text", [](auto& c) -> auto& { return c.causal_contrast.text; }),
            {"estimand",
             [](C& c, std::string_view v) -> std::string {
               if (v == "ATE") c.causal_contrast.estimand = Estimand::ATE;
               else if (v == "ATT") c.causal_contrast.estimand = Estimand::ATT;
               else if (v == "other") c.causal_contrast.estimand = Estimand::Other;
               else return "estimand '" + std::string(v) + "' is not one of ATE, ATT, other";
               return {};
             },
             [](const C& c) -> std::optional<std::string> {
               if (!c.causal_contrast.estimand) return std::nullopt;
               return std::string(to_string(*c.causal_contrast.estimand));
             }},
            int_field("horizon", [](auto& c) -> auto& { return c.causal_contrast.horizon; }, 1),
            {"group_weighting",
             [](C& c, std::string_view v) -> std::string {
               if (v == "equal") c.causal_contrast.group_weighting = GroupWeighting::Equal;
               else if (v == "size") c.causal_contrast.group_weighting = GroupWeighting::Size;
               else return "group_weighting '" + std::string(v) + "' is not one of equal, size";
               return {};
             },
             [](const C& c) -> std::optional<std::string> {
               if (!c.causal_contrast.group_weighting) return std::nullopt;
               return std::string(to_string(*c.causal_contrast.group_weighting));
             }},
            text_field("scale", [](auto& c) -> auto& { return c.causal_contrast.scale; })};
    t[6] = {text_field("text", [](auto& c) -> auto& { return c.identifying_assumptions.text; }),
            bool_field("no_anticipation", [](auto& c) -> auto& { return c.identifying_assumptions.no_anticipation; }),
            bool_field("no_spillover", [](auto& c) -> auto& { return c.identifying_assumptions.no_spillover; }),
            text_field("parallel_trends", [](auto& c) -> auto& { return c.identifying_assumptions.parallel_trends; }),
            list_field("effect_heterogeneity",
                       [](auto& c) -> auto& { return c.identifying_assumptions.effect_heterogeneity; })};
    t[7] = {text_field("text", [](auto& c) -> auto& { return c.analysis_plan.text; }),
            text_field("estimator", [](auto& c) -> auto& { return c.analysis_plan.estimator; }),
            list_field("inference", [](auto& c) -> auto& { return c.analysis_plan.inference; }),
            list_field("power", [](auto& c) -> auto& { return c.analysis_plan.power; }),
            text_field("covariate", [](auto& c) -> auto& { return c.analysis_plan.covariate; }),
            text_field("comparison", [](auto& c) -> auto& { return c.analysis_plan.comparison; })};
    return t;
  }();
  return table;
}

const Field* find_field(int component, std::string_view name) {
  for (const auto& f : field_table()[component])
    if (f.name == name) return &f;
  return nullptr;
}

template <std::size_t N>
bool in(const std::array<std::string_view, N>& ids, std::string_view id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

void check_registry(const ProtocolColumn& col, std::string_view side, std::vector<Diagnostic>& diags,
                    const std::map<std::string, int>& key_lines) {
  auto line_of = [&](std::string_view field) -> std::optional<int> {
    auto it = key_lines.find(std::string(side) + "." + std::string(field));
    if (it == key_lines.end()) return std::nullopt;
    return it->second;
  };
  const auto& ap = col.analysis_plan;
  if (!ap.estimator.empty() && !is_registered_estimator(ap.estimator))
    diags.push_back({Severity::Error, 8, "unresolvable estimator id '" + ap.estimator + "' (" + std::string(side) + ")",
                     line_of("estimator")});
  for (const auto& id : ap.inference)
    if (!is_registered_inference(id))
      diags.push_back({Severity::Error, 8, "unresolvable inference id '" + id + "' (" + std::string(side) + ")",
                       line_of("inference")});
  for (const auto& id : ap.power)
    if (!is_registered_power(id))
      diags.push_back(
          {Severity::Error, 8, "unresolvable power id '" + id + "' (" + std::string(side) + ")", line_of("power")});
  if (!ap.covariate.empty()) {
    static constexpr std::array<std::string_view, 3> kCov = {"already_vaccinated_pct", "excluded_pct",
                                                             "persuadable_pct"};
    if (!in(kCov, ap.covariate))
      diags.push_back({Severity::Error, 8, "unknown covariate '" + ap.covariate + "' (" + std::string(side) + ")",
                       line_of("covariate")});
  }
}

std::string escape_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else out += c;
  }
  return out;
}

// Structured fields rendered as "name: value" pairs, used when a cell has no
// free text.
std::string structured_summary(const ProtocolColumn& col, int component) {
  std::vector<std::string> parts;
  for (const auto& f : field_table()[component]) {
    if (f.name == "text") continue;
    if (auto v = f.get(col)) parts.push_back(std::string(f.name) + ": " + *v);
  }
  return join(parts, "; ");
}

}  // namespace

std::string_view to_string(Estimand e) {
  switch (e) {
    case Estimand::ATE: return "ATE";
    case Estimand::ATT: return "ATT";
    case Estimand::Other: return "other";
  }
  return "?";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Error: return "error";
  }
  return "?";
}

bool is_registered_estimator(std::string_view id) { return in(kEstimators, id); }
bool is_registered_inference(std::string_view id) { return in(kInference, id); }
bool is_registered_power(std::string_view id) { return in(kPower, id); }

std::size_t count(const std::vector<Diagnostic>& diags, Severity s) {
  return static_cast<std::size_t>(
      std::count_if(diags.begin(), diags.end(), [s](const Diagnostic& d) { return d.severity == s; }));
}

ParseResult parse_protocol(std::string_view source) {
  ParseResult result;
  auto& diags = result.diagnostics;
  ProtocolDoc doc;
  doc.version = 0;

  // -1: no section yet; 0: [protocol]; 1..8: components
  int section = -1;
  bool seen_protocol = false;
  std::array<bool, 9> seen_section{};
  std::array<std::array<bool, 2>, 8> side_present{};
  std::array<std::map<std::string, int>, 9> key_lines;

  int line_no = 0;
  while (!source.empty() || line_no == 0) {
    ++line_no;
    const auto nl = source.find('\n');
    std::string_view raw = source.substr(0, nl);
    source.remove_prefix(nl == std::string_view::npos ? source.size() : nl + 1);
    if (line_no == 1 && raw.starts_with("\xEF\xBB\xBF")) raw.remove_prefix(3);
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') {
      if (source.empty()) break;
      continue;
    }

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        diags.push_back({Severity::Error, 0, "malformed section header '" + std::string(line) + "'", line_no});
        section = -2;  // swallow keys until the next valid header
        continue;
      }
      const auto name = trim(line.substr(1, line.size() - 2));
      int idx = -2;
      if (name == "protocol") idx = 0;
      for (int k = 0; k < 8; ++k)
        if (name == kComponentKeys[k]) idx = k + 1;
      if (idx == -2) {
        diags.push_back({Severity::Error, 0, "unknown section '" + std::string(name) + "'", line_no});
      } else if (seen_section[idx]) {
        diags.push_back({Severity::Error, idx, "duplicate section '" + std::string(name) + "'", line_no});
      } else {
        seen_section[idx] = true;
        if (idx == 0) seen_protocol = true;
      }
      section = idx;
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      diags.push_back({Severity::Error, std::max(section, 0), "expected 'key = value'", line_no});
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (section == -2) continue;
    if (section == -1) {
      diags.push_back({Severity::Error, 0, "key '" + std::string(key) + "' outside any section", line_no});
      continue;
    }
    if (!key_lines[section].emplace(std::string(key), line_no).second) {
      diags.push_back({Severity::Error, section, "duplicate key '" + std::string(key) + "' (first at line " +
                                                     std::to_string(key_lines[section][std::string(key)]) + ")",
                       line_no});
      continue;
    }

    if (section == 0) {
      if (key == "version") {
        auto v = to_int(value);
        if (!v) diags.push_back({Severity::Error, 0, "version '" + std::string(value) + "' is not an integer", line_no});
        else if (*v != kFormatVersion)
          diags.push_back({Severity::Error, 0, "unsupported protocol version " + std::to_string(*v), line_no});
        else doc.version = *v;
      } else if (key == "title") {
        doc.title = std::string(value);
      } else {
        diags.push_back({Severity::Error, 0, "unknown key '" + std::string(key) + "' in [protocol]", line_no});
      }
      continue;
    }

    const int comp = section - 1;
    const auto dot = key.find('.');
    const auto side = key.substr(0, dot);
    int s = -1;
    if (side == "target") s = 0;
    else if (side == "emulation") s = 1;
    if (dot == std::string_view::npos || s < 0) {
      diags.push_back({Severity::Error, section,
                       "unknown key '" + std::string(key) + "' (expected target.<field> or emulation.<field>)",
                       line_no});
      continue;
    }
    const auto field_name = key.substr(dot + 1);
    const Field* f = find_field(comp, field_name);
    if (!f) {
      diags.push_back({Severity::Error, section,
                       "unknown key '" + std::string(key) + "' in [" + std::string(kComponentKeys[comp]) + "]",
                       line_no});
      continue;
    }
    side_present[comp][s] = true;
    auto& col = s == 0 ? doc.target : doc.emulation;
    if (auto err = f->set(col, value); !err.empty())
      diags.push_back({Severity::Error, section, std::string(key) + ": " + err, line_no});
  }

  if (!seen_protocol)
    diags.push_back({Severity::Error, 0, "missing: protocol (version header)", std::nullopt});
  else if (!key_lines[0].contains("version"))
    diags.push_back({Severity::Error, 0, "missing: version", std::nullopt});

  for (int k = 0; k < 8; ++k) {
    const std::string name(kComponentKeys[k]);
    if (!seen_section[k + 1]) {
      diags.push_back({Severity::Error, k + 1, "missing: " + name, std::nullopt});
      continue;
    }
    if (!side_present[k][0]) diags.push_back({Severity::Error, k + 1, "missing: " + name + " (target)", std::nullopt});
    if (!side_present[k][1])
      diags.push_back({Severity::Error, k + 1, "missing: " + name + " (emulation)", std::nullopt});
  }

  std::map<std::string, int> plan_lines = key_lines[8];
  check_registry(doc.target, "target", diags, plan_lines);
  check_registry(doc.emulation, "emulation", diags, plan_lines);

  std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
    if (a.component != b.component) return a.component < b.component;
    return a.line.value_or(0) < b.line.value_or(0);
  });
  if (count(diags, Severity::Error) == 0) result.doc = std::move(doc);
  return result;
}

std::string to_source(const ProtocolDoc& doc) {
  std::ostringstream out;
  out << "[protocol]\nversion = " << doc.version << '\n';
  if (!doc.title.empty()) out << "title = " << doc.title << '\n';
  for (int k = 0; k < 8; ++k) {
    out << "\n[" << kComponentKeys[k] << "]\n";
    for (int s = 0; s < 2; ++s) {
      const auto& col = s == 0 ? doc.target : doc.emulation;
      const char* side = s == 0 ? "target" : "emulation";
      bool any = false;
      for (const auto& f : field_table()[k]) {
        if (auto v = f.get(col)) {
          out << side << '.' << f.name << " = " << *v << '\n';
          any = true;
        }
      }
      if (!any) out << side << ".text =\n";
    }
  }
  return out.str();
}

std::string emit_comparison(const ProtocolDoc& doc) {
  std::ostringstream out;
  out << "| Component | Hypothetical Target Trial | Observational Study Analog/Emulation |\n";
  out << "|---|---|---|\n";
  for (int k = 0; k < 8; ++k) {
    auto cell = [&](const ProtocolColumn& col) {
      const auto& text = field_table()[k][0].get(col);
      return escape_cell(text ? *text : structured_summary(col, k));
    };
    out << "| " << kComponentTitles[k] << " | " << cell(doc.target) << " | " << cell(doc.emulation) << " |\n";
  }
  return out.str();
}

std::string to_json(const ProtocolDoc& doc) {
  nlohmann::ordered_json j;
  j["version"] = doc.version;
  j["title"] = doc.title;
  auto& comps = j["components"] = nlohmann::ordered_json::array();
  for (int k = 0; k < 8; ++k) {
    nlohmann::ordered_json c;
    c["key"] = kComponentKeys[k];
    c["title"] = kComponentTitles[k];
    for (int s = 0; s < 2; ++s) {
      const auto& col = s == 0 ? doc.target : doc.emulation;
      nlohmann::ordered_json side = nlohmann::ordered_json::object();
      for (const auto& f : field_table()[k]) {
        auto v = f.get(col);
        if (!v) continue;
        const std::string name(f.name);
        // typed values where the field is typed
        if (name == "exclusions" || name == "inference" || name == "power" || name == "effect_heterogeneity")
          side[name] = split_list(*v);
        else if (name == "threshold_pct") side[name] = *to_double(*v);
        else if (name == "as_of" || name == "horizon" || name == "excluded_periods") side[name] = *to_int(*v);
        else if (name == "no_anticipation" || name == "no_spillover") side[name] = (*v == "true");
        else if (name == "study_range") {
          side[name] = {{"first", col.follow_up.study_range->first}, {"last", col.follow_up.study_range->last}};
        } else side[name] = *v;
      }
      c[s == 0 ? "target" : "emulation"] = std::move(side);
    }
    comps.push_back(std::move(c));
  }
  return j.dump(2);
}

std::vector<Diagnostic> check_consistency(const ProtocolDoc& doc, const DesignSchematic& schematic,
                                          const PanelDataset& panel) {
  std::vector<Diagnostic> diags;
  const auto& em = doc.emulation;
  const auto& tt = doc.target;
  auto add = [&](Severity s, int comp, std::string msg) { diags.push_back({s, comp, std::move(msg), std::nullopt}); };
  auto pct = [](double v) {
    std::ostringstream s;
    s << v << '%';
    return s.str();
  };

  const auto& periods = schematic.periods();
  if (periods.empty() || schematic.n_clusters() == 0) {
    add(Severity::Error, 4, "schematic is empty");
    return diags;
  }
  const auto range = schematic.range();
  const auto timing = timing_groups(schematic);

  // 1: eligibility
  const auto threshold = em.eligibility.threshold_pct ? em.eligibility.threshold_pct : tt.eligibility.threshold_pct;
  const auto as_of = em.eligibility.as_of ? em.eligibility.as_of : tt.eligibility.as_of;
  const auto& exclusions = em.eligibility.exclusions.empty() ? tt.eligibility.exclusions : em.eligibility.exclusions;
  for (const auto& row : schematic.rows()) {
    if (std::find(exclusions.begin(), exclusions.end(), row.id) != exclusions.end())
      add(Severity::Error, 1, "cluster " + row.id + " is listed under eligibility exclusions");
    if (!threshold) continue;
    const auto* p = panel.covariate(row.id);
    if (!p) {
      add(Severity::Error, 1, "cluster " + row.id + " has no covariate profile to evaluate eligibility");
      continue;
    }
    if (!(p->already_vaccinated_pct < *threshold))
      add(Severity::Error, 1,
          "cluster " + row.id + " has " + pct(p->already_vaccinated_pct) + " coverage, not below " + pct(*threshold));
    if (as_of && p->week && *p->week != *as_of)
      add(Severity::Warning, 1,
          "cluster " + row.id + " profile is from period " + std::to_string(*p->week) + ", rule uses " +
              std::to_string(*as_of));
  }
  if (!threshold) add(Severity::Info, 1, "no threshold_pct given; eligibility threshold not checked");

  // 3: positivity
  if (!schematic.positivity_holds())
    add(Severity::Error, 3, "positivity fails: the schematic needs both exposed and unexposed cells");

  // 4: follow-up range and excluded-period rule
  for (int s = 0; s < 2; ++s) {
    const auto& col = s == 0 ? tt : em;
    const char* side = s == 0 ? "target" : "emulation";
    if (!col.follow_up.study_range) continue;
    const auto& r = *col.follow_up.study_range;
    if (r.first != range.first || r.last != range.last)
      add(Severity::Error, 4,
          std::string(side) + " study_range " + std::to_string(r.first) + "-" + std::to_string(r.last) +
              " differs from schematic periods " + std::to_string(range.first) + "-" + std::to_string(range.last));
  }
  if (!tt.follow_up.study_range && !em.follow_up.study_range)
    add(Severity::Warning, 4, "no study_range declared");
  const auto rule = em.follow_up.excluded_periods ? em.follow_up.excluded_periods : tt.follow_up.excluded_periods;
  if (rule) {
    for (std::size_t r = 0; r < schematic.n_clusters(); ++r) {
      const auto& seq = schematic.rows()[r];
      const auto expected = sequence_statuses(periods, seq.announcement, *rule);
      const auto actual = schematic.row(r);
      for (std::size_t c = 0; c < periods.size(); ++c) {
        if (actual[c] == CellStatus::Absent || actual[c] == expected[c]) continue;
        add(Severity::Error, 4,
            "cluster " + seq.id + " period " + std::to_string(periods[c]) + " is " + std::string(to_string(actual[c])) +
                ", excluded_periods = " + std::to_string(*rule) + " implies " + std::string(to_string(expected[c])));
        break;
      }
    }
  } else {
    add(Severity::Warning, 4, "no excluded_periods rule declared");
  }

  // 5: outcome coverage
  std::size_t missing = 0;
  std::string first_missing;
  for (std::size_t r = 0; r < schematic.n_clusters(); ++r)
    for (std::size_t c = 0; c < periods.size(); ++c) {
      if (schematic.at(r, c) == CellStatus::Absent) continue;
      if (!panel.outcome(schematic.rows()[r].id, periods[c])) {
        if (missing++ == 0) first_missing = "(" + schematic.rows()[r].id + ", " + std::to_string(periods[c]) + ")";
      }
    }
  if (missing)
    add(Severity::Error, 5,
        std::to_string(missing) + " schematic cell(s) have no outcome record, first " + first_missing);

  // 6: horizon attainability
  const auto horizon = em.causal_contrast.horizon ? em.causal_contrast.horizon : tt.causal_contrast.horizon;
  if (horizon) {
    bool attainable = false;
    for (const auto& [g, ids] : timing.groups) {
      int post = 0;
      for (const auto& id : ids) {
        const auto r = *schematic.row_of(id);
        for (std::size_t c = 0; c < periods.size(); ++c) post = std::max(post, schematic.exposure_time(r, c));
      }
      if (post >= *horizon) {
        attainable = true;
        continue;
      }
      add(Severity::Warning, 6,
          "timing group " + std::to_string(g) + " (" + join(ids) + ") has " + std::to_string(post) + " of " +
              std::to_string(*horizon) + " post-implementation periods; its average is truncated");
    }
    if (!attainable)
      add(Severity::Error, 6, "horizon " + std::to_string(*horizon) + " is not attainable for any timing group");
  }

  // 7: declared assumptions gate cautions
  if (timing.never_exposed.empty() && horizon && *horizon > 1)
    add(Severity::Warning, 7,
        "timing-only design with horizon " + std::to_string(*horizon) +
            ": late groups have few or no not-yet-treated comparisons");
  if (em.identifying_assumptions.no_anticipation == false && rule && *rule == 0)
    add(Severity::Warning, 7, "anticipation is allowed but no periods are excluded at announcement");

  std::stable_sort(diags.begin(), diags.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.component < b.component; });
  return diags;
}

}  // namespace swtte::protocol
