#include "swtte/cell_panel.hpp"

#include "swtte/error.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace swtte {

bool CellPanel::observed(std::size_t r, std::size_t c) const {
  const auto s = at(r, c);
  return s != CellStatus::Absent && !std::isnan(value(r, c));
}

std::optional<std::size_t> CellPanel::first_exposed_col(std::size_t r) const {
  for (std::size_t c = 0; c < n_cols(); ++c)
    if (at(r, c) == CellStatus::Exposed) return c;
  return std::nullopt;
}

std::optional<double> CellPanel::covariate(std::size_t r, Covariate c) const {
  if (!has_covariates[r]) return std::nullopt;
  return covariates[r][static_cast<std::size_t>(c)];
}

CellPanel align_panel(const PanelDataset& panel, const DesignSchematic& schematic) {
  CellPanel cp;
  cp.periods = schematic.periods();
  cp.status = schematic.grid();
  const std::size_t T = schematic.n_periods();
  cp.y.assign(schematic.n_clusters() * T, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i) {
    const auto& row = schematic.rows()[i];
    cp.ids.push_back(row.id);
    cp.announcement.push_back(row.announcement);
    cp.n_excluded.push_back(row.n_excluded);
    for (std::size_t j = 0; j < T; ++j)
      if (auto v = panel.outcome(row.id, schematic.periods()[j])) cp.y[i * T + j] = *v;
    if (const auto* p = panel.covariate(row.id)) {
      cp.covariates.push_back({p->already_vaccinated_pct, p->excluded_pct, p->persuadable_pct});
      cp.has_covariates.push_back(true);
    } else {
      cp.covariates.push_back({0.0, 0.0, 0.0});
      cp.has_covariates.push_back(false);
    }
  }
  return cp;
}

CellPanel select_rows(const CellPanel& panel, std::span<const std::size_t> rows) {
  CellPanel out;
  out.periods = panel.periods;
  const std::size_t T = panel.n_cols();
  out.status.reserve(rows.size() * T);
  out.y.reserve(rows.size() * T);
  std::map<std::size_t, int> seen;
  for (auto r : rows) {
    const int k = seen[r]++;
    out.ids.push_back(k == 0 ? panel.ids[r] : panel.ids[r] + "#" + std::to_string(k + 1));
    out.status.insert(out.status.end(), panel.status.begin() + static_cast<std::ptrdiff_t>(r * T),
                      panel.status.begin() + static_cast<std::ptrdiff_t>((r + 1) * T));
    out.y.insert(out.y.end(), panel.y.begin() + static_cast<std::ptrdiff_t>(r * T),
                 panel.y.begin() + static_cast<std::ptrdiff_t>((r + 1) * T));
    out.covariates.push_back(panel.covariates[r]);
    out.has_covariates.push_back(panel.has_covariates[r]);
    out.announcement.push_back(panel.announcement[r]);
    out.n_excluded.push_back(panel.n_excluded[r]);
  }
  return out;
}

CellPanel reassign_sequences(const CellPanel& panel, std::span<const std::size_t> source) {
  if (source.size() != panel.n_rows()) throw Error("did", "sequence assignment size mismatch");
  CellPanel out = panel;
  const std::size_t T = panel.n_cols();
  for (std::size_t r = 0; r < panel.n_rows(); ++r) {
    const auto s = source[r];
    out.announcement[r] = panel.announcement[s];
    out.n_excluded[r] = panel.n_excluded[s];
    const auto row = sequence_statuses(panel.periods, out.announcement[r], out.n_excluded[r]);
    for (std::size_t c = 0; c < T; ++c)
      out.status[r * T + c] = panel.status[r * T + c] == CellStatus::Absent ? CellStatus::Absent : row[c];
  }
  return out;
}

}  // namespace swtte
