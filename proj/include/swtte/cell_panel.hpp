#pragma once

#include "swtte/design.hpp"
#include "swtte/panel.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace swtte {

/// A panel aligned to a schematic: dense cluster x period outcomes next to
/// the design statuses. Resampling and permutation work on this form so the
/// inner loops avoid string lookups.
struct CellPanel {
  std::vector<std::string> ids;
  std::vector<int> periods;
  std::vector<CellStatus> status;  // row-major
  std::vector<double> y;           // NaN when unobserved
  std::vector<std::array<double, 3>> covariates;
  std::vector<bool> has_covariates;
  std::vector<std::optional<int>> announcement;
  std::vector<int> n_excluded;

  std::size_t n_rows() const { return ids.size(); }
  std::size_t n_cols() const { return periods.size(); }
  CellStatus at(std::size_t r, std::size_t c) const { return status[r * periods.size() + c]; }
  double value(std::size_t r, std::size_t c) const { return y[r * periods.size() + c]; }
  bool observed(std::size_t r, std::size_t c) const;
  std::optional<std::size_t> first_exposed_col(std::size_t r) const;
  std::optional<double> covariate(std::size_t r, Covariate c) const;
};

CellPanel align_panel(const PanelDataset& panel, const DesignSchematic& schematic);

/// Rows in the given order; repeated rows get "#k" suffixes on their ids.
CellPanel select_rows(const CellPanel& panel, std::span<const std::size_t> rows);

/// Row r takes the adoption sequence of row `source[r]`. Cells that were
/// Absent stay Absent.
CellPanel reassign_sequences(const CellPanel& panel, std::span<const std::size_t> source);

}  // namespace swtte
